#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "antler/sampler.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <filesystem>

using namespace antler;

namespace {

GridSpec cube_grid(std::int32_t d) {
    GridSpec g;
    g.box = {{0, 0, 0}, {1, 1, 1}};
    g.dims = {d, d, d};
    return g;
}

BinaryVoxelTensor tensor_from(const std::vector<VoxelIndex>& occ, std::int32_t d) {
    BinaryVoxelTensor t;
    t.grid = cube_grid(d);
    for (const VoxelIndex& v : occ) t.occupied.insert(v);
    return t;
}

int chebyshev_distance(const VoxelIndex& a, const VoxelIndex& b) {
    int m = 0;
    for (int k = 0; k < 3; ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

int distance_to_set(const VoxelIndex& v, const VoxelSet& occ) {
    int best = 1 << 20;
    for (const VoxelIndex& o : occ) best = std::min(best, chebyshev_distance(v, o));
    return best;
}

} // namespace

TEST_CASE("compute_mr rule") {
    CHECK(compute_mr({3, 5, 4}) == 10);
    CHECK(compute_mr({1}) == 2);
    CHECK_THROWS_AS(compute_mr({}), std::runtime_error);
    CHECK_THROWS_AS(compute_mr({3, 0, 4}), std::runtime_error);
}

TEST_CASE("compute_mr matches direct max oracle on random counts") {
    Rng rng(404);
    std::vector<std::size_t> counts;
    std::size_t mx = 0;
    for (int i = 0; i < 100; ++i) {
        std::size_t c = 1 + rng.uniform_index(5000);
        counts.push_back(c);
        mx = std::max(mx, c); // brute-force max
    }
    CHECK(compute_mr(counts) == 2 * mx);
}

TEST_CASE("single occupied voxel draws its zero from the 26-neighborhood") {
    BinaryVoxelTensor t = tensor_from({{5, 5, 5}}, 11);
    BalancedSample s = balanced_sample(t, 2, 99);
    REQUIRE(s.size() == 2);
    CHECK(s.entries[0].bit == 1);
    CHECK(s.entries[0].idx == VoxelIndex{5, 5, 5});
    CHECK(s.entries[1].bit == 0);

    // oracle: enumerate the 26-neighborhood and assert membership
    VoxelSet neighborhood;
    for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
            for (int dk = -1; dk <= 1; ++dk)
                if (di || dj || dk) neighborhood.insert({5 + di, 5 + dj, 5 + dk});
    CHECK(neighborhood.count(s.entries[1].idx) == 1);
}

TEST_CASE("balance invariant: 5 ones and 5 zeros, all distinct") {
    BinaryVoxelTensor t =
        tensor_from({{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}, {4, 4, 4}}, 8);
    BalancedSample s = balanced_sample(t, 10, 7);
    REQUIRE(s.size() == 10);
    CHECK(s.ones_count() == 5);
    s.validate_against(t);
}

TEST_CASE("same seed gives identical sequences") {
    PointCloud c = testutil::random_cloud(80, 21);
    GridSpec g;
    g.box = bounding_box(c);
    g.dims = {12, 12, 12};
    BinaryVoxelTensor t = voxelize(c, g);
    BalancedSample a = balanced_sample(t, 2 * t.count() + 6, 1234);
    BalancedSample b = balanced_sample(t, 2 * t.count() + 6, 1234);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.entries[i].idx == b.entries[i].idx);
        CHECK(a.entries[i].bit == b.entries[i].bit);
    }
    BalancedSample d = balanced_sample(t, 2 * t.count() + 6, 1235);
    bool identical = true;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a.entries[i].idx == d.entries[i].idx)) identical = false;
    CHECK_FALSE(identical);
}

TEST_CASE("full invariants on random tensors") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        PointCloud c = testutil::random_cloud(30 + 7 * seed, 500 + seed);
        GridSpec g;
        g.box = bounding_box(c);
        const std::int32_t d = 10 + static_cast<std::int32_t>(seed % 9);
        g.dims = {d, d, d};
        BinaryVoxelTensor t = voxelize(c, g);
        const std::size_t m_i = t.count();
        const std::size_t m_r = 2 * m_i + seed % 5;
        BalancedSample s = balanced_sample(t, m_r, 900 + seed);

        REQUIRE(s.size() == m_r);
        CHECK(s.ones_count() == m_i);
        s.validate_against(t);

        // shell phase: when the shell has >= m_i unoccupied voxels, the first
        // m_i zero entries must sit at Chebyshev distance exactly 1
        const auto shell = chebyshev_shell(t);
        if (shell.size() >= m_i) {
            std::size_t checked = 0;
            for (std::size_t e = m_i; e < m_i + m_i && e < s.size(); ++e) {
                CHECK(distance_to_set(s.entries[e].idx, t.occupied) == 1);
                ++checked;
            }
            CHECK(checked == m_i);
        }
    }
}

TEST_CASE("capacity and infeasibility errors") {
    BinaryVoxelTensor t = tensor_from({{0, 0, 0}, {1, 1, 1}}, 4);
    CHECK_THROWS_AS(balanced_sample(t, 3, 1), std::runtime_error);

    // fully occupied 1x1x1 grid has no zero voxels at all
    BinaryVoxelTensor full = tensor_from({{0, 0, 0}}, 1);
    CHECK_THROWS_AS(balanced_sample(full, 2, 1), std::runtime_error);
}

TEST_CASE("near-exhausted grid still fills exactly") {
    // 2x2x2 grid, 3 occupied, m_r = 8 wants 5 zeros out of the 5 available
    BinaryVoxelTensor t = tensor_from({{0, 0, 0}, {1, 1, 1}, {0, 1, 0}}, 2);
    BalancedSample s = balanced_sample(t, 8, 3);
    REQUIRE(s.size() == 8);
    CHECK(s.ones_count() == 3);
    s.validate_against(t);
}

TEST_CASE("balanced sample interchange round trip") {
    PointCloud c = testutil::random_cloud(40, 31);
    GridSpec g;
    g.box = bounding_box(c);
    g.dims = {9, 9, 9};
    BinaryVoxelTensor t = voxelize(c, g);
    BalancedSample s = balanced_sample(t, 2 * t.count() + 4, 5);

    auto dir = std::filesystem::temp_directory_path() / "antler_sampler_test";
    std::filesystem::create_directories(dir);
    save_balanced_sample(s, dir / "s.csv", dir / "s.json");
    BalancedSample back = load_balanced_sample(dir / "s.csv", dir / "s.json");
    REQUIRE(back.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        CHECK(back.entries[i].idx == s.entries[i].idx);
        CHECK(back.entries[i].bit == s.entries[i].bit);
    }
    std::filesystem::remove_all(dir);
}
