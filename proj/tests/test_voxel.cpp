#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "antler/voxel.hpp"
#include "test_util.hpp"

#include <filesystem>

using namespace antler;

namespace {

// Independent brute-force binning: tests every cell interval directly
// instead of dividing. Half-open cells, top face closed.
VoxelSet brute_force_binning(const PointCloud& cloud, const GridSpec& g) {
    VoxelSet occ;
    for (const Vec3& p : cloud.points) {
        VoxelIndex idx{-1, -1, -1};
        for (int k = 0; k < 3; ++k) {
            for (std::int32_t i = 0; i < g.dims[k]; ++i) {
                const double lo = g.box.lower[k] + i * g.edge(k);
                const double hi = g.box.lower[k] + (i + 1) * g.edge(k);
                const bool top = (i == g.dims[k] - 1);
                if ((p[k] >= lo && p[k] < hi) || (top && p[k] >= lo && p[k] <= g.box.upper[k])) {
                    idx[k] = i;
                    break;
                }
            }
            REQUIRE(idx[k] >= 0);
        }
        occ.insert(idx);
    }
    return occ;
}

GridSpec unit_grid(std::int32_t d) {
    GridSpec g;
    g.box = {{0, 0, 0}, {1, 1, 1}};
    g.dims = {d, d, d};
    return g;
}

} // namespace

TEST_CASE("voxelize analytic binning") {
    PointCloud c;
    c.points = {{0.05, 0.05, 0.05}, {0.95, 0.95, 0.95}};
    BinaryVoxelTensor t = voxelize(c, unit_grid(10));
    REQUIRE(t.count() == 2);
    CHECK(t.occupied.count({0, 0, 0}) == 1);
    CHECK(t.occupied.count({9, 9, 9}) == 1);
}

TEST_CASE("voxelize closed upper face") {
    PointCloud c;
    c.points = {{1.0, 1.0, 1.0}};
    BinaryVoxelTensor t = voxelize(c, unit_grid(10));
    REQUIRE(t.count() == 1);
    CHECK(t.occupied.count({9, 9, 9}) == 1);
}

TEST_CASE("voxelize matches brute-force binning") {
    PointCloud c = testutil::random_cloud(100, 42, 0.0, 1.0);
    GridSpec g = unit_grid(10);
    BinaryVoxelTensor t = voxelize(c, g);
    VoxelSet ref = brute_force_binning(c, g);
    CHECK(t.occupied == ref);
}

TEST_CASE("voxelize names out-of-range point") {
    PointCloud c;
    c.points = {{0.5, 0.5, 0.5}, {2.0, 0.5, 0.5}};
    CHECK_THROWS_WITH_AS(voxelize(c, unit_grid(4)), doctest::Contains("point 1"),
                         std::runtime_error);
}

TEST_CASE("select_grid returns initial grid when counts already match") {
    PointCloud corners;
    for (int i = 0; i < 8; ++i)
        corners.points.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
    GridSpec g = select_grid(corners, {2, 2, 2});
    CHECK(g.dims == std::array<std::int32_t, 3>{2, 2, 2});
    CHECK(voxelize(corners, g).count() == 8);
}

TEST_CASE("select_grid refines close point pair, checked per resolution") {
    PointCloud c;
    c.points = {{0, 0, 0}, {1, 1, 1}, {0.5008, 0.5005, 0.5005}, {0.5018, 0.5005, 0.5005}};
    GridSpec g = select_grid(c); // defaults: 100^3 initial, x2 refinement

    // oracle: brute-force binning at every resolution the schedule tries
    GridSpec trial;
    trial.box = bounding_box(c, 0.05);
    std::int32_t expected_dim = 0;
    for (std::int32_t d = 100; d <= 1024; d *= 2) {
        trial.dims = {d, d, d};
        if (brute_force_binning(c, trial).size() == 4) {
            expected_dim = d;
            break;
        }
    }
    REQUIRE(expected_dim > 100); // the pair must actually force refinement
    CHECK(g.dims[0] == expected_dim);
    CHECK(voxelize(c, g).count() == 4);
}

TEST_CASE("select_grid duplicate point terminates via distinct-count rule") {
    PointCloud c;
    c.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 0}}; // one exact duplicate
    GridSpec g = select_grid(c, {4, 4, 4});
    CHECK(g.dims == std::array<std::int32_t, 3>{4, 4, 4});
    CHECK(voxelize(c, g).count() == c.size() - 1);
}

TEST_CASE("doubling dims never decreases occupancy") {
    for (std::uint64_t seed : {5ULL, 6ULL, 7ULL}) {
        PointCloud c = testutil::random_cloud(200, seed);
        GridSpec g;
        g.box = bounding_box(c, 0.05);
        std::size_t prev = 0;
        for (std::int32_t d = 2; d <= 64; d *= 2) {
            g.dims = {d, d, d};
            const std::size_t n = voxelize(c, g).count();
            CHECK(n >= prev);
            CHECK(n <= c.size());
            prev = n;
        }
    }
}

TEST_CASE("voxelizing voxel centers reproduces the occupancy set") {
    PointCloud c = testutil::random_cloud(150, 9);
    GridSpec g;
    g.box = bounding_box(c, 0.05);
    g.dims = {8, 8, 8};
    BinaryVoxelTensor t = voxelize(c, g);

    PointCloud centers;
    for (const VoxelIndex& v : t.sorted_occupied()) centers.points.push_back(g.center(v));
    BinaryVoxelTensor again = voxelize(centers, g);
    CHECK(again.occupied == t.occupied);
}

TEST_CASE("voxel tensor interchange round trip") {
    PointCloud c = testutil::random_cloud(60, 13);
    GridSpec g;
    g.box = bounding_box(c, 0.05);
    g.dims = {6, 7, 8};
    BinaryVoxelTensor t = voxelize(c, g);

    auto dir = std::filesystem::temp_directory_path() / "antler_voxel_test";
    std::filesystem::create_directories(dir);
    save_voxel_tensor(t, dir / "t.csv", dir / "t.json");
    BinaryVoxelTensor back = load_voxel_tensor(dir / "t.csv", dir / "t.json");
    CHECK(back.occupied == t.occupied);
    CHECK(back.grid.dims == t.grid.dims);
    CHECK(back.grid.box.lower == t.grid.box.lower);
    CHECK(back.grid.box.upper == t.grid.box.upper);
    std::filesystem::remove_all(dir);
}
