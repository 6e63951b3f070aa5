#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "antler/geometry.hpp"
#include "antler/xyz_io.hpp"
#include "test_util.hpp"

#include <filesystem>

using namespace antler;

TEST_CASE("parse_xyz basic") {
    PointCloud c = parse_xyz("0 0 0\n1 2 3");
    REQUIRE(c.size() == 2);
    CHECK(c.points[0] == Vec3{0, 0, 0});
    CHECK(c.points[1] == Vec3{1, 2, 3});
}

TEST_CASE("parse_xyz skips comments") {
    PointCloud c = parse_xyz("# header\n0.5 0.5 0.5");
    REQUIRE(c.size() == 1);
    CHECK(c.points[0] == Vec3{0.5, 0.5, 0.5});
}

TEST_CASE("parse_xyz errors") {
    CHECK_THROWS_WITH_AS(parse_xyz("0 0 0\n1 2\n3 3 3"), doctest::Contains("line 2"),
                         std::runtime_error);
    CHECK_THROWS_WITH_AS(parse_xyz("1 2 3 4"), doctest::Contains("line 1"), std::runtime_error);
    CHECK_THROWS_AS(parse_xyz("# only comments\n"), std::runtime_error);
    CHECK_THROWS_AS(parse_xyz(""), std::runtime_error);
    CHECK_THROWS_AS(parse_xyz("nan 0 0"), std::runtime_error);
}

TEST_CASE("write_xyz single point") {
    PointCloud c;
    c.points.push_back({0, 0, 0});
    CHECK(write_xyz(c) == "0 0 0\n");
}

TEST_CASE("round trip is exact on random clouds") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        PointCloud c = testutil::random_cloud(1000, seed);
        PointCloud back = parse_xyz(write_xyz(c));
        REQUIRE(back.size() == c.size());
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(back.points[i] == c.points[i]);
    }
}

TEST_CASE("round trip is exact across magnitudes, 1e4 points") {
    PointCloud c = testutil::random_cloud_wide_range(10000, 77);
    PointCloud back = parse_xyz(write_xyz(c));
    REQUIRE(back.size() == c.size());
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(back.points[i] == c.points[i]);
}

TEST_CASE("bounding_box exact extrema at margin 0") {
    PointCloud cube;
    for (int i = 0; i < 8; ++i)
        cube.points.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
    Box3 b = bounding_box(cube, 0.0);
    CHECK(b.lower == Vec3{0, 0, 0});
    CHECK(b.upper == Vec3{1, 1, 1});
}

TEST_CASE("bounding_box degenerate axes get epsilon") {
    PointCloud single;
    single.points.push_back({2.0, -3.0, 0.5});
    Box3 b = bounding_box(single, 0.0);
    for (int k = 0; k < 3; ++k) {
        CHECK(b.upper[k] - single.points[0][k] == doctest::Approx(1e-6));
        CHECK(single.points[0][k] - b.lower[k] == doctest::Approx(1e-6));
    }
}

TEST_CASE("bounding_box contains every point") {
    for (std::uint64_t seed : {11ULL, 12ULL}) {
        PointCloud c = testutil::random_cloud(500, seed);
        for (double margin : {0.0, 0.05, 0.25}) {
            Box3 b = bounding_box(c, margin);
            for (const Vec3& p : c.points) CHECK(b.contains(p));
        }
    }
}

TEST_CASE("bounding_box empty cloud") {
    CHECK_THROWS_AS(bounding_box(PointCloud{}), std::runtime_error);
}

TEST_CASE("dataset manifest round trip") {
    Dataset ds;
    for (int i = 0; i < 3; ++i) {
        PointCloud c = testutil::random_cloud(50 + 10 * i, 100 + i);
        c.sample_id = "s" + std::to_string(i);
        ds.samples.push_back(c);
        ds.responses.push_back({1.5 * i, -0.25 + i});
    }
    auto dir = std::filesystem::temp_directory_path() / "antler_io_test";
    std::filesystem::remove_all(dir);
    auto manifest = save_dataset(ds, dir);
    Dataset back = load_manifest(manifest);
    REQUIRE(back.size() == ds.size());
    REQUIRE(back.response_dim() == 2);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.samples[i].sample_id == ds.samples[i].sample_id);
        REQUIRE(back.samples[i].size() == ds.samples[i].size());
        for (std::size_t j = 0; j < ds.samples[i].size(); ++j)
            CHECK(back.samples[i].points[j] == ds.samples[i].points[j]);
        CHECK(back.responses[i] == ds.responses[i]);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("dataset validation") {
    Dataset ds;
    ds.samples.push_back(testutil::random_cloud(5, 1));
    CHECK_THROWS_AS(ds.validate(), std::runtime_error); // missing response row
    ds.responses.push_back({0.0, 1.0});
    CHECK_NOTHROW(ds.validate());
    ds.responses[0][1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ds.validate(), std::runtime_error);
}
