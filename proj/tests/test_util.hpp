#pragma once

#include "antler/geometry.hpp"
#include "antler/rng.hpp"

#include <cstdint>

namespace antler::testutil {

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, double lo = -5.0,
                               double hi = 5.0) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.sample_id = "rand" + std::to_string(seed);
    cloud.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        cloud.points.push_back({rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)});
    return cloud;
}

/// Cloud with coordinates spanning awkward magnitudes, for round-trip tests.
inline PointCloud random_cloud_wide_range(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    cloud.sample_id = "wide" + std::to_string(seed);
    for (std::size_t i = 0; i < n; ++i) {
        auto draw = [&rng]() {
            const double mag = std::pow(10.0, rng.uniform(-12.0, 12.0));
            return (rng.uniform() < 0.5 ? -1.0 : 1.0) * mag * rng.uniform();
        };
        cloud.points.push_back({draw(), draw(), draw()});
    }
    return cloud;
}

} // namespace antler::testutil
