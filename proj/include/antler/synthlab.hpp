#pragma once

#include "antler/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace antler {

/// Wave-shape surface generator parameters. Heights come from a 3x3x2 core
/// tensor combined with sinusoidal basis matrices and a per-sample N(0,1)
/// coefficient pair; white noise of level `noise` is added on top.
struct WaveParams {
    int i1 = 100;
    int i2 = 100;
    std::size_t n_samples = 1;
    double noise = 0.0;
    Eigen::Matrix3d core_slice1 = default_core_slice1();
    Eigen::Matrix3d core_slice2 = default_core_slice2();
    std::uint64_t seed = 0;
    /// When present, used instead of sampling the per-sample coefficients
    /// (n_samples x 2). Lets tests pin the latent weights.
    std::optional<Eigen::MatrixX2d> forced_coeffs;

    static Eigen::Matrix3d default_core_slice1();
    static Eigen::Matrix3d default_core_slice2();
};

/// One structured surface cloud per sample: points (j1/I1, j2/I2, z).
std::vector<PointCloud> gen_wave(const WaveParams& params);

/// Truncated-cone generator. The surface radius is
///   r(phi, z) = (r + z tan(theta)) / sqrt(1 - e^2 cos^2(phi)) + c (z^2 - z)
/// evaluated on the (phi, z) grid phi = 2 pi i1/I1, z = i2/I2.
struct ConeParams {
    int i1 = 100;
    int i2 = 100;
    double noise = 0.0;
    std::uint64_t seed = 0;
    /// Normal conditions; multipliers scale these per factorial sample.
    double theta0 = kConeTheta0;
    double r0 = kConeR0;
    double e0 = kConeE0;
    double c0 = kConeC0;
    /// Factor levels applied to each of (theta, r, e, c); the dataset is the
    /// full factorial over all level combinations.
    std::vector<double> levels = {0.9, 1.0, 1.2};

    static constexpr double kConeTheta0 = 0.39269908169872415481; // pi/8
    static constexpr double kConeR0 = 1.3;
    static constexpr double kConeE0 = 0.3;
    static constexpr double kConeC0 = 0.5;
};

/// Full factorial over the level grid: levels^4 structured cone clouds.
std::vector<PointCloud> gen_cone(const ConeParams& params);

/// Single cone surface with explicit parameter values.
PointCloud gen_cone_single(double theta, double r, double e, double c, int i1, int i2,
                           double noise, std::uint64_t seed);

/// Noise-free cone surface radius at (phi, z).
double cone_radius(double theta, double r, double e, double c, double phi, double z);

/// Unstructuring procedure: random subsample of size m_i ~ U[m_l, m_u]
/// (the model input), plus the extreme-value subset of exactly m_r points
/// (the response input).
struct UnstructureParams {
    std::size_t m_l = 0;
    std::size_t m_u = 0;
    std::size_t m_r = 0; // must be divisible by 6 and <= m_l
    std::uint64_t seed = 0;
};

struct UnstructuredSample {
    PointCloud model_cloud;    // m_i points
    PointCloud response_cloud; // m_r points, subset of model_cloud
};

UnstructuredSample unstructure(const PointCloud& cloud, const UnstructureParams& params);

/// Plane z = b0 + b1 x + b2 y fitted by orthogonal distance regression:
/// beta = (X^T X - delta^2 I)^{-1} X^T z with delta the smallest singular
/// value of the augmented matrix [X z].
struct OdrPlane {
    std::array<double, 3> beta{0, 0, 0};
    double delta = 0.0; // smallest singular value of [X z]

    /// Unit normal with negative z component sign convention removed
    /// (components returned as (b1, b2, -1)/norm).
    std::array<double, 3> unit_normal() const;
    /// Unsigned orthogonal point-to-plane distance.
    double distance(const Vec3& p) const;
};

OdrPlane odr_plane(const PointCloud& cloud);

/// Surface roughness: population standard deviation of the unsigned
/// orthogonal distances to the ODR plane.
double roughness_response(const PointCloud& cloud);

/// Minimum zone roundness of one circumferential line: the smallest
/// difference between the enclosing and inscribed circle radii over
/// candidate centers inside the ring's convex hull.
double mzt_roundness(const std::vector<std::array<double, 2>>& ring);

/// Average minimum-zone roundness over equal-width z-bins of the cloud.
/// Bins holding fewer than min_bin_points points are skipped; throws when
/// every bin is skipped.
double roundness_response(const PointCloud& cloud, int n_bins, int min_bin_points = 8);

} // namespace antler
