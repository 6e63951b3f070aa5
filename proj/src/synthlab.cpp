#include "antler/synthlab.hpp"

#include "antler/mathutil.hpp"
#include "antler/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace antler {

Eigen::Matrix3d WaveParams::default_core_slice1() {
    Eigen::Matrix3d b;
    b << 4, 1, 0, 1, 0.1, 0, 1, 0, 1;
    return b;
}

Eigen::Matrix3d WaveParams::default_core_slice2() {
    Eigen::Matrix3d b;
    b << 1, 2, 0, 1, 3, 0, 1, 0, 0.2;
    return b;
}

std::vector<PointCloud> gen_wave(const WaveParams& params) {
    if (params.i1 < 2 || params.i2 < 2) throw std::runtime_error("gen_wave: grid sizes must be >= 2");
    if (params.n_samples < 1) throw std::runtime_error("gen_wave: need at least one sample");
    if (params.noise < 0) throw std::runtime_error("gen_wave: negative noise level");

    const int i1 = params.i1, i2 = params.i2;
    Rng rng(derive_seed(params.seed, 0x77a1e));

    Eigen::MatrixX2d coeffs(params.n_samples, 2);
    if (params.forced_coeffs) {
        if (params.forced_coeffs->rows() != static_cast<Eigen::Index>(params.n_samples))
            throw std::runtime_error("gen_wave: forced_coeffs row count mismatch");
        coeffs = *params.forced_coeffs;
    } else {
        for (Eigen::Index r = 0; r < coeffs.rows(); ++r)
            for (Eigen::Index c = 0; c < 2; ++c) coeffs(r, c) = rng.normal();
    }

    // sinusoidal basis u_a[j] = sin(j * pi * a / n), j = 1..n (1-based grid)
    Eigen::MatrixXd basis1(i1, 3), basis2(i2, 3);
    for (int a = 1; a <= 3; ++a) {
        for (int j = 1; j <= i1; ++j) basis1(j - 1, a - 1) = std::sin(j * kPi * a / i1);
        for (int j = 1; j <= i2; ++j) basis2(j - 1, a - 1) = std::sin(j * kPi * a / i2);
    }

    std::vector<PointCloud> out;
    out.reserve(params.n_samples);
    for (std::size_t s = 0; s < params.n_samples; ++s) {
        const Eigen::Matrix3d mix =
            coeffs(s, 0) * params.core_slice1 + coeffs(s, 1) * params.core_slice2;
        const Eigen::MatrixXd heights = basis1 * mix * basis2.transpose(); // i1 x i2

        PointCloud cloud;
        cloud.sample_id = "wave_" + std::to_string(s);
        cloud.points.reserve(static_cast<std::size_t>(i1) * i2);
        for (int j1 = 1; j1 <= i1; ++j1) {
            for (int j2 = 1; j2 <= i2; ++j2) {
                double z = heights(j1 - 1, j2 - 1);
                if (params.noise > 0) z += rng.normal(0.0, params.noise);
                cloud.points.push_back({double(j1) / i1, double(j2) / i2, z});
            }
        }
        out.push_back(std::move(cloud));
    }
    return out;
}

double cone_radius(double theta, double r, double e, double c, double phi, double z) {
    const double cos_phi = std::cos(phi);
    return (r + z * std::tan(theta)) / std::sqrt(1.0 - e * e * cos_phi * cos_phi) +
           c * (z * z - z);
}

PointCloud gen_cone_single(double theta, double r, double e, double c, int i1, int i2,
                           double noise, std::uint64_t seed) {
    if (i1 < 3 || i2 < 1) throw std::runtime_error("gen_cone: need i1 >= 3 and i2 >= 1");
    if (!(e >= 0.0 && e < 1.0)) throw std::runtime_error("gen_cone: eccentricity must be in [0,1)");
    if (!(theta > 0.0 && theta < kPi / 2)) throw std::runtime_error("gen_cone: theta must be in (0, pi/2)");
    if (!(r > 0.0)) throw std::runtime_error("gen_cone: radius must be positive");

    Rng rng(derive_seed(seed, 0xc03e));
    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(i1) * i2);
    for (int a = 1; a <= i1; ++a) {
        const double phi = 2.0 * kPi * a / i1;
        for (int b = 1; b <= i2; ++b) {
            const double z = double(b) / i2;
            double radius = cone_radius(theta, r, e, c, phi, z);
            if (noise > 0) radius += rng.normal(0.0, noise);
            cloud.points.push_back({radius * std::cos(phi), radius * std::sin(phi), z});
        }
    }
    return cloud;
}

std::vector<PointCloud> gen_cone(const ConeParams& params) {
    if (params.levels.empty()) throw std::runtime_error("gen_cone: empty level list");
    std::vector<PointCloud> out;
    const std::size_t L = params.levels.size();
    out.reserve(L * L * L * L);
    std::size_t index = 0;
    for (std::size_t it = 0; it < L; ++it)
        for (std::size_t ir = 0; ir < L; ++ir)
            for (std::size_t ie = 0; ie < L; ++ie)
                for (std::size_t ic = 0; ic < L; ++ic) {
                    PointCloud c = gen_cone_single(
                        params.theta0 * params.levels[it], params.r0 * params.levels[ir],
                        params.e0 * params.levels[ie], params.c0 * params.levels[ic], params.i1,
                        params.i2, params.noise, derive_seed(params.seed, index));
                    c.sample_id = "cone_" + std::to_string(index);
                    out.push_back(std::move(c));
                    ++index;
                }
    return out;
}

UnstructuredSample unstructure(const PointCloud& cloud, const UnstructureParams& params) {
    cloud.validate();
    const std::size_t m = cloud.size();
    if (params.m_r % 6 != 0)
        throw std::runtime_error("unstructure: m_r must be divisible by 6");
    if (params.m_l < 1 || params.m_l > params.m_u || params.m_u > m)
        throw std::runtime_error("unstructure: need 1 <= m_l <= m_u <= cloud size");
    if (params.m_r > params.m_l)
        throw std::runtime_error("unstructure: need m_r <= m_l");

    Rng rng(derive_seed(params.seed, 0x5ab));
    const std::size_t m_i =
        static_cast<std::size_t>(rng.uniform_int(static_cast<long long>(params.m_l),
                                                 static_cast<long long>(params.m_u)));

    UnstructuredSample out;
    out.model_cloud.sample_id = cloud.sample_id;
    for (std::size_t idx : rng.sample_without_replacement(m, m_i))
        out.model_cloud.points.push_back(cloud.points[idx]);

    // extreme-value subset: per axis, the m_r/6 smallest and largest points
    const std::size_t per_tail = params.m_r / 6;
    const std::size_t n = out.model_cloud.size();
    std::vector<std::size_t> order(n);
    std::vector<char> selected(n, 0);
    for (int axis = 0; axis < 3; ++axis) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const Vec3& pa = out.model_cloud.points[a];
            const Vec3& pb = out.model_cloud.points[b];
            if (pa[axis] != pb[axis]) return pa[axis] < pb[axis];
            // ties: full lexicographic point order, then original index
            if (pa.x != pb.x) return pa.x < pb.x;
            if (pa.y != pb.y) return pa.y < pb.y;
            if (pa.z != pb.z) return pa.z < pb.z;
            return a < b;
        });
        for (std::size_t t = 0; t < per_tail; ++t) {
            selected[order[t]] = 1;
            selected[order[n - 1 - t]] = 1;
        }
    }

    std::vector<std::size_t> chosen;
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < n; ++i) (selected[i] ? chosen : rest).push_back(i);

    // overlap between tails leaves a deficit: top up with uniform draws
    if (chosen.size() < params.m_r) {
        const std::size_t need = params.m_r - chosen.size();
        for (std::size_t pos : rng.sample_without_replacement(rest.size(), need))
            chosen.push_back(rest[pos]);
        std::sort(chosen.begin(), chosen.end());
    }

    out.response_cloud.sample_id = cloud.sample_id;
    for (std::size_t i : chosen) out.response_cloud.points.push_back(out.model_cloud.points[i]);
    return out;
}

std::array<double, 3> OdrPlane::unit_normal() const {
    const double norm = std::sqrt(1.0 + beta[1] * beta[1] + beta[2] * beta[2]);
    return {beta[1] / norm, beta[2] / norm, -1.0 / norm};
}

double OdrPlane::distance(const Vec3& p) const {
    const double norm = std::sqrt(1.0 + beta[1] * beta[1] + beta[2] * beta[2]);
    return std::abs(beta[0] + beta[1] * p.x + beta[2] * p.y - p.z) / norm;
}

OdrPlane odr_plane(const PointCloud& cloud) {
    cloud.validate();
    const std::size_t n = cloud.size();
    if (n < 3) throw std::runtime_error("odr_plane: need at least 3 points");

    // centered coordinates: the ODR plane passes through the centroid, so
    // the shifted normal equations act on the 2-column (x, y) design
    Vec3 centroid{0, 0, 0};
    for (const Vec3& p : cloud.points)
        for (int k = 0; k < 3; ++k) centroid[k] += p[k];
    for (int k = 0; k < 3; ++k) centroid[k] /= double(n);

    Eigen::MatrixXd design(n, 2);
    Eigen::VectorXd z(n);
    Eigen::MatrixXd augmented(n, 3);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& p = cloud.points[i];
        design(i, 0) = p.x - centroid.x;
        design(i, 1) = p.y - centroid.y;
        z(i) = p.z - centroid.z;
        augmented(i, 0) = design(i, 0);
        augmented(i, 1) = design(i, 1);
        augmented(i, 2) = z(i);
    }

    Eigen::BDCSVD<Eigen::MatrixXd> svd(augmented);
    double delta = svd.singularValues().minCoeff();

    // the singular-value shift is meaningful only while the out-of-plane
    // residual is the smallest singular direction; once delta^2 approaches
    // the planar spectrum the shifted system degenerates toward vertical
    // fits, so fall back to the unshifted normal equations
    const Eigen::Matrix2d gram = design.transpose() * design;
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(gram);
    if (delta * delta > 0.5 * es.eigenvalues().minCoeff()) delta = 0.0;

    Eigen::Matrix2d shifted = gram - delta * delta * Eigen::Matrix2d::Identity();
    Eigen::FullPivLU<Eigen::Matrix2d> lu(shifted);
    if (!lu.isInvertible())
        throw std::runtime_error("odr_plane: degenerate geometry (shifted normal equations singular)");
    const Eigen::Vector2d slope = lu.solve(design.transpose() * z);

    OdrPlane plane;
    plane.beta = {centroid.z - slope(0) * centroid.x - slope(1) * centroid.y, slope(0), slope(1)};
    plane.delta = delta;
    const double nz = 1.0 / std::sqrt(1.0 + slope(0) * slope(0) + slope(1) * slope(1));
    if (nz < 1e-6)
        throw std::runtime_error("odr_plane: fitted plane is near-vertical; pre-rotate the cloud");
    return plane;
}

double roughness_response(const PointCloud& cloud) {
    const OdrPlane plane = odr_plane(cloud);
    const std::size_t n = cloud.size();
    std::vector<double> dist(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dist[i] = plane.distance(cloud.points[i]);
        mean += dist[i];
    }
    mean /= double(n);
    double ss = 0.0;
    for (double d : dist) ss += (d - mean) * (d - mean);
    return std::sqrt(ss / double(n));
}

namespace {

using Point2 = std::array<double, 2>;

double ring_objective(const std::vector<Point2>& ring, double cx, double cy) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (const Point2& p : ring) {
        const double dx = p[0] - cx, dy = p[1] - cy;
        const double d = std::sqrt(dx * dx + dy * dy);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    return hi - lo;
}

// Andrew monotone chain; returns hull in counter-clockwise order.
std::vector<Point2> convex_hull(std::vector<Point2> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const std::size_t n = pts.size();
    if (n < 3) return pts;
    auto cross = [](const Point2& o, const Point2& a, const Point2& b) {
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    };
    std::vector<Point2> hull(2 * n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = n - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
        hull[k++] = pts[i - 1];
    }
    hull.resize(k - 1);
    return hull;
}

bool inside_hull(const std::vector<Point2>& hull, double x, double y) {
    if (hull.size() < 3) return false;
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Point2& a = hull[i];
        const Point2& b = hull[(i + 1) % hull.size()];
        const double cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
        if (cross < 0) return false;
    }
    return true;
}

} // namespace

double mzt_roundness(const std::vector<Point2>& ring) {
    if (ring.size() < 3) throw std::runtime_error("mzt_roundness: need at least 3 ring points");
    const std::vector<Point2> hull = convex_hull(ring);
    if (hull.size() < 3) throw std::runtime_error("mzt_roundness: degenerate (collinear) ring");

    auto objective = [&](double x, double y) {
        if (!inside_hull(hull, x, y)) return std::numeric_limits<double>::infinity();
        return ring_objective(ring, x, y);
    };

    // start at the centroid
    double cx = 0.0, cy = 0.0;
    for (const Point2& p : ring) {
        cx += p[0];
        cy += p[1];
    }
    cx /= double(ring.size());
    cy /= double(ring.size());

    double span = 0.0;
    for (const Point2& p : ring) {
        const double dx = p[0] - cx, dy = p[1] - cy;
        span = std::max(span, std::sqrt(dx * dx + dy * dy));
    }
    if (span <= 0.0) throw std::runtime_error("mzt_roundness: all ring points coincide");

    // Nelder-Mead on the 2D center
    struct Vertex {
        double x, y, f;
    };
    auto make_vertex = [&](double x, double y) { return Vertex{x, y, objective(x, y)}; };
    std::array<Vertex, 3> simplex{make_vertex(cx, cy), make_vertex(cx + 0.1 * span, cy),
                                  make_vertex(cx, cy + 0.1 * span)};
    for (int iter = 0; iter < 400; ++iter) {
        std::sort(simplex.begin(), simplex.end(),
                  [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
        const double sx = std::abs(simplex[2].x - simplex[0].x) + std::abs(simplex[2].y - simplex[0].y);
        if (sx < 1e-12 * span) break;
        const double mx = 0.5 * (simplex[0].x + simplex[1].x);
        const double my = 0.5 * (simplex[0].y + simplex[1].y);
        Vertex reflect = make_vertex(2 * mx - simplex[2].x, 2 * my - simplex[2].y);
        if (reflect.f < simplex[0].f) {
            Vertex expand = make_vertex(3 * mx - 2 * simplex[2].x, 3 * my - 2 * simplex[2].y);
            simplex[2] = expand.f < reflect.f ? expand : reflect;
        } else if (reflect.f < simplex[1].f) {
            simplex[2] = reflect;
        } else {
            Vertex contract = make_vertex(0.5 * (mx + simplex[2].x), 0.5 * (my + simplex[2].y));
            if (contract.f < simplex[2].f) {
                simplex[2] = contract;
            } else {
                for (int i = 1; i < 3; ++i)
                    simplex[i] = make_vertex(0.5 * (simplex[0].x + simplex[i].x),
                                             0.5 * (simplex[0].y + simplex[i].y));
            }
        }
    }
    std::sort(simplex.begin(), simplex.end(),
              [](const Vertex& a, const Vertex& b) { return a.f < b.f; });
    double best_x = simplex[0].x, best_y = simplex[0].y, best_f = simplex[0].f;

    // local grid polish at decreasing scales
    for (double scale = 0.02 * span; scale > 1e-9 * span; scale *= 0.35) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (int di = -2; di <= 2; ++di) {
                for (int dj = -2; dj <= 2; ++dj) {
                    if (!di && !dj) continue;
                    const double x = best_x + di * scale, y = best_y + dj * scale;
                    const double f = objective(x, y);
                    if (f < best_f) {
                        best_f = f;
                        best_x = x;
                        best_y = y;
                        improved = true;
                    }
                }
            }
        }
    }
    return best_f;
}

double roundness_response(const PointCloud& cloud, int n_bins, int min_bin_points) {
    cloud.validate();
    if (n_bins < 1) throw std::runtime_error("roundness_response: n_bins must be >= 1");
    double z_lo = cloud.points[0].z, z_hi = cloud.points[0].z;
    for (const Vec3& p : cloud.points) {
        z_lo = std::min(z_lo, p.z);
        z_hi = std::max(z_hi, p.z);
    }
    if (!(z_hi > z_lo)) throw std::runtime_error("roundness_response: cloud has no z extent");

    std::vector<std::vector<Point2>> bins(n_bins);
    const double width = (z_hi - z_lo) / n_bins;
    for (const Vec3& p : cloud.points) {
        int b = static_cast<int>((p.z - z_lo) / width);
        if (b >= n_bins) b = n_bins - 1;
        bins[b].push_back({p.x, p.y});
    }

    double sum = 0.0;
    int used = 0;
    for (const auto& ring : bins) {
        if (static_cast<int>(ring.size()) < min_bin_points) continue;
        sum += mzt_roundness(ring);
        ++used;
    }
    if (used == 0)
        throw std::runtime_error("roundness_response: every z-bin has fewer than " +
                                 std::to_string(min_bin_points) + " points");
    return sum / used;
}

} // namespace antler
