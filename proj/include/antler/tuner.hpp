#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace antler {

/// Gaussian-process surrogate state for derivative-free minimization:
/// squared-exponential kernel with per-dimension length scales, constant
/// prior mean at the observation average.
struct BoState {
    std::vector<Eigen::VectorXd> points;
    std::vector<double> values;
    Eigen::VectorXd length_scales; // strictly positive, one per dimension
    double signal_var = 1.0;
    double noise_var = 1e-6;

    std::size_t size() const { return points.size(); }
    void add(const Eigen::VectorXd& x, double value);
};

struct GpPrediction {
    double mean = 0.0;
    double variance = 0.0;
};

/// Standard GP regression posterior at a query point. Throws if the kernel
/// matrix stays singular after one jitter retry.
GpPrediction gp_posterior(const BoState& state, const Eigen::VectorXd& query);

/// Expected improvement under the minimization convention; equals
/// max(f_best - mean, 0) in the zero-variance limit.
double expected_improvement(const BoState& state, const Eigen::VectorXd& query);

struct BoResult {
    Eigen::VectorXd best_point;
    double best_value = 0.0;
    /// One row per evaluation: the point, its objective value, and the
    /// incumbent best value after that evaluation.
    struct TraceRow {
        Eigen::VectorXd point;
        double value = 0.0;
        double incumbent = 0.0;
    };
    std::vector<TraceRow> trace;
};

/// Bayesian optimization of a black-box objective over a box: a seeded
/// space-filling initial design, then per-round hyperparameter selection by
/// marginal-likelihood grid search and EI maximization over seeded uniform
/// candidates with local pattern-search refinement. Objectives returning
/// non-finite values are recorded with a large penalty and skipped over.
BoResult bo_optimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                     const std::vector<std::pair<double, double>>& bounds, int budget,
                     std::uint64_t seed, int initial_design = 8);

} // namespace antler
