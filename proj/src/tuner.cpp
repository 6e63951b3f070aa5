#include "antler/tuner.hpp"

#include "antler/mathutil.hpp"
#include "antler/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace antler {

void BoState::add(const Eigen::VectorXd& x, double value) {
    if (!points.empty() && x.size() != points[0].size())
        throw std::runtime_error("BoState::add: dimension mismatch");
    if (!std::isfinite(value)) throw std::runtime_error("BoState::add: non-finite value");
    points.push_back(x);
    values.push_back(value);
}

namespace {

double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                 const Eigen::VectorXd& length_scales, double signal_var) {
    double s = 0.0;
    for (Eigen::Index d = 0; d < a.size(); ++d) {
        const double diff = (a(d) - b(d)) / length_scales(d);
        s += diff * diff;
    }
    return signal_var * std::exp(-0.5 * s);
}

struct GpFactor {
    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::VectorXd alpha; // K^{-1} (y - mean)
    double prior_mean = 0.0;
};

GpFactor factorize(const BoState& state) {
    const Eigen::Index n = Eigen::Index(state.size());
    if (n == 0) throw std::runtime_error("gp_posterior: need at least one observation");
    if (state.length_scales.size() != state.points[0].size())
        throw std::runtime_error("gp_posterior: length-scale dimension mismatch");
    if ((state.length_scales.array() <= 0).any() || state.signal_var <= 0)
        throw std::runtime_error("gp_posterior: kernel hyperparameters must be positive");

    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k =
                se_kernel(state.points[i], state.points[j], state.length_scales, state.signal_var);
            gram(i, j) = k;
            gram(j, i) = k;
        }
    gram.diagonal().array() += state.noise_var;

    GpFactor f;
    f.prior_mean = 0.0;
    for (double v : state.values) f.prior_mean += v / double(n);
    Eigen::VectorXd centered(n);
    for (Eigen::Index i = 0; i < n; ++i) centered(i) = state.values[i] - f.prior_mean;

    f.llt.compute(gram);
    if (f.llt.info() != Eigen::Success) {
        gram.diagonal().array() += 1e-8; // jitter retry
        f.llt.compute(gram);
        if (f.llt.info() != Eigen::Success)
            throw std::runtime_error("gp_posterior: kernel matrix singular after jitter");
    }
    f.alpha = f.llt.solve(centered);
    return f;
}

GpPrediction predict_with(const BoState& state, const GpFactor& f, const Eigen::VectorXd& query) {
    const Eigen::Index n = Eigen::Index(state.size());
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i)
        k_star(i) = se_kernel(state.points[i], query, state.length_scales, state.signal_var);
    GpPrediction out;
    out.mean = f.prior_mean + k_star.dot(f.alpha);
    const Eigen::VectorXd v = f.llt.solve(k_star);
    out.variance = std::max(0.0, state.signal_var - k_star.dot(v));
    return out;
}

double log_marginal_likelihood(const BoState& state) {
    const Eigen::Index n = Eigen::Index(state.size());
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k =
                se_kernel(state.points[i], state.points[j], state.length_scales, state.signal_var);
            gram(i, j) = k;
            gram(j, i) = k;
        }
    gram.diagonal().array() += state.noise_var;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) return -1e300;
    double mean = 0.0;
    for (double v : state.values) mean += v / double(n);
    Eigen::VectorXd centered(n);
    for (Eigen::Index i = 0; i < n; ++i) centered(i) = state.values[i] - mean;
    const Eigen::VectorXd alpha = llt.solve(centered);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * centered.dot(alpha) - 0.5 * log_det - 0.5 * double(n) * std::log(2.0 * kPi);
}

} // namespace

GpPrediction gp_posterior(const BoState& state, const Eigen::VectorXd& query) {
    return predict_with(state, factorize(state), query);
}

double expected_improvement(const BoState& state, const Eigen::VectorXd& query) {
    double f_best = state.values[0];
    for (double v : state.values) f_best = std::min(f_best, v);
    const GpPrediction p = gp_posterior(state, query);
    const double sigma = std::sqrt(std::max(0.0, p.variance));
    if (sigma == 0.0) return std::max(f_best - p.mean, 0.0);
    const double u = (f_best - p.mean) / sigma;
    return std::max(0.0, (f_best - p.mean) * norm_cdf(u) + sigma * norm_pdf(u));
}

BoResult bo_optimize(const std::function<double(const Eigen::VectorXd&)>& objective,
                     const std::vector<std::pair<double, double>>& bounds, int budget,
                     std::uint64_t seed, int initial_design) {
    const int dim = int(bounds.size());
    if (dim < 1) throw std::runtime_error("bo_optimize: empty bounds");
    for (const auto& [lo, hi] : bounds)
        if (!(lo < hi)) throw std::runtime_error("bo_optimize: bad interval");
    if (initial_design < 1) throw std::runtime_error("bo_optimize: initial design must be >= 1");
    if (budget < initial_design)
        throw std::runtime_error("bo_optimize: budget below initial design size");

    Rng rng(derive_seed(seed, 0xb0));
    constexpr double kPenalty = 1e6;

    BoResult result;
    BoState state;
    state.length_scales = Eigen::VectorXd::Ones(dim);

    auto record = [&](const Eigen::VectorXd& x, double raw) {
        const double value = std::isfinite(raw) ? raw : kPenalty;
        state.add(x, value);
        if (result.trace.empty() || value < result.best_value) {
            result.best_point = x;
            result.best_value = value;
        }
        result.trace.push_back({x, value, result.best_value});
    };

    // space-filling initial design: Latin hypercube, seeded
    {
        std::vector<std::vector<int>> perms(dim, std::vector<int>(initial_design));
        for (int d = 0; d < dim; ++d) {
            for (int i = 0; i < initial_design; ++i) perms[d][i] = i;
            rng.shuffle(perms[d]);
        }
        for (int i = 0; i < initial_design; ++i) {
            Eigen::VectorXd x(dim);
            for (int d = 0; d < dim; ++d) {
                const double cell = (perms[d][i] + rng.uniform()) / double(initial_design);
                x(d) = bounds[d].first + cell * (bounds[d].second - bounds[d].first);
            }
            record(x, objective(x));
        }
    }

    for (int round = initial_design; round < budget; ++round) {
        // hyperparameters by marginal-likelihood grid search
        double y_var = 0.0, y_mean = 0.0;
        for (double v : state.values) y_mean += v / double(state.size());
        for (double v : state.values) y_var += (v - y_mean) * (v - y_mean) / double(state.size());
        y_var = std::max(y_var, 1e-12);

        double best_ll = -1e301;
        Eigen::VectorXd best_ls = state.length_scales;
        double best_noise = state.noise_var;
        for (double ls_factor : {0.05, 0.1, 0.2, 0.5, 1.0, 2.0}) {
            for (double noise_factor : {1e-6, 1e-4, 1e-2}) {
                for (int d = 0; d < dim; ++d)
                    state.length_scales(d) = ls_factor * (bounds[d].second - bounds[d].first);
                state.signal_var = y_var;
                state.noise_var = noise_factor * y_var;
                const double ll = log_marginal_likelihood(state);
                if (ll > best_ll) {
                    best_ll = ll;
                    best_ls = state.length_scales;
                    best_noise = state.noise_var;
                }
            }
        }
        state.length_scales = best_ls;
        state.signal_var = y_var;
        state.noise_var = best_noise;

        const GpFactor factor = factorize(state);
        double f_best = state.values[0];
        for (double v : state.values) f_best = std::min(f_best, v);
        auto ei_of = [&](const Eigen::VectorXd& x) {
            const GpPrediction p = predict_with(state, factor, x);
            const double sigma = std::sqrt(std::max(0.0, p.variance));
            if (sigma == 0.0) return std::max(f_best - p.mean, 0.0);
            const double u = (f_best - p.mean) / sigma;
            return std::max(0.0, (f_best - p.mean) * norm_cdf(u) + sigma * norm_pdf(u));
        };

        // 1024 seeded uniform candidates
        Eigen::VectorXd best_x(dim);
        double best_ei = -1.0;
        for (int c = 0; c < 1024; ++c) {
            Eigen::VectorXd x(dim);
            for (int d = 0; d < dim; ++d) x(d) = rng.uniform(bounds[d].first, bounds[d].second);
            const double ei = ei_of(x);
            if (ei > best_ei) {
                best_ei = ei;
                best_x = x;
            }
        }
        // local pattern-search refinement, clamped to the box
        for (int d = 0; d < dim; ++d) {
            double step = 0.05 * (bounds[d].second - bounds[d].first);
            for (int iter = 0; iter < 24; ++iter) {
                bool improved = false;
                for (double delta : {step, -step}) {
                    Eigen::VectorXd x = best_x;
                    x(d) = std::min(std::max(x(d) + delta, bounds[d].first), bounds[d].second);
                    const double ei = ei_of(x);
                    if (ei > best_ei) {
                        best_ei = ei;
                        best_x = x;
                        improved = true;
                    }
                }
                if (!improved) step *= 0.5;
                if (step < 1e-9) break;
            }
        }
        record(best_x, objective(best_x));
    }
    return result;
}

} // namespace antler
