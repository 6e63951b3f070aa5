#include "antler/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace antler {

namespace {

bool lex_less(const Vec3& a, const Vec3& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    return a.z < b.z;
}

} // namespace

std::vector<double> extract_minmax_features(const PointCloud& cloud, std::size_t k_f) {
    cloud.validate();
    if (k_f < 1) throw std::runtime_error("extract_minmax_features: k_f must be >= 1");
    const std::size_t n = cloud.size();

    std::vector<double> features;
    features.reserve(18 * k_f);
    std::vector<std::size_t> order(n);
    for (int axis = 0; axis < 3; ++axis) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const Vec3& pa = cloud.points[a];
            const Vec3& pb = cloud.points[b];
            if (pa[axis] != pb[axis]) return pa[axis] < pb[axis];
            if (!(pa == pb)) return lex_less(pa, pb);
            return a < b;
        });
        // smallest tail then largest tail, each in rank order; short clouds
        // repeat the boundary point to keep the vector length fixed
        for (int tail = 0; tail < 2; ++tail) {
            for (std::size_t r = 0; r < k_f; ++r) {
                const std::size_t rank = std::min(r, n - 1);
                const std::size_t idx = tail == 0 ? order[rank] : order[n - 1 - rank];
                const Vec3& p = cloud.points[idx];
                features.push_back(p.x);
                features.push_back(p.y);
                features.push_back(p.z);
            }
        }
    }
    return features;
}

std::vector<std::vector<double>> baseline_fit_predict(
    const std::vector<std::vector<double>>& train_features,
    const std::vector<std::vector<double>>& train_responses,
    const std::vector<std::vector<double>>& test_features, std::size_t k_nn) {
    const std::size_t n = train_features.size();
    if (n == 0) throw std::runtime_error("baseline_fit_predict: empty training set");
    if (train_responses.size() != n)
        throw std::runtime_error("baseline_fit_predict: feature/response count mismatch");
    if (k_nn < 1 || k_nn > n)
        throw std::runtime_error("baseline_fit_predict: k_nn must be in [1, train size]");
    const std::size_t dim = train_features[0].size();
    const std::size_t p = train_responses[0].size();

    // per-dimension z-scoring from training statistics
    std::vector<double> mean(dim, 0.0), stddev(dim, 0.0);
    for (const auto& f : train_features) {
        if (f.size() != dim) throw std::runtime_error("baseline_fit_predict: ragged features");
        for (std::size_t d = 0; d < dim; ++d) mean[d] += f[d];
    }
    for (std::size_t d = 0; d < dim; ++d) mean[d] /= double(n);
    for (const auto& f : train_features)
        for (std::size_t d = 0; d < dim; ++d) stddev[d] += (f[d] - mean[d]) * (f[d] - mean[d]);
    std::vector<char> active(dim, 1);
    for (std::size_t d = 0; d < dim; ++d) {
        stddev[d] = std::sqrt(stddev[d] / double(n));
        if (stddev[d] == 0.0) active[d] = 0; // constant dimension: drop from the metric
    }

    auto distance = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
            if (!active[d]) continue;
            const double diff = (a[d] - b[d]) / stddev[d];
            s += diff * diff;
        }
        return std::sqrt(s);
    };

    std::vector<std::vector<double>> predictions;
    predictions.reserve(test_features.size());
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (const auto& q : test_features) {
        if (q.size() != dim) throw std::runtime_error("baseline_fit_predict: test feature width mismatch");
        for (std::size_t i = 0; i < n; ++i) dist[i] = {distance(q, train_features[i]), i};
        std::sort(dist.begin(), dist.end()); // pair ordering ties by training index
        std::vector<double> pred(p, 0.0);
        if (dist[0].first == 0.0) {
            // exact matches: average their responses
            std::size_t zeros = 0;
            while (zeros < n && dist[zeros].first == 0.0) ++zeros;
            for (std::size_t i = 0; i < zeros; ++i)
                for (std::size_t j = 0; j < p; ++j) pred[j] += train_responses[dist[i].second][j];
            for (std::size_t j = 0; j < p; ++j) pred[j] /= double(zeros);
        } else {
            double weight_sum = 0.0;
            for (std::size_t i = 0; i < k_nn; ++i) {
                const double w = 1.0 / dist[i].first;
                weight_sum += w;
                for (std::size_t j = 0; j < p; ++j)
                    pred[j] += w * train_responses[dist[i].second][j];
            }
            for (std::size_t j = 0; j < p; ++j) pred[j] /= weight_sum;
        }
        predictions.push_back(std::move(pred));
    }
    return predictions;
}

std::vector<std::vector<double>> mean_predictor(
    const std::vector<std::vector<double>>& train_responses, std::size_t test_size) {
    if (train_responses.empty()) throw std::runtime_error("mean_predictor: empty training responses");
    const std::size_t p = train_responses[0].size();
    std::vector<double> mean(p, 0.0);
    for (const auto& y : train_responses) {
        if (y.size() != p) throw std::runtime_error("mean_predictor: ragged responses");
        for (std::size_t j = 0; j < p; ++j) mean[j] += y[j];
    }
    for (std::size_t j = 0; j < p; ++j) mean[j] /= double(train_responses.size());
    return std::vector<std::vector<double>>(test_size, mean);
}

} // namespace antler
