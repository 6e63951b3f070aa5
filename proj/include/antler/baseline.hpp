#pragma once

#include "antler/geometry.hpp"

#include <cstddef>
#include <vector>

namespace antler {

/// Symmetric min/max coordinate features: for each axis the k_f smallest and
/// k_f largest points contribute their full 3D coordinates, giving a fixed
/// 18*k_f vector (clouds smaller than 2*k_f pad by repeating the boundary
/// point of each tail).
std::vector<double> extract_minmax_features(const PointCloud& cloud, std::size_t k_f);

/// k-nearest-neighbor regression in z-scored feature space with
/// inverse-distance weighting. Zero-variance feature dimensions are dropped
/// from the metric. Fully deterministic; ties break by training index.
std::vector<std::vector<double>> baseline_fit_predict(
    const std::vector<std::vector<double>>& train_features,
    const std::vector<std::vector<double>>& train_responses,
    const std::vector<std::vector<double>>& test_features, std::size_t k_nn);

/// Constant predictor: the per-dimension mean of the training responses.
std::vector<std::vector<double>> mean_predictor(
    const std::vector<std::vector<double>>& train_responses, std::size_t test_size);

} // namespace antler
