#pragma once

#include "antler/baseline.hpp"
#include "antler/model.hpp"
#include "antler/sampler.hpp"
#include "antler/snbtd.hpp"
#include "antler/synthlab.hpp"
#include "antler/voxel.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace antler {

inline constexpr const char* kArtifactVersion = "antler 1.0.0";

/// Resolved experiment configuration. Every stage seed is derived from the
/// single master seed by fixed stream offsets.
struct PipelineConfig {
    // dataset source: "wave", "cone", or "manifest"
    std::string dataset = "wave";
    std::string manifest_path;
    WaveParams wave;
    ConeParams cone;
    UnstructureParams unstructure_params; // seed field ignored (derived)
    int roundness_bins = 20;

    // voxel grid
    std::array<std::int32_t, 3> grid_initial_dims{100, 100, 100};
    std::int32_t grid_max_dim = 1024;
    double grid_margin = 0.05;
    /// One measurement volume per fold (union of the training clouds'
    /// margined boxes) so canonical coordinates keep absolute geometry;
    /// resolution still adapts per sample. false = fully per-sample boxes.
    bool grid_shared_box = true;
    /// Extra symmetric expansion of the shared volume per axis (fraction of
    /// extent), headroom for test clouds outside the training extremes.
    double grid_shared_box_expand = 0.5;

    // balanced sampling
    std::size_t mr_override = 0; // 0 = compute from training folds

    // snbtd regularizer
    std::array<std::int32_t, 3> snbtd_dims{16, 16, 16};
    std::vector<Eigen::Index> snbtd_spatial_ranks{3, 3, 3};
    int snbtd_frequencies = 32;
    int snbtd_epochs = 2;
    std::size_t snbtd_patch = 512;
    SnbtdConfig snbtd_config;

    // model
    AntlerArchitecture architecture;
    int latent_dim = 8;
    int loss_samples = 5;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double lambda3 = 10.0;
    TrainConfig train_config;

    // feature baseline
    std::size_t baseline_k_f = 64;
    std::size_t baseline_k_nn = 5;

    // tuning (lambda search in log10 space)
    bool tune = false;
    int tune_budget = 16;
    int tune_folds = 3;
    std::array<std::pair<double, double>, 3> tune_bounds{
        {{-3.0, 3.0}, {-3.0, 3.0}, {-3.0, 3.0}}};

    // evaluation
    int folds = 10;
    std::uint64_t master_seed = 0;
    std::filesystem::path out_dir = "antler_out";
    bool write_artifacts = true; // fold models, checkpoints, provenance
};

PipelineConfig load_pipeline_config(const std::filesystem::path& json_path);
std::string pipeline_config_to_json(const PipelineConfig& config);

/// One line of results.csv.
struct ResultRow {
    std::string method; // "antler", "baseline_knn", "mean", or "skip"
    int fold = 0;
    int response_index = 0; // -1 for skip records
    double rmse = 0.0;      // meaningful only when status == "ok"
    std::string status = "ok";
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::filesystem::path results_csv;

    /// Mean over "ok" folds of the given method/response RMSE.
    double mean_rmse(const std::string& method, int response_index = 0) const;
};

/// Seeded shuffle followed by a contiguous partition into k folds whose
/// sizes differ by at most one. The union is {0..n-1}.
std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, int k, std::uint64_t seed);

/// Per-output-column root mean squared error.
std::vector<double> rmse(const std::vector<std::vector<double>>& predictions,
                         const std::vector<std::vector<double>>& truth);

/// Generates (or loads) the dataset for a config. Generated datasets carry
/// per-sample model clouds; responses come from the extreme-value subsets.
Dataset build_dataset(const PipelineConfig& config);

/// Streams the selected samples through the joint 4-way (x, y, z, sample)
/// decomposition on a shared coarse grid derived from those samples. The
/// returned posterior's mode-4 embedding means are the per-sample
/// regularization targets.
SnbtdPosterior fit_snbtd_posterior(const PipelineConfig& config, const Dataset& dataset,
                                   const std::vector<std::size_t>& indices, int fold_tag);

/// Full cross-validated experiment: voxelize, balanced-sample, SNBTD
/// pretraining, ANTLER training, baseline and mean-predictor comparisons,
/// k-fold RMSE emission. Writes results.csv plus per-fold artifacts and a
/// provenance record into config.out_dir.
ExperimentResult run_experiment(const PipelineConfig& config);

} // namespace antler
