#pragma once

#include "antler/mlp.hpp"
#include "antler/sampler.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace antler {

/// Hidden-layer widths for the three networks (input/output sizes are
/// implied by m_r, the latent dimension, and the response width).
struct AntlerArchitecture {
    std::vector<int> encoder_hidden{256, 64};
    std::vector<int> decoder_hidden{64, 256};
    std::vector<int> regressor_hidden{32, 16};
};

/// VAE with a regression head and an embedding-matching penalty. The input
/// is the canonical vector of a BalancedSample (length 4*m_r); the decoder
/// emits 3*m_r coordinate means plus m_r occupancy logits.
struct AntlerModel {
    Mlp encoder;
    Mlp decoder;
    Mlp regressor;
    double lambda1 = 1.0;
    double lambda2 = 0.1;
    double lambda3 = 10.0;
    int loss_samples = 5; // importance samples per loss evaluation
    int latent_dim = 8;
    std::size_t m_r = 0;
    int response_dim = 1;
    std::uint64_t init_seed = 0;

    static AntlerModel make(std::size_t m_r, int latent_dim, int response_dim,
                            const AntlerArchitecture& arch, double lambda1, double lambda2,
                            double lambda3, int loss_samples, std::uint64_t seed);

    std::size_t input_dim() const { return 4 * m_r; }
};

/// Sorted, normalized, fixed-length encoding of a BalancedSample: entries
/// ordered lexicographically by voxel index, indices divided by (dim - 1)
/// per axis (dim 1 maps to 0), concatenated as (x, y, z, b) quadruples.
Eigen::VectorXd canonicalize(const BalancedSample& sample);

struct EncodeResult {
    Eigen::VectorXd mu;
    Eigen::VectorXd sigma;
    Eigen::VectorXd logvar;
};

EncodeResult encode(const AntlerModel& model, const Eigen::VectorXd& canonical);

struct DecodeResult {
    Eigen::VectorXd coord_means;      // 3*m_r
    Eigen::VectorXd occupancy_probs;  // m_r, sigmoid outputs in (0,1)
};

DecodeResult decode(const AntlerModel& model, const Eigen::VectorXd& z);

/// The four weighted loss terms; total = reconstruction + kl + embedding +
/// regression. All terms are costs (the reconstruction estimate enters
/// negated) so SGD minimizes the total.
struct LossTerms {
    double total = 0.0;
    double reconstruction = 0.0; // -log mean_j p(D|z_j)/q(z_j|D)
    double kl = 0.0;             // lambda1 * KL(q(z|D) || N(0,I))
    double embedding = 0.0;      // lambda2 * |mu_z - mu_target|^2
    double regression = 0.0;     // lambda3 * |g(mu_z) - y|^2
};

struct AntlerGrad {
    MlpGrad encoder;
    MlpGrad decoder;
    MlpGrad regressor;
};

/// Deterministic loss evaluation: `noise` holds one standard-normal draw per
/// importance sample (loss_samples x latent_dim). mu_target is required
/// exactly when lambda2 > 0.
LossTerms antler_loss(const AntlerModel& model, const Eigen::VectorXd& canonical,
                      const Eigen::VectorXd& y, const Eigen::VectorXd* mu_target,
                      const Eigen::MatrixXd& noise);

/// Loss plus analytic gradients for every parameter group.
LossTerms antler_loss_grad(const AntlerModel& model, const Eigen::VectorXd& canonical,
                           const Eigen::VectorXd& y, const Eigen::VectorXd* mu_target,
                           const Eigen::MatrixXd& noise, AntlerGrad& grad);

/// Sum of per-sample losses under the given per-sample noise draws,
/// accumulated with compensated summation.
LossTerms dataset_antler_loss(const AntlerModel& model,
                              const std::vector<Eigen::VectorXd>& canonicals,
                              const std::vector<Eigen::VectorXd>& responses,
                              const Eigen::MatrixXd* mu_targets,
                              const std::vector<Eigen::MatrixXd>& noises);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 1;
    int max_epochs = 200;
    std::uint64_t seed = 0;
    double tolerance = 1e-6; // on the 10-epoch moving average of total loss; <= 0 disables
};

struct EpochStats {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double embedding = 0.0;
    double regression = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    bool diverged = false;
    int epochs_run = 0;
};

/// Shuffled minibatch SGD with fresh seeded noise per step. Stops at
/// max_epochs or when the 10-epoch moving average of the total loss stops
/// improving by more than the tolerance. On divergence (non-finite loss)
/// the model is rolled back to the end of the last finite epoch.
TrainResult train(AntlerModel& model, const std::vector<BalancedSample>& samples,
                  const std::vector<std::vector<double>>& responses,
                  const Eigen::MatrixXd* snbtd_targets, const TrainConfig& config);

/// Inference: regression head applied to the encoder mean.
Eigen::VectorXd predict(const AntlerModel& model, const BalancedSample& sample);

void save_model(const AntlerModel& model, const std::filesystem::path& path);
AntlerModel load_model(const std::filesystem::path& path);

} // namespace antler
