#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace antler {

/// One observed entry of the K-way binary tensor.
struct EntryObservation {
    std::vector<Eigen::Index> index; // one index per mode, within [0, d_k)
    std::uint8_t bit = 0;
};

struct SnbtdConfig {
    int gauss_hermite_nodes = 9;
    double damping = 0.5;
    double variance_floor = 1e-8;
    double variance_cap = 1e8;
    double weight_eigen_floor = 1e-10;
};

/// Factorized Gaussian posterior of the sparse-spectrum probit tensor model:
/// per-scalar Gaussians over the mode embeddings and the frequency matrix,
/// plus a full Gaussian over the feature weights.
///
/// For an entry at index (i_1..i_K), the feature input x concatenates the
/// embedding rows U^k[i_k, :] (length R = sum r_k); the likelihood is
/// Phi((2b - 1) w^T phi(x)) with phi the random Fourier feature map over the
/// M frequency rows.
struct SnbtdPosterior {
    std::vector<Eigen::Index> dims;
    std::vector<Eigen::Index> ranks;
    int num_frequencies = 0; // M

    std::vector<Eigen::MatrixXd> embedding_mean; // per mode, d_k x r_k
    std::vector<Eigen::MatrixXd> embedding_var;
    Eigen::MatrixXd frequency_mean; // M x R
    Eigen::MatrixXd frequency_var;
    Eigen::VectorXd weight_mean; // 2M
    Eigen::MatrixXd weight_cov;  // 2M x 2M

    SnbtdConfig config;

    int num_modes() const { return int(dims.size()); }
    Eigen::Index total_rank() const;

    /// Concatenated posterior-mean embedding rows for an entry index.
    Eigen::VectorXd entry_input(const std::vector<Eigen::Index>& index) const;

    /// Throws unless all variances are at or above the floor, all values are
    /// finite, and the weight covariance is symmetric positive definite with
    /// smallest eigenvalue >= the configured eigenvalue floor.
    void validate() const;
};

/// Prior-initialized posterior: embedding and frequency means are seeded
/// standard-normal draws with unit variances; weights start at N(0, (1/M) I).
SnbtdPosterior init_posterior(const std::vector<Eigen::Index>& dims,
                              const std::vector<Eigen::Index>& ranks, int num_frequencies,
                              std::uint64_t seed, const SnbtdConfig& config = {});

/// Random Fourier feature map phi(x) = M^{-1/2} [cos(S x); sin(S x)] built
/// from the frequency means. |phi(x)| = 1 for every x.
Eigen::VectorXd fourier_features(const Eigen::VectorXd& x, const Eigen::MatrixXd& frequency_means);

/// Absorbs one patch of observations into the posterior. Every per-entry
/// message is computed against the pre-patch posterior; the summed messages
/// are applied jointly with damping on natural parameters. The weight factor
/// uses the closed-form Gaussian-probit tilted moments; embedding and
/// frequency scalars use a first-order Taylor linearization of w^T phi(x)
/// around the current means with Gauss-Hermite quadrature for the moments.
/// An empty patch leaves the posterior bit-for-bit unchanged.
void update_patch(SnbtdPosterior& posterior, const std::vector<EntryObservation>& patch);

/// Predictive probability of bit 1 at an index: the probit predictive with
/// Gaussian weight uncertainty, means substituted for embeddings/frequencies.
double predict_entry(const SnbtdPosterior& posterior, const std::vector<Eigen::Index>& index);

/// Posterior means of the designated mode's embedding matrix
/// (d_mode x r_mode); row i is the regularization target for sample i.
Eigen::MatrixXd sample_embedding_means(const SnbtdPosterior& posterior, int sample_mode);

void save_snbtd_checkpoint(const SnbtdPosterior& posterior, const std::filesystem::path& path);
SnbtdPosterior load_snbtd_checkpoint(const std::filesystem::path& path);

} // namespace antler
