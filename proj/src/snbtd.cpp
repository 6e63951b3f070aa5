#include "antler/snbtd.hpp"

#include "antler/mathutil.hpp"
#include "antler/rng.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace antler {

Eigen::Index SnbtdPosterior::total_rank() const {
    Eigen::Index r = 0;
    for (Eigen::Index rk : ranks) r += rk;
    return r;
}

Eigen::VectorXd SnbtdPosterior::entry_input(const std::vector<Eigen::Index>& index) const {
    if (Eigen::Index(index.size()) != Eigen::Index(dims.size()))
        throw std::runtime_error("snbtd: entry index arity does not match mode count");
    Eigen::VectorXd x(total_rank());
    Eigen::Index offset = 0;
    for (std::size_t k = 0; k < dims.size(); ++k) {
        if (index[k] < 0 || index[k] >= dims[k])
            throw std::runtime_error("snbtd: entry index out of range in mode " + std::to_string(k));
        x.segment(offset, ranks[k]) = embedding_mean[k].row(index[k]).transpose();
        offset += ranks[k];
    }
    return x;
}

void SnbtdPosterior::validate() const {
    const double floor = config.variance_floor;
    for (std::size_t k = 0; k < embedding_mean.size(); ++k) {
        if (!embedding_mean[k].allFinite() || !embedding_var[k].allFinite())
            throw std::runtime_error("snbtd: non-finite embedding factor");
        if ((embedding_var[k].array() < floor).any())
            throw std::runtime_error("snbtd: embedding variance below floor");
    }
    if (!frequency_mean.allFinite() || !frequency_var.allFinite())
        throw std::runtime_error("snbtd: non-finite frequency factor");
    if ((frequency_var.array() < floor).any())
        throw std::runtime_error("snbtd: frequency variance below floor");
    if (!weight_mean.allFinite() || !weight_cov.allFinite())
        throw std::runtime_error("snbtd: non-finite weight factor");
    if (!weight_cov.isApprox(weight_cov.transpose(), 1e-10))
        throw std::runtime_error("snbtd: weight covariance not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(weight_cov);
    if (es.eigenvalues().minCoeff() < config.weight_eigen_floor)
        throw std::runtime_error("snbtd: weight covariance eigenvalue below floor");
}

SnbtdPosterior init_posterior(const std::vector<Eigen::Index>& dims,
                              const std::vector<Eigen::Index>& ranks, int num_frequencies,
                              std::uint64_t seed, const SnbtdConfig& config) {
    if (dims.empty() || dims.size() != ranks.size())
        throw std::runtime_error("init_posterior: dims and ranks must be nonempty and equal length");
    for (std::size_t k = 0; k < dims.size(); ++k)
        if (dims[k] < 1 || ranks[k] < 1)
            throw std::runtime_error("init_posterior: dims and ranks must be positive");
    if (num_frequencies < 1) throw std::runtime_error("init_posterior: M must be positive");

    Rng rng(derive_seed(seed, 0x5bd));
    SnbtdPosterior p;
    p.dims = dims;
    p.ranks = ranks;
    p.num_frequencies = num_frequencies;
    p.config = config;

    for (std::size_t k = 0; k < dims.size(); ++k) {
        Eigen::MatrixXd mean(dims[k], ranks[k]);
        for (Eigen::Index i = 0; i < mean.rows(); ++i)
            for (Eigen::Index j = 0; j < mean.cols(); ++j) mean(i, j) = rng.normal();
        p.embedding_mean.push_back(mean);
        p.embedding_var.push_back(Eigen::MatrixXd::Ones(dims[k], ranks[k]));
    }
    const Eigen::Index R = p.total_rank();
    p.frequency_mean.resize(num_frequencies, R);
    for (Eigen::Index i = 0; i < p.frequency_mean.rows(); ++i)
        for (Eigen::Index j = 0; j < p.frequency_mean.cols(); ++j)
            p.frequency_mean(i, j) = rng.normal();
    p.frequency_var = Eigen::MatrixXd::Ones(num_frequencies, R);
    p.weight_mean = Eigen::VectorXd::Zero(2 * num_frequencies);
    p.weight_cov = Eigen::MatrixXd::Identity(2 * num_frequencies, 2 * num_frequencies) /
                   double(num_frequencies);
    return p;
}

Eigen::VectorXd fourier_features(const Eigen::VectorXd& x, const Eigen::MatrixXd& frequency_means) {
    if (x.size() != frequency_means.cols())
        throw std::runtime_error("fourier_features: input length does not match frequency columns");
    const Eigen::Index m = frequency_means.rows();
    const Eigen::VectorXd t = frequency_means * x;
    Eigen::VectorXd phi(2 * m);
    const double scale = 1.0 / std::sqrt(double(m));
    phi.head(m) = scale * t.array().cos();
    phi.tail(m) = scale * t.array().sin();
    return phi;
}

namespace {

/// Tilted moments of a scalar factor N(mean, var) against the linearized
/// probit likelihood Phi(sign * (f0 + g * (theta - mean))), integrated with
/// Gauss-Hermite quadrature. Returns {m1, m2 - m1^2}.
struct ScalarMoments {
    double mean;
    double var;
    bool ok;
};

ScalarMoments tilted_scalar_moments(double mean, double var, double g, double f0, double sign,
                                    const GaussHermite& gh) {
    const double spread = std::sqrt(2.0 * var);
    double z0 = 0.0, z1 = 0.0, z2 = 0.0;
    for (std::size_t q = 0; q < gh.nodes.size(); ++q) {
        const double theta = mean + spread * gh.nodes[q];
        const double lik = norm_cdf(sign * (f0 + g * (theta - mean)));
        const double wl = gh.weights[q] * lik;
        z0 += wl;
        z1 += wl * theta;
        z2 += wl * theta * theta;
    }
    if (!(z0 > 1e-13)) return {mean, var, false};
    const double m1 = z1 / z0;
    const double m2 = z2 / z0;
    return {m1, m2 - m1 * m1, true};
}

/// Closed-form fallback for the same linear-Gaussian-probit tilt, used when
/// the quadrature normalizer underflows (entry far in the current tail).
ScalarMoments tilted_scalar_moments_closed(double mean, double var, double g, double f0,
                                           double sign) {
    const double a = sign * g;
    const double b = sign * f0 - a * mean; // likelihood is Phi(a*theta + b)
    const double denom = std::sqrt(1.0 + a * a * var);
    const double z = (a * mean + b) / denom;
    const double rho = norm_pdf_over_cdf(z);
    const double m1 = mean + var * a * rho / denom;
    const double v1 = var - var * var * a * a * rho * (z + rho) / (1.0 + a * a * var);
    return {m1, v1, true};
}

Eigen::MatrixXd invert_spd_with_jitter(const Eigen::MatrixXd& m, double jitter,
                                       const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() == Eigen::Success)
        return llt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    Eigen::MatrixXd jittered = m + jitter * Eigen::MatrixXd::Identity(m.rows(), m.cols());
    Eigen::LLT<Eigen::MatrixXd> retry(jittered);
    if (retry.info() == Eigen::Success)
        return retry.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    throw std::runtime_error(std::string("snbtd: ") + what +
                             " is numerically singular even after jitter");
}

} // namespace

void update_patch(SnbtdPosterior& p, const std::vector<EntryObservation>& patch) {
    if (patch.empty()) return;

    const int K = p.num_modes();
    const Eigen::Index R = p.total_rank();
    const Eigen::Index M = p.num_frequencies;
    const Eigen::Index W = 2 * M;
    const GaussHermite& gh = gauss_hermite(p.config.gauss_hermite_nodes);
    const double inv_sqrt_m = 1.0 / std::sqrt(double(M));

    std::vector<Eigen::Index> offsets(K, 0);
    for (int k = 1; k < K; ++k) offsets[k] = offsets[k - 1] + p.ranks[k - 1];

    // message accumulators (natural-parameter deltas)
    std::vector<Eigen::MatrixXd> emb_dlam, emb_dh;
    for (int k = 0; k < K; ++k) {
        emb_dlam.push_back(Eigen::MatrixXd::Zero(p.dims[k], p.ranks[k]));
        emb_dh.push_back(Eigen::MatrixXd::Zero(p.dims[k], p.ranks[k]));
    }
    Eigen::MatrixXd freq_dlam = Eigen::MatrixXd::Zero(M, R);
    Eigen::MatrixXd freq_dh = Eigen::MatrixXd::Zero(M, R);
    Eigen::MatrixXd weight_dlam = Eigen::MatrixXd::Zero(W, W);
    Eigen::VectorXd weight_dh = Eigen::VectorXd::Zero(W);

    auto scalar_message = [&](double mean, double var, double g, double f0, double sign,
                              double& dlam, double& dh) {
        ScalarMoments mm = tilted_scalar_moments(mean, var, g, f0, sign, gh);
        if (!mm.ok) mm = tilted_scalar_moments_closed(mean, var, g, f0, sign);
        if (!(mm.var > 0.0) || !std::isfinite(mm.var) || !std::isfinite(mm.mean)) return;
        // site precision is nonnegative for the log-concave probit; clamp
        // away quadrature round-off
        const double dl = std::max(0.0, 1.0 / mm.var - 1.0 / var);
        dlam += dl;
        dh += mm.mean / mm.var - mean / var;
    };

    for (const EntryObservation& obs : patch) {
        const double sign = obs.bit ? 1.0 : -1.0;
        const Eigen::VectorXd x = p.entry_input(obs.index);
        const Eigen::VectorXd t = p.frequency_mean * x;
        const Eigen::VectorXd cos_t = t.array().cos();
        const Eigen::VectorXd sin_t = t.array().sin();
        Eigen::VectorXd phi(W);
        phi.head(M) = inv_sqrt_m * cos_t;
        phi.tail(M) = inv_sqrt_m * sin_t;
        const double f0 = p.weight_mean.dot(phi);

        // (a) weight factor: closed-form Gaussian-probit tilted moments on
        // the 1D projection a = w^T phi
        {
            const Eigen::VectorXd cov_phi = p.weight_cov * phi;
            const double va = std::max(phi.dot(cov_phi), 1e-14);
            const double mu_a = f0;
            const double denom = std::sqrt(1.0 + va);
            const double z = sign * mu_a / denom;
            const double rho = norm_pdf_over_cdf(z);
            const double m1 = mu_a + sign * va * rho / denom;
            const double v1 = va - va * va * rho * (z + rho) / (1.0 + va);
            if (v1 > 0.0 && std::isfinite(m1)) {
                const double tau = std::max(0.0, 1.0 / v1 - 1.0 / va);
                const double nu = m1 / v1 - mu_a / va;
                weight_dlam.selfadjointView<Eigen::Lower>().rankUpdate(phi, tau);
                weight_dh += nu * phi;
            }
        }

        // derivative helper: d f / d t_m summed into the weight means
        Eigen::VectorXd u(M);
        for (Eigen::Index m = 0; m < M; ++m)
            u(m) = inv_sqrt_m *
                   (p.weight_mean(M + m) * cos_t(m) - p.weight_mean(m) * sin_t(m));

        // (b) embedding scalars: gradient of f along each input coordinate
        const Eigen::VectorXd psi = p.frequency_mean.transpose() * u;
        for (int k = 0; k < K; ++k) {
            const Eigen::Index row = obs.index[k];
            for (Eigen::Index r = 0; r < p.ranks[k]; ++r) {
                scalar_message(p.embedding_mean[k](row, r), p.embedding_var[k](row, r),
                               psi(offsets[k] + r), f0, sign, emb_dlam[k](row, r),
                               emb_dh[k](row, r));
            }
        }

        // (b) frequency scalars: d f / d S_mj = u_m * x_j
        for (Eigen::Index m = 0; m < M; ++m) {
            if (u(m) == 0.0) continue;
            for (Eigen::Index j = 0; j < R; ++j) {
                const double g = u(m) * x(j);
                if (g == 0.0) continue;
                double dl = 0.0, dh = 0.0;
                scalar_message(p.frequency_mean(m, j), p.frequency_var(m, j), g, f0, sign, dl, dh);
                freq_dlam(m, j) += dl;
                freq_dh(m, j) += dh;
            }
        }
    }

    // ---- joint blend with damping on natural parameters ----
    const double damping = p.config.damping;
    const double floor = p.config.variance_floor;
    const double cap = p.config.variance_cap;

    auto blend_scalar = [&](double& mean, double& var, double dlam, double dh) {
        const double lam_old = 1.0 / var;
        const double h_old = mean / var;
        double lam_new = lam_old + damping * dlam;
        const double h_new = h_old + damping * dh;
        lam_new = std::min(std::max(lam_new, 1.0 / cap), 1.0 / floor);
        var = 1.0 / lam_new;
        mean = h_new * var;
    };

    for (int k = 0; k < K; ++k)
        for (Eigen::Index i = 0; i < p.dims[k]; ++i)
            for (Eigen::Index r = 0; r < p.ranks[k]; ++r)
                blend_scalar(p.embedding_mean[k](i, r), p.embedding_var[k](i, r),
                             emb_dlam[k](i, r), emb_dh[k](i, r));
    for (Eigen::Index m = 0; m < M; ++m)
        for (Eigen::Index j = 0; j < R; ++j)
            blend_scalar(p.frequency_mean(m, j), p.frequency_var(m, j), freq_dlam(m, j),
                         freq_dh(m, j));

    // weights: Lambda' = Lambda + damping * sum of site precisions
    weight_dlam.triangularView<Eigen::Upper>() = weight_dlam.transpose();
    const Eigen::MatrixXd lambda_old = invert_spd_with_jitter(p.weight_cov, 1e-8, "weight covariance");
    const Eigen::VectorXd h_old = lambda_old * p.weight_mean;
    Eigen::MatrixXd lambda_new = lambda_old + damping * weight_dlam;
    const Eigen::VectorXd h_new = h_old + damping * weight_dh;

    Eigen::MatrixXd cov_new = invert_spd_with_jitter(lambda_new, 1e-8, "weight precision");
    cov_new = 0.5 * (cov_new + cov_new.transpose()).eval();

    // keep the smallest eigenvalue at or above the configured floor
    Eigen::LLT<Eigen::MatrixXd> check(cov_new - p.config.weight_eigen_floor *
                                                    Eigen::MatrixXd::Identity(W, W));
    if (check.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov_new);
        Eigen::VectorXd ev = es.eigenvalues().cwiseMax(p.config.weight_eigen_floor);
        cov_new = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
        cov_new = 0.5 * (cov_new + cov_new.transpose()).eval();
    }
    p.weight_cov = cov_new;
    p.weight_mean = cov_new * h_new;
}

double predict_entry(const SnbtdPosterior& p, const std::vector<Eigen::Index>& index) {
    const Eigen::VectorXd x = p.entry_input(index);
    const Eigen::VectorXd phi = fourier_features(x, p.frequency_mean);
    const double mean = p.weight_mean.dot(phi);
    const double var = std::max(phi.dot(p.weight_cov * phi), 0.0);
    return norm_cdf(mean / std::sqrt(1.0 + var));
}

Eigen::MatrixXd sample_embedding_means(const SnbtdPosterior& p, int sample_mode) {
    if (sample_mode < 0 || sample_mode >= p.num_modes())
        throw std::runtime_error("sample_embedding_means: invalid mode");
    return p.embedding_mean[sample_mode];
}

namespace {

std::vector<double> to_vec(const Eigen::MatrixXd& m) {
    std::vector<double> out(m.size());
    // row-major for the checkpoint layout
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[pos++] = m(i, j);
    return out;
}

Eigen::MatrixXd from_vec(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
    if (Eigen::Index(v.size()) != rows * cols)
        throw std::runtime_error("snbtd checkpoint: matrix size mismatch");
    Eigen::MatrixXd m(rows, cols);
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = v[pos++];
    return m;
}

} // namespace

void save_snbtd_checkpoint(const SnbtdPosterior& p, const std::filesystem::path& path) {
    nlohmann::json j;
    j["snbtd_checkpoint_v1"] = true;
    j["dims"] = p.dims;
    j["ranks"] = p.ranks;
    j["num_frequencies"] = p.num_frequencies;
    j["config"]["gauss_hermite_nodes"] = p.config.gauss_hermite_nodes;
    j["config"]["damping"] = p.config.damping;
    j["config"]["variance_floor"] = p.config.variance_floor;
    j["config"]["variance_cap"] = p.config.variance_cap;
    j["config"]["weight_eigen_floor"] = p.config.weight_eigen_floor;
    for (std::size_t k = 0; k < p.embedding_mean.size(); ++k) {
        j["embedding_mean"].push_back(to_vec(p.embedding_mean[k]));
        j["embedding_var"].push_back(to_vec(p.embedding_var[k]));
    }
    j["frequency_mean"] = to_vec(p.frequency_mean);
    j["frequency_var"] = to_vec(p.frequency_var);
    j["weight_mean"] = std::vector<double>(p.weight_mean.data(),
                                           p.weight_mean.data() + p.weight_mean.size());
    j["weight_cov"] = to_vec(p.weight_cov);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out << j.dump() << "\n";
}

SnbtdPosterior load_snbtd_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    nlohmann::json j;
    in >> j;
    if (!j.contains("snbtd_checkpoint_v1"))
        throw std::runtime_error("not an snbtd checkpoint: " + path.string());
    SnbtdPosterior p;
    p.dims = j.at("dims").get<std::vector<Eigen::Index>>();
    p.ranks = j.at("ranks").get<std::vector<Eigen::Index>>();
    p.num_frequencies = j.at("num_frequencies").get<int>();
    p.config.gauss_hermite_nodes = j.at("config").at("gauss_hermite_nodes").get<int>();
    p.config.damping = j.at("config").at("damping").get<double>();
    p.config.variance_floor = j.at("config").at("variance_floor").get<double>();
    p.config.variance_cap = j.at("config").at("variance_cap").get<double>();
    p.config.weight_eigen_floor = j.at("config").at("weight_eigen_floor").get<double>();
    const Eigen::Index R = p.total_rank();
    for (std::size_t k = 0; k < p.dims.size(); ++k) {
        p.embedding_mean.push_back(
            from_vec(j.at("embedding_mean").at(k).get<std::vector<double>>(), p.dims[k], p.ranks[k]));
        p.embedding_var.push_back(
            from_vec(j.at("embedding_var").at(k).get<std::vector<double>>(), p.dims[k], p.ranks[k]));
    }
    p.frequency_mean =
        from_vec(j.at("frequency_mean").get<std::vector<double>>(), p.num_frequencies, R);
    p.frequency_var =
        from_vec(j.at("frequency_var").get<std::vector<double>>(), p.num_frequencies, R);
    const auto wm = j.at("weight_mean").get<std::vector<double>>();
    p.weight_mean = Eigen::Map<const Eigen::VectorXd>(wm.data(), Eigen::Index(wm.size()));
    p.weight_cov = from_vec(j.at("weight_cov").get<std::vector<double>>(), 2 * p.num_frequencies,
                            2 * p.num_frequencies);
    return p;
}

} // namespace antler
