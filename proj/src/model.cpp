#include "antler/model.hpp"

#include "antler/mathutil.hpp"
#include "antler/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace antler {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;

} // namespace

AntlerModel AntlerModel::make(std::size_t m_r, int latent_dim, int response_dim,
                              const AntlerArchitecture& arch, double lambda1, double lambda2,
                              double lambda3, int loss_samples, std::uint64_t seed) {
    if (m_r < 1) throw std::runtime_error("AntlerModel: m_r must be positive");
    if (latent_dim < 1 || response_dim < 1 || loss_samples < 1)
        throw std::runtime_error("AntlerModel: bad dimensions");
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
        throw std::runtime_error("AntlerModel: lambdas must be nonnegative");

    AntlerModel m;
    m.m_r = m_r;
    m.latent_dim = latent_dim;
    m.response_dim = response_dim;
    m.lambda1 = lambda1;
    m.lambda2 = lambda2;
    m.lambda3 = lambda3;
    m.loss_samples = loss_samples;
    m.init_seed = seed;
    const int input = int(4 * m_r);
    m.encoder = Mlp::make(input, arch.encoder_hidden, 2 * latent_dim, derive_seed(seed, 1));
    m.decoder = Mlp::make(latent_dim, arch.decoder_hidden, input, derive_seed(seed, 2));
    m.regressor = Mlp::make(latent_dim, arch.regressor_hidden, response_dim, derive_seed(seed, 3));
    return m;
}

Eigen::VectorXd canonicalize(const BalancedSample& sample) {
    std::vector<SampleEntry> entries = sample.entries;
    std::sort(entries.begin(), entries.end(),
              [](const SampleEntry& a, const SampleEntry& b) { return a.idx < b.idx; });
    Eigen::VectorXd v(4 * entries.size());
    for (std::size_t e = 0; e < entries.size(); ++e) {
        for (int k = 0; k < 3; ++k) {
            const std::int32_t dim = sample.grid.dims[k];
            v(4 * e + k) = dim > 1 ? double(entries[e].idx[k]) / double(dim - 1) : 0.0;
        }
        v(4 * e + 3) = double(entries[e].bit);
    }
    return v;
}

EncodeResult encode(const AntlerModel& model, const Eigen::VectorXd& canonical) {
    if (canonical.size() != Eigen::Index(model.input_dim()))
        throw std::runtime_error("encode: canonical vector length does not match 4*m_r");
    const Eigen::VectorXd out = model.encoder.forward_vec(canonical);
    if (!out.allFinite()) throw std::runtime_error("encode: non-finite activation");
    EncodeResult r;
    const int L = model.latent_dim;
    r.mu = out.head(L);
    r.logvar = out.tail(L);
    r.sigma = (0.5 * r.logvar).array().exp();
    return r;
}

DecodeResult decode(const AntlerModel& model, const Eigen::VectorXd& z) {
    if (z.size() != model.latent_dim) throw std::runtime_error("decode: latent dim mismatch");
    const Eigen::VectorXd out = model.decoder.forward_vec(z);
    if (!out.allFinite()) throw std::runtime_error("decode: non-finite activation");
    const Eigen::Index mr = Eigen::Index(model.m_r);
    DecodeResult r;
    r.coord_means = out.head(3 * mr);
    r.occupancy_probs.resize(mr);
    for (Eigen::Index i = 0; i < mr; ++i) r.occupancy_probs(i) = sigmoid(out(3 * mr + i));
    return r;
}

namespace {

struct LossWork {
    // dissected input
    Eigen::VectorXd coords_target; // 3*m_r, entry-major (x,y,z)
    Eigen::VectorXd bits;          // m_r
};

LossWork split_canonical(const Eigen::VectorXd& v, std::size_t m_r) {
    LossWork w;
    w.coords_target.resize(3 * m_r);
    w.bits.resize(m_r);
    for (std::size_t e = 0; e < m_r; ++e) {
        w.coords_target(3 * e + 0) = v(4 * e + 0);
        w.coords_target(3 * e + 1) = v(4 * e + 1);
        w.coords_target(3 * e + 2) = v(4 * e + 2);
        w.bits(e) = v(4 * e + 3);
    }
    return w;
}

LossTerms antler_loss_impl(const AntlerModel& model, const Eigen::VectorXd& canonical,
                           const Eigen::VectorXd& y, const Eigen::VectorXd* mu_target,
                           const Eigen::MatrixXd& noise, AntlerGrad* grad) {
    const int L = model.latent_dim;
    const int S = model.loss_samples;
    const Eigen::Index mr = Eigen::Index(model.m_r);
    if (canonical.size() != Eigen::Index(model.input_dim()))
        throw std::runtime_error("antler_loss: canonical vector length does not match 4*m_r");
    if (noise.rows() != S || noise.cols() != L)
        throw std::runtime_error("antler_loss: noise must be loss_samples x latent_dim");
    if (y.size() != model.response_dim)
        throw std::runtime_error("antler_loss: response width mismatch");
    if (model.lambda2 > 0 && mu_target == nullptr)
        throw std::runtime_error("antler_loss: lambda2 > 0 requires an embedding target");
    if (mu_target && mu_target->size() != L)
        throw std::runtime_error("antler_loss: embedding target length mismatch");

    const LossWork work = split_canonical(canonical, model.m_r);

    // encoder
    MlpTape enc_tape;
    const Eigen::VectorXd enc_out =
        model.encoder.forward(Eigen::MatrixXd(canonical), grad ? &enc_tape : nullptr).col(0);
    if (!enc_out.allFinite()) throw std::runtime_error("antler_loss: non-finite encoder output");
    const Eigen::VectorXd mu = enc_out.head(L);
    const Eigen::VectorXd logvar = enc_out.tail(L);
    const Eigen::VectorXd sigma = (0.5 * logvar).array().exp();

    // reparameterized latents, one column per importance sample
    Eigen::MatrixXd z(L, S);
    for (int j = 0; j < S; ++j) z.col(j) = mu.array() + sigma.array() * noise.row(j).transpose().array();

    // decoder on all importance samples at once
    MlpTape dec_tape;
    const Eigen::MatrixXd dec_out = model.decoder.forward(z, grad ? &dec_tape : nullptr);
    if (!dec_out.allFinite()) throw std::runtime_error("antler_loss: non-finite decoder output");

    // importance weights w_j = log p(D|z_j) - log q(z_j|D)
    std::vector<double> w(S, 0.0);
    for (int j = 0; j < S; ++j) {
        double logp = 0.0;
        for (Eigen::Index t = 0; t < 3 * mr; ++t) {
            const double diff = work.coords_target(t) - dec_out(t, j);
            logp += -0.5 * diff * diff - kHalfLog2Pi;
        }
        for (Eigen::Index e = 0; e < mr; ++e) {
            const double o = dec_out(3 * mr + e, j);
            logp += work.bits(e) * o - softplus(o);
        }
        double logq = 0.0;
        for (int l = 0; l < L; ++l)
            logq += -kHalfLog2Pi - 0.5 * logvar(l) - 0.5 * noise(j, l) * noise(j, l);
        w[j] = logp - logq;
    }
    const double lse = log_sum_exp(w);

    LossTerms terms;
    terms.reconstruction = -(lse - std::log(double(S)));
    const double kl_raw =
        0.5 * (mu.array().square() + sigma.array().square() - 1.0 - logvar.array()).sum();
    terms.kl = model.lambda1 * kl_raw;
    if (mu_target) {
        terms.embedding = model.lambda2 * (mu - *mu_target).squaredNorm();
    }

    // regression head runs on the encoder mean
    MlpTape reg_tape;
    const Eigen::VectorXd y_hat =
        model.regressor.forward(Eigen::MatrixXd(mu), grad ? &reg_tape : nullptr).col(0);
    terms.regression = model.lambda3 * (y_hat - y).squaredNorm();
    terms.total = terms.reconstruction + terms.kl + terms.embedding + terms.regression;

    if (!grad) return terms;

    // ---- backward pass ----
    Eigen::VectorXd a(S); // softmax of the importance weights
    for (int j = 0; j < S; ++j) a(j) = std::exp(w[j] - lse);

    // reconstruction gradient through the decoder outputs
    Eigen::MatrixXd dec_grad(dec_out.rows(), S);
    for (int j = 0; j < S; ++j) {
        for (Eigen::Index t = 0; t < 3 * mr; ++t)
            dec_grad(t, j) = -a(j) * (work.coords_target(t) - dec_out(t, j));
        for (Eigen::Index e = 0; e < mr; ++e) {
            const double o = dec_out(3 * mr + e, j);
            dec_grad(3 * mr + e, j) = -a(j) * (work.bits(e) - sigmoid(o));
        }
    }
    const Eigen::MatrixXd z_grad = model.decoder.backward(dec_tape, dec_grad, grad->decoder);

    Eigen::VectorXd mu_grad = z_grad.rowwise().sum();
    Eigen::VectorXd logvar_grad(L);
    for (int l = 0; l < L; ++l) {
        double g = 0.0;
        for (int j = 0; j < S; ++j) g += z_grad(l, j) * 0.5 * sigma(l) * noise(j, l);
        // the -log q term contributes -1/2 per latent (softmax weights sum to 1)
        logvar_grad(l) = g - 0.5;
    }

    // KL term
    mu_grad += model.lambda1 * mu;
    logvar_grad.array() += model.lambda1 * 0.5 * (sigma.array().square() - 1.0);

    // embedding-matching term
    if (mu_target && model.lambda2 > 0)
        mu_grad += 2.0 * model.lambda2 * (mu - *mu_target);

    // regression term
    Eigen::MatrixXd reg_out_grad = 2.0 * model.lambda3 * (y_hat - y);
    mu_grad += model.regressor.backward(reg_tape, reg_out_grad, grad->regressor).col(0);

    Eigen::MatrixXd enc_out_grad(2 * L, 1);
    enc_out_grad.col(0).head(L) = mu_grad;
    enc_out_grad.col(0).tail(L) = logvar_grad;
    model.encoder.backward(enc_tape, enc_out_grad, grad->encoder);
    return terms;
}

} // namespace

LossTerms antler_loss(const AntlerModel& model, const Eigen::VectorXd& canonical,
                      const Eigen::VectorXd& y, const Eigen::VectorXd* mu_target,
                      const Eigen::MatrixXd& noise) {
    return antler_loss_impl(model, canonical, y, mu_target, noise, nullptr);
}

LossTerms antler_loss_grad(const AntlerModel& model, const Eigen::VectorXd& canonical,
                           const Eigen::VectorXd& y, const Eigen::VectorXd* mu_target,
                           const Eigen::MatrixXd& noise, AntlerGrad& grad) {
    return antler_loss_impl(model, canonical, y, mu_target, noise, &grad);
}

LossTerms dataset_antler_loss(const AntlerModel& model,
                              const std::vector<Eigen::VectorXd>& canonicals,
                              const std::vector<Eigen::VectorXd>& responses,
                              const Eigen::MatrixXd* mu_targets,
                              const std::vector<Eigen::MatrixXd>& noises) {
    if (canonicals.size() != responses.size() || canonicals.size() != noises.size())
        throw std::runtime_error("dataset_antler_loss: size mismatch");
    std::vector<double> totals, recons, kls, embeds, regs;
    for (std::size_t i = 0; i < canonicals.size(); ++i) {
        Eigen::VectorXd target;
        const Eigen::VectorXd* tp = nullptr;
        if (mu_targets) {
            target = mu_targets->row(Eigen::Index(i)).transpose();
            tp = &target;
        }
        const LossTerms t = antler_loss(model, canonicals[i], responses[i], tp, noises[i]);
        totals.push_back(t.total);
        recons.push_back(t.reconstruction);
        kls.push_back(t.kl);
        embeds.push_back(t.embedding);
        regs.push_back(t.regression);
    }
    LossTerms out;
    out.total = compensated_sum(totals);
    out.reconstruction = compensated_sum(recons);
    out.kl = compensated_sum(kls);
    out.embedding = compensated_sum(embeds);
    out.regression = compensated_sum(regs);
    return out;
}

TrainResult train(AntlerModel& model, const std::vector<BalancedSample>& samples,
                  const std::vector<std::vector<double>>& responses,
                  const Eigen::MatrixXd* snbtd_targets, const TrainConfig& config) {
    const std::size_t n = samples.size();
    if (n == 0) throw std::runtime_error("train: empty dataset");
    if (responses.size() != n) throw std::runtime_error("train: response count mismatch");
    if (config.batch_size < 1) throw std::runtime_error("train: batch_size must be >= 1");
    if (model.lambda2 > 0) {
        if (!snbtd_targets) throw std::runtime_error("train: lambda2 > 0 requires snbtd_targets");
        if (snbtd_targets->rows() != Eigen::Index(n) ||
            snbtd_targets->cols() != model.latent_dim)
            throw std::runtime_error("train: snbtd_targets must be n x latent_dim");
    }

    std::vector<Eigen::VectorXd> canon(n);
    std::vector<Eigen::VectorXd> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
        canon[i] = canonicalize(samples[i]);
        ys[i] = Eigen::Map<const Eigen::VectorXd>(responses[i].data(), responses[i].size());
        if (ys[i].size() != model.response_dim)
            throw std::runtime_error("train: response width mismatch");
    }

    Rng rng(derive_seed(config.seed, 0xa117));
    const int L = model.latent_dim;
    const int S = model.loss_samples;

    TrainResult result;
    AntlerModel checkpoint = model;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng.shuffle(order);
        EpochStats stats;
        bool finite = true;

        std::size_t pos = 0;
        while (pos < n && finite) {
            const std::size_t batch_end = std::min(pos + std::size_t(config.batch_size), n);
            AntlerGrad grad{model.encoder.zero_grad(), model.decoder.zero_grad(),
                            model.regressor.zero_grad()};
            const double inv_batch = 1.0 / double(batch_end - pos);
            for (std::size_t b = pos; b < batch_end; ++b) {
                const std::size_t i = order[b];
                Eigen::MatrixXd noise(S, L);
                for (int r = 0; r < S; ++r)
                    for (int c = 0; c < L; ++c) noise(r, c) = rng.normal();
                Eigen::VectorXd target;
                const Eigen::VectorXd* tp = nullptr;
                if (model.lambda2 > 0) {
                    target = snbtd_targets->row(Eigen::Index(i)).transpose();
                    tp = &target;
                }
                LossTerms t;
                try {
                    t = antler_loss_grad(model, canon[i], ys[i], tp, noise, grad);
                } catch (const std::exception&) {
                    finite = false;
                    break;
                }
                if (!std::isfinite(t.total)) {
                    finite = false;
                    break;
                }
                stats.total += t.total / double(n);
                stats.reconstruction += t.reconstruction / double(n);
                stats.kl += t.kl / double(n);
                stats.embedding += t.embedding / double(n);
                stats.regression += t.regression / double(n);
            }
            if (!finite) break;
            grad.encoder.scale(inv_batch);
            grad.decoder.scale(inv_batch);
            grad.regressor.scale(inv_batch);
            model.encoder.apply_sgd(grad.encoder, config.learning_rate);
            model.decoder.apply_sgd(grad.decoder, config.learning_rate);
            model.regressor.apply_sgd(grad.regressor, config.learning_rate);
            pos = batch_end;
        }

        if (!finite || !model.encoder.all_finite() || !model.decoder.all_finite() ||
            !model.regressor.all_finite()) {
            model = checkpoint; // roll back to the last finite epoch
            result.diverged = true;
            break;
        }
        checkpoint = model;
        result.history.push_back(stats);
        result.epochs_run = epoch + 1;

        // 10-epoch moving-average convergence check (tolerance <= 0 disables)
        const int w = 10;
        const int e = int(result.history.size());
        if (config.tolerance > 0 && e >= 2 * w) {
            double cur = 0.0, prev = 0.0;
            for (int k = e - w; k < e; ++k) cur += result.history[k].total / w;
            for (int k = e - 2 * w; k < e - w; ++k) prev += result.history[k].total / w;
            if (prev - cur < config.tolerance) break;
        }
    }
    return result;
}

Eigen::VectorXd predict(const AntlerModel& model, const BalancedSample& sample) {
    if (sample.size() != model.m_r)
        throw std::runtime_error("predict: sample length " + std::to_string(sample.size()) +
                                 " does not match model m_r " + std::to_string(model.m_r));
    const EncodeResult enc = encode(model, canonicalize(sample));
    return model.regressor.forward_vec(enc.mu);
}

namespace {

nlohmann::json mlp_to_json(const Mlp& mlp) {
    nlohmann::json layers = nlohmann::json::array();
    for (const MlpLayer& l : mlp.layers) {
        nlohmann::json jl;
        jl["rows"] = l.weight.rows();
        jl["cols"] = l.weight.cols();
        jl["activation"] = l.activation == Activation::Tanh ? "tanh" : "linear";
        std::vector<double> w(l.weight.data(), l.weight.data() + l.weight.size());
        std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
        jl["weight"] = w; // column-major
        jl["bias"] = b;
        layers.push_back(std::move(jl));
    }
    return layers;
}

Mlp mlp_from_json(const nlohmann::json& j) {
    Mlp mlp;
    for (const auto& jl : j) {
        MlpLayer l;
        const Eigen::Index rows = jl.at("rows").get<Eigen::Index>();
        const Eigen::Index cols = jl.at("cols").get<Eigen::Index>();
        const auto w = jl.at("weight").get<std::vector<double>>();
        const auto b = jl.at("bias").get<std::vector<double>>();
        if (Eigen::Index(w.size()) != rows * cols || Eigen::Index(b.size()) != rows)
            throw std::runtime_error("model file: layer size mismatch");
        l.weight = Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols);
        l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), rows);
        l.activation = jl.at("activation") == "tanh" ? Activation::Tanh : Activation::Linear;
        mlp.layers.push_back(std::move(l));
    }
    return mlp;
}

} // namespace

void save_model(const AntlerModel& model, const std::filesystem::path& path) {
    nlohmann::json j;
    j["antler_model_v1"] = true;
    j["m_r"] = model.m_r;
    j["latent_dim"] = model.latent_dim;
    j["response_dim"] = model.response_dim;
    j["loss_samples"] = model.loss_samples;
    j["lambda1"] = model.lambda1;
    j["lambda2"] = model.lambda2;
    j["lambda3"] = model.lambda3;
    j["init_seed"] = model.init_seed;
    j["normalization"] = "voxel indices divided by (dim - 1) per axis";
    j["encoder"] = mlp_to_json(model.encoder);
    j["decoder"] = mlp_to_json(model.decoder);
    j["regressor"] = mlp_to_json(model.regressor);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file: " + path.string());
    out << j.dump() << "\n";
}

AntlerModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path.string());
    nlohmann::json j;
    in >> j;
    if (!j.contains("antler_model_v1"))
        throw std::runtime_error("not an antler model file: " + path.string());
    AntlerModel m;
    m.m_r = j.at("m_r").get<std::size_t>();
    m.latent_dim = j.at("latent_dim").get<int>();
    m.response_dim = j.at("response_dim").get<int>();
    m.loss_samples = j.at("loss_samples").get<int>();
    m.lambda1 = j.at("lambda1").get<double>();
    m.lambda2 = j.at("lambda2").get<double>();
    m.lambda3 = j.at("lambda3").get<double>();
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    m.encoder = mlp_from_json(j.at("encoder"));
    m.decoder = mlp_from_json(j.at("decoder"));
    m.regressor = mlp_from_json(j.at("regressor"));
    return m;
}

} // namespace antler
