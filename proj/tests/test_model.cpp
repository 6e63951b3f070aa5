#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "antler/mathutil.hpp"
#include "antler/model.hpp"
#include "antler/rng.hpp"
#include "test_util.hpp"

#include <cmath>
#include <filesystem>

using namespace antler;

namespace {

BalancedSample make_sample(std::uint64_t seed, std::size_t m_r, std::int32_t dim = 6) {
    PointCloud c = testutil::random_cloud(m_r / 2 + 2, seed);
    GridSpec g;
    g.box = bounding_box(c);
    g.dims = {dim, dim, dim};
    BinaryVoxelTensor t = voxelize(c, g);
    // trim the tensor so 2*|occupied| <= m_r
    while (2 * t.count() > m_r) t.occupied.erase(t.occupied.begin());
    return balanced_sample(t, m_r, derive_seed(seed, 1));
}

AntlerModel tiny_model(std::size_t m_r, double l1, double l2, double l3, std::uint64_t seed) {
    AntlerArchitecture arch;
    arch.encoder_hidden = {8, 5};
    arch.decoder_hidden = {5, 8};
    arch.regressor_hidden = {4};
    return AntlerModel::make(m_r, 3, 2, arch, l1, l2, l3, 4, seed);
}

Eigen::MatrixXd fixed_noise(int s, int l, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd n(s, l);
    for (int i = 0; i < s; ++i)
        for (int j = 0; j < l; ++j) n(i, j) = rng.normal();
    return n;
}

struct ParamRef {
    double* ptr;
    const char* group;
};

std::vector<ParamRef> all_params(AntlerModel& m) {
    std::vector<ParamRef> out;
    auto add = [&out](Mlp& mlp, const char* name) {
        for (MlpLayer& l : mlp.layers) {
            for (Eigen::Index i = 0; i < l.weight.size(); ++i) out.push_back({l.weight.data() + i, name});
            for (Eigen::Index i = 0; i < l.bias.size(); ++i) out.push_back({l.bias.data() + i, name});
        }
    };
    add(m.encoder, "encoder");
    add(m.decoder, "decoder");
    add(m.regressor, "regressor");
    return out;
}

std::vector<double> flatten_grad(const AntlerGrad& g) {
    std::vector<double> out;
    auto add = [&out](const MlpGrad& mg) {
        for (std::size_t l = 0; l < mg.weight.size(); ++l) {
            for (Eigen::Index i = 0; i < mg.weight[l].size(); ++i)
                out.push_back(mg.weight[l].data()[i]);
            for (Eigen::Index i = 0; i < mg.bias[l].size(); ++i)
                out.push_back(mg.bias[l].data()[i]);
        }
    };
    add(g.encoder);
    add(g.decoder);
    add(g.regressor);
    return out;
}

} // namespace

TEST_CASE("canonicalize is permutation invariant and matches a reference") {
    BalancedSample s = make_sample(3, 16);
    Eigen::VectorXd v = canonicalize(s);
    REQUIRE(v.size() == 64);

    BalancedSample shuffled = s;
    Rng rng(8);
    rng.shuffle(shuffled.entries);
    Eigen::VectorXd v2 = canonicalize(shuffled);
    CHECK(v == v2);

    // brute-force reference: sort quadruples then normalize
    std::vector<std::array<double, 4>> rows;
    for (const SampleEntry& e : s.entries)
        rows.push_back({double(e.idx[0]), double(e.idx[1]), double(e.idx[2]), double(e.bit)});
    std::sort(rows.begin(), rows.end());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            const double dim = double(s.grid.dims[k]);
            CHECK(v(4 * i + k) == (dim > 1 ? rows[i][k] / (dim - 1.0) : 0.0));
        }
        CHECK(v(4 * i + 3) == rows[i][3]);
    }
}

TEST_CASE("canonicalize single-entry sample on a 2^3 grid") {
    BalancedSample s;
    s.grid.box = {{0, 0, 0}, {1, 1, 1}};
    s.grid.dims = {2, 2, 2};
    s.entries = {{{0, 0, 0}, 1}};
    Eigen::VectorXd v = canonicalize(s);
    REQUIRE(v.size() == 4);
    CHECK(v(0) == 0.0);
    CHECK(v(1) == 0.0);
    CHECK(v(2) == 0.0);
    CHECK(v(3) == 1.0);
}

TEST_CASE("encode: zero final layer gives mu equal to bias; sigma positive") {
    AntlerModel m = tiny_model(8, 1, 0, 1, 42);
    m.encoder.layers.back().weight.setZero();
    m.encoder.layers.back().bias << 0.3, -0.7, 1.1, 0.0, 0.5, -0.2;
    Eigen::VectorXd v = canonicalize(make_sample(5, 8));
    EncodeResult r = encode(m, v);
    CHECK(r.mu(0) == 0.3);
    CHECK(r.mu(1) == -0.7);
    CHECK(r.mu(2) == 1.1);
    for (int l = 0; l < 3; ++l) CHECK(r.sigma(l) > 0.0);
}

TEST_CASE("encode Jacobian matches central differences") {
    AntlerModel m = tiny_model(6, 1, 0, 1, 2);
    Rng rng(5);
    Eigen::VectorXd v(24);
    for (int i = 0; i < 24; ++i) v(i) = rng.uniform();

    const double h = 1e-5;
    for (int in = 0; in < 24; ++in) {
        Eigen::VectorXd vp = v, vm = v;
        vp(in) += h;
        vm(in) -= h;
        EncodeResult rp = encode(m, vp), rm = encode(m, vm);
        // analytic: one backward pass per output component
        for (int out = 0; out < 3; ++out) {
            const double numeric = (rp.mu(out) - rm.mu(out)) / (2 * h);
            MlpTape tape;
            m.encoder.forward(Eigen::MatrixXd(v), &tape);
            MlpGrad g = m.encoder.zero_grad();
            Eigen::MatrixXd one = Eigen::MatrixXd::Zero(6, 1);
            one(out, 0) = 1.0;
            Eigen::MatrixXd in_grad = m.encoder.backward(tape, one, g);
            const double analytic = in_grad(in, 0);
            CHECK(std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic)}) < 1e-4);
        }
    }
}

TEST_CASE("decode: probabilities in (0,1), deterministic, gradient checked") {
    AntlerModel m = tiny_model(6, 1, 0, 1, 7);
    Eigen::VectorXd z(3);
    z << 0.4, -1.2, 2.0;
    DecodeResult a = decode(m, z);
    DecodeResult b = decode(m, z);
    CHECK(a.coord_means == b.coord_means);
    CHECK(a.occupancy_probs == b.occupancy_probs);
    for (Eigen::Index i = 0; i < a.occupancy_probs.size(); ++i) {
        CHECK(a.occupancy_probs(i) > 0.0);
        CHECK(a.occupancy_probs(i) < 1.0);
    }

    const double h = 1e-5;
    for (int in = 0; in < 3; ++in) {
        Eigen::VectorXd zp = z, zm = z;
        zp(in) += h;
        zm(in) -= h;
        DecodeResult rp = decode(m, zp), rm = decode(m, zm);
        for (int out : {0, 5, 11}) {
            const double numeric = (rp.coord_means(out) - rm.coord_means(out)) / (2 * h);
            MlpTape tape;
            m.decoder.forward(Eigen::MatrixXd(z), &tape);
            MlpGrad g = m.decoder.zero_grad();
            Eigen::MatrixXd one = Eigen::MatrixXd::Zero(24, 1);
            one(out, 0) = 1.0;
            const double analytic = m.decoder.backward(tape, one, g)(in, 0);
            CHECK(std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic)}) < 1e-4);
        }
    }
}

TEST_CASE("full loss gradient matches central differences for every group") {
    BalancedSample s = make_sample(11, 10);
    Eigen::VectorXd v = canonicalize(s);
    Eigen::VectorXd y(2);
    y << 0.6, -0.4;
    Eigen::VectorXd target(3);
    target << 0.2, -0.1, 0.05;

    for (std::uint64_t point = 0; point < 3; ++point) {
        AntlerModel m = tiny_model(10, 0.8, 0.3, 2.0, 100 + point);
        Eigen::MatrixXd noise = fixed_noise(4, 3, 55 + point);

        AntlerGrad grad{m.encoder.zero_grad(), m.decoder.zero_grad(), m.regressor.zero_grad()};
        antler_loss_grad(m, v, y, &target, noise, grad);
        const std::vector<double> analytic = flatten_grad(grad);

        auto params = all_params(m);
        REQUIRE(params.size() == analytic.size());
        const double h = 1e-5;
        double worst = 0.0;
        for (std::size_t p = 0; p < params.size(); ++p) {
            const double saved = *params[p].ptr;
            *params[p].ptr = saved + h;
            const double fp = antler_loss(m, v, y, &target, noise).total;
            *params[p].ptr = saved - h;
            const double fm = antler_loss(m, v, y, &target, noise).total;
            *params[p].ptr = saved;
            const double numeric = (fp - fm) / (2 * h);
            const double rel = std::abs(analytic[p] - numeric) /
                               std::max({1.0, std::abs(analytic[p]), std::abs(numeric)});
            worst = std::max(worst, rel);
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("lambda = 0 isolates the reconstruction estimate") {
    BalancedSample s = make_sample(17, 8);
    Eigen::VectorXd v = canonicalize(s);
    AntlerModel m = tiny_model(8, 0, 0, 0, 9);
    Eigen::MatrixXd noise = fixed_noise(4, 3, 23);
    Eigen::VectorXd y(2);
    y << 0.0, 0.0;
    LossTerms t = antler_loss(m, v, y, nullptr, noise);
    CHECK(t.kl == 0.0);
    CHECK(t.embedding == 0.0);
    CHECK(t.regression == 0.0);
    CHECK(t.total == t.reconstruction);

    // independent straight-line computation of the importance estimate
    EncodeResult enc = encode(m, v);
    std::vector<double> w;
    for (int j = 0; j < 4; ++j) {
        Eigen::VectorXd z = enc.mu.array() + enc.sigma.array() * noise.row(j).transpose().array();
        Eigen::VectorXd out = m.decoder.forward_vec(z);
        double logp = 0.0;
        for (std::size_t e = 0; e < 8; ++e) {
            for (int k = 0; k < 3; ++k) {
                const double diff = v(4 * e + k) - out(3 * e + k);
                logp += -0.5 * diff * diff - 0.5 * std::log(2.0 * kPi);
            }
            const double o = out(24 + e);
            const double prob = 1.0 / (1.0 + std::exp(-o));
            logp += v(4 * e + 3) > 0.5 ? std::log(prob) : std::log(1.0 - prob);
        }
        double logq = 0.0;
        for (int l = 0; l < 3; ++l)
            logq += -0.5 * std::log(2.0 * kPi) - 0.5 * std::log(enc.sigma(l) * enc.sigma(l)) -
                    0.5 * noise(j, l) * noise(j, l);
        w.push_back(logp - logq);
    }
    const double mx = *std::max_element(w.begin(), w.end());
    double acc = 0.0;
    for (double wi : w) acc += std::exp(wi - mx);
    const double reference = -(mx + std::log(acc / 4.0));
    CHECK(std::abs(t.total - reference) <= 1e-10 * std::max(1.0, std::abs(reference)));
}

TEST_CASE("KL term is zero exactly at (mu, sigma) = (0, 1) and positive elsewhere") {
    AntlerModel m = tiny_model(8, 1.7, 0, 0, 12);
    m.encoder.layers.back().weight.setZero();
    m.encoder.layers.back().bias.setZero(); // mu = 0, logvar = 0 -> sigma = 1
    BalancedSample s = make_sample(19, 8);
    Eigen::VectorXd v = canonicalize(s);
    Eigen::VectorXd y(2);
    y << 0, 0;
    Eigen::MatrixXd noise = fixed_noise(4, 3, 3);
    LossTerms t = antler_loss(m, v, y, nullptr, noise);
    CHECK(t.kl == 0.0);

    m.encoder.layers.back().bias(0) = 0.3; // perturb mu
    CHECK(antler_loss(m, v, y, nullptr, noise).kl > 0.0);
}

TEST_CASE("missing embedding target with lambda2 > 0 is a configuration error") {
    AntlerModel m = tiny_model(8, 1, 0.5, 1, 4);
    BalancedSample s = make_sample(23, 8);
    Eigen::VectorXd y(2);
    y << 0, 0;
    CHECK_THROWS_AS(antler_loss(m, canonicalize(s), y, nullptr, fixed_noise(4, 3, 1)),
                    std::runtime_error);
}

TEST_CASE("dataset loss equals the sum of per-sample losses (Kahan, 1e-10)") {
    AntlerModel m = tiny_model(8, 0.5, 0.2, 1.5, 77);
    std::vector<Eigen::VectorXd> canon;
    std::vector<Eigen::VectorXd> ys;
    std::vector<Eigen::MatrixXd> noises;
    Eigen::MatrixXd targets(6, 3);
    Rng rng(31);
    for (int i = 0; i < 6; ++i) {
        canon.push_back(canonicalize(make_sample(40 + i, 8)));
        Eigen::VectorXd y(2);
        y << rng.normal(), rng.normal();
        ys.push_back(y);
        noises.push_back(fixed_noise(4, 3, 900 + i));
        for (int l = 0; l < 3; ++l) targets(i, l) = rng.normal();
    }
    LossTerms whole = dataset_antler_loss(m, canon, ys, &targets, noises);
    double plain = 0.0;
    for (int i = 0; i < 6; ++i) {
        Eigen::VectorXd t = targets.row(i).transpose();
        plain += antler_loss(m, canon[i], ys[i], &t, noises[i]).total;
    }
    CHECK(std::abs(whole.total - plain) <= 1e-10 * std::max(1.0, std::abs(plain)));
}

TEST_CASE("training is deterministic under a fixed seed") {
    std::vector<BalancedSample> samples;
    std::vector<std::vector<double>> ys;
    for (int i = 0; i < 4; ++i) {
        samples.push_back(make_sample(60 + i, 8));
        ys.push_back({0.1 * i, -0.2 * i});
    }
    TrainConfig cfg;
    cfg.max_epochs = 12;
    cfg.seed = 5;
    cfg.learning_rate = 1e-3;

    AntlerModel m1 = tiny_model(8, 1, 0, 1, 1);
    AntlerModel m2 = tiny_model(8, 1, 0, 1, 1);
    TrainResult r1 = train(m1, samples, ys, nullptr, cfg);
    TrainResult r2 = train(m2, samples, ys, nullptr, cfg);
    REQUIRE(r1.history.size() == r2.history.size());
    for (std::size_t e = 0; e < r1.history.size(); ++e)
        CHECK(r1.history[e].total == r2.history[e].total);
    for (std::size_t l = 0; l < m1.encoder.layers.size(); ++l)
        CHECK(m1.encoder.layers[l].weight == m2.encoder.layers[l].weight);
    for (std::size_t l = 0; l < m1.decoder.layers.size(); ++l)
        CHECK(m1.decoder.layers[l].weight == m2.decoder.layers[l].weight);
}

TEST_CASE("overfit fixture: regression MSE collapses by 100x") {
    std::vector<BalancedSample> samples;
    std::vector<std::vector<double>> ys;
    Rng rng(17);
    for (int i = 0; i < 5; ++i) {
        samples.push_back(make_sample(80 + i, 10));
        ys.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    }
    AntlerArchitecture arch;
    arch.encoder_hidden = {8, 5};
    arch.decoder_hidden = {5, 8};
    arch.regressor_hidden = {8, 4};
    AntlerModel m = AntlerModel::make(10, 3, 2, arch, 0, 0, 10, 4, 3);
    TrainConfig cfg;
    cfg.learning_rate = 0.0005;
    cfg.batch_size = 1;
    cfg.max_epochs = 400; // 2000 steps at 5 samples per epoch
    cfg.tolerance = 0.0;  // run the full budget
    cfg.seed = 22;
    TrainResult r = train(m, samples, ys, nullptr, cfg);
    REQUIRE_FALSE(r.diverged);
    REQUIRE(int(r.history.size()) == 400);
    const double initial = r.history.front().regression / m.lambda3;
    const double final = r.history.back().regression / m.lambda3;
    CHECK(final < 1e-2 * initial);

    // prediction error matches the overfit criterion on every sample
    for (int i = 0; i < 5; ++i) {
        Eigen::VectorXd y_hat = predict(m, samples[i]);
        const double err = (y_hat - Eigen::Map<const Eigen::VectorXd>(ys[i].data(), 2)).squaredNorm();
        CHECK(err < 1e-2 * std::max(initial, 1e-6));
    }
}

TEST_CASE("lambda all-zero training: reconstruction decreases in moving average") {
    std::vector<BalancedSample> samples;
    std::vector<std::vector<double>> ys;
    for (int i = 0; i < 5; ++i) {
        samples.push_back(make_sample(90 + i, 10));
        ys.push_back({0.0, 0.0});
    }
    AntlerModel m = tiny_model(10, 0, 0, 0, 5);
    TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.max_epochs = 60;
    cfg.tolerance = 0.0;
    cfg.seed = 9;
    TrainResult r = train(m, samples, ys, nullptr, cfg);
    REQUIRE_FALSE(r.diverged);
    // 10-epoch moving average of the reconstruction term (= 50 SGD steps)
    std::vector<double> ma;
    for (std::size_t e = 9; e < r.history.size(); ++e) {
        double s = 0;
        for (std::size_t k = e - 9; k <= e; ++k) s += r.history[k].reconstruction / 10.0;
        ma.push_back(s);
    }
    for (std::size_t k = 1; k < ma.size(); ++k) CHECK(ma[k] <= ma[k - 1]);
}

TEST_CASE("predict: determinism, permutation invariance, shape error") {
    AntlerModel m = tiny_model(8, 1, 0, 1, 6);
    BalancedSample s = make_sample(33, 8);
    Eigen::VectorXd a = predict(m, s);
    Eigen::VectorXd b = predict(m, s);
    CHECK(a == b);

    BalancedSample shuffled = s;
    Rng rng(2);
    rng.shuffle(shuffled.entries);
    CHECK(predict(m, shuffled) == a);

    BalancedSample wrong = make_sample(34, 12);
    CHECK_THROWS_AS(predict(m, wrong), std::runtime_error);
}

TEST_CASE("model file round trip preserves predictions exactly") {
    AntlerModel m = tiny_model(8, 1.25, 0.5, 3.0, 11);
    BalancedSample s = make_sample(35, 8);
    auto path = std::filesystem::temp_directory_path() / "antler_model_test.json";
    save_model(m, path);
    AntlerModel back = load_model(path);
    CHECK(back.lambda1 == m.lambda1);
    CHECK(back.lambda2 == m.lambda2);
    CHECK(back.lambda3 == m.lambda3);
    CHECK(back.m_r == m.m_r);
    CHECK(predict(back, s) == predict(m, s));
    std::filesystem::remove(path);
}
