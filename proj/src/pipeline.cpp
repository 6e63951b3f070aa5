#include "antler/pipeline.hpp"

#include "antler/mathutil.hpp"
#include "antler/rng.hpp"
#include "antler/tuner.hpp"
#include "antler/xyz_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace antler {

namespace {

using nlohmann::json;

// stream tags for master-seed derivation
constexpr std::uint64_t kSeedGenerate = 1;
constexpr std::uint64_t kSeedFolds = 2;
constexpr std::uint64_t kSeedUnstructure = 100;
constexpr std::uint64_t kSeedBalanced = 10'000;
constexpr std::uint64_t kSeedSnbtdInit = 20'000;
constexpr std::uint64_t kSeedSnbtdSample = 30'000;
constexpr std::uint64_t kSeedSnbtdShuffle = 40'000;
constexpr std::uint64_t kSeedTrain = 50'000;
constexpr std::uint64_t kSeedTune = 60'000;

} // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw std::runtime_error("cannot open config: " + json_path.string());
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("config parse error in " + json_path.string() + ": " + e.what());
    }

    PipelineConfig c;
    c.dataset = j.value("dataset", c.dataset);
    c.manifest_path = j.value("manifest_path", c.manifest_path);

    if (j.contains("wave")) {
        const auto& w = j["wave"];
        c.wave.i1 = w.value("i1", c.wave.i1);
        c.wave.i2 = w.value("i2", c.wave.i2);
        c.wave.n_samples = w.value("n_samples", c.wave.n_samples);
        c.wave.noise = w.value("noise", c.wave.noise);
    }
    if (j.contains("cone")) {
        const auto& co = j["cone"];
        c.cone.i1 = co.value("i1", c.cone.i1);
        c.cone.i2 = co.value("i2", c.cone.i2);
        c.cone.noise = co.value("noise", c.cone.noise);
        if (co.contains("levels")) c.cone.levels = co["levels"].get<std::vector<double>>();
    }
    if (j.contains("unstructure")) {
        const auto& u = j["unstructure"];
        c.unstructure_params.m_l = u.value("m_l", c.unstructure_params.m_l);
        c.unstructure_params.m_u = u.value("m_u", c.unstructure_params.m_u);
        c.unstructure_params.m_r = u.value("m_r", c.unstructure_params.m_r);
    }
    c.roundness_bins = j.value("roundness_bins", c.roundness_bins);

    if (j.contains("grid")) {
        const auto& g = j["grid"];
        if (g.contains("initial_dims"))
            for (int k = 0; k < 3; ++k) c.grid_initial_dims[k] = g["initial_dims"].at(k);
        c.grid_max_dim = g.value("max_dim", c.grid_max_dim);
        c.grid_margin = g.value("margin", c.grid_margin);
        c.grid_shared_box = g.value("shared_box", c.grid_shared_box);
        c.grid_shared_box_expand = g.value("shared_box_expand", c.grid_shared_box_expand);
    }
    if (j.contains("sampler")) c.mr_override = j["sampler"].value("mr_override", c.mr_override);

    if (j.contains("snbtd")) {
        const auto& s = j["snbtd"];
        if (s.contains("dims"))
            for (int k = 0; k < 3; ++k) c.snbtd_dims[k] = s["dims"].at(k);
        if (s.contains("ranks")) c.snbtd_spatial_ranks = s["ranks"].get<std::vector<Eigen::Index>>();
        c.snbtd_frequencies = s.value("frequencies", c.snbtd_frequencies);
        c.snbtd_epochs = s.value("epochs", c.snbtd_epochs);
        c.snbtd_patch = s.value("patch", c.snbtd_patch);
        c.snbtd_config.damping = s.value("damping", c.snbtd_config.damping);
        c.snbtd_config.gauss_hermite_nodes = s.value("gh_nodes", c.snbtd_config.gauss_hermite_nodes);
    }

    if (j.contains("model")) {
        const auto& m = j["model"];
        if (m.contains("encoder_hidden"))
            c.architecture.encoder_hidden = m["encoder_hidden"].get<std::vector<int>>();
        if (m.contains("decoder_hidden"))
            c.architecture.decoder_hidden = m["decoder_hidden"].get<std::vector<int>>();
        if (m.contains("regressor_hidden"))
            c.architecture.regressor_hidden = m["regressor_hidden"].get<std::vector<int>>();
        c.latent_dim = m.value("latent_dim", c.latent_dim);
        c.loss_samples = m.value("loss_samples", c.loss_samples);
        c.lambda1 = m.value("lambda1", c.lambda1);
        c.lambda2 = m.value("lambda2", c.lambda2);
        c.lambda3 = m.value("lambda3", c.lambda3);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        c.train_config.learning_rate = t.value("learning_rate", c.train_config.learning_rate);
        c.train_config.batch_size = t.value("batch_size", c.train_config.batch_size);
        c.train_config.max_epochs = t.value("max_epochs", c.train_config.max_epochs);
        c.train_config.tolerance = t.value("tolerance", c.train_config.tolerance);
    }
    if (j.contains("baseline")) {
        c.baseline_k_f = j["baseline"].value("k_f", c.baseline_k_f);
        c.baseline_k_nn = j["baseline"].value("k_nn", c.baseline_k_nn);
    }
    if (j.contains("tune")) {
        const auto& t = j["tune"];
        c.tune = t.value("enabled", c.tune);
        c.tune_budget = t.value("budget", c.tune_budget);
        c.tune_folds = t.value("folds", c.tune_folds);
        if (t.contains("bounds"))
            for (int d = 0; d < 3; ++d) {
                c.tune_bounds[d].first = t["bounds"].at(d).at(0);
                c.tune_bounds[d].second = t["bounds"].at(d).at(1);
            }
    }
    if (j.contains("evaluation")) {
        c.folds = j["evaluation"].value("folds", c.folds);
        c.master_seed = j["evaluation"].value("master_seed", c.master_seed);
    }
    c.out_dir = j.value("out_dir", c.out_dir.string());
    return c;
}

std::string pipeline_config_to_json(const PipelineConfig& c) {
    json j;
    j["dataset"] = c.dataset;
    j["manifest_path"] = c.manifest_path;
    j["wave"] = {{"i1", c.wave.i1},
                 {"i2", c.wave.i2},
                 {"n_samples", c.wave.n_samples},
                 {"noise", c.wave.noise}};
    j["cone"] = {{"i1", c.cone.i1},
                 {"i2", c.cone.i2},
                 {"noise", c.cone.noise},
                 {"levels", c.cone.levels}};
    j["unstructure"] = {{"m_l", c.unstructure_params.m_l},
                        {"m_u", c.unstructure_params.m_u},
                        {"m_r", c.unstructure_params.m_r}};
    j["roundness_bins"] = c.roundness_bins;
    j["grid"] = {{"initial_dims", c.grid_initial_dims},
                 {"max_dim", c.grid_max_dim},
                 {"margin", c.grid_margin},
                 {"shared_box", c.grid_shared_box},
                 {"shared_box_expand", c.grid_shared_box_expand}};
    j["sampler"] = {{"mr_override", c.mr_override}};
    j["snbtd"] = {{"dims", c.snbtd_dims},
                  {"ranks", c.snbtd_spatial_ranks},
                  {"frequencies", c.snbtd_frequencies},
                  {"epochs", c.snbtd_epochs},
                  {"patch", c.snbtd_patch},
                  {"damping", c.snbtd_config.damping},
                  {"gh_nodes", c.snbtd_config.gauss_hermite_nodes}};
    j["model"] = {{"encoder_hidden", c.architecture.encoder_hidden},
                  {"decoder_hidden", c.architecture.decoder_hidden},
                  {"regressor_hidden", c.architecture.regressor_hidden},
                  {"latent_dim", c.latent_dim},
                  {"loss_samples", c.loss_samples},
                  {"lambda1", c.lambda1},
                  {"lambda2", c.lambda2},
                  {"lambda3", c.lambda3}};
    j["train"] = {{"learning_rate", c.train_config.learning_rate},
                  {"batch_size", c.train_config.batch_size},
                  {"max_epochs", c.train_config.max_epochs},
                  {"tolerance", c.train_config.tolerance}};
    j["baseline"] = {{"k_f", c.baseline_k_f}, {"k_nn", c.baseline_k_nn}};
    j["tune"] = {{"enabled", c.tune},
                 {"budget", c.tune_budget},
                 {"folds", c.tune_folds},
                 {"bounds",
                  {{c.tune_bounds[0].first, c.tune_bounds[0].second},
                   {c.tune_bounds[1].first, c.tune_bounds[1].second},
                   {c.tune_bounds[2].first, c.tune_bounds[2].second}}}};
    j["evaluation"] = {{"folds", c.folds}, {"master_seed", c.master_seed}};
    j["out_dir"] = c.out_dir.string();
    return j.dump(2);
}

std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, int k, std::uint64_t seed) {
    if (k < 2) throw std::runtime_error("kfold_split: k must be >= 2");
    if (std::size_t(k) > n) throw std::runtime_error("kfold_split: k exceeds sample count");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> folds(k);
    const std::size_t base = n / std::size_t(k);
    const std::size_t extra = n % std::size_t(k);
    std::size_t pos = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t size = base + (std::size_t(f) < extra ? 1 : 0);
        folds[f].assign(order.begin() + pos, order.begin() + pos + size);
        pos += size;
    }
    return folds;
}

std::vector<double> rmse(const std::vector<std::vector<double>>& predictions,
                         const std::vector<std::vector<double>>& truth) {
    if (predictions.size() != truth.size() || predictions.empty())
        throw std::runtime_error("rmse: shape mismatch or empty input");
    const std::size_t p = truth[0].size();
    std::vector<double> out(p, 0.0);
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predictions[i].size() != p || truth[i].size() != p)
            throw std::runtime_error("rmse: shape mismatch");
        for (std::size_t j = 0; j < p; ++j) {
            const double d = predictions[i][j] - truth[i][j];
            out[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < p; ++j) out[j] = std::sqrt(out[j] / double(truth.size()));
    return out;
}

Dataset build_dataset(const PipelineConfig& config) {
    if (config.dataset == "manifest") {
        if (config.manifest_path.empty())
            throw std::runtime_error("build_dataset: manifest_path required");
        return load_manifest(config.manifest_path);
    }

    std::vector<PointCloud> structured;
    if (config.dataset == "wave") {
        WaveParams wp = config.wave;
        wp.seed = derive_seed(config.master_seed, kSeedGenerate);
        structured = gen_wave(wp);
    } else if (config.dataset == "cone") {
        ConeParams cp = config.cone;
        cp.seed = derive_seed(config.master_seed, kSeedGenerate);
        structured = gen_cone(cp);
    } else {
        throw std::runtime_error("build_dataset: unknown dataset kind '" + config.dataset + "'");
    }

    Dataset ds;
    for (std::size_t i = 0; i < structured.size(); ++i) {
        UnstructureParams up = config.unstructure_params;
        up.seed = derive_seed(config.master_seed, kSeedUnstructure + i);
        UnstructuredSample u = unstructure(structured[i], up);
        const double response = config.dataset == "wave"
                                    ? roughness_response(u.response_cloud)
                                    : roundness_response(u.response_cloud, config.roundness_bins);
        ds.samples.push_back(std::move(u.model_cloud));
        ds.responses.push_back({response});
    }
    ds.validate();
    return ds;
}

double ExperimentResult::mean_rmse(const std::string& method, int response_index) const {
    double sum = 0.0;
    int n = 0;
    for (const ResultRow& r : rows)
        if (r.method == method && r.response_index == response_index && r.status == "ok") {
            sum += r.rmse;
            ++n;
        }
    if (n == 0) throw std::runtime_error("mean_rmse: no ok rows for method " + method);
    return sum / n;
}

SnbtdPosterior fit_snbtd_posterior(const PipelineConfig& config, const Dataset& ds,
                                   const std::vector<std::size_t>& indices, int fold_tag) {
    if (indices.empty()) throw std::runtime_error("fit_snbtd_posterior: no samples selected");
    // shared coarse grid over the selected clouds only
    Box3 box = bounding_box(ds.samples[indices[0]], config.grid_margin);
    for (std::size_t t = 1; t < indices.size(); ++t)
        box = Box3::merged(box, bounding_box(ds.samples[indices[t]], config.grid_margin));
    GridSpec grid;
    grid.box = box;
    grid.dims = config.snbtd_dims;

    std::vector<BinaryVoxelTensor> coarse;
    std::size_t max_count = 0;
    for (std::size_t t = 0; t < indices.size(); ++t) {
        coarse.push_back(voxelize(ds.samples[indices[t]], grid));
        max_count = std::max(max_count, coarse.back().count());
    }
    const std::size_t m_r_coarse = 2 * max_count;

    std::vector<EntryObservation> entries;
    for (std::size_t t = 0; t < indices.size(); ++t) {
        const BalancedSample bs = balanced_sample(
            coarse[t], m_r_coarse,
            derive_seed(config.master_seed, kSeedSnbtdSample + 1000 * fold_tag + indices[t]));
        for (const SampleEntry& e : bs.entries)
            entries.push_back({{e.idx[0], e.idx[1], e.idx[2], Eigen::Index(t)}, e.bit});
    }

    std::vector<Eigen::Index> dims{config.snbtd_dims[0], config.snbtd_dims[1],
                                   config.snbtd_dims[2], Eigen::Index(indices.size())};
    std::vector<Eigen::Index> ranks = config.snbtd_spatial_ranks;
    ranks.push_back(config.latent_dim); // sample mode rank ties to the VAE latent width
    SnbtdPosterior posterior = init_posterior(
        dims, ranks, config.snbtd_frequencies,
        derive_seed(config.master_seed, kSeedSnbtdInit + fold_tag), config.snbtd_config);

    Rng shuffle_rng(derive_seed(config.master_seed, kSeedSnbtdShuffle + fold_tag));
    for (int epoch = 0; epoch < config.snbtd_epochs; ++epoch) {
        shuffle_rng.shuffle(entries);
        for (std::size_t pos = 0; pos < entries.size(); pos += config.snbtd_patch) {
            std::vector<EntryObservation> patch(
                entries.begin() + pos,
                entries.begin() + std::min(pos + config.snbtd_patch, entries.size()));
            update_patch(posterior, patch);
        }
    }
    return posterior;
}

namespace {

struct FoldContext {
    std::vector<std::size_t> train_idx, test_idx;
    std::size_t m_r = 0;
    std::vector<std::size_t> skipped; // test samples exceeding capacity
};

struct LambdaChoice {
    double lambda1, lambda2, lambda3;
};

/// Inner-CV objective for the lambda search: mean validation RMSE.
LambdaChoice tune_lambdas(const PipelineConfig& config, const Dataset& ds,
                          const std::vector<std::size_t>& train_idx,
                          const std::vector<BalancedSample>& balanced,
                          const Eigen::MatrixXd* targets, int fold,
                          BoResult* out_result) {
    const auto inner_folds = kfold_split(train_idx.size(), config.tune_folds,
                                         derive_seed(config.master_seed, kSeedTune + 500 + fold));

    auto objective = [&](const Eigen::VectorXd& log_lambda) -> double {
        const double l1 = std::pow(10.0, log_lambda(0));
        const double l2 = std::pow(10.0, log_lambda(1));
        const double l3 = std::pow(10.0, log_lambda(2));
        std::vector<double> fold_scores;
        for (std::size_t inner = 0; inner < inner_folds.size(); ++inner) {
            std::vector<BalancedSample> tr_samples;
            std::vector<std::vector<double>> tr_ys;
            Eigen::MatrixXd tr_targets(train_idx.size() - inner_folds[inner].size(),
                                       config.latent_dim);
            std::vector<char> held(train_idx.size(), 0);
            for (std::size_t pos : inner_folds[inner]) held[pos] = 1;
            Eigen::Index row = 0;
            for (std::size_t t = 0; t < train_idx.size(); ++t) {
                if (held[t]) continue;
                tr_samples.push_back(balanced[t]);
                tr_ys.push_back(ds.responses[train_idx[t]]);
                if (targets) tr_targets.row(row++) = targets->row(Eigen::Index(t));
            }
            AntlerModel model = AntlerModel::make(
                tr_samples[0].size(), config.latent_dim, int(ds.response_dim()),
                config.architecture, l1, l2, l3, config.loss_samples,
                derive_seed(config.master_seed, kSeedTune + 7000 + 31 * fold + inner));
            TrainConfig tc = config.train_config;
            tc.seed = derive_seed(config.master_seed, kSeedTune + 9000 + 31 * fold + inner);
            try {
                TrainResult tr = train(model, tr_samples, tr_ys,
                                       (targets && l2 > 0) ? &tr_targets : nullptr, tc);
                if (tr.diverged) return std::numeric_limits<double>::quiet_NaN();
                std::vector<std::vector<double>> preds, truth;
                for (std::size_t pos : inner_folds[inner]) {
                    const Eigen::VectorXd y_hat = predict(model, balanced[pos]);
                    preds.push_back(std::vector<double>(y_hat.data(), y_hat.data() + y_hat.size()));
                    truth.push_back(ds.responses[train_idx[pos]]);
                }
                const std::vector<double> per_dim = rmse(preds, truth);
                double mean = 0;
                for (double v : per_dim) mean += v / double(per_dim.size());
                fold_scores.push_back(mean);
            } catch (const std::exception&) {
                return std::numeric_limits<double>::quiet_NaN();
            }
        }
        double mean = 0;
        for (double v : fold_scores) mean += v / double(fold_scores.size());
        return mean;
    };

    const BoResult r = bo_optimize(
        objective,
        {config.tune_bounds[0], config.tune_bounds[1], config.tune_bounds[2]},
        config.tune_budget, derive_seed(config.master_seed, kSeedTune + fold));
    if (out_result) *out_result = r;
    return {std::pow(10.0, r.best_point(0)), std::pow(10.0, r.best_point(1)),
            std::pow(10.0, r.best_point(2))};
}

std::string format_csv_double(double v) { return format_double(v); }

} // namespace

ExperimentResult run_experiment(const PipelineConfig& config) {
    Dataset ds = build_dataset(config);
    const std::size_t n = ds.size();
    const int p = int(ds.response_dim());
    if (config.folds < 2) throw std::runtime_error("run_experiment: need k >= 2 folds");

    std::filesystem::create_directories(config.out_dir);

    // feature baseline inputs are fold independent as well
    std::vector<std::vector<double>> features(n);
    for (std::size_t i = 0; i < n; ++i)
        features[i] = extract_minmax_features(ds.samples[i], config.baseline_k_f);

    const auto folds = kfold_split(n, config.folds, derive_seed(config.master_seed, kSeedFolds));

    ExperimentResult result;
    for (int f = 0; f < config.folds; ++f) {
        FoldContext ctx;
        ctx.test_idx = folds[f];
        for (std::size_t i = 0; i < n; ++i)
            if (std::find(ctx.test_idx.begin(), ctx.test_idx.end(), i) == ctx.test_idx.end())
                ctx.train_idx.push_back(i);

        try {
            // voxelize on this fold's measurement volume: the union of the
            // training clouds' margined boxes (or per-sample boxes when
            // shared_box is off); resolution adapts per sample either way
            Box3 shared_box;
            const Box3* box_ptr = nullptr;
            if (config.grid_shared_box) {
                shared_box = bounding_box(ds.samples[ctx.train_idx[0]], config.grid_margin);
                for (std::size_t t = 1; t < ctx.train_idx.size(); ++t)
                    shared_box = Box3::merged(
                        shared_box, bounding_box(ds.samples[ctx.train_idx[t]], config.grid_margin));
                for (int k = 0; k < 3; ++k) {
                    const double pad = config.grid_shared_box_expand * shared_box.extent(k);
                    shared_box.lower[k] -= pad;
                    shared_box.upper[k] += pad;
                }
                box_ptr = &shared_box;
            }
            auto voxelize_sample = [&](std::size_t i) {
                const GridSpec grid =
                    select_grid(ds.samples[i], config.grid_initial_dims, config.grid_max_dim,
                                config.grid_margin, box_ptr);
                return voxelize(ds.samples[i], grid);
            };

            std::vector<BinaryVoxelTensor> train_tensors;
            std::vector<std::size_t> train_counts;
            for (std::size_t i : ctx.train_idx) {
                train_tensors.push_back(voxelize_sample(i));
                train_counts.push_back(train_tensors.back().count());
            }
            ctx.m_r = config.mr_override ? config.mr_override : compute_mr(train_counts);

            std::vector<BalancedSample> train_balanced;
            for (std::size_t t = 0; t < ctx.train_idx.size(); ++t)
                train_balanced.push_back(balanced_sample(
                    train_tensors[t], ctx.m_r,
                    derive_seed(config.master_seed, kSeedBalanced + ctx.train_idx[t])));

            std::vector<std::size_t> usable_test;
            std::vector<BalancedSample> test_balanced;
            std::vector<std::string> skip_reasons;
            for (std::size_t i : ctx.test_idx) {
                BinaryVoxelTensor tensor;
                try {
                    tensor = voxelize_sample(i);
                } catch (const std::exception&) {
                    ctx.skipped.push_back(i);
                    skip_reasons.push_back("lies outside the training measurement volume");
                    continue;
                }
                if (2 * tensor.count() > ctx.m_r) {
                    ctx.skipped.push_back(i);
                    skip_reasons.push_back("exceeds training capacity m_r=" +
                                           std::to_string(ctx.m_r));
                    continue;
                }
                usable_test.push_back(i);
                test_balanced.push_back(balanced_sample(
                    tensor, ctx.m_r, derive_seed(config.master_seed, kSeedBalanced + i)));
            }
            if (usable_test.empty())
                throw std::runtime_error("every test sample exceeds the training capacity");

            // snbtd regularization targets (training tensor only)
            Eigen::MatrixXd targets;
            const Eigen::MatrixXd* targets_ptr = nullptr;
            if (config.lambda2 > 0 || config.tune) {
                const SnbtdPosterior snbtd_posterior =
                    fit_snbtd_posterior(config, ds, ctx.train_idx, f);
                targets = sample_embedding_means(snbtd_posterior, 3);
                targets_ptr = &targets;
                if (config.write_artifacts)
                    save_snbtd_checkpoint(snbtd_posterior,
                                          config.out_dir /
                                              ("fold_" + std::to_string(f) + "_snbtd.json"));
            }

            double l1 = config.lambda1, l2 = config.lambda2, l3 = config.lambda3;
            if (config.tune) {
                BoResult tune_trace;
                const LambdaChoice choice = tune_lambdas(config, ds, ctx.train_idx,
                                                         train_balanced, targets_ptr, f, &tune_trace);
                l1 = choice.lambda1;
                l2 = choice.lambda2;
                l3 = choice.lambda3;
                if (config.write_artifacts) {
                    std::ofstream trace(config.out_dir /
                                        ("fold_" + std::to_string(f) + "_tuning.csv"));
                    trace << "iter,log_lambda1,log_lambda2,log_lambda3,objective,incumbent\n";
                    for (std::size_t i = 0; i < tune_trace.trace.size(); ++i) {
                        const auto& row = tune_trace.trace[i];
                        trace << i << "," << format_csv_double(row.point(0)) << ","
                              << format_csv_double(row.point(1)) << ","
                              << format_csv_double(row.point(2)) << ","
                              << format_csv_double(row.value) << ","
                              << format_csv_double(row.incumbent) << "\n";
                    }
                }
            }

            AntlerModel model = AntlerModel::make(
                ctx.m_r, config.latent_dim, p, config.architecture, l1, l2, l3,
                config.loss_samples, derive_seed(config.master_seed, kSeedTrain + 2 * f));
            TrainConfig tc = config.train_config;
            tc.seed = derive_seed(config.master_seed, kSeedTrain + 2 * f + 1);
            std::vector<std::vector<double>> train_ys;
            for (std::size_t i : ctx.train_idx) train_ys.push_back(ds.responses[i]);
            const TrainResult tr =
                train(model, train_balanced, train_ys, l2 > 0 ? targets_ptr : nullptr, tc);
            if (tr.diverged)
                throw std::runtime_error("training diverged at epoch " +
                                         std::to_string(tr.epochs_run));
            if (config.write_artifacts)
                save_model(model, config.out_dir / ("fold_" + std::to_string(f) + "_model.json"));

            // predictions for every method on the same usable test subset
            std::vector<std::vector<double>> truth;
            for (std::size_t i : usable_test) truth.push_back(ds.responses[i]);

            std::vector<std::vector<double>> antler_pred;
            for (const BalancedSample& s : test_balanced) {
                const Eigen::VectorXd y_hat = predict(model, s);
                antler_pred.push_back(std::vector<double>(y_hat.data(), y_hat.data() + y_hat.size()));
            }

            std::vector<std::vector<double>> train_features, test_features;
            for (std::size_t i : ctx.train_idx) train_features.push_back(features[i]);
            for (std::size_t i : usable_test) test_features.push_back(features[i]);
            const auto knn_pred = baseline_fit_predict(train_features, train_ys, test_features,
                                                       std::min(config.baseline_k_nn,
                                                                ctx.train_idx.size()));
            const auto mean_pred = mean_predictor(train_ys, usable_test.size());

            const auto antler_rmse = rmse(antler_pred, truth);
            const auto knn_rmse = rmse(knn_pred, truth);
            const auto mean_rmse_v = rmse(mean_pred, truth);
            for (int r = 0; r < p; ++r) {
                result.rows.push_back({"antler", f, r, antler_rmse[r], "ok"});
                result.rows.push_back({"baseline_knn", f, r, knn_rmse[r], "ok"});
                result.rows.push_back({"mean", f, r, mean_rmse_v[r], "ok"});
            }
            for (std::size_t s = 0; s < ctx.skipped.size(); ++s)
                result.rows.push_back({"skip", f, -1, 0.0,
                                       "sample " + ds.samples[ctx.skipped[s]].sample_id + " " +
                                           skip_reasons[s]});
        } catch (const std::exception& e) {
            for (int r = 0; r < p; ++r) {
                result.rows.push_back({"antler", f, r, 0.0, std::string("failed: ") + e.what()});
                result.rows.push_back({"baseline_knn", f, r, 0.0, std::string("failed: ") + e.what()});
                result.rows.push_back({"mean", f, r, 0.0, std::string("failed: ") + e.what()});
            }
        }
    }

    // results.csv
    result.results_csv = config.out_dir / "results.csv";
    {
        std::ofstream out(result.results_csv, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + result.results_csv.string());
        out << "method,fold,response_index,rmse,status\n";
        for (const ResultRow& r : result.rows) {
            out << r.method << "," << r.fold << "," << r.response_index << ",";
            if (r.status == "ok") out << format_csv_double(r.rmse);
            out << "," << r.status << "\n";
        }
    }

    if (config.write_artifacts) {
        json prov;
        prov["artifact_version"] = kArtifactVersion;
        prov["master_seed"] = config.master_seed;
        prov["config"] = json::parse(pipeline_config_to_json(config));
        prov["seed_streams"] = {
            {"generate", derive_seed(config.master_seed, kSeedGenerate)},
            {"folds", derive_seed(config.master_seed, kSeedFolds)},
        };
        std::ofstream out(config.out_dir / "provenance.json", std::ios::binary);
        out << prov.dump(2) << "\n";
    }
    return result;
}

} // namespace antler
