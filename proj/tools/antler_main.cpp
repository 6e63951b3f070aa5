#include "antler/pipeline.hpp"
#include "antler/rng.hpp"
#include "antler/tuner.hpp"
#include "antler/xyz_io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>

using namespace antler;

namespace {

int exit_config_error(const std::string& msg) {
    std::cerr << "config error: " << msg << "\n";
    return 2;
}

PipelineConfig load_config_or_throw(const std::string& path, std::uint64_t* seed_override,
                                    std::string* out_override) {
    PipelineConfig config = load_pipeline_config(path);
    if (seed_override && *seed_override != UINT64_MAX) config.master_seed = *seed_override;
    if (out_override && !out_override->empty()) config.out_dir = *out_override;
    return config;
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        std::string field;
        bool numeric = true;
        while (std::getline(ls, field, ',')) {
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(field, &pos));
                if (pos != field.size()) numeric = false;
            } catch (const std::exception&) {
                numeric = false;
            }
        }
        if (!numeric) continue; // header or annotation line
        if (!row.empty()) rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error("no numeric rows in " + path.string());
    return rows;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-cloud regression toolkit: voxel representation, balanced sampling, "
                 "streaming tensor decomposition, VAE regression, and synthetic benchmarks"};
    app.require_subcommand(1);

    std::string config_path, out_path, in_path, model_path, tensor_path, grid_path;
    std::string pred_path, truth_path;
    std::uint64_t seed_override = UINT64_MAX;
    std::uint64_t sample_seed = 0;
    std::size_t mr = 0;
    std::array<std::int32_t, 3> initial_dims{100, 100, 100};
    std::int32_t max_dim = 1024;
    double margin = 0.05;

    auto* cmd_generate = app.add_subcommand("generate", "generate a synthetic dataset into --out");
    cmd_generate->add_option("--config", config_path)->required();
    cmd_generate->add_option("--out", out_path);
    cmd_generate->add_option("--seed", seed_override);

    auto* cmd_voxelize = app.add_subcommand("voxelize", "voxelize one .xyz cloud (grid auto-selected)");
    cmd_voxelize->add_option("--in", in_path)->required();
    cmd_voxelize->add_option("--out-prefix", out_path)->required();
    cmd_voxelize->add_option("--initial-dim", initial_dims[0]);
    cmd_voxelize->add_option("--max-dim", max_dim);
    cmd_voxelize->add_option("--margin", margin);

    auto* cmd_sample = app.add_subcommand("sample", "balanced-sample a sparse voxel tensor");
    cmd_sample->add_option("--tensor", tensor_path)->required();
    cmd_sample->add_option("--grid", grid_path)->required();
    cmd_sample->add_option("--mr", mr)->required();
    cmd_sample->add_option("--seed", sample_seed);
    cmd_sample->add_option("--out-prefix", out_path)->required();

    auto* cmd_snbtd = app.add_subcommand("snbtd-fit", "fit the streaming decomposition on a dataset");
    cmd_snbtd->add_option("--config", config_path)->required();
    cmd_snbtd->add_option("--out", out_path)->required();
    cmd_snbtd->add_option("--seed", seed_override);

    auto* cmd_train = app.add_subcommand("train", "train the regression model on the full dataset");
    cmd_train->add_option("--config", config_path)->required();
    cmd_train->add_option("--out", out_path)->required();
    cmd_train->add_option("--seed", seed_override);

    auto* cmd_tune = app.add_subcommand("tune", "Bayesian optimization of the loss weights");
    cmd_tune->add_option("--config", config_path)->required();
    cmd_tune->add_option("--out", out_path)->required();
    cmd_tune->add_option("--seed", seed_override);

    auto* cmd_predict = app.add_subcommand("predict", "predict the response for one .xyz cloud");
    cmd_predict->add_option("--config", config_path)->required();
    cmd_predict->add_option("--model", model_path)->required();
    cmd_predict->add_option("--in", in_path)->required();
    cmd_predict->add_option("--seed", sample_seed);
    cmd_predict->add_option("--out", out_path);

    auto* cmd_evaluate = app.add_subcommand("evaluate", "per-column RMSE between two numeric CSVs");
    cmd_evaluate->add_option("--pred", pred_path)->required();
    cmd_evaluate->add_option("--truth", truth_path)->required();
    cmd_evaluate->add_option("--out", out_path);

    auto* cmd_baseline = app.add_subcommand("baseline", "k-fold CV with the feature baseline only");
    cmd_baseline->add_option("--config", config_path)->required();
    cmd_baseline->add_option("--out", out_path);
    cmd_baseline->add_option("--seed", seed_override);

    auto* cmd_run = app.add_subcommand("run", "full cross-validated experiment");
    cmd_run->add_option("--config", config_path)->required();
    cmd_run->add_option("--out", out_path);
    cmd_run->add_option("--seed", seed_override);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_generate) {
            PipelineConfig config = load_config_or_throw(config_path, &seed_override, &out_path);
            if (config.dataset == "manifest")
                return exit_config_error("generate requires a synthetic dataset kind");
            Dataset ds = build_dataset(config);
            const auto dir = config.out_dir / "dataset";
            const auto manifest = save_dataset(ds, dir);
            nlohmann::json prov;
            prov["artifact_version"] = kArtifactVersion;
            prov["master_seed"] = config.master_seed;
            prov["config"] = nlohmann::json::parse(pipeline_config_to_json(config));
            std::ofstream pv(dir / "provenance.json", std::ios::binary);
            pv << prov.dump(2) << "\n";
            std::cout << "wrote " << ds.size() << " samples to " << manifest << "\n";
            return 0;
        }

        if (*cmd_voxelize) {
            const PointCloud cloud = load_xyz_file(in_path);
            const GridSpec grid =
                select_grid(cloud, {initial_dims[0], initial_dims[0], initial_dims[0]}, max_dim,
                            margin);
            const BinaryVoxelTensor tensor = voxelize(cloud, grid);
            save_voxel_tensor(tensor, out_path + ".csv", out_path + ".json");
            std::cout << "grid " << grid.dims[0] << "x" << grid.dims[1] << "x" << grid.dims[2]
                      << ", " << tensor.count() << " occupied voxels\n";
            return 0;
        }

        if (*cmd_sample) {
            const BinaryVoxelTensor tensor = load_voxel_tensor(tensor_path, grid_path);
            const BalancedSample s = balanced_sample(tensor, mr, sample_seed);
            save_balanced_sample(s, out_path + ".csv", out_path + ".json");
            std::cout << s.size() << " entries (" << s.ones_count() << " ones)\n";
            return 0;
        }

        if (*cmd_snbtd) {
            PipelineConfig config = load_config_or_throw(config_path, &seed_override, nullptr);
            Dataset ds = build_dataset(config);
            std::vector<std::size_t> all(ds.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
            const SnbtdPosterior posterior = fit_snbtd_posterior(config, ds, all, 0);
            save_snbtd_checkpoint(posterior, out_path);
            std::cout << "checkpoint written to " << out_path << "\n";
            return 0;
        }

        if (*cmd_train) {
            PipelineConfig config = load_config_or_throw(config_path, &seed_override, nullptr);
            Dataset ds = build_dataset(config);
            std::vector<std::size_t> all(ds.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

            std::vector<BinaryVoxelTensor> tensors;
            std::vector<std::size_t> counts;
            for (const PointCloud& c : ds.samples) {
                tensors.push_back(voxelize(
                    c, select_grid(c, config.grid_initial_dims, config.grid_max_dim,
                                   config.grid_margin)));
                counts.push_back(tensors.back().count());
            }
            const std::size_t m_r = config.mr_override ? config.mr_override : compute_mr(counts);
            std::vector<BalancedSample> balanced;
            for (std::size_t i = 0; i < ds.size(); ++i)
                balanced.push_back(balanced_sample(tensors[i], m_r,
                                                   derive_seed(config.master_seed, 10'000 + i)));

            Eigen::MatrixXd targets;
            const Eigen::MatrixXd* targets_ptr = nullptr;
            if (config.lambda2 > 0) {
                targets = sample_embedding_means(fit_snbtd_posterior(config, ds, all, 0), 3);
                targets_ptr = &targets;
            }
            AntlerModel model = AntlerModel::make(
                m_r, config.latent_dim, int(ds.response_dim()), config.architecture,
                config.lambda1, config.lambda2, config.lambda3, config.loss_samples,
                derive_seed(config.master_seed, 50'000));
            TrainConfig tc = config.train_config;
            tc.seed = derive_seed(config.master_seed, 50'001);
            const TrainResult tr = train(model, balanced, ds.responses, targets_ptr, tc);
            save_model(model, out_path);
            std::cout << "trained " << tr.epochs_run << " epochs, final loss "
                      << (tr.history.empty() ? 0.0 : tr.history.back().total)
                      << (tr.diverged ? " (diverged, rolled back)" : "") << ", model written to "
                      << out_path << "\n";
            return tr.diverged ? 1 : 0;
        }

        if (*cmd_tune) {
            PipelineConfig config = load_config_or_throw(config_path, &seed_override, nullptr);
            config.tune = true;
            config.write_artifacts = false;
            Dataset ds = build_dataset(config);

            // reuse the experiment machinery on a single synthetic "fold"
            // covering the whole dataset: tune directly with inner CV
            std::vector<std::size_t> all(ds.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

            std::vector<BinaryVoxelTensor> tensors;
            std::vector<std::size_t> counts;
            for (const PointCloud& c : ds.samples) {
                tensors.push_back(voxelize(
                    c, select_grid(c, config.grid_initial_dims, config.grid_max_dim,
                                   config.grid_margin)));
                counts.push_back(tensors.back().count());
            }
            const std::size_t m_r = config.mr_override ? config.mr_override : compute_mr(counts);
            std::vector<BalancedSample> balanced;
            for (std::size_t i = 0; i < ds.size(); ++i)
                balanced.push_back(balanced_sample(tensors[i], m_r,
                                                   derive_seed(config.master_seed, 10'000 + i)));
            Eigen::MatrixXd targets =
                sample_embedding_means(fit_snbtd_posterior(config, ds, all, 0), 3);

            const auto inner = kfold_split(ds.size(), config.tune_folds,
                                           derive_seed(config.master_seed, 60'500));
            auto objective = [&](const Eigen::VectorXd& v) -> double {
                const double l1 = std::pow(10.0, v(0)), l2 = std::pow(10.0, v(1)),
                             l3 = std::pow(10.0, v(2));
                std::vector<double> scores;
                for (std::size_t k = 0; k < inner.size(); ++k) {
                    std::vector<char> held(ds.size(), 0);
                    for (std::size_t i : inner[k]) held[i] = 1;
                    std::vector<BalancedSample> tr_s;
                    std::vector<std::vector<double>> tr_y;
                    Eigen::MatrixXd tr_t(ds.size() - inner[k].size(), config.latent_dim);
                    Eigen::Index row = 0;
                    for (std::size_t i = 0; i < ds.size(); ++i) {
                        if (held[i]) continue;
                        tr_s.push_back(balanced[i]);
                        tr_y.push_back(ds.responses[i]);
                        tr_t.row(row++) = targets.row(Eigen::Index(i));
                    }
                    AntlerModel model = AntlerModel::make(
                        m_r, config.latent_dim, int(ds.response_dim()), config.architecture, l1,
                        l2, l3, config.loss_samples,
                        derive_seed(config.master_seed, 61'000 + k));
                    TrainConfig tc = config.train_config;
                    tc.seed = derive_seed(config.master_seed, 62'000 + k);
                    try {
                        const TrainResult tr =
                            train(model, tr_s, tr_y, l2 > 0 ? &tr_t : nullptr, tc);
                        if (tr.diverged) return std::numeric_limits<double>::quiet_NaN();
                        std::vector<std::vector<double>> preds, truth;
                        for (std::size_t i : inner[k]) {
                            const Eigen::VectorXd y_hat = predict(model, balanced[i]);
                            preds.push_back(
                                std::vector<double>(y_hat.data(), y_hat.data() + y_hat.size()));
                            truth.push_back(ds.responses[i]);
                        }
                        const auto per_dim = rmse(preds, truth);
                        double mean = 0;
                        for (double x : per_dim) mean += x / double(per_dim.size());
                        scores.push_back(mean);
                    } catch (const std::exception&) {
                        return std::numeric_limits<double>::quiet_NaN();
                    }
                }
                double mean = 0;
                for (double s : scores) mean += s / double(scores.size());
                return mean;
            };
            const BoResult r = bo_optimize(
                objective, {config.tune_bounds[0], config.tune_bounds[1], config.tune_bounds[2]},
                config.tune_budget, derive_seed(config.master_seed, 60'000));

            std::ofstream trace(out_path, std::ios::binary);
            trace << "iter,log_lambda1,log_lambda2,log_lambda3,objective,incumbent\n";
            for (std::size_t i = 0; i < r.trace.size(); ++i)
                trace << i << "," << format_double(r.trace[i].point(0)) << ","
                      << format_double(r.trace[i].point(1)) << ","
                      << format_double(r.trace[i].point(2)) << ","
                      << format_double(r.trace[i].value) << ","
                      << format_double(r.trace[i].incumbent) << "\n";
            std::cout << "best lambdas: " << std::pow(10.0, r.best_point(0)) << " "
                      << std::pow(10.0, r.best_point(1)) << " " << std::pow(10.0, r.best_point(2))
                      << " (objective " << r.best_value << ")\n";
            return 0;
        }

        if (*cmd_predict) {
            PipelineConfig config = load_config_or_throw(config_path, nullptr, nullptr);
            const AntlerModel model = load_model(model_path);
            const PointCloud cloud = load_xyz_file(in_path);
            const GridSpec grid = select_grid(cloud, config.grid_initial_dims, config.grid_max_dim,
                                              config.grid_margin);
            const BinaryVoxelTensor tensor = voxelize(cloud, grid);
            const BalancedSample s = balanced_sample(tensor, model.m_r, sample_seed);
            const Eigen::VectorXd y = predict(model, s);
            std::string line;
            for (Eigen::Index i = 0; i < y.size(); ++i)
                line += (i ? "," : "") + format_double(y(i));
            if (!out_path.empty()) {
                std::ofstream out(out_path, std::ios::binary);
                out << line << "\n";
            }
            std::cout << line << "\n";
            return 0;
        }

        if (*cmd_evaluate) {
            const auto preds = read_numeric_csv(pred_path);
            const auto truth = read_numeric_csv(truth_path);
            const auto per_dim = rmse(preds, truth);
            std::string line;
            for (std::size_t i = 0; i < per_dim.size(); ++i)
                line += (i ? "," : "") + format_double(per_dim[i]);
            if (!out_path.empty()) {
                std::ofstream out(out_path, std::ios::binary);
                out << line << "\n";
            }
            std::cout << line << "\n";
            return 0;
        }

        if (*cmd_baseline) {
            PipelineConfig config = load_config_or_throw(config_path, &seed_override, nullptr);
            Dataset ds = build_dataset(config);
            const auto folds =
                kfold_split(ds.size(), config.folds, derive_seed(config.master_seed, 2));
            std::vector<std::vector<double>> features;
            for (const PointCloud& c : ds.samples)
                features.push_back(extract_minmax_features(c, config.baseline_k_f));

            std::ostringstream csv;
            csv << "method,fold,response_index,rmse,status\n";
            for (std::size_t f = 0; f < folds.size(); ++f) {
                std::vector<std::vector<double>> tr_f, te_f, tr_y, te_y;
                for (std::size_t i = 0; i < ds.size(); ++i) {
                    const bool test =
                        std::find(folds[f].begin(), folds[f].end(), i) != folds[f].end();
                    (test ? te_f : tr_f).push_back(features[i]);
                    (test ? te_y : tr_y).push_back(ds.responses[i]);
                }
                const auto knn = baseline_fit_predict(
                    tr_f, tr_y, te_f, std::min(config.baseline_k_nn, tr_f.size()));
                const auto mean_p = mean_predictor(tr_y, te_f.size());
                const auto knn_r = rmse(knn, te_y);
                const auto mean_r = rmse(mean_p, te_y);
                for (std::size_t r = 0; r < knn_r.size(); ++r) {
                    csv << "baseline_knn," << f << "," << r << "," << format_double(knn_r[r])
                        << ",ok\n";
                    csv << "mean," << f << "," << r << "," << format_double(mean_r[r]) << ",ok\n";
                }
            }
            if (!out_path.empty()) {
                std::ofstream out(out_path, std::ios::binary);
                out << csv.str();
            }
            std::cout << csv.str();
            return 0;
        }

        if (*cmd_run) {
            PipelineConfig config = load_config_or_throw(config_path, &seed_override, &out_path);
            const ExperimentResult result = run_experiment(config);
            bool any_failed = false;
            for (const ResultRow& r : result.rows)
                if (r.status.rfind("failed", 0) == 0) any_failed = true;
            std::cout << "results written to " << result.results_csv << "\n";
            for (const std::string& method : {"antler", "baseline_knn", "mean"}) {
                try {
                    std::cout << method << " mean RMSE " << result.mean_rmse(method) << "\n";
                } catch (const std::exception&) {
                    std::cout << method << " mean RMSE unavailable\n";
                }
            }
            return any_failed ? 1 : 0;
        }
    } catch (const std::exception& e) {
        const std::string what = e.what();
        if (what.find("config") != std::string::npos) return exit_config_error(what);
        std::cerr << "error: " << what << "\n";
        return 1;
    }
    return 2;
}
