#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "cores/config.hpp"
#include "cores/numfmt.hpp"
#include "cores/run_io.hpp"
#include "cores/trainer.hpp"

namespace fs = std::filesystem;
using namespace cores;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDataset = 3;
constexpr int kExitCheckpoint = 4;

struct CommonArgs {
    std::string config_path;
    std::string dataset;
    std::string data_dir;
    std::string mode;
    std::string out_dir;
    std::optional<std::size_t> folds;
    std::optional<std::uint64_t> seed;
    bool report_last_epoch = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool need_config, bool need_out) {
    auto* copt = cmd->add_option("--config", args.config_path, "config file (key=value sections)");
    if (need_config) copt->required();
    cmd->add_option("--dataset", args.dataset, "dataset name (TU directory or ba-shapes)");
    cmd->add_option("--data-dir", args.data_dir,
                    "dataset root (falls back to $CORES_DATA_DIR)");
    cmd->add_option("--mode", args.mode, "removal mode: node or edge")
        ->check(CLI::IsMember({"node", "edge"}));
    cmd->add_option("--folds", args.folds, "number of cross-validation folds");
    cmd->add_option("--seed", args.seed, "run seed");
    auto* oopt = cmd->add_option("--out", args.out_dir, "output directory");
    if (need_out) oopt->required();
    cmd->add_flag("--report-last-epoch", args.report_last_epoch,
                  "report the last epoch instead of the best-validation epoch");
}

FullConfig effective_config(const CommonArgs& args) {
    FullConfig cfg;
    if (!args.config_path.empty()) {
        if (!fs::exists(args.config_path)) {
            throw IoError("config file not found: " + args.config_path);
        }
        cfg = FullConfig::parse_file(args.config_path);
    }
    if (!args.dataset.empty()) cfg.data.dataset = args.dataset;
    if (!args.data_dir.empty()) cfg.data.data_dir = args.data_dir;
    if (cfg.data.data_dir.empty()) {
        if (const char* env = std::getenv("CORES_DATA_DIR")) cfg.data.data_dir = env;
    }
    if (args.mode == "node") cfg.train.mode = RemovalMode::kNode;
    if (args.mode == "edge") cfg.train.mode = RemovalMode::kEdge;
    if (args.folds) cfg.data.num_folds = *args.folds;
    if (args.seed) cfg.train.seed = *args.seed;
    if (args.report_last_epoch) cfg.train.report_last_epoch = true;
    cfg.train.validate();
    return cfg;
}

std::vector<Graph> load_or_exit(const FullConfig& cfg) {
    try {
        return load_dataset(cfg.data);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        std::exit(kExitDataset);
    }
}

int run_training(const FullConfig& cfg, const std::string& out_dir, bool vanilla) {
    const auto dataset = load_or_exit(cfg);
    const auto folds =
        split_folds(dataset, cfg.train.splits, cfg.data.num_folds, cfg.train.seed);
    fs::create_directories(out_dir);
    nlohmann::json aggregate;
    aggregate["dataset"] = cfg.data.dataset;
    aggregate["vanilla"] = vanilla;
    std::vector<double> test_accs, node_ratios, edge_ratios;
    for (const auto& fold : folds) {
        const std::string fold_dir =
            (fs::path(out_dir) / ("fold" + std::to_string(fold.fold_index))).string();
        fs::create_directories(fold_dir);
        const std::string run_id =
            cfg.data.dataset + "-fold" + std::to_string(fold.fold_index);
        MetricsSink sink((fs::path(fold_dir) / "events.csv").string(), run_id);
        RewardCsv rewards((fs::path(fold_dir) / "rewards.csv").string());
        Trainer trainer(cfg.train, dataset, fold, &sink, &rewards);
        TrainResult result = vanilla ? trainer.train_vanilla() : trainer.train();
        sink.close();
        write_run_outputs(fold_dir, cfg, result, fold.fold_index, run_id);
        const PolicyModel* policy = result.has_policy ? &result.policy : nullptr;
        const CalibrationState* calib = result.has_policy ? &result.calibration : nullptr;
        EpochMetrics test = evaluate_models(result.classifier, policy, dataset, fold.test,
                                            cfg.train.mode, cfg.train.reward, calib, true,
                                            nullptr);
        test_accs.push_back(test.accuracy);
        node_ratios.push_back(test.mean_node_ratio);
        edge_ratios.push_back(test.mean_edge_ratio);
        std::cout << "fold " << fold.fold_index << ": test accuracy "
                  << format_double(test.accuracy) << ", node ratio "
                  << format_double(test.mean_node_ratio) << ", edge ratio "
                  << format_double(test.mean_edge_ratio) << "\n";
    }
    auto mean_of = [](const std::vector<double>& xs) {
        double s = 0.0;
        for (double x : xs) s += x;
        return xs.empty() ? 0.0 : s / double(xs.size());
    };
    aggregate["folds"] = folds.size();
    aggregate["mean_test_accuracy"] = mean_of(test_accs);
    aggregate["mean_node_ratio"] = mean_of(node_ratios);
    aggregate["mean_edge_ratio"] = mean_of(edge_ratios);
    aggregate["per_fold_accuracy"] = test_accs;
    std::ofstream js(fs::path(out_dir) / "summary.json");
    js << aggregate.dump(2) << "\n";
    return kExitOk;
}

int cmd_train(const CommonArgs& args, bool vanilla) {
    FullConfig cfg = effective_config(args);
    return run_training(cfg, args.out_dir, vanilla);
}

int cmd_sweep(const CommonArgs& args, const std::string& d_grid, const std::string& lambda_grid) {
    FullConfig cfg = effective_config(args);
    auto parse_grid = [](const std::string& text) {
        std::vector<double> values;
        std::stringstream ss(text);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!part.empty()) values.push_back(std::stod(part));
        }
        return values;
    };
    std::vector<double> ds = parse_grid(d_grid);
    std::vector<double> lambdas = parse_grid(lambda_grid);
    if (ds.empty() && lambdas.empty()) {
        std::cerr << "error: empty sweep grid (use --d-grid and/or --lambda-grid)\n";
        return kExitConfig;
    }
    if (ds.empty()) ds.push_back(cfg.train.reward.desired_ratio);
    if (lambdas.empty()) lambdas.push_back(cfg.train.reward.lambda);
    for (double d : ds) {
        if (!(d >= 0.01 && d <= 0.99)) {
            std::cerr << "error: d value " << d << " outside [0.01, 0.99]\n";
            return kExitConfig;
        }
    }
    for (double l : lambdas) {
        if (!(l >= 0.0 && l <= 1.0)) {
            std::cerr << "error: lambda value " << l << " outside [0, 1]\n";
            return kExitConfig;
        }
    }
    const auto dataset = load_or_exit(cfg);
    const auto folds =
        split_folds(dataset, cfg.train.splits, cfg.data.num_folds, cfg.train.seed);
    fs::create_directories(args.out_dir);
    std::ofstream csv(fs::path(args.out_dir) / "sweep.csv");
    csv << "d,lambda,fold,accuracy,node_ratio,edge_ratio\n";
    for (double d : ds) {
        for (double lambda : lambdas) {
            FullConfig point = cfg;
            point.train.reward.desired_ratio = d;
            point.train.reward.lambda = lambda;
            for (const auto& fold : folds) {
                Trainer trainer(point.train, dataset, fold);
                TrainResult result = trainer.train();
                EpochMetrics test = evaluate_models(
                    result.classifier, &result.policy, dataset, fold.test, point.train.mode,
                    point.train.reward, &result.calibration, true, nullptr);
                csv << format_double(d) << ',' << format_double(lambda) << ','
                    << fold.fold_index << ',' << format_double(test.accuracy) << ','
                    << format_double(test.mean_node_ratio) << ','
                    << format_double(test.mean_edge_ratio) << "\n";
                csv.flush();
                std::cout << "d=" << format_double(d) << " lambda=" << format_double(lambda)
                          << " fold=" << fold.fold_index << " accuracy "
                          << format_double(test.accuracy) << "\n";
            }
        }
    }
    return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& classifier_path,
             const std::string& policy_path, std::size_t fold_index, bool dump_subgraphs) {
    FullConfig cfg = effective_config(args);
    if (!fs::exists(classifier_path)) {
        std::cerr << "error: checkpoint not found: " << classifier_path << "\n";
        return kExitCheckpoint;
    }
    ClassifierModel classifier = ClassifierModel::load(classifier_path);
    std::optional<PolicyModel> policy;
    if (!policy_path.empty()) {
        if (!fs::exists(policy_path)) {
            std::cerr << "error: checkpoint not found: " << policy_path << "\n";
            return kExitCheckpoint;
        }
        policy = PolicyModel::load(policy_path);
    }
    const auto dataset = load_or_exit(cfg);
    if (dataset.empty() || dataset.front().feature_dim() != classifier.in_dim()) {
        std::cerr << "error: checkpoint expects " << classifier.in_dim()
                  << " node features, dataset provides "
                  << (dataset.empty() ? 0 : dataset.front().feature_dim()) << "\n";
        return kExitCheckpoint;
    }
    if (policy && policy->in_dim() != classifier.in_dim()) {
        std::cerr << "error: classifier and policy checkpoints disagree on input width\n";
        return kExitCheckpoint;
    }
    const RemovalMode mode = policy ? policy->mode() : cfg.train.mode;
    const auto folds =
        split_folds(dataset, cfg.train.splits, cfg.data.num_folds, cfg.train.seed);
    if (fold_index >= folds.size()) {
        std::cerr << "error: fold " << fold_index << " outside 0.." << folds.size() - 1 << "\n";
        return kExitConfig;
    }
    const DatasetSplit& split = folds[fold_index];

    // Calibrate on the training split through the deployed pipeline.
    std::mt19937_64 rng(cfg.train.seed);
    std::vector<double> scores;
    for (std::size_t id : split.train) {
        const Graph& graph = dataset[id];
        std::vector<std::uint8_t> mask(mode == RemovalMode::kNode ? graph.num_nodes
                                                                  : graph.num_edges(),
                                       0);
        if (policy) mask = policy->act(graph, rng, false).mask;
        const Subgraph sub = apply_action(graph, mode, mask);
        if (sub.empty(mode)) continue;
        const Tensor probs = classifier.predict_proba(batch(std::vector<Subgraph>{sub}));
        std::vector<double> p(probs.data().begin(), probs.data().end());
        scores.push_back(aps_score(p, graph.label));
    }
    CalibrationState calibration;
    calibration.alpha_conf = cfg.train.reward.alpha_conf;
    calibration.quantile = std::numeric_limits<double>::infinity();
    if (!scores.empty()) calibration = calibrate(scores, cfg.train.reward.alpha_conf);

    EpochMetrics m =
        evaluate_models(classifier, policy ? &*policy : nullptr, dataset, split.test, mode,
                        cfg.train.reward, &calibration, true, nullptr);
    std::cout << "test accuracy " << format_double(m.accuracy) << "\n"
              << "node ratio    " << format_double(m.mean_node_ratio) << "\n"
              << "edge ratio    " << format_double(m.mean_edge_ratio) << "\n"
              << "mean reward   " << format_double(m.mean_reward) << "\n"
              << "set size      " << format_double(m.mean_set_size) << "\n"
              << "coverage      " << format_double(m.coverage) << "\n";
    if (!args.out_dir.empty()) {
        fs::create_directories(args.out_dir);
        nlohmann::json j{{"accuracy", m.accuracy},
                         {"mean_node_ratio", m.mean_node_ratio},
                         {"mean_edge_ratio", m.mean_edge_ratio},
                         {"mean_reward", m.mean_reward},
                         {"mean_set_size", m.mean_set_size},
                         {"coverage", m.coverage},
                         {"fold", fold_index}};
        std::ofstream js(fs::path(args.out_dir) / "eval.json");
        js << j.dump(2) << "\n";
    }
    if (dump_subgraphs) {
        const std::string path = args.out_dir.empty()
                                     ? "subgraphs.jsonl"
                                     : (fs::path(args.out_dir) / "subgraphs.jsonl").string();
        std::ofstream js(path);
        for (std::size_t id : split.test) {
            const Graph& graph = dataset[id];
            std::vector<std::uint8_t> mask(mode == RemovalMode::kNode ? graph.num_nodes
                                                                      : graph.num_edges(),
                                           0);
            if (policy) mask = policy->act(graph, rng, true).mask;
            const Subgraph sub = apply_action(graph, mode, mask);
            nlohmann::json row;
            row["graph"] = id;
            row["label"] = graph.label;
            row["kept_nodes"] = std::vector<int>(sub.kept_nodes.begin(), sub.kept_nodes.end());
            row["kept_edges"] = std::vector<int>(sub.kept_edges.begin(), sub.kept_edges.end());
            if (!graph.motif_mask.empty()) {
                row["motif_mask"] =
                    std::vector<int>(graph.motif_mask.begin(), graph.motif_mask.end());
            }
            js << row.dump() << "\n";
        }
        std::cout << "subgraph masks written to " << path << "\n";
    }
    return kExitOk;
}

int cmd_dataset_info(const CommonArgs& args) {
    FullConfig cfg = effective_config(args);
    const auto dataset = load_or_exit(cfg);
    double nodes = 0.0, edges = 0.0, nodes_sq = 0.0, edges_sq = 0.0;
    for (const auto& g : dataset) {
        nodes += double(g.num_nodes);
        edges += double(g.num_edges());
        nodes_sq += double(g.num_nodes) * double(g.num_nodes);
        edges_sq += double(g.num_edges()) * double(g.num_edges());
    }
    const double n = double(dataset.size());
    const double mean_nodes = nodes / n, mean_edges = edges / n;
    const double sd_nodes = std::sqrt(std::max(0.0, nodes_sq / n - mean_nodes * mean_nodes));
    const double sd_edges = std::sqrt(std::max(0.0, edges_sq / n - mean_edges * mean_edges));
    std::cout << "dataset        " << cfg.data.dataset << "\n"
              << "graphs         " << dataset.size() << "\n"
              << "node features  " << dataset.front().feature_dim() << "\n"
              << "edge features  "
              << (dataset.front().edge_features.empty()
                      ? 0
                      : dataset.front().edge_features.front().size())
              << "\n"
              << "classes        " << num_classes(dataset) << "\n"
              << "avg nodes      " << format_double(mean_nodes) << " +- "
              << format_double(sd_nodes) << "\n"
              << "avg edges      " << format_double(mean_edges) << " +- "
              << format_double(sd_edges) << "\n";
    return kExitOk;
}

int cmd_generate_synthetic(std::size_t num_graphs, std::size_t base_nodes, std::uint64_t seed,
                           const std::string& name, const std::string& out_dir) {
    const auto graphs = generate_ba_shapes(num_graphs, base_nodes, seed);
    const fs::path dir = fs::path(out_dir) / name;
    write_tu_dataset(graphs, dir.string(), name);
    std::cout << "wrote " << graphs.size() << " graphs to " << dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cores: graph classification over learned predictive subgraphs"};
    app.require_subcommand(1);

    CommonArgs train_args;
    bool vanilla = false;
    auto* train = app.add_subcommand("train", "train classifier and sparsification policy");
    add_common(train, train_args, /*need_config=*/true, /*need_out=*/true);
    train->add_flag("--vanilla", vanilla, "train the classifier alone on full graphs");

    CommonArgs sweep_args;
    std::string d_grid, lambda_grid;
    auto* sweep = app.add_subcommand("sweep", "grid runs over the reward knobs d and lambda");
    add_common(sweep, sweep_args, true, true);
    sweep->add_option("--d-grid", d_grid, "comma-separated desired-ratio values");
    sweep->add_option("--lambda-grid", lambda_grid, "comma-separated lambda values");

    CommonArgs eval_args;
    std::string classifier_path, policy_path;
    std::size_t fold_index = 0;
    bool dump_subgraphs = false;
    auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
    add_common(eval, eval_args, true, false);
    eval->add_option("--classifier", classifier_path, "classifier checkpoint")->required();
    eval->add_option("--policy", policy_path, "policy checkpoint");
    eval->add_option("--fold", fold_index, "fold index to evaluate");
    eval->add_flag("--dump-subgraphs", dump_subgraphs,
                   "write kept-node/kept-edge masks as JSON lines");

    CommonArgs info_args;
    auto* info = app.add_subcommand("dataset-info", "print dataset statistics");
    add_common(info, info_args, false, false);

    std::size_t gen_graphs = 200, gen_base = 15;
    std::uint64_t gen_seed = 7;
    std::string gen_name = "BASHAPES", gen_out = ".";
    auto* gen = app.add_subcommand("generate-synthetic",
                                   "write a synthetic motif dataset in TU format");
    gen->add_option("--num-graphs", gen_graphs, "number of graphs");
    gen->add_option("--base-nodes", gen_base, "nodes in the attachment base (>= 6)");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--name", gen_name, "dataset name");
    gen->add_option("--out", gen_out, "output root directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_args, vanilla);
        if (sweep->parsed()) return cmd_sweep(sweep_args, d_grid, lambda_grid);
        if (eval->parsed()) {
            return cmd_eval(eval_args, classifier_path, policy_path, fold_index, dump_subgraphs);
        }
        if (info->parsed()) return cmd_dataset_info(info_args);
        if (gen->parsed()) {
            return cmd_generate_synthetic(gen_graphs, gen_base, gen_seed, gen_name, gen_out);
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheckpoint;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
