#include "cores/run_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "cores/numfmt.hpp"

namespace cores {

namespace fs = std::filesystem;

std::vector<Graph> load_dataset(const DataConfig& data) {
    if (data.dataset.empty()) throw ValueError("no dataset configured");
    if (!data.data_dir.empty()) {
        const fs::path dir = fs::path(data.data_dir) / data.dataset;
        if (fs::exists(dir / (data.dataset + "_A.txt"))) {
            return parse_tu_dataset(dir.string(), data.dataset);
        }
        if (fs::exists(fs::path(data.data_dir) / (data.dataset + "_A.txt"))) {
            return parse_tu_dataset(data.data_dir, data.dataset);
        }
    }
    if (data.dataset == "ba-shapes" || data.dataset == "BA-Shapes" ||
        data.dataset == "ba_shapes") {
        return generate_ba_shapes(data.synthetic_graphs, data.synthetic_base_nodes,
                                  data.synthetic_seed);
    }
    throw IoError("dataset '" + data.dataset + "' not found under '" + data.data_dir + "'");
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IoError("cannot write metrics file: " + path);
    os << "# cores-metrics-v1\n";
    os << "epoch,split,accuracy,mean_node_ratio,mean_edge_ratio,mean_reward,mean_set_size,"
          "coverage,classifier_loss,ppo_surrogate,ppo_value_loss,ppo_entropy\n";
    for (const auto& m : history) {
        os << m.epoch << ',' << m.split << ',' << format_double(m.accuracy) << ','
           << format_double(m.mean_node_ratio) << ',' << format_double(m.mean_edge_ratio) << ','
           << format_double(m.mean_reward) << ',' << format_double(m.mean_set_size) << ','
           << format_double(m.coverage) << ',' << format_double(m.classifier_loss) << ','
           << format_double(m.ppo_surrogate) << ',' << format_double(m.ppo_value_loss) << ','
           << format_double(m.ppo_entropy) << "\n";
    }
    if (!os) throw IoError("failed writing metrics file: " + path);
}

namespace {

nlohmann::json metrics_json(const EpochMetrics& m) {
    return nlohmann::json{{"epoch", m.epoch},
                          {"split", m.split},
                          {"accuracy", m.accuracy},
                          {"mean_node_ratio", m.mean_node_ratio},
                          {"mean_edge_ratio", m.mean_edge_ratio},
                          {"mean_reward", m.mean_reward},
                          {"mean_set_size", m.mean_set_size},
                          {"coverage", m.coverage},
                          {"wall_clock_s", m.wall_clock_s}};
}

}  // namespace

void write_run_outputs(const std::string& out_dir, const FullConfig& cfg,
                       const TrainResult& result, std::size_t fold_index,
                       const std::string& run_id) {
    fs::create_directories(out_dir);
    {
        std::ofstream os(fs::path(out_dir) / "config.toml");
        os << cfg.serialize();
    }
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result.history);
    result.classifier.save((fs::path(out_dir) / "classifier.ckpt").string());
    if (result.has_policy) result.policy.save((fs::path(out_dir) / "policy.ckpt").string());

    nlohmann::json summary;
    summary["schema"] = "cores-summary-v1";
    summary["run_id"] = run_id;
    summary["fold"] = fold_index;
    summary["dataset"] = cfg.data.dataset;
    summary["mode"] = cfg.train.mode == RemovalMode::kNode ? "node" : "edge";
    summary["seed"] = cfg.train.seed;
    summary["best_epoch"] = result.best_epoch;
    summary["best_val_accuracy"] = result.best_val_accuracy;
    summary["epochs_run"] = result.history.empty() ? 0 : result.history.back().epoch + 1;
    double total_wall = 0.0;
    for (const auto& m : result.history) {
        if (m.split == "train") total_wall += m.wall_clock_s;
    }
    summary["wall_clock_s"] = total_wall;
    for (const auto& m : result.history) {
        if (m.epoch == result.best_epoch && (m.split == "val" || m.split == "test")) {
            summary["best"][m.split] = metrics_json(m);
        }
    }
    if (!result.history.empty()) {
        for (auto it = result.history.rbegin(); it != result.history.rend(); ++it) {
            if (it->split == "test") {
                summary["final_test"] = metrics_json(*it);
                break;
            }
        }
    }
    summary["config"] = cfg.serialize();
    std::ofstream js(fs::path(out_dir) / "summary.json");
    js << summary.dump(2) << "\n";
    if (!js) throw IoError("failed writing summary.json under " + out_dir);
}

}  // namespace cores
