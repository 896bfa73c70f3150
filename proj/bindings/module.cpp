#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "cores/config.hpp"
#include "cores/conformal.hpp"
#include "cores/graph.hpp"
#include "cores/reward.hpp"
#include "cores/run_io.hpp"
#include "cores/trainer.hpp"

namespace py = pybind11;
using namespace cores;

namespace {

RemovalMode mode_from_string(const std::string& mode) {
    if (mode == "node") return RemovalMode::kNode;
    if (mode == "edge") return RemovalMode::kEdge;
    throw ValueError("mode must be 'node' or 'edge'");
}

py::dict metrics_dict(const EpochMetrics& m) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["split"] = m.split;
    d["accuracy"] = m.accuracy;
    d["mean_node_ratio"] = m.mean_node_ratio;
    d["mean_edge_ratio"] = m.mean_edge_ratio;
    d["mean_reward"] = m.mean_reward;
    d["mean_set_size"] = m.mean_set_size;
    d["coverage"] = m.coverage;
    d["classifier_loss"] = m.classifier_loss;
    return d;
}

py::dict run_train(const std::string& config_text, std::size_t fold_index, bool vanilla,
                   const std::optional<std::string>& out_dir) {
    FullConfig cfg = FullConfig::parse_text(config_text);
    cfg.train.validate();
    const auto dataset = load_dataset(cfg.data);
    const auto folds =
        split_folds(dataset, cfg.train.splits, cfg.data.num_folds, cfg.train.seed);
    if (fold_index >= folds.size()) throw ValueError("fold index out of range");
    Trainer trainer(cfg.train, dataset, folds[fold_index]);
    TrainResult result = vanilla ? trainer.train_vanilla() : trainer.train();
    if (out_dir) {
        write_run_outputs(*out_dir, cfg, result, fold_index, "python");
    }
    const PolicyModel* policy = result.has_policy ? &result.policy : nullptr;
    const CalibrationState* calib = result.has_policy ? &result.calibration : nullptr;
    EpochMetrics test =
        evaluate_models(result.classifier, policy, dataset, folds[fold_index].test,
                        cfg.train.mode, cfg.train.reward, calib, true, nullptr);
    py::dict out;
    out["best_epoch"] = result.best_epoch;
    out["best_val_accuracy"] = result.best_val_accuracy;
    out["epochs_run"] = result.history.size() / 3;
    out["test"] = metrics_dict(test);
    py::list history;
    for (const auto& m : result.history) history.append(metrics_dict(m));
    out["history"] = history;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cores: graph classification over learned predictive subgraphs";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<DomainError>(m, "DomainErrorCores");
    py::register_exception<cores::IndexError>(m, "IndexErrorCores");
    py::register_exception<ValueError>(m, "ValueErrorCores");

    py::class_<Graph>(m, "Graph")
        .def(py::init<>())
        .def_readwrite("num_nodes", &Graph::num_nodes)
        .def_readwrite("edges", &Graph::edges)
        .def_readwrite("node_features", &Graph::node_features)
        .def_readwrite("label", &Graph::label)
        .def_readwrite("motif_mask", &Graph::motif_mask)
        .def_property_readonly("num_edges", &Graph::num_edges)
        .def_property_readonly("feature_dim", &Graph::feature_dim);

    py::class_<DatasetSplit>(m, "DatasetSplit")
        .def_readonly("train", &DatasetSplit::train)
        .def_readonly("val", &DatasetSplit::val)
        .def_readonly("test", &DatasetSplit::test)
        .def_readonly("fold_index", &DatasetSplit::fold_index);

    py::class_<Subgraph>(m, "Subgraph")
        .def_readonly("kept_nodes", &Subgraph::kept_nodes)
        .def_readonly("kept_edges", &Subgraph::kept_edges)
        .def_property_readonly("node_ratio", &Subgraph::node_ratio)
        .def_property_readonly("edge_ratio", &Subgraph::edge_ratio);

    py::class_<PredictionSet>(m, "PredictionSet")
        .def(py::init<>())
        .def_readwrite("classes", &PredictionSet::classes)
        .def("__len__", &PredictionSet::size)
        .def("__contains__", &PredictionSet::contains);

    py::class_<RewardBreakdown>(m, "RewardBreakdown")
        .def_readonly("r_perf", &RewardBreakdown::r_perf)
        .def_readonly("r_sparse", &RewardBreakdown::r_sparse)
        .def_readonly("set_size", &RewardBreakdown::set_size)
        .def_readonly("in_set", &RewardBreakdown::in_set)
        .def_readonly("total", &RewardBreakdown::total)
        .def_property_readonly("case",
                               [](const RewardBreakdown& b) { return to_string(b.reward_case); });

    m.def("generate_ba_shapes", &generate_ba_shapes, py::arg("num_graphs"),
          py::arg("base_nodes"), py::arg("seed"),
          "Synthetic binary motif dataset (house vs cycle on a BA base).");
    m.def("parse_tu_dataset", &parse_tu_dataset, py::arg("directory"), py::arg("name"));
    m.def("write_tu_dataset", &write_tu_dataset, py::arg("graphs"), py::arg("directory"),
          py::arg("name"));
    m.def("num_classes", &num_classes, py::arg("graphs"));
    m.def(
        "split_folds",
        [](const std::vector<Graph>& graphs, double train, double val, double test,
           std::size_t folds, std::uint64_t seed) {
            return split_folds(graphs, {train, val, test}, folds, seed);
        },
        py::arg("graphs"), py::arg("train"), py::arg("val"), py::arg("test"),
        py::arg("num_folds") = 1, py::arg("seed") = 0);
    m.def(
        "apply_action",
        [](const Graph& g, const std::string& mode, const std::vector<std::uint8_t>& action) {
            return apply_action(g, mode_from_string(mode), action);
        },
        py::arg("graph"), py::arg("mode"), py::arg("action"), py::keep_alive<0, 1>(),
        "Apply a removal mask (1 = remove) in 'node' or 'edge' mode.");

    m.def("aps_score", [](const std::vector<double>& probs,
                          std::size_t label) { return aps_score(probs, label); },
          py::arg("probs"), py::arg("label"));
    m.def(
        "calibrate",
        [](const std::vector<double>& scores, double alpha) {
            return calibrate(scores, alpha).quantile;
        },
        py::arg("scores"), py::arg("alpha"), "Finite-sample quantile; +inf when oversized.");
    m.def(
        "prediction_set",
        [](const std::vector<double>& probs, double quantile) {
            CalibrationState state;
            state.quantile = quantile;
            const PredictionSet set = prediction_set(probs, state);
            return std::vector<std::size_t>(set.classes.begin(), set.classes.end());
        },
        py::arg("probs"), py::arg("quantile"));

    m.def("sparsity_reward", &sparsity_reward, py::arg("ratio"), py::arg("desired_ratio"));
    m.def("performance_reward",
          [](const std::vector<double>& probs, std::size_t label) {
              return performance_reward(probs, label);
          },
          py::arg("probs"), py::arg("label"));
    m.def(
        "compute_reward",
        [](const std::vector<double>& probs, std::size_t label, double ratio,
           const std::vector<std::size_t>& pset_classes, double lambda, double desired_ratio,
           double env_penalty, double alpha_conf, bool valid) {
            RewardConfig cfg;
            cfg.lambda = lambda;
            cfg.desired_ratio = desired_ratio;
            cfg.env_penalty = env_penalty;
            cfg.alpha_conf = alpha_conf;
            PredictionSet pset;
            pset.classes.insert(pset_classes.begin(), pset_classes.end());
            return compute_reward(probs, label, ratio, pset, cfg, valid);
        },
        py::arg("probs"), py::arg("label"), py::arg("ratio"), py::arg("prediction_set"),
        py::arg("lambda_") = 0.5, py::arg("desired_ratio") = 0.5, py::arg("env_penalty") = 1.0,
        py::arg("alpha_conf") = 0.1, py::arg("valid") = true);

    m.def("train", &run_train, py::arg("config_text"), py::arg("fold") = 0,
          py::arg("vanilla") = false, py::arg("out_dir") = std::nullopt,
          "Run the full training loop for one fold of the configured dataset.");
}
