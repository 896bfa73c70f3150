#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cores/run_io.hpp"
#include "cores/trainer.hpp"
#include "test_support.hpp"

using namespace cores;

namespace {

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.gnn.num_layers = 1;
    cfg.gnn.hidden_dim = 8;
    cfg.gnn.num_classes = 2;
    cfg.ppo.env_steps = 16;
    cfg.ppo.ppo_epochs = 2;
    cfg.ppo.minibatch_size = 8;
    cfg.ppo.policy_lr = 1e-3;
    cfg.classifier_lr = 1e-2;
    cfg.batch_size = 8;
    cfg.max_epochs = 3;
    cfg.early_stop_patience = 10;
    cfg.ppo_patience = 5;
    cfg.reward.desired_ratio = 0.5;
    cfg.reward.alpha_conf = 0.2;
    return cfg;
}

// Two trivially separable classes on constant features.
std::vector<Graph> separable_dataset(std::size_t n) {
    std::vector<Graph> out;
    for (std::size_t i = 0; i < n; ++i) {
        Graph g = testutil::path_graph(4);
        g.label = i % 2;
        const double a = g.label == 0 ? 1.0 : 0.0;
        g.node_features.assign(4, {a, 1.0 - a});
        out.push_back(std::move(g));
    }
    return out;
}

}  // namespace

TEST_CASE("scheduler decay rules") {
    CHECK(step_scheduler(0.01, 0.9, false) == doctest::Approx(0.009));
    CHECK(step_scheduler(0.01, 0.9, true) == doctest::Approx(0.01));
    double lr = 2e-6;
    for (int i = 0; i < 50; ++i) lr = step_scheduler(lr, 0.5, false);
    CHECK(lr == doctest::Approx(1e-6));
    CHECK_THROWS_AS(step_scheduler(0.01, 1.5, false), ValueError);
}

TEST_CASE("zero-epoch training returns initialized models and empty history") {
    auto data = separable_dataset(12);
    auto folds = split_folds(data, {0.5, 0.25, 0.25}, 1, 0);
    TrainConfig cfg = tiny_train_config();
    cfg.max_epochs = 0;
    Trainer trainer(cfg, data, folds[0]);
    TrainResult r = trainer.train();
    CHECK(r.history.empty());
    CHECK(r.has_policy);
    TrainResult v = Trainer(cfg, data, folds[0]).train_vanilla();
    CHECK(v.history.empty());
}

TEST_CASE("identity policy evaluation keeps every node and edge") {
    auto data = separable_dataset(8);
    std::mt19937_64 rng(0);
    GnnConfig cfg;
    cfg.num_layers = 1;
    cfg.hidden_dim = 4;
    ClassifierModel model(cfg, 2, rng);
    std::vector<std::size_t> ids{0, 1, 2, 3};
    RewardConfig rcfg;
    EpochMetrics m = evaluate_models(model, nullptr, data, ids, RemovalMode::kNode, rcfg, nullptr,
                                     true, nullptr);
    CHECK(m.mean_node_ratio == 1.0);
    CHECK(m.mean_edge_ratio == 1.0);
    CHECK_THROWS_AS(evaluate_models(model, nullptr, data, std::vector<std::size_t>{},
                                    RemovalMode::kNode, rcfg, nullptr, true, nullptr),
                    ValueError);
}

TEST_CASE("vanilla training solves a separable toy") {
    auto data = separable_dataset(24);
    auto folds = split_folds(data, {0.5, 0.25, 0.25}, 1, 0);
    TrainConfig cfg = tiny_train_config();
    cfg.max_epochs = 40;
    Trainer trainer(cfg, data, folds[0]);
    TrainResult r = trainer.train_vanilla();
    REQUIRE(!r.history.empty());
    EpochMetrics test = evaluate_models(r.classifier, nullptr, data, folds[0].test,
                                        RemovalMode::kNode, cfg.reward, nullptr, true, nullptr);
    CHECK(test.accuracy == doctest::Approx(1.0));
}

TEST_CASE("untrained accuracy sits near chance on balanced data") {
    auto data = separable_dataset(24);
    auto folds = split_folds(data, {0.5, 0.25, 0.25}, 1, 0);
    TrainConfig cfg = tiny_train_config();
    cfg.max_epochs = 0;
    TrainResult r = Trainer(cfg, data, folds[0]).train_vanilla();
    EpochMetrics m = evaluate_models(r.classifier, nullptr, data, folds[0].test,
                                     RemovalMode::kNode, cfg.reward, nullptr, true, nullptr);
    CHECK(m.accuracy >= 0.5 - 0.15 - 1e-9);
    CHECK(m.accuracy <= 0.5 + 0.15 + 1e-9 + 0.5);  // chance +- 0.15, one-sided slack for ties
}

TEST_CASE("early stopping fires after exactly the patience window") {
    // Identical features for every graph: accuracy can never improve after
    // the first epoch, so the run lasts 1 + patience epochs.
    std::vector<Graph> data;
    for (std::size_t i = 0; i < 12; ++i) {
        Graph g = testutil::path_graph(3);
        g.label = i % 2;
        data.push_back(std::move(g));
    }
    auto folds = split_folds(data, {0.5, 0.25, 0.25}, 1, 0);
    TrainConfig cfg = tiny_train_config();
    cfg.max_epochs = 50;
    cfg.early_stop_patience = 2;
    TrainResult r = Trainer(cfg, data, folds[0]).train_vanilla();
    CHECK(r.history.size() == 3 * 3);  // three epochs, three split rows each
}

TEST_CASE("cores training runs end to end and keeps history aligned") {
    auto data = separable_dataset(20);
    auto folds = split_folds(data, {0.5, 0.3, 0.2}, 1, 0);
    TrainConfig cfg = tiny_train_config();
    cfg.max_epochs = 2;
    const std::string sink_path = "trainer_events.csv";
    MetricsSink sink(sink_path, "trainer-test");
    RewardCsv rewards("trainer_rewards.csv");
    Trainer trainer(cfg, data, folds[0], &sink, &rewards);
    TrainResult r = trainer.train();
    sink.close();
    REQUIRE(r.history.size() == 6);
    CHECK(r.history[0].split == "train");
    CHECK(r.history[1].split == "val");
    CHECK(r.history[2].split == "test");
    CHECK(r.history[0].epoch == 0);
    CHECK(r.history[3].epoch == 1);
    for (const auto& m : r.history) {
        CHECK(m.accuracy >= 0.0);
        CHECK(m.accuracy <= 1.0);
        CHECK(m.mean_node_ratio >= 0.0);
        CHECK(m.mean_node_ratio <= 1.0);
    }
    // rollouts landed in the reward stream
    rewards.flush();
    std::ifstream rf("trainer_rewards.csv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(rf, line)) ++lines;
    CHECK(lines == 1 + cfg.ppo.env_steps * cfg.max_epochs);
}

TEST_CASE("edge mode keeps every node") {
    auto data = separable_dataset(16);
    auto folds = split_folds(data, {0.5, 0.25, 0.25}, 1, 0);
    TrainConfig cfg = tiny_train_config();
    cfg.mode = RemovalMode::kEdge;
    cfg.max_epochs = 2;
    TrainResult r = Trainer(cfg, data, folds[0]).train();
    for (const auto& m : r.history) {
        CHECK(m.mean_node_ratio == 1.0);
    }
}

TEST_CASE("identical seeds give bitwise-identical metric files") {
    auto data = separable_dataset(20);
    auto folds = split_folds(data, {0.5, 0.3, 0.2}, 1, 3);
    TrainConfig cfg = tiny_train_config();
    cfg.max_epochs = 2;
    cfg.seed = 42;
    TrainResult a = Trainer(cfg, data, folds[0]).train();
    TrainResult b = Trainer(cfg, data, folds[0]).train();
    write_metrics_csv("det_a.csv", a.history);
    write_metrics_csv("det_b.csv", b.history);
    std::ifstream fa("det_a.csv", std::ios::binary), fb("det_b.csv", std::ios::binary);
    std::stringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(sa.str().find("# cores-metrics-v1") == 0);
}

TEST_CASE("removed-node features cannot reach the classifier") {
    std::mt19937_64 rng(5);
    GnnConfig cfg;
    cfg.num_layers = 2;
    cfg.hidden_dim = 6;
    ClassifierModel model(cfg, 2, rng);
    Graph g = testutil::random_graph(7, 0.5, rng);
    std::vector<std::uint8_t> action{1, 0, 0, 1, 0, 0, 0};
    const Subgraph sub = apply_action(g, RemovalMode::kNode, action);
    const Tensor before = model.forward(batch(std::vector<Subgraph>{sub}));

    Graph perturbed = g;
    perturbed.node_features[0] = {123.0, -55.0};
    perturbed.node_features[3] = {9.0, 9.0};
    const Subgraph sub2 = apply_action(perturbed, RemovalMode::kNode, action);
    const Tensor after = model.forward(batch(std::vector<Subgraph>{sub2}));
    REQUIRE(before.numel() == after.numel());
    CHECK(std::memcmp(before.data().data(), after.data().data(),
                      before.numel() * sizeof(double)) == 0);
}

TEST_CASE("run outputs land in the run directory") {
    auto data = separable_dataset(16);
    auto folds = split_folds(data, {0.5, 0.25, 0.25}, 1, 0);
    TrainConfig tcfg = tiny_train_config();
    tcfg.max_epochs = 1;
    TrainResult r = Trainer(tcfg, data, folds[0]).train();
    FullConfig full;
    full.train = tcfg;
    full.data.dataset = "toy";
    write_run_outputs("run_out_test", full, r, 0, "unit");
    namespace fs = std::filesystem;
    CHECK(fs::exists("run_out_test/metrics.csv"));
    CHECK(fs::exists("run_out_test/summary.json"));
    CHECK(fs::exists("run_out_test/classifier.ckpt"));
    CHECK(fs::exists("run_out_test/policy.ckpt"));
    CHECK(fs::exists("run_out_test/config.toml"));
}

TEST_CASE("rewarding performance never loses much accuracy vs pure sparsity") {
    // Same seed, same data: the lambda=1 run's best validation accuracy
    // must not trail the lambda=0 run's by more than five points.
    auto data = generate_ba_shapes(60, 10, 11);
    auto folds = split_folds(data, {0.5, 0.3, 0.2}, 1, 2);
    TrainConfig base = tiny_train_config();
    base.gnn.num_layers = 2;
    base.gnn.hidden_dim = 16;
    base.ppo.env_steps = 32;
    base.ppo.advantage_normalization = false;
    base.reward.desired_ratio = 0.3;
    base.max_epochs = 25;
    base.early_stop_patience = 25;
    base.ppo_patience = 25;
    base.seed = 3;

    auto best_val = [&](double lambda) {
        TrainConfig cfg = base;
        cfg.reward.lambda = lambda;
        TrainResult r = Trainer(cfg, data, folds[0]).train();
        return r.best_val_accuracy;
    };
    const double sparse_only = best_val(0.0);
    const double perf_only = best_val(1.0);
    CHECK(perf_only >= sparse_only - 0.05);
}

TEST_CASE("three-class training runs through the full loop") {
    std::vector<Graph> data;
    for (std::size_t i = 0; i < 24; ++i) {
        Graph g = testutil::path_graph(4, 3);
        g.label = i % 3;
        std::vector<double> feat(3, 0.0);
        feat[g.label] = 1.0;
        g.node_features.assign(4, feat);
        data.push_back(std::move(g));
    }
    auto folds = split_folds(data, {0.5, 0.25, 0.25}, 1, 0);
    TrainConfig cfg = tiny_train_config();
    cfg.gnn.num_classes = 3;
    cfg.gnn.hidden_dim = 16;
    cfg.max_epochs = 60;
    cfg.early_stop_patience = 60;  // the tiny policy flirts with empty masks early
    cfg.ppo_patience = 60;
    TrainResult r = Trainer(cfg, data, folds[0]).train();
    EpochMetrics test = evaluate_models(r.classifier, &r.policy, data, folds[0].test,
                                        cfg.mode, cfg.reward, &r.calibration, true, nullptr);
    CHECK(test.accuracy >= 2.0 / 3.0);  // separable; policy noise tolerated
    CHECK(test.mean_set_size <= 3.0);
    TrainResult v = Trainer(cfg, data, folds[0]).train_vanilla();
    EpochMetrics vtest = evaluate_models(v.classifier, nullptr, data, folds[0].test,
                                         cfg.mode, cfg.reward, nullptr, true, nullptr);
    CHECK(vtest.accuracy >= 2.0 / 3.0);
}
