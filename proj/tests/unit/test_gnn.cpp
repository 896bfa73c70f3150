#include <doctest.h>

#include <cmath>
#include <random>

#include "cores/gnn.hpp"
#include "cores/optim.hpp"
#include "test_support.hpp"

using namespace cores;

namespace {

GnnConfig tiny_config(GnnArch arch) {
    GnnConfig cfg;
    cfg.architecture = arch;
    cfg.num_layers = 1;
    cfg.hidden_dim = 1;
    cfg.pool_mean = true;
    cfg.pool_add = false;
    cfg.num_classes = 2;
    return cfg;
}

// Two nodes with scalar features 1 and 2, one edge between them.
Graph two_node_graph() {
    Graph g;
    g.num_nodes = 2;
    g.edges = {{0, 1}};
    g.node_features = {{1.0}, {2.0}};
    return g;
}

void set_all(Tensor t, double v) {
    for (double& x : t.mutable_data()) x = v;
}

}  // namespace

TEST_CASE("gin layer hand computation") {
    std::mt19937_64 rng(0);
    GnnTrunk trunk(tiny_config(GnnArch::kGin), 1, rng);
    std::vector<std::pair<std::string, Tensor>> named;
    std::vector<Tensor> params;
    trunk.collect_parameters("t.", named, params);
    // identity MLP: w1 = w2 = 1, biases 0
    set_all(params[0], 1.0);
    set_all(params[1], 0.0);
    set_all(params[2], 1.0);
    set_all(params[3], 0.0);

    const BatchedGraph b = batch_single(two_node_graph());
    Tensor h = trunk.node_states(b, false, nullptr);
    CHECK(h.at(0, 0) == doctest::Approx(3.0));  // (1+0)*1 + 2
    CHECK(h.at(1, 0) == doctest::Approx(3.0));  // (1+0)*2 + 1
}

TEST_CASE("gcn layer hand computation") {
    std::mt19937_64 rng(0);
    GnnTrunk trunk(tiny_config(GnnArch::kGcn), 1, rng);
    std::vector<std::pair<std::string, Tensor>> named;
    std::vector<Tensor> params;
    trunk.collect_parameters("t.", named, params);
    set_all(params[0], 1.0);  // identity weight
    set_all(params[1], 0.0);

    const BatchedGraph b = batch_single(two_node_graph());
    Tensor h = trunk.node_states(b, false, nullptr);
    // D^{-1/2}(A+I)D^{-1/2} h with degrees 2: (1+2)/2
    CHECK(h.at(0, 0) == doctest::Approx(1.5));
    CHECK(h.at(1, 0) == doctest::Approx(1.5));
}

TEST_CASE("pooling concatenates mean then add") {
    std::mt19937_64 rng(0);
    GnnConfig cfg = tiny_config(GnnArch::kGin);
    cfg.pool_mean = true;
    cfg.pool_add = true;
    GnnTrunk trunk(cfg, 1, rng);
    BatchedGraph b = batch_single(two_node_graph());
    Tensor states({2, 1}, {3.0, 3.0});
    Tensor pooled = trunk.pooled(states, b);
    REQUIRE(pooled.shape() == std::vector<std::size_t>{1, 2});
    CHECK(pooled.at(0, 0) == doctest::Approx(3.0));
    CHECK(pooled.at(0, 1) == doctest::Approx(6.0));
}

TEST_CASE("zero readout gives uniform probabilities") {
    std::mt19937_64 rng(1);
    GnnConfig cfg;
    cfg.num_layers = 2;
    cfg.hidden_dim = 4;
    cfg.num_classes = 3;
    ClassifierModel model(cfg, 2, rng);
    auto params = model.trainable_parameters();
    set_all(params[params.size() - 2], 0.0);  // head output weight
    set_all(params[params.size() - 1], 0.0);  // head output bias
    std::mt19937_64 grng(2);
    Graph g = testutil::random_graph(6, 0.4, grng);
    Tensor probs = model.predict_proba(batch_single(g));
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(probs.at(0, j) == doctest::Approx(1.0 / 3.0));
    }
}

TEST_CASE("probability rows sum to one and empty batches are rejected") {
    std::mt19937_64 rng(3);
    GnnConfig cfg;
    cfg.hidden_dim = 8;
    cfg.num_classes = 4;
    ClassifierModel model(cfg, 2, rng);
    std::mt19937_64 grng(4);
    std::vector<Graph> gs;
    for (int i = 0; i < 3; ++i) gs.push_back(testutil::random_graph(5, 0.5, grng));
    std::vector<const Graph*> ptrs{&gs[0], &gs[1], &gs[2]};
    Tensor probs = model.predict_proba(batch(ptrs));
    for (std::size_t i = 0; i < 3; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 4; ++j) sum += probs.at(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK_THROWS_AS(model.forward(BatchedGraph{}, false, nullptr), ShapeError);
}

TEST_CASE("node relabeling leaves probabilities unchanged") {
    std::mt19937_64 rng(5);
    GnnConfig cfg;
    cfg.num_layers = 2;
    cfg.hidden_dim = 8;
    cfg.pool_mean = true;
    cfg.pool_add = true;
    ClassifierModel model(cfg, 2, rng);
    std::mt19937_64 grng(6);
    Graph g = testutil::random_graph(7, 0.5, grng);

    std::vector<std::size_t> perm{3, 5, 0, 6, 1, 4, 2};
    Graph relabeled;
    relabeled.num_nodes = g.num_nodes;
    relabeled.node_features.resize(g.num_nodes);
    for (std::size_t v = 0; v < g.num_nodes; ++v) {
        relabeled.node_features[perm[v]] = g.node_features[v];
    }
    for (auto [u, v] : g.edges) {
        relabeled.edges.emplace_back(std::min(perm[u], perm[v]), std::max(perm[u], perm[v]));
    }
    Tensor p1 = model.predict_proba(batch_single(g));
    Tensor p2 = model.predict_proba(batch_single(relabeled));
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(p1.at(0, j) - p2.at(0, j)) < 1e-6);
}

TEST_CASE("edgeless graphs produce finite logits") {
    std::mt19937_64 rng(7);
    for (GnnArch arch : {GnnArch::kGin, GnnArch::kGcn}) {
        GnnConfig cfg = tiny_config(arch);
        cfg.hidden_dim = 4;
        ClassifierModel model(cfg, 2, rng);
        Graph g;
        g.num_nodes = 3;
        g.node_features.assign(3, {1.0, -0.5});
        Tensor logits = model.forward(batch_single(g));
        for (std::size_t i = 0; i < logits.numel(); ++i) CHECK(std::isfinite(logits.at(i)));
    }
}

TEST_CASE("alone-vs-batched probabilities agree without batch norm") {
    std::mt19937_64 rng(8);
    GnnConfig cfg;
    cfg.hidden_dim = 8;
    cfg.num_layers = 2;
    ClassifierModel model(cfg, 2, rng);
    std::mt19937_64 grng(9);
    std::vector<Graph> gs;
    for (int i = 0; i < 3; ++i) gs.push_back(testutil::random_graph(6, 0.4, grng));
    Tensor alone = model.predict_proba(batch_single(gs[1]));
    Tensor batched = model.predict_proba(batch(std::vector<const Graph*>{&gs[0], &gs[1], &gs[2]}));
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(alone.at(0, j) - batched.at(1, j)) < 1e-5);
}

TEST_CASE("cross entropy examples and gradient") {
    Tensor uniform({1, 2}, {0.0, 0.0});
    CHECK(cross_entropy(uniform, std::vector<std::size_t>{0}).value() ==
          doctest::Approx(std::log(2.0)));

    Tensor confident({1, 2}, {10.0, -10.0});
    CHECK(cross_entropy(confident, std::vector<std::size_t>{0}).value() ==
          doctest::Approx(0.0).epsilon(1e-6));

    CHECK_THROWS_AS(cross_entropy(uniform, std::vector<std::size_t>{5}), IndexError);

    std::mt19937_64 rng(10);
    Tensor logits = testutil::random_tensor({4, 3}, rng);
    std::vector<std::size_t> labels{0, 2, 1, 1};
    testutil::check_gradients([&]() { return cross_entropy(logits, labels); }, {logits});
}

TEST_CASE("one gradient step decreases the loss at random inits") {
    for (int init = 0; init < 10; ++init) {
        std::mt19937_64 rng(100 + init);
        GnnConfig cfg;
        cfg.hidden_dim = 6;
        cfg.num_layers = 2;
        ClassifierModel model(cfg, 2, rng);
        Graph g = testutil::random_graph(6, 0.5, rng);
        g.label = init % 2;
        const BatchedGraph b = batch_single(g);
        std::vector<std::size_t> label{g.label};
        Adam opt(model.trainable_parameters(), 1e-3);
        double before;
        {
            Tape tape;
            Tensor loss = cross_entropy(model.forward(b, true, &rng), label);
            before = loss.value();
            tape.backward(loss);
            opt.step();
            opt.zero_grad();
        }
        const double after = cross_entropy(model.forward(b, false, nullptr), label).value();
        CHECK(after < before);
    }
}

TEST_CASE("classifier checkpoint round trip") {
    std::mt19937_64 rng(11);
    GnnConfig cfg;
    cfg.hidden_dim = 5;
    cfg.num_layers = 2;
    cfg.batch_norm = true;
    cfg.gin_epsilon = 0.2;
    cfg.gin_epsilon_trainable = true;
    ClassifierModel model(cfg, 3, rng);
    std::mt19937_64 grng(12);
    Graph g = testutil::random_graph(5, 0.6, grng, 3);
    // run one training pass so batch-norm statistics move off the defaults
    {
        Tape tape;
        Tensor loss = cross_entropy(model.forward(batch_single(g), true, &grng),
                                    std::vector<std::size_t>{0});
        tape.backward(loss);
    }
    Tensor before = model.predict_proba(batch_single(g));
    model.save("classifier_roundtrip.ckpt");
    ClassifierModel loaded = ClassifierModel::load("classifier_roundtrip.ckpt");
    Tensor after = loaded.predict_proba(batch_single(g));
    for (std::size_t i = 0; i < before.numel(); ++i) CHECK(before.at(i) == after.at(i));
}
