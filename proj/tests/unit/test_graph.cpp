#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cores/graph.hpp"
#include "test_support.hpp"

using namespace cores;
namespace fs = std::filesystem;

namespace {

// Two graphs: nodes {1,2} with edge written in both directions, node {3}.
void write_fixture(const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream(dir / "FIX_A.txt") << "1, 2\n2, 1\n";
    std::ofstream(dir / "FIX_graph_indicator.txt") << "1\n1\n2\n";
    std::ofstream(dir / "FIX_graph_labels.txt") << "-1\n1\n";
    std::ofstream(dir / "FIX_node_labels.txt") << "0\n1\n0\n";
}

bool same_graph(const Graph& a, const Graph& b) {
    return a.num_nodes == b.num_nodes && a.edges == b.edges && a.label == b.label &&
           a.node_features == b.node_features && a.edge_features == b.edge_features &&
           a.motif_mask == b.motif_mask;
}

}  // namespace

TEST_CASE("tu parser on a two-graph fixture") {
    const fs::path dir = "tu_fixture";
    write_fixture(dir);
    auto graphs = parse_tu_dataset(dir.string(), "FIX");
    REQUIRE(graphs.size() == 2);
    CHECK(graphs[0].num_nodes == 2);
    CHECK(graphs[0].num_edges() == 1);  // both directions collapsed
    CHECK(graphs[0].edges[0] == std::pair<std::size_t, std::size_t>{0, 1});
    CHECK(graphs[1].num_nodes == 1);
    CHECK(graphs[1].num_edges() == 0);
    // labels {-1, 1} remapped to {0, 1}
    CHECK(graphs[0].label == 0);
    CHECK(graphs[1].label == 1);
    // one-hot node labels
    CHECK(graphs[0].node_features[0] == std::vector<double>{1.0, 0.0});
    CHECK(graphs[0].node_features[1] == std::vector<double>{0.0, 1.0});

    CHECK_THROWS_AS(parse_tu_dataset(dir.string(), "MISSING"), IoError);

    std::ofstream(dir / "BAD_A.txt") << "1, 9\n";
    std::ofstream(dir / "BAD_graph_indicator.txt") << "1\n1\n";
    std::ofstream(dir / "BAD_graph_labels.txt") << "0\n";
    CHECK_THROWS_WITH_AS(parse_tu_dataset(dir.string(), "BAD"),
                         doctest::Contains("BAD_A.txt:1"), ParseError);
}

TEST_CASE("tu round trip preserves graphs") {
    auto graphs = generate_ba_shapes(8, 10, 99);
    const fs::path dir = "tu_roundtrip";
    write_tu_dataset(graphs, dir.string(), "RT");
    auto back = parse_tu_dataset(dir.string(), "RT");
    REQUIRE(back.size() == graphs.size());
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        CAPTURE(i);
        CHECK(same_graph(graphs[i], back[i]));
    }
    // And a second hop is identical too.
    write_tu_dataset(back, dir.string(), "RT2");
    auto again = parse_tu_dataset(dir.string(), "RT2");
    for (std::size_t i = 0; i < graphs.size(); ++i) CHECK(same_graph(back[i], again[i]));
}

TEST_CASE("ba-shapes generator") {
    auto graphs = generate_ba_shapes(10, 12, 0);
    REQUIRE(graphs.size() == 10);
    std::size_t houses = 0, cycles = 0;
    for (const auto& g : graphs) (g.label == 0 ? houses : cycles) += 1;
    CHECK(houses == 5);
    CHECK(cycles == 5);

    for (const auto& g : graphs) {
        CHECK(g.num_nodes == 17);
        REQUIRE(g.motif_mask.size() == g.num_nodes);
        std::size_t motif_nodes = 0;
        std::size_t motif_edges = 0;
        for (auto m : g.motif_mask) motif_nodes += m;
        for (auto [u, v] : g.edges) {
            if (g.motif_mask[u] && g.motif_mask[v]) ++motif_edges;
        }
        CHECK(motif_nodes == 5);
        CHECK(motif_edges == (g.label == 0 ? 8 : 5));
        // features are [1, degree]
        std::vector<double> deg(g.num_nodes, 0.0);
        for (auto [u, v] : g.edges) {
            deg[u] += 1;
            deg[v] += 1;
        }
        for (std::size_t v = 0; v < g.num_nodes; ++v) {
            CHECK(g.node_features[v][0] == 1.0);
            CHECK(g.node_features[v][1] == deg[v]);
        }
    }
    // determinism
    auto again = generate_ba_shapes(10, 12, 0);
    for (std::size_t i = 0; i < graphs.size(); ++i) CHECK(graphs[i].edges == again[i].edges);

    CHECK_THROWS_AS(generate_ba_shapes(2, 5, 0), ValueError);
}

TEST_CASE("split_folds sizes, determinism and stratification") {
    auto ten = generate_ba_shapes(10, 8, 1);
    auto folds = split_folds(ten, {0.6, 0.3, 0.1}, 3, 4);
    REQUIRE(folds.size() == 3);
    for (const auto& f : folds) {
        CHECK(f.train.size() == 6);
        CHECK(f.val.size() == 3);
        CHECK(f.test.size() == 1);
        std::set<std::size_t> all(f.train.begin(), f.train.end());
        all.insert(f.val.begin(), f.val.end());
        all.insert(f.test.begin(), f.test.end());
        CHECK(all.size() == 10);  // disjoint and covering
        // stratified: the train split holds 3 of each class
        std::size_t c0 = 0;
        for (auto id : f.train) c0 += ten[id].label == 0 ? 1 : 0;
        CHECK(c0 == 3);
    }
    auto repeat = split_folds(ten, {0.6, 0.3, 0.1}, 3, 4);
    for (std::size_t f = 0; f < folds.size(); ++f) {
        CHECK(folds[f].train == repeat[f].train);
        CHECK(folds[f].val == repeat[f].val);
        CHECK(folds[f].test == repeat[f].test);
    }
    // folds differ
    CHECK(folds[0].test != folds[1].test);

    auto hundred = generate_ba_shapes(100, 8, 2);
    auto h = split_folds(hundred, {0.4, 0.5, 0.1}, 1, 0);
    CHECK(h[0].train.size() == 40);
    CHECK(h[0].val.size() == 50);
    CHECK(h[0].test.size() == 10);

    CHECK_THROWS_AS(split_folds(ten, {0.5, 0.2, 0.1}, 3, 0), ValueError);
}

TEST_CASE("apply_action set semantics") {
    Graph g;
    g.num_nodes = 3;
    g.edges = {{0, 1}, {1, 2}};
    g.node_features.assign(3, {1.0});

    Subgraph node_sub = apply_action(g, RemovalMode::kNode, {0, 1, 0});
    CHECK(node_sub.num_kept_nodes() == 2);
    CHECK(node_sub.num_kept_edges() == 0);

    Subgraph edge_sub = apply_action(g, RemovalMode::kEdge, {1, 0});
    CHECK(edge_sub.num_kept_nodes() == 3);
    CHECK(edge_sub.num_kept_edges() == 1);
    CHECK(edge_sub.kept_edges[1] == 1);

    Subgraph identity = apply_action(g, RemovalMode::kNode, {0, 0, 0});
    CHECK(identity.node_ratio() == 1.0);
    CHECK(identity.edge_ratio() == 1.0);

    CHECK_THROWS_AS(apply_action(g, RemovalMode::kNode, {0, 1}), ShapeError);
    CHECK_THROWS_AS(apply_action(g, RemovalMode::kEdge, {0, 1, 1}), ShapeError);
}

TEST_CASE("node-mode actions never keep an edge with a removed endpoint") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        Graph g = testutil::random_graph(6, 0.5, rng);
        for (std::size_t bits = 0; bits < (1u << g.num_nodes); ++bits) {
            std::vector<std::uint8_t> action(g.num_nodes);
            for (std::size_t v = 0; v < g.num_nodes; ++v) action[v] = (bits >> v) & 1u;
            Subgraph sub = apply_action(g, RemovalMode::kNode, action);
            for (std::size_t e = 0; e < g.num_edges(); ++e) {
                if (!sub.kept_edges[e]) continue;
                const auto [u, v] = g.edges[e];
                CHECK(action[u] == 0);
                CHECK(action[v] == 0);
            }
            CHECK(sub.node_ratio() >= 0.0);
            CHECK(sub.node_ratio() <= 1.0);
        }
    }
}

TEST_CASE("batch block structure") {
    Graph a = testutil::path_graph(2);
    Graph b = testutil::path_graph(2);
    b.label = 1;
    BatchedGraph bg = batch(std::vector<const Graph*>{&a, &b});
    CHECK(bg.num_nodes == 4);
    CHECK(bg.num_graphs == 2);
    CHECK(bg.node_to_graph == std::vector<std::size_t>{0, 0, 1, 1});
    REQUIRE(bg.edges.size() == 2);
    CHECK(bg.edges[1] == std::pair<std::size_t, std::size_t>{2, 3});
    CHECK(bg.labels == std::vector<std::size_t>{0, 1});

    BatchedGraph single = batch_single(a);
    CHECK(single.num_nodes == 2);
    CHECK(single.edges == a.edges);

    // a subgraph with zero edges still batches
    Subgraph empty_edges = apply_action(a, RemovalMode::kEdge, {1});
    BatchedGraph bg2 = batch(std::vector<Subgraph>{empty_edges});
    CHECK(bg2.num_nodes == 2);
    CHECK(bg2.edges.empty());

    Graph mismatched = testutil::path_graph(2, 5);
    CHECK_THROWS_AS(batch(std::vector<const Graph*>{&a, &mismatched}), ShapeError);
}

TEST_CASE("node-mode batching renumbers kept nodes compactly") {
    Graph g = testutil::path_graph(4);
    Subgraph sub = apply_action(g, RemovalMode::kNode, {1, 0, 0, 0});
    BatchedGraph bg = batch(std::vector<Subgraph>{sub});
    CHECK(bg.num_nodes == 3);
    REQUIRE(bg.edges.size() == 2);  // edges 1-2 and 2-3 survive as 0-1, 1-2
    CHECK(bg.edges[0] == std::pair<std::size_t, std::size_t>{0, 1});
    CHECK(bg.edges[1] == std::pair<std::size_t, std::size_t>{1, 2});
}
