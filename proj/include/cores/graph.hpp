#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cores/error.hpp"

namespace cores {

// Undirected graph with node features and a class label. Edges are stored
// once in canonical (u < v) order; TU files list both directions and are
// collapsed on ingestion.
struct Graph {
    std::size_t num_nodes = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<std::vector<double>> node_features;  // num_nodes x F
    std::size_t label = 0;
    std::vector<std::vector<double>> edge_features;  // |E| x F_e, may be empty
    std::vector<std::uint8_t> motif_mask;            // synthetic ground truth, may be empty

    std::size_t num_edges() const { return edges.size(); }
    std::size_t feature_dim() const { return node_features.empty() ? 0 : node_features[0].size(); }
};

enum class RemovalMode { kNode, kEdge };

// View of a graph after a removal action. In node mode an edge survives iff
// both endpoints survive; in edge mode every node survives.
struct Subgraph {
    const Graph* parent = nullptr;
    std::vector<std::uint8_t> kept_nodes;
    std::vector<std::uint8_t> kept_edges;

    std::size_t num_kept_nodes() const;
    std::size_t num_kept_edges() const;
    double node_ratio() const;
    double edge_ratio() const;
    bool empty(RemovalMode mode) const;
};

struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::size_t fold_index = 0;
};

// Block-diagonal disjoint union of graphs (or subgraphs); the unit the GNN
// forward pass consumes.
struct BatchedGraph {
    std::size_t num_nodes = 0;
    std::size_t num_graphs = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;  // canonical, global node ids
    std::vector<double> node_features;                       // row-major num_nodes x F
    std::size_t feature_dim = 0;
    std::vector<std::size_t> node_to_graph;
    std::vector<std::size_t> edge_to_graph;
    std::vector<std::size_t> labels;
};

// Reads a TU-format dataset directory: {name}_A.txt, {name}_graph_indicator.txt
// and {name}_graph_labels.txt are mandatory; node/edge label and attribute
// files are optional. Node labels are one-hot encoded into features when no
// attribute file exists; graph labels are remapped to contiguous [0, K).
std::vector<Graph> parse_tu_dataset(const std::string& directory, const std::string& name);

// Writes a dataset back out in TU format (both edge directions emitted).
void write_tu_dataset(const std::vector<Graph>& graphs, const std::string& directory,
                      const std::string& name);

std::size_t num_classes(const std::vector<Graph>& graphs);

// Synthetic binary-classification set: a preferential-attachment base graph
// plus a 5-node motif (house -> label 0, cycle -> label 1) attached through
// one bridging edge. Node features are [1, degree]; motif membership is
// recorded in motif_mask.
std::vector<Graph> generate_ba_shapes(std::size_t num_graphs, std::size_t base_nodes,
                                      std::uint64_t seed);

// Deterministic label-stratified splits; folds are rotations of one shuffled
// order. Classes smaller than num_folds trigger an unstratified fallback.
std::vector<DatasetSplit> split_folds(const std::vector<Graph>& dataset,
                                      std::array<double, 3> ratios, std::size_t num_folds,
                                      std::uint64_t seed);

// Applies a removal mask (1 = remove) to a graph.
Subgraph apply_action(const Graph& graph, RemovalMode mode,
                      const std::vector<std::uint8_t>& action);

BatchedGraph batch(const std::vector<const Graph*>& graphs);
BatchedGraph batch(const std::vector<Subgraph>& subgraphs);
BatchedGraph batch_single(const Graph& graph);

}  // namespace cores
