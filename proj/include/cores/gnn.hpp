#pragma once

#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cores/checkpoint.hpp"
#include "cores/graph.hpp"
#include "cores/tensor.hpp"

namespace cores {

enum class GnnArch { kGin, kGcn };

struct GnnConfig {
    GnnArch architecture = GnnArch::kGin;
    std::size_t num_layers = 3;
    std::size_t hidden_dim = 16;
    double dropout = 0.0;
    bool batch_norm = false;
    bool pool_mean = true;
    bool pool_add = false;
    double gin_epsilon = 0.0;
    bool gin_epsilon_trainable = false;
    std::size_t num_classes = 2;

    void validate() const;
    std::size_t pooled_dim() const {
        return hidden_dim * ((pool_mean ? 1u : 0u) + (pool_add ? 1u : 0u));
    }
    // Canonical key=value block embedded in checkpoint headers.
    std::string to_key_values() const;
    static GnnConfig from_key_values(const std::string& text);
};

struct GinLayer {
    Tensor w1, b1, w2, b2;
    Tensor eps;
};

struct GcnLayer {
    Tensor w, b;
};

struct BatchNorm {
    Tensor gamma, beta;
    std::vector<double> running_mean, running_var;
};

// Message-passing stack shared by the classifier and the policy: L rounds of
// neighborhood aggregation over the batch's kept edges (messages flow both
// directions of each undirected edge), with optional batch norm and dropout.
class GnnTrunk {
 public:
    GnnTrunk() = default;
    GnnTrunk(const GnnConfig& cfg, std::size_t in_dim, std::mt19937_64& rng);

    // Final node states [num_nodes x hidden_dim].
    Tensor node_states(const BatchedGraph& batch, bool training, std::mt19937_64* rng) const;
    // Per-graph pooled vector [num_graphs x pooled_dim]; mean first, then add.
    Tensor pooled(const Tensor& states, const BatchedGraph& batch) const;

    const GnnConfig& config() const { return cfg_; }
    std::size_t in_dim() const { return in_dim_; }

    void collect_parameters(const std::string& prefix,
                            std::vector<std::pair<std::string, Tensor>>& named,
                            std::vector<Tensor>& trainable) const;
    void load_parameters(const std::string& prefix, const Checkpoint& ckpt);

 private:
    GnnConfig cfg_;
    std::size_t in_dim_ = 0;
    std::vector<GinLayer> gin_;
    std::vector<GcnLayer> gcn_;
    mutable std::vector<BatchNorm> bn_;  // running statistics update in training mode
};

// Graph classifier: GNN trunk, pooling, and a one-hidden-layer MLP readout.
class ClassifierModel {
 public:
    ClassifierModel() = default;
    ClassifierModel(const GnnConfig& cfg, std::size_t in_dim, std::mt19937_64& rng);

    Tensor forward(const BatchedGraph& batch, bool training = false,
                   std::mt19937_64* rng = nullptr) const;
    Tensor predict_proba(const BatchedGraph& batch) const;

    const GnnConfig& config() const { return trunk_.config(); }
    std::size_t in_dim() const { return trunk_.in_dim(); }
    const GnnTrunk& trunk() const { return trunk_; }

    std::vector<Tensor> trainable_parameters() const;
    Checkpoint to_checkpoint() const;
    static ClassifierModel from_checkpoint(const Checkpoint& ckpt);
    ClassifierModel clone() const { return from_checkpoint(to_checkpoint()); }
    void save(const std::string& path) const;
    static ClassifierModel load(const std::string& path);

 private:
    GnnTrunk trunk_;
    Tensor head_w1, head_b1, head_w2, head_b2;
};

// Mean negative log-softmax of the true class.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace cores
