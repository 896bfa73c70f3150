#pragma once

#include <random>
#include <vector>

#include "cores/gnn.hpp"
#include "cores/graph.hpp"
#include "cores/tensor.hpp"

namespace cores {

// One policy interaction: independent Bernoulli removal decisions per node
// (or per edge), their joint log-probability, the critic's value estimate
// and the distribution entropy.
struct ActionSample {
    std::vector<std::uint8_t> mask;  // 1 = remove
    double log_prob = 0.0;
    double value = 0.0;
    double entropy = 0.0;
};

// Sparsification policy: a GNN trunk with a per-unit Bernoulli actor head
// and a graph-level critic head. Removal probabilities are clamped to
// [1e-7, 1 - 1e-7] before any log so log-probabilities stay finite.
class PolicyModel {
 public:
    PolicyModel() = default;
    // The trunk runs deterministically; configs with dropout or batch norm
    // are rejected so PPO ratios recompute exactly.
    PolicyModel(const GnnConfig& cfg, std::size_t in_dim, RemovalMode mode, std::mt19937_64& rng);

    ActionSample act(const Graph& graph, std::mt19937_64& rng, bool deterministic) const;

    struct Evaluation {
        Tensor log_prob;
        Tensor value;
        Tensor entropy;
    };
    // Differentiable log-probability, value and entropy for a stored action
    // under the current parameters.
    Evaluation evaluate_action(const Graph& graph, const std::vector<std::uint8_t>& mask) const;

    // Symmetric per-edge logits from the node states: the actor MLP applied
    // to [h_u + h_v ; h_u * h_v], invariant to endpoint order.
    Tensor edge_logits(const Tensor& states, const BatchedGraph& batch) const;

    RemovalMode mode() const { return mode_; }
    const GnnConfig& config() const { return trunk_.config(); }
    std::size_t in_dim() const { return trunk_.in_dim(); }

    std::vector<Tensor> actor_parameters() const;   // trunk + actor head
    std::vector<Tensor> critic_parameters() const;  // critic head only

    Checkpoint to_checkpoint() const;
    static PolicyModel from_checkpoint(const Checkpoint& ckpt);
    PolicyModel clone() const { return from_checkpoint(to_checkpoint()); }
    void save(const std::string& path) const;
    static PolicyModel load(const std::string& path);

 private:
    Tensor unit_remove_probs(const Tensor& states, const BatchedGraph& batch) const;
    Tensor critic_value(const Tensor& states, const BatchedGraph& batch) const;

    GnnTrunk trunk_;
    RemovalMode mode_ = RemovalMode::kNode;
    Tensor actor_w1, actor_b1, actor_w2, actor_b2;
    Tensor critic_w1, critic_b1, critic_w2, critic_b2;
};

}  // namespace cores
