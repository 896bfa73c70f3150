#pragma once

#include <random>
#include <span>
#include <vector>

#include "cores/optim.hpp"
#include "cores/policy.hpp"

namespace cores {

struct RolloutRecord {
    std::size_t graph_id = 0;
    std::vector<std::uint8_t> mask;
    double log_prob = 0.0;
    double value = 0.0;
    double reward = 0.0;
    std::size_t set_size = 0;
};

// Per-epoch rollout storage, cleared after every PPO update phase.
class RolloutBuffer {
 public:
    explicit RolloutBuffer(std::size_t capacity) : capacity_(capacity) {}

    void add(RolloutRecord record);
    void clear() { records_.clear(); }
    bool full() const { return records_.size() >= capacity_; }
    bool empty() const { return records_.empty(); }
    std::size_t size() const { return records_.size(); }
    std::size_t capacity() const { return capacity_; }
    const std::vector<RolloutRecord>& records() const { return records_; }

 private:
    std::size_t capacity_;
    std::vector<RolloutRecord> records_;
};

struct PpoConfig {
    double clip_epsilon = 0.2;
    double entropy_coef = 0.0;
    double value_coef = 1.0;
    std::size_t ppo_epochs = 4;
    std::size_t minibatch_size = 32;
    double policy_lr = 3e-4;
    double critic_lr_ratio = 1.0;
    bool advantage_normalization = true;
    std::size_t env_steps = 128;  // rollout buffer capacity

    void validate() const;
};

// One-step advantages: reward - critic value, optionally normalized to zero
// mean and unit (population) standard deviation.
std::vector<double> compute_advantages(const RolloutBuffer& buffer, bool normalize);

// Clipped surrogate plus value and entropy terms:
//   -mean(min(r*A, clip(r, 1-eps, 1+eps)*A))
//   + value_coef * mean((V - R)^2) - entropy_coef * mean(H)
// with r = exp(new_log_prob - old_log_prob).
Tensor ppo_loss(const Tensor& new_log_probs, std::span<const double> old_log_probs,
                std::span<const double> advantages, const Tensor& new_values,
                std::span<const double> rewards, const Tensor& entropies, const PpoConfig& cfg);

struct PpoStats {
    double surrogate = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double clip_fraction = 0.0;
    std::size_t minibatches = 0;
};

// Runs the K-epoch shuffled-minibatch update phase. Owns the two optimizers
// so Adam moments persist across phases; the critic head steps at
// policy_lr * critic_lr_ratio.
class PpoUpdater {
 public:
    PpoUpdater(PolicyModel& policy, const PpoConfig& cfg);

    PpoStats update(const RolloutBuffer& buffer, std::span<const Graph> dataset,
                    std::mt19937_64& rng);

    double learning_rate() const { return actor_.learning_rate(); }
    void set_learning_rate(double lr);

 private:
    PolicyModel* policy_;
    PpoConfig cfg_;
    Adam actor_;
    Adam critic_;
};

}  // namespace cores
