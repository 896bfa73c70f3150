#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "cores/conformal.hpp"
#include "cores/gnn.hpp"
#include "cores/graph.hpp"
#include "cores/metrics.hpp"
#include "cores/policy.hpp"
#include "cores/ppo.hpp"
#include "cores/reward.hpp"

namespace cores {

struct TrainConfig {
    GnnConfig gnn;
    PpoConfig ppo;
    RewardConfig reward;
    double classifier_lr = 1e-3;
    double classifier_scheduler_factor = 1.0;
    double rl_scheduler_factor = 1.0;
    std::size_t batch_size = 16;
    std::size_t max_epochs = 100;
    std::size_t early_stop_patience = 50;
    std::size_t ppo_patience = 10;
    std::uint64_t seed = 0;
    RemovalMode mode = RemovalMode::kNode;
    std::array<double, 3> splits{0.5, 0.4, 0.1};
    bool report_last_epoch = false;
    // Fraction of the training split held out for conformal calibration;
    // 0 calibrates on the full training split.
    double conformal_holdout = 0.0;
    // The inner (classifier) learning rate is expected to be at least the
    // outer (policy) one; set this to lift the check.
    bool override_lr_order = false;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    std::string split;
    double accuracy = 0.0;
    double mean_node_ratio = 0.0;
    double mean_edge_ratio = 0.0;
    double mean_reward = 0.0;
    double mean_set_size = 0.0;
    double coverage = 0.0;
    double classifier_loss = 0.0;
    double ppo_surrogate = 0.0;
    double ppo_value_loss = 0.0;
    double ppo_entropy = 0.0;
    double wall_clock_s = 0.0;
};

struct TrainResult {
    ClassifierModel classifier;
    PolicyModel policy;
    bool has_policy = false;
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
    CalibrationState calibration;
    // Epoch at which the PPO patience rule froze policy updates; one past
    // the last epoch when it never fired.
    std::size_t ppo_frozen_epoch = 0;
};

// Multiplicative decay on non-improvement, floored at 1e-6.
double step_scheduler(double current_lr, double factor, bool improved);

// Per-graph subgraph evaluation shared by the trainer and the eval command.
EpochMetrics evaluate_models(const ClassifierModel& classifier, const PolicyModel* policy,
                             const std::vector<Graph>& dataset,
                             std::span<const std::size_t> ids, RemovalMode mode,
                             const RewardConfig& reward_cfg, const CalibrationState* calibration,
                             bool deterministic, std::mt19937_64* rng);

// The bi-level loop: inner classifier steps on policy-sampled subgraphs of
// the training split, per-epoch conformal calibration, rollouts with
// conformal rewards on the validation split, and a PPO phase per epoch.
class Trainer {
 public:
    Trainer(TrainConfig cfg, const std::vector<Graph>& dataset, DatasetSplit split,
            MetricsSink* sink = nullptr, RewardCsv* reward_csv = nullptr);

    TrainResult train();
    TrainResult train_vanilla();

 private:
    struct EpochOutcome {
        double classifier_loss = 0.0;
        PpoStats ppo;
        double mean_rollout_reward = 0.0;
    };

    CalibrationState calibrate_epoch(const ClassifierModel& classifier, const PolicyModel* policy,
                                     std::mt19937_64& rng) const;
    void emit(const EpochMetrics& m);

    TrainConfig cfg_;
    const std::vector<Graph>* dataset_;
    DatasetSplit split_;
    MetricsSink* sink_;
    RewardCsv* reward_csv_;
};

}  // namespace cores
