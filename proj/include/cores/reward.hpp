#pragma once

#include <span>
#include <string>

#include "cores/conformal.hpp"
#include "cores/error.hpp"

namespace cores {

struct RewardConfig {
    double lambda = 0.5;        // performance weight in the certain case
    double desired_ratio = 0.5;  // maximum desired node/edge ratio d
    double env_penalty = 1.0;    // magnitude of the invalid-action penalty
    double alpha_conf = 0.1;     // conformal error rate shared with calibration

    void validate() const;
    double clamped_desired_ratio() const;
};

enum class RewardCase { kCertain, kUncertain, kMiss, kInvalid };

const char* to_string(RewardCase c);

struct RewardBreakdown {
    double r_perf = 0.0;
    double r_sparse = 0.0;
    std::size_t set_size = 0;
    bool in_set = false;
    double total = 0.0;
    RewardCase reward_case = RewardCase::kInvalid;
};

// 1 - ratio^{d_tilde} with d_tilde = ln(0.05)/ln(d), anchoring the curve so
// the reward is 0.95 exactly when ratio == d.
double sparsity_reward(double ratio, double desired_ratio);

// Softmax mass assigned to the true class.
double performance_reward(std::span<const double> probs, std::size_t label);

// Three-case combination plus the invalid-subgraph penalty:
//   valid, y in C, |C| == 1 : lambda*R_p + (1-lambda)*R_s   in [0, 1]
//   valid, y in C, |C| >  1 : R_p / |C|                     in (0, 0.5]
//   valid, y not in C       : -R_s                          in [-1, 0]
//   invalid                 : -env_penalty
RewardBreakdown compute_reward(std::span<const double> probs, std::size_t label, double ratio,
                               const PredictionSet& pset, const RewardConfig& cfg, bool valid);

}  // namespace cores
