#include "cores/reward.hpp"

#include <algorithm>
#include <cmath>

namespace cores {

void RewardConfig::validate() const {
    if (lambda < 0.0 || lambda > 1.0) throw ValueError("reward: lambda must be in [0, 1]");
    if (!(desired_ratio > 0.0 && desired_ratio < 1.0)) {
        throw ValueError("reward: desired_ratio must be in (0, 1)");
    }
    if (env_penalty < 0.0) throw ValueError("reward: env_penalty must be >= 0");
    if (!(alpha_conf > 0.0 && alpha_conf < 1.0)) {
        throw ValueError("reward: alpha_conf must be in (0, 1)");
    }
}

double RewardConfig::clamped_desired_ratio() const {
    return std::clamp(desired_ratio, 0.01, 0.99);
}

const char* to_string(RewardCase c) {
    switch (c) {
        case RewardCase::kCertain: return "certain";
        case RewardCase::kUncertain: return "uncertain";
        case RewardCase::kMiss: return "miss";
        case RewardCase::kInvalid: return "invalid";
    }
    return "?";
}

double sparsity_reward(double ratio, double desired_ratio) {
    if (!(ratio > 0.0)) {
        throw DomainError("sparsity_reward: ratio must be positive, got " +
                          std::to_string(ratio));
    }
    ratio = std::min(ratio, 1.0);
    const double d = std::clamp(desired_ratio, 0.01, 0.99);
    const double d_tilde = std::log(0.05) / std::log(d);
    return 1.0 - std::pow(ratio, d_tilde);
}

double performance_reward(std::span<const double> probs, std::size_t label) {
    if (label >= probs.size()) {
        throw IndexError("performance_reward: label " + std::to_string(label) +
                         " out of range [0, " + std::to_string(probs.size()) + ")");
    }
    return probs[label];
}

RewardBreakdown compute_reward(std::span<const double> probs, std::size_t label, double ratio,
                               const PredictionSet& pset, const RewardConfig& cfg, bool valid) {
    RewardBreakdown out;
    if (!valid) {
        out.reward_case = RewardCase::kInvalid;
        out.total = -cfg.env_penalty;
        return out;
    }
    out.r_perf = performance_reward(probs, label);
    out.r_sparse = sparsity_reward(ratio, cfg.desired_ratio);
    out.set_size = pset.size();
    out.in_set = pset.contains(label);
    if (out.in_set && out.set_size == 1) {
        out.reward_case = RewardCase::kCertain;
        out.total = cfg.lambda * out.r_perf + (1.0 - cfg.lambda) * out.r_sparse;
    } else if (out.in_set) {
        out.reward_case = RewardCase::kUncertain;
        out.total = out.r_perf / static_cast<double>(out.set_size);
    } else {
        out.reward_case = RewardCase::kMiss;
        out.total = -out.r_sparse;
    }
    return out;
}

}  // namespace cores
