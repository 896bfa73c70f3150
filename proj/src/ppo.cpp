#include "cores/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cores {

void RolloutBuffer::add(RolloutRecord record) {
    if (full()) throw StateError("rollout buffer is full (capacity " +
                                 std::to_string(capacity_) + ")");
    records_.push_back(std::move(record));
}

void PpoConfig::validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) {
        throw ValueError("ppo: clip_epsilon must be in (0, 1)");
    }
    if (ppo_epochs < 1) throw ValueError("ppo: ppo_epochs must be >= 1");
    if (minibatch_size < 1) throw ValueError("ppo: minibatch_size must be >= 1");
    if (policy_lr <= 0.0) throw ValueError("ppo: policy_lr must be > 0");
    if (critic_lr_ratio <= 0.0) throw ValueError("ppo: critic_lr_ratio must be > 0");
    if (entropy_coef < 0.0 || value_coef < 0.0) {
        throw ValueError("ppo: loss coefficients must be >= 0");
    }
    if (env_steps < 1) throw ValueError("ppo: env_steps must be >= 1");
}

std::vector<double> compute_advantages(const RolloutBuffer& buffer, bool normalize) {
    if (buffer.empty()) throw StateError("compute_advantages on an empty buffer");
    std::vector<double> adv;
    adv.reserve(buffer.size());
    for (const auto& r : buffer.records()) adv.push_back(r.reward - r.value);
    if (normalize) {
        const double n = static_cast<double>(adv.size());
        const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
        double var = 0.0;
        for (double a : adv) var += (a - mean) * (a - mean);
        const double std_dev = std::sqrt(var / n);
        for (double& a : adv) a = (a - mean) / (std_dev + 1e-8);
    }
    return adv;
}

Tensor ppo_loss(const Tensor& new_log_probs, std::span<const double> old_log_probs,
                std::span<const double> advantages, const Tensor& new_values,
                std::span<const double> rewards, const Tensor& entropies, const PpoConfig& cfg) {
    const std::size_t b = new_log_probs.numel();
    if (old_log_probs.size() != b || advantages.size() != b || new_values.numel() != b ||
        rewards.size() != b || entropies.numel() != b) {
        throw ShapeError("ppo_loss: mismatched sequence lengths");
    }
    Tensor old_t({b}, std::vector<double>(old_log_probs.begin(), old_log_probs.end()));
    Tensor adv_t({b}, std::vector<double>(advantages.begin(), advantages.end()));
    Tensor rew_t({b}, std::vector<double>(rewards.begin(), rewards.end()));

    Tensor ratio = ops::exp(ops::sub(new_log_probs, old_t));
    Tensor surr = ops::minimum(
        ops::mul(ratio, adv_t),
        ops::mul(ops::clip(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon), adv_t));
    Tensor diff = ops::sub(new_values, rew_t);
    Tensor value_term = ops::mean_all(ops::mul(diff, diff));
    Tensor loss = ops::add(ops::neg(ops::mean_all(surr)), ops::mul(value_term, cfg.value_coef));
    if (cfg.entropy_coef != 0.0) {
        loss = ops::sub(loss, ops::mul(ops::mean_all(entropies), cfg.entropy_coef));
    }
    return loss;
}

PpoUpdater::PpoUpdater(PolicyModel& policy, const PpoConfig& cfg)
    : policy_(&policy),
      cfg_(cfg),
      actor_(policy.actor_parameters(), cfg.policy_lr),
      critic_(policy.critic_parameters(), cfg.policy_lr * cfg.critic_lr_ratio) {
    cfg_.validate();
}

void PpoUpdater::set_learning_rate(double lr) {
    actor_.set_learning_rate(lr);
    critic_.set_learning_rate(lr * cfg_.critic_lr_ratio);
}

PpoStats PpoUpdater::update(const RolloutBuffer& buffer, std::span<const Graph> dataset,
                            std::mt19937_64& rng) {
    if (buffer.empty()) throw StateError("ppo update on an empty buffer");
    const auto advantages = compute_advantages(buffer, cfg_.advantage_normalization);
    const auto& records = buffer.records();

    PpoStats stats;
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t epoch = 0; epoch < cfg_.ppo_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg_.minibatch_size) {
            const std::size_t end = std::min(order.size(), start + cfg_.minibatch_size);
            std::vector<Tensor> lps, values, ents;
            std::vector<double> old_lps, advs, rewards;
            Tape tape;
            for (std::size_t k = start; k < end; ++k) {
                const RolloutRecord& rec = records[order[k]];
                if (rec.graph_id >= dataset.size()) {
                    throw IndexError("rollout record references graph " +
                                     std::to_string(rec.graph_id) + " outside the dataset");
                }
                auto eval = policy_->evaluate_action(dataset[rec.graph_id], rec.mask);
                lps.push_back(eval.log_prob);
                values.push_back(eval.value);
                ents.push_back(eval.entropy);
                old_lps.push_back(rec.log_prob);
                advs.push_back(advantages[order[k]]);
                rewards.push_back(rec.reward);
            }
            Tensor new_lp = ops::stack_scalars(lps);
            Tensor new_v = ops::stack_scalars(values);
            Tensor ent = ops::stack_scalars(ents);
            Tensor loss = ppo_loss(new_lp, old_lps, advs, new_v, rewards, ent, cfg_);

            // Diagnostics read off the same forward pass.
            double surr_acc = 0.0, vloss_acc = 0.0, ent_acc = 0.0, clipped = 0.0;
            for (std::size_t i = 0; i < old_lps.size(); ++i) {
                const double r = std::exp(new_lp.at(i) - old_lps[i]);
                const double clipped_r =
                    std::clamp(r, 1.0 - cfg_.clip_epsilon, 1.0 + cfg_.clip_epsilon);
                surr_acc += std::min(r * advs[i], clipped_r * advs[i]);
                vloss_acc += (new_v.at(i) - rewards[i]) * (new_v.at(i) - rewards[i]);
                ent_acc += ent.at(i);
                if (std::abs(r - 1.0) > cfg_.clip_epsilon) clipped += 1.0;
            }
            const double bsz = static_cast<double>(old_lps.size());
            stats.surrogate += surr_acc / bsz;
            stats.value_loss += vloss_acc / bsz;
            stats.entropy += ent_acc / bsz;
            stats.clip_fraction += clipped / bsz;
            ++stats.minibatches;

            tape.backward(loss);
            actor_.step();
            critic_.step();
            actor_.zero_grad();
            critic_.zero_grad();
        }
    }
    if (stats.minibatches > 0) {
        const double m = static_cast<double>(stats.minibatches);
        stats.surrogate /= m;
        stats.value_loss /= m;
        stats.entropy /= m;
        stats.clip_fraction /= m;
    }
    return stats;
}

}  // namespace cores
