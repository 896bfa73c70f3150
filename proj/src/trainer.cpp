#include "cores/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cores/optim.hpp"

namespace cores {

void TrainConfig::validate() const {
    gnn.validate();
    ppo.validate();
    reward.validate();
    if (classifier_lr <= 0.0) throw ValueError("train: classifier_lr must be > 0");
    if (!(classifier_scheduler_factor > 0.0 && classifier_scheduler_factor <= 1.0)) {
        throw ValueError("train: classifier_scheduler_factor must be in (0, 1]");
    }
    if (!(rl_scheduler_factor > 0.0 && rl_scheduler_factor <= 1.0)) {
        throw ValueError("train: rl_scheduler_factor must be in (0, 1]");
    }
    if (batch_size < 1) throw ValueError("train: batch_size must be >= 1");
    const double sum = splits[0] + splits[1] + splits[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ValueError("train: splits must sum to 1");
    if (!override_lr_order && ppo.policy_lr > classifier_lr) {
        throw ValueError("train: policy_lr exceeds classifier_lr; the inner problem expects the "
                         "larger rate (set override_lr_order=true to allow)");
    }
    if (conformal_holdout < 0.0 || conformal_holdout >= 1.0) {
        throw ValueError("train: conformal_holdout must be in [0, 1)");
    }
}

double step_scheduler(double current_lr, double factor, bool improved) {
    if (!(factor > 0.0 && factor <= 1.0)) throw ValueError("scheduler factor must be in (0, 1]");
    if (improved) return current_lr;
    return std::max(current_lr * factor, 1e-6);
}

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<std::uint8_t> keep_all_mask(const Graph& g, RemovalMode mode) {
    return std::vector<std::uint8_t>(
        mode == RemovalMode::kNode ? g.num_nodes : g.num_edges(), 0);
}

}  // namespace

EpochMetrics evaluate_models(const ClassifierModel& classifier, const PolicyModel* policy,
                             const std::vector<Graph>& dataset,
                             std::span<const std::size_t> ids, RemovalMode mode,
                             const RewardConfig& reward_cfg, const CalibrationState* calibration,
                             bool deterministic, std::mt19937_64* rng) {
    if (ids.empty()) throw ValueError("evaluate: empty id list");
    std::mt19937_64 fallback_rng(0);
    EpochMetrics m;
    std::size_t correct = 0, covered = 0, valid_count = 0;
    double node_ratio_sum = 0.0, edge_ratio_sum = 0.0, reward_sum = 0.0, set_size_sum = 0.0;
    for (std::size_t id : ids) {
        const Graph& graph = dataset[id];
        std::vector<std::uint8_t> mask;
        if (policy != nullptr) {
            mask = policy->act(graph, rng ? *rng : fallback_rng, deterministic).mask;
        } else {
            mask = keep_all_mask(graph, mode);
        }
        const Subgraph sub = apply_action(graph, mode, mask);
        if (sub.empty(mode)) {
            // Empty subgraphs count as wrong with ratio 0 in the acting
            // dimension; in edge mode every node is still retained.
            node_ratio_sum += mode == RemovalMode::kNode ? 0.0 : 1.0;
            reward_sum += -reward_cfg.env_penalty;
            continue;
        }
        const BatchedGraph b = batch(std::vector<Subgraph>{sub});
        const Tensor probs = classifier.predict_proba(b);
        std::vector<double> p(probs.data().begin(), probs.data().end());
        const std::size_t pred = static_cast<std::size_t>(
            std::max_element(p.begin(), p.end()) - p.begin());
        if (pred == graph.label) ++correct;
        node_ratio_sum += sub.node_ratio();
        edge_ratio_sum += sub.edge_ratio();
        ++valid_count;
        if (calibration != nullptr) {
            const PredictionSet pset = prediction_set(p, *calibration);
            const double ratio =
                mode == RemovalMode::kNode ? sub.node_ratio() : sub.edge_ratio();
            const RewardBreakdown rb =
                compute_reward(p, graph.label, ratio, pset, reward_cfg, true);
            reward_sum += rb.total;
            set_size_sum += static_cast<double>(pset.size());
            if (pset.contains(graph.label)) ++covered;
        }
    }
    const double n = static_cast<double>(ids.size());
    m.accuracy = static_cast<double>(correct) / n;
    m.mean_node_ratio = node_ratio_sum / n;
    m.mean_edge_ratio = edge_ratio_sum / n;
    m.mean_reward = reward_sum / n;
    if (valid_count > 0 && calibration != nullptr) {
        m.mean_set_size = set_size_sum / static_cast<double>(valid_count);
        m.coverage = static_cast<double>(covered) / static_cast<double>(valid_count);
    }
    return m;
}

Trainer::Trainer(TrainConfig cfg, const std::vector<Graph>& dataset, DatasetSplit split,
                 MetricsSink* sink, RewardCsv* reward_csv)
    : cfg_(std::move(cfg)), dataset_(&dataset), split_(std::move(split)), sink_(sink),
      reward_csv_(reward_csv) {
    cfg_.validate();
    if (split_.train.empty() || split_.val.empty() || split_.test.empty()) {
        throw ValueError("trainer: every split must be nonempty");
    }
}

void Trainer::emit(const EpochMetrics& m) {
    if (sink_ == nullptr) return;
    const long epoch = static_cast<long>(m.epoch);
    sink_->record(epoch, m.split, "accuracy", m.accuracy);
    sink_->record(epoch, m.split, "node_ratio", m.mean_node_ratio);
    sink_->record(epoch, m.split, "edge_ratio", m.mean_edge_ratio);
    sink_->record(epoch, m.split, "reward", m.mean_reward);
    sink_->record(epoch, m.split, "set_size", m.mean_set_size);
    sink_->record(epoch, m.split, "coverage", m.coverage);
    sink_->record(epoch, m.split, "classifier_loss", m.classifier_loss);
    sink_->record(epoch, m.split, "wall_clock_s", m.wall_clock_s);
}

CalibrationState Trainer::calibrate_epoch(const ClassifierModel& classifier,
                                          const PolicyModel* policy,
                                          std::mt19937_64& rng) const {
    // Scores come from the training split, passed through the same
    // policy-sampled subgraph pipeline the rewards will see.
    std::vector<std::size_t> pool = split_.train;
    if (cfg_.conformal_holdout > 0.0 && pool.size() > 1) {
        const auto keep = static_cast<std::size_t>(
            std::max(1.0, std::round(cfg_.conformal_holdout * double(pool.size()))));
        pool.assign(split_.train.end() - static_cast<std::ptrdiff_t>(keep), split_.train.end());
    }
    std::vector<double> scores;
    scores.reserve(pool.size());
    for (std::size_t id : pool) {
        const Graph& graph = (*dataset_)[id];
        std::vector<std::uint8_t> mask = policy != nullptr
                                             ? policy->act(graph, rng, false).mask
                                             : keep_all_mask(graph, cfg_.mode);
        const Subgraph sub = apply_action(graph, cfg_.mode, mask);
        if (sub.empty(cfg_.mode)) continue;
        const Tensor probs = classifier.predict_proba(batch(std::vector<Subgraph>{sub}));
        std::vector<double> p(probs.data().begin(), probs.data().end());
        scores.push_back(aps_score(p, graph.label));
    }
    if (scores.empty()) {
        // Every sampled subgraph was empty; fall back to all-class sets.
        CalibrationState state;
        state.alpha_conf = cfg_.reward.alpha_conf;
        state.quantile = std::numeric_limits<double>::infinity();
        return state;
    }
    return calibrate(scores, cfg_.reward.alpha_conf);
}

TrainResult Trainer::train() {
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t in_dim = (*dataset_)[split_.train.front()].feature_dim();
    GnnConfig cls_cfg = cfg_.gnn;
    cls_cfg.num_classes = std::max(cls_cfg.num_classes, num_classes(*dataset_));
    ClassifierModel classifier(cls_cfg, in_dim, rng);
    GnnConfig pol_cfg = cls_cfg;
    pol_cfg.dropout = 0.0;      // the policy trunk must act deterministically
    pol_cfg.batch_norm = false;
    PolicyModel policy(pol_cfg, in_dim, cfg_.mode, rng);

    Adam cls_opt(classifier.trainable_parameters(), cfg_.classifier_lr);
    PpoUpdater ppo(policy, cfg_.ppo);
    RolloutBuffer buffer(cfg_.ppo.env_steps);

    TrainResult result;
    result.classifier = classifier.clone();
    result.policy = policy.clone();
    result.has_policy = true;
    result.best_val_accuracy = -1.0;
    result.ppo_frozen_epoch = cfg_.max_epochs;

    double best_val_reward = -std::numeric_limits<double>::infinity();
    std::size_t acc_stall = 0, reward_stall = 0;
    bool ppo_frozen = false;

    for (std::size_t epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
        const double t0 = now_seconds();

        // (a) Inner problem: classifier steps on policy-sampled subgraphs.
        std::vector<std::size_t> train_ids = split_.train;
        std::shuffle(train_ids.begin(), train_ids.end(), rng);
        double loss_sum = 0.0;
        std::size_t loss_batches = 0;
        for (std::size_t start = 0; start < train_ids.size(); start += cfg_.batch_size) {
            const std::size_t end = std::min(train_ids.size(), start + cfg_.batch_size);
            std::vector<Subgraph> subs;
            std::vector<std::size_t> labels, members;
            for (std::size_t k = start; k < end; ++k) {
                const Graph& graph = (*dataset_)[train_ids[k]];
                const ActionSample sample = policy.act(graph, rng, false);
                Subgraph sub = apply_action(graph, cfg_.mode, sample.mask);
                if (sub.empty(cfg_.mode)) continue;  // penalized on the policy side only
                subs.push_back(std::move(sub));
                labels.push_back(graph.label);
                members.push_back(train_ids[k]);
            }
            if (subs.empty()) continue;
            Tape tape;
            Tensor logits = classifier.forward(batch(subs), /*training=*/true, &rng);
            Tensor loss = cross_entropy(logits, labels);
            if (!std::isfinite(loss.value())) {
                std::ostringstream os;
                os << "training diverged (non-finite classifier loss) at epoch " << epoch
                   << "; batch graphs:";
                for (std::size_t id : members) os << ' ' << id;
                throw StateError(os.str());
            }
            loss_sum += loss.value();
            ++loss_batches;
            tape.backward(loss);
            cls_opt.step();
            cls_opt.zero_grad();
        }

        // (b) Conformal calibration with the current classifier.
        const CalibrationState calibration = calibrate_epoch(classifier, &policy, rng);

        // (c) Rollouts with conformal rewards on the validation split.
        buffer.clear();
        double rollout_reward_sum = 0.0;
        while (!buffer.full()) {
            std::vector<std::size_t> val_ids = split_.val;
            std::shuffle(val_ids.begin(), val_ids.end(), rng);
            for (std::size_t id : val_ids) {
                if (buffer.full()) break;
                const Graph& graph = (*dataset_)[id];
                const ActionSample sample = policy.act(graph, rng, false);
                const Subgraph sub = apply_action(graph, cfg_.mode, sample.mask);
                RewardBreakdown rb;
                if (sub.empty(cfg_.mode)) {
                    rb = compute_reward({}, 0, 1.0, PredictionSet{}, cfg_.reward, false);
                } else {
                    const Tensor probs =
                        classifier.predict_proba(batch(std::vector<Subgraph>{sub}));
                    std::vector<double> p(probs.data().begin(), probs.data().end());
                    const PredictionSet pset = prediction_set(p, calibration);
                    const double ratio = cfg_.mode == RemovalMode::kNode ? sub.node_ratio()
                                                                         : sub.edge_ratio();
                    rb = compute_reward(p, graph.label, ratio, pset, cfg_.reward, true);
                }
                if (reward_csv_ != nullptr) {
                    reward_csv_->record(static_cast<long>(epoch), rb);
                }
                rollout_reward_sum += rb.total;
                buffer.add({id, sample.mask, sample.log_prob, sample.value, rb.total,
                            rb.set_size});
            }
        }
        const double mean_rollout_reward =
            rollout_reward_sum / static_cast<double>(buffer.size());

        // (d) PPO phase, unless frozen by its patience rule.
        PpoStats ppo_stats;
        if (!ppo_frozen) ppo_stats = ppo.update(buffer, *dataset_, rng);
        buffer.clear();

        // (e) Evaluation, schedulers, early stopping.
        EpochMetrics train_m =
            evaluate_models(classifier, &policy, *dataset_, split_.train, cfg_.mode, cfg_.reward,
                            &calibration, /*deterministic=*/true, nullptr);
        EpochMetrics val_m =
            evaluate_models(classifier, &policy, *dataset_, split_.val, cfg_.mode, cfg_.reward,
                            &calibration, /*deterministic=*/true, nullptr);
        EpochMetrics test_m =
            evaluate_models(classifier, &policy, *dataset_, split_.test, cfg_.mode, cfg_.reward,
                            &calibration, /*deterministic=*/true, nullptr);
        const double elapsed = now_seconds() - t0;
        train_m.epoch = val_m.epoch = test_m.epoch = epoch;
        train_m.split = "train";
        val_m.split = "val";
        test_m.split = "test";
        train_m.classifier_loss = loss_batches > 0 ? loss_sum / double(loss_batches) : 0.0;
        val_m.ppo_surrogate = ppo_stats.surrogate;
        val_m.ppo_value_loss = ppo_stats.value_loss;
        val_m.ppo_entropy = ppo_stats.entropy;
        train_m.wall_clock_s = val_m.wall_clock_s = test_m.wall_clock_s = elapsed;
        emit(train_m);
        emit(val_m);
        emit(test_m);
        result.history.push_back(train_m);
        result.history.push_back(val_m);
        result.history.push_back(test_m);

        const bool improved = val_m.accuracy > result.best_val_accuracy;
        if (improved) {
            result.best_val_accuracy = val_m.accuracy;
            result.best_epoch = epoch;
            result.classifier = classifier.clone();
            result.policy = policy.clone();
            result.calibration = calibration;
            acc_stall = 0;
        } else {
            ++acc_stall;
        }
        cls_opt.set_learning_rate(
            step_scheduler(cls_opt.learning_rate(), cfg_.classifier_scheduler_factor, improved));
        ppo.set_learning_rate(
            step_scheduler(ppo.learning_rate(), cfg_.rl_scheduler_factor, improved));

        if (mean_rollout_reward > best_val_reward) {
            best_val_reward = mean_rollout_reward;
            reward_stall = 0;
        } else {
            ++reward_stall;
        }
        if (!ppo_frozen && reward_stall >= cfg_.ppo_patience) {
            ppo_frozen = true;
            result.ppo_frozen_epoch = epoch;
        }

        if (sink_ != nullptr) {
            sink_->record(static_cast<long>(epoch), "val", "lr_classifier",
                          cls_opt.learning_rate());
            sink_->record(static_cast<long>(epoch), "val", "lr_policy", ppo.learning_rate());
            sink_->record(static_cast<long>(epoch), "val", "ppo_clip_fraction",
                          ppo_stats.clip_fraction);
            sink_->record(static_cast<long>(epoch), "val", "buffer_size",
                          static_cast<double>(cfg_.ppo.env_steps));
            if (std::isfinite(calibration.quantile)) {
                sink_->record(static_cast<long>(epoch), "train", "calibration_quantile",
                              calibration.quantile);
            }
            sink_->flush();
        }
        if (acc_stall >= cfg_.early_stop_patience) break;
    }

    if (cfg_.report_last_epoch || result.best_val_accuracy < 0.0) {
        result.classifier = classifier.clone();
        result.policy = policy.clone();
        result.calibration = calibrate_epoch(classifier, &policy, rng);
        if (!result.history.empty()) result.best_epoch = result.history.back().epoch;
    }
    return result;
}

TrainResult Trainer::train_vanilla() {
    std::mt19937_64 rng(cfg_.seed);
    const std::size_t in_dim = (*dataset_)[split_.train.front()].feature_dim();
    GnnConfig cls_cfg = cfg_.gnn;
    cls_cfg.num_classes = std::max(cls_cfg.num_classes, num_classes(*dataset_));
    ClassifierModel classifier(cls_cfg, in_dim, rng);
    Adam cls_opt(classifier.trainable_parameters(), cfg_.classifier_lr);

    TrainResult result;
    result.classifier = classifier.clone();
    result.has_policy = false;
    result.best_val_accuracy = -1.0;

    std::size_t acc_stall = 0;
    for (std::size_t epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
        const double t0 = now_seconds();
        std::vector<std::size_t> train_ids = split_.train;
        std::shuffle(train_ids.begin(), train_ids.end(), rng);
        double loss_sum = 0.0;
        std::size_t loss_batches = 0;
        for (std::size_t start = 0; start < train_ids.size(); start += cfg_.batch_size) {
            const std::size_t end = std::min(train_ids.size(), start + cfg_.batch_size);
            std::vector<const Graph*> members;
            std::vector<std::size_t> labels;
            for (std::size_t k = start; k < end; ++k) {
                members.push_back(&(*dataset_)[train_ids[k]]);
                labels.push_back((*dataset_)[train_ids[k]].label);
            }
            Tape tape;
            Tensor logits = classifier.forward(batch(members), /*training=*/true, &rng);
            Tensor loss = cross_entropy(logits, labels);
            if (!std::isfinite(loss.value())) {
                throw StateError("training diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch));
            }
            loss_sum += loss.value();
            ++loss_batches;
            tape.backward(loss);
            cls_opt.step();
            cls_opt.zero_grad();
        }

        EpochMetrics train_m =
            evaluate_models(classifier, nullptr, *dataset_, split_.train, cfg_.mode, cfg_.reward,
                            nullptr, true, nullptr);
        EpochMetrics val_m =
            evaluate_models(classifier, nullptr, *dataset_, split_.val, cfg_.mode, cfg_.reward,
                            nullptr, true, nullptr);
        EpochMetrics test_m =
            evaluate_models(classifier, nullptr, *dataset_, split_.test, cfg_.mode, cfg_.reward,
                            nullptr, true, nullptr);
        const double elapsed = now_seconds() - t0;
        train_m.epoch = val_m.epoch = test_m.epoch = epoch;
        train_m.split = "train";
        val_m.split = "val";
        test_m.split = "test";
        train_m.classifier_loss = loss_batches > 0 ? loss_sum / double(loss_batches) : 0.0;
        train_m.wall_clock_s = val_m.wall_clock_s = test_m.wall_clock_s = elapsed;
        emit(train_m);
        emit(val_m);
        emit(test_m);
        result.history.push_back(train_m);
        result.history.push_back(val_m);
        result.history.push_back(test_m);

        const bool improved = val_m.accuracy > result.best_val_accuracy;
        if (improved) {
            result.best_val_accuracy = val_m.accuracy;
            result.best_epoch = epoch;
            result.classifier = classifier.clone();
            acc_stall = 0;
        } else {
            ++acc_stall;
        }
        cls_opt.set_learning_rate(
            step_scheduler(cls_opt.learning_rate(), cfg_.classifier_scheduler_factor, improved));
        if (sink_ != nullptr) sink_->flush();
        if (acc_stall >= cfg_.early_stop_patience) break;
    }
    if (cfg_.report_last_epoch || result.best_val_accuracy < 0.0) {
        result.classifier = classifier.clone();
        if (!result.history.empty()) result.best_epoch = result.history.back().epoch;
    }
    return result;
}

}  // namespace cores
