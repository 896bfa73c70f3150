#include "cores/policy.hpp"

#include <cmath>
#include <sstream>

namespace cores {

namespace {

constexpr double kProbClamp = 1e-7;

Tensor bernoulli_log_prob(const Tensor& p_remove, const std::vector<std::uint8_t>& mask) {
    std::vector<double> remove(mask.size()), keep(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        remove[i] = mask[i] ? 1.0 : 0.0;
        keep[i] = mask[i] ? 0.0 : 1.0;
    }
    Tensor remove_t({mask.size(), 1}, std::move(remove));
    Tensor keep_t({mask.size(), 1}, std::move(keep));
    Tensor q = ops::add(ops::neg(p_remove), 1.0);
    Tensor term = ops::add(ops::mul(remove_t, ops::log(p_remove)),
                           ops::mul(keep_t, ops::log(q)));
    return ops::sum_all(term);
}

Tensor bernoulli_entropy(const Tensor& p_remove) {
    Tensor q = ops::add(ops::neg(p_remove), 1.0);
    Tensor term = ops::add(ops::mul(p_remove, ops::log(p_remove)), ops::mul(q, ops::log(q)));
    return ops::neg(ops::sum_all(term));
}

}  // namespace

PolicyModel::PolicyModel(const GnnConfig& cfg, std::size_t in_dim, RemovalMode mode,
                         std::mt19937_64& rng)
    : mode_(mode) {
    if (cfg.dropout != 0.0 || cfg.batch_norm) {
        throw ValueError("policy trunk must run deterministically: dropout and batch_norm "
                         "are not supported");
    }
    trunk_ = GnnTrunk(cfg, in_dim, rng);
    const std::size_t h = cfg.hidden_dim;
    const std::size_t actor_in = mode == RemovalMode::kNode ? h : 2 * h;
    actor_w1 = Tensor::glorot(actor_in, h, rng);
    actor_b1 = Tensor::zeros({h}, true);
    actor_w2 = Tensor::glorot(h, 1, rng);
    actor_b2 = Tensor::zeros({1}, true);
    critic_w1 = Tensor::glorot(cfg.pooled_dim(), h, rng);
    critic_b1 = Tensor::zeros({h}, true);
    critic_w2 = Tensor::glorot(h, 1, rng);
    critic_b2 = Tensor::zeros({1}, true);
    // Small output layers: unit probabilities start near 0.5 with live
    // gradients instead of saturating on large trunk activations, and the
    // initial value estimate stays near zero.
    for (double& x : actor_w2.mutable_data()) x *= 0.01;
    for (double& x : critic_w2.mutable_data()) x *= 0.01;
}

Tensor PolicyModel::edge_logits(const Tensor& states, const BatchedGraph& batch) const {
    std::vector<std::size_t> us, vs;
    us.reserve(batch.edges.size());
    vs.reserve(batch.edges.size());
    for (auto [u, v] : batch.edges) {
        us.push_back(u);
        vs.push_back(v);
    }
    Tensor hu = ops::gather_rows(states, us);
    Tensor hv = ops::gather_rows(states, vs);
    Tensor feat = ops::concat_cols(ops::add(hu, hv), ops::mul(hu, hv));
    Tensor hidden = ops::relu(ops::linear(feat, actor_w1, actor_b1));
    return ops::linear(hidden, actor_w2, actor_b2);
}

Tensor PolicyModel::unit_remove_probs(const Tensor& states, const BatchedGraph& batch) const {
    Tensor logits;
    if (mode_ == RemovalMode::kNode) {
        Tensor hidden = ops::relu(ops::linear(states, actor_w1, actor_b1));
        logits = ops::linear(hidden, actor_w2, actor_b2);
    } else {
        logits = edge_logits(states, batch);
    }
    return ops::clip(ops::sigmoid(logits), kProbClamp, 1.0 - kProbClamp);
}

Tensor PolicyModel::critic_value(const Tensor& states, const BatchedGraph& batch) const {
    Tensor pooled = trunk_.pooled(states, batch);
    Tensor hidden = ops::relu(ops::linear(pooled, critic_w1, critic_b1));
    return ops::linear(hidden, critic_w2, critic_b2);
}

ActionSample PolicyModel::act(const Graph& graph, std::mt19937_64& rng,
                              bool deterministic) const {
    NoGrad guard;
    const BatchedGraph b = batch_single(graph);
    const Tensor states = trunk_.node_states(b, /*training=*/false, nullptr);
    const Tensor probs = unit_remove_probs(states, b);
    ActionSample sample;
    sample.mask.resize(probs.numel());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < probs.numel(); ++i) {
        const double p = probs.at(i);
        sample.mask[i] = deterministic ? (p > 0.5 ? 1 : 0) : (unit(rng) < p ? 1 : 0);
    }
    sample.log_prob = bernoulli_log_prob(probs, sample.mask).value();
    sample.entropy = bernoulli_entropy(probs).value();
    sample.value = critic_value(states, b).value();
    return sample;
}

PolicyModel::Evaluation PolicyModel::evaluate_action(const Graph& graph,
                                                     const std::vector<std::uint8_t>& mask) const {
    const BatchedGraph b = batch_single(graph);
    const std::size_t units = mode_ == RemovalMode::kNode ? graph.num_nodes : graph.num_edges();
    if (mask.size() != units) {
        throw ShapeError("evaluate_action: mask length " + std::to_string(mask.size()) +
                         " != unit count " + std::to_string(units));
    }
    const Tensor states = trunk_.node_states(b, /*training=*/false, nullptr);
    const Tensor probs = unit_remove_probs(states, b);
    Evaluation eval;
    eval.log_prob = bernoulli_log_prob(probs, mask);
    eval.entropy = bernoulli_entropy(probs);
    eval.value = critic_value(states, b);
    return eval;
}

std::vector<Tensor> PolicyModel::actor_parameters() const {
    std::vector<std::pair<std::string, Tensor>> named;
    std::vector<Tensor> trainable;
    trunk_.collect_parameters("trunk.", named, trainable);
    trainable.insert(trainable.end(), {actor_w1, actor_b1, actor_w2, actor_b2});
    return trainable;
}

std::vector<Tensor> PolicyModel::critic_parameters() const {
    return {critic_w1, critic_b1, critic_w2, critic_b2};
}

Checkpoint PolicyModel::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.header = std::string("kind=policy\nmode=") +
                  (mode_ == RemovalMode::kNode ? "node" : "edge") +
                  "\nin_dim=" + std::to_string(trunk_.in_dim()) + "\n" +
                  trunk_.config().to_key_values();
    std::vector<Tensor> trainable;
    trunk_.collect_parameters("trunk.", ckpt.params, trainable);
    ckpt.params.emplace_back("actor.w1", actor_w1);
    ckpt.params.emplace_back("actor.b1", actor_b1);
    ckpt.params.emplace_back("actor.w2", actor_w2);
    ckpt.params.emplace_back("actor.b2", actor_b2);
    ckpt.params.emplace_back("critic.w1", critic_w1);
    ckpt.params.emplace_back("critic.b1", critic_b1);
    ckpt.params.emplace_back("critic.w2", critic_w2);
    ckpt.params.emplace_back("critic.b2", critic_b2);
    for (auto& [name, tensor] : ckpt.params) {
        tensor = Tensor(tensor.shape(), {tensor.data().begin(), tensor.data().end()});
    }
    return ckpt;
}

PolicyModel PolicyModel::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.header.find("kind=policy") == std::string::npos) {
        throw ParseError("not a policy checkpoint");
    }
    const GnnConfig cfg = GnnConfig::from_key_values(ckpt.header);
    RemovalMode mode = RemovalMode::kNode;
    std::size_t in_dim = 0;
    std::istringstream is(ckpt.header);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("mode=", 0) == 0) {
            mode = line.substr(5) == "edge" ? RemovalMode::kEdge : RemovalMode::kNode;
        } else if (line.rfind("in_dim=", 0) == 0) {
            in_dim = std::stoul(line.substr(7));
        }
    }
    std::mt19937_64 rng(0);
    PolicyModel model(cfg, in_dim, mode, rng);
    model.trunk_.load_parameters("trunk.", ckpt);
    auto copy = [&](const char* name, Tensor& dst) {
        const Tensor* src = ckpt.find(name);
        if (src == nullptr || src->numel() != dst.numel()) {
            throw ParseError(std::string("checkpoint missing or mis-sized parameter: ") + name);
        }
        std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
    };
    copy("actor.w1", model.actor_w1);
    copy("actor.b1", model.actor_b1);
    copy("actor.w2", model.actor_w2);
    copy("actor.b2", model.actor_b2);
    copy("critic.w1", model.critic_w1);
    copy("critic.b1", model.critic_b1);
    copy("critic.w2", model.critic_w2);
    copy("critic.b2", model.critic_b2);
    return model;
}

void PolicyModel::save(const std::string& path) const { write_checkpoint(path, to_checkpoint()); }

PolicyModel PolicyModel::load(const std::string& path) {
    return from_checkpoint(read_checkpoint(path));
}

}  // namespace cores

