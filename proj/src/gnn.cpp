#include "cores/gnn.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "cores/numfmt.hpp"

namespace cores {

void GnnConfig::validate() const {
    if (num_layers < 1) throw ValueError("gnn: num_layers must be >= 1");
    if (hidden_dim < 1) throw ValueError("gnn: hidden_dim must be >= 1");
    if (!(pool_mean || pool_add)) throw ValueError("gnn: pooling set must be nonempty");
    if (dropout < 0.0 || dropout >= 1.0) throw ValueError("gnn: dropout must be in [0, 1)");
    if (num_classes < 2) throw ValueError("gnn: num_classes must be >= 2");
}

std::string GnnConfig::to_key_values() const {
    std::ostringstream os;
    os << "architecture=" << (architecture == GnnArch::kGin ? "gin" : "gcn") << "\n"
       << "num_layers=" << num_layers << "\n"
       << "hidden_dim=" << hidden_dim << "\n"
       << "dropout=" << format_double(dropout) << "\n"
       << "batch_norm=" << (batch_norm ? "true" : "false") << "\n"
       << "pooling=" << (pool_mean && pool_add ? "mean,add" : (pool_mean ? "mean" : "add"))
       << "\n"
       << "gin_epsilon=" << format_double(gin_epsilon) << "\n"
       << "gin_epsilon_trainable=" << (gin_epsilon_trainable ? "true" : "false") << "\n"
       << "num_classes=" << num_classes << "\n";
    return os.str();
}

GnnConfig GnnConfig::from_key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw ParseError("checkpoint header missing key: " + key);
        return it->second;
    };
    GnnConfig cfg;
    cfg.architecture = need("architecture") == "gin" ? GnnArch::kGin : GnnArch::kGcn;
    cfg.num_layers = std::stoul(need("num_layers"));
    cfg.hidden_dim = std::stoul(need("hidden_dim"));
    cfg.dropout = std::stod(need("dropout"));
    cfg.batch_norm = need("batch_norm") == "true";
    const std::string pooling = need("pooling");
    cfg.pool_mean = pooling.find("mean") != std::string::npos;
    cfg.pool_add = pooling.find("add") != std::string::npos;
    cfg.gin_epsilon = std::stod(need("gin_epsilon"));
    cfg.gin_epsilon_trainable = need("gin_epsilon_trainable") == "true";
    cfg.num_classes = std::stoul(need("num_classes"));
    cfg.validate();
    return cfg;
}

GnnTrunk::GnnTrunk(const GnnConfig& cfg, std::size_t in_dim, std::mt19937_64& rng)
    : cfg_(cfg), in_dim_(in_dim) {
    cfg_.validate();
    if (in_dim < 1) throw ValueError("gnn: input feature dimension must be >= 1");
    const std::size_t h = cfg_.hidden_dim;
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        const std::size_t d_in = l == 0 ? in_dim : h;
        if (cfg_.architecture == GnnArch::kGin) {
            GinLayer layer;
            layer.w1 = Tensor::glorot(d_in, h, rng);
            layer.b1 = Tensor::zeros({h}, true);
            layer.w2 = Tensor::glorot(h, h, rng);
            layer.b2 = Tensor::zeros({h}, true);
            layer.eps = Tensor::scalar(cfg_.gin_epsilon, cfg_.gin_epsilon_trainable);
            gin_.push_back(std::move(layer));
        } else {
            GcnLayer layer;
            layer.w = Tensor::glorot(d_in, h, rng);
            layer.b = Tensor::zeros({h}, true);
            gcn_.push_back(std::move(layer));
        }
        if (cfg_.batch_norm) {
            BatchNorm bn;
            bn.gamma = Tensor::full({h}, 1.0, true);
            bn.beta = Tensor::zeros({h}, true);
            bn.running_mean.assign(h, 0.0);
            bn.running_var.assign(h, 1.0);
            bn_.push_back(std::move(bn));
        }
    }
}

Tensor GnnTrunk::node_states(const BatchedGraph& batch, bool training,
                             std::mt19937_64* rng) const {
    if (batch.num_graphs == 0 || batch.num_nodes == 0) {
        throw ShapeError("gnn forward on an empty batch");
    }
    if (batch.feature_dim != in_dim_) {
        throw ShapeError("gnn forward: feature dim " + std::to_string(batch.feature_dim) +
                         " does not match model input dim " + std::to_string(in_dim_));
    }
    if (training && cfg_.dropout > 0.0 && rng == nullptr) {
        throw ValueError("gnn forward: training with dropout needs a generator");
    }
    const std::size_t n = batch.num_nodes;
    // Directed message arrays: both directions of each undirected edge.
    std::vector<std::size_t> src, dst;
    src.reserve(batch.edges.size() * 2);
    dst.reserve(batch.edges.size() * 2);
    for (auto [u, v] : batch.edges) {
        src.push_back(u);
        dst.push_back(v);
        src.push_back(v);
        dst.push_back(u);
    }
    std::vector<double> gcn_edge_coeff, gcn_self_coeff;
    if (cfg_.architecture == GnnArch::kGcn) {
        std::vector<double> deg(n, 1.0);  // self-loop counted
        for (auto [u, v] : batch.edges) {
            deg[u] += 1.0;
            deg[v] += 1.0;
        }
        gcn_edge_coeff.resize(src.size());
        for (std::size_t e = 0; e < src.size(); ++e) {
            gcn_edge_coeff[e] = 1.0 / std::sqrt(deg[src[e]] * deg[dst[e]]);
        }
        gcn_self_coeff.resize(n);
        for (std::size_t v = 0; v < n; ++v) gcn_self_coeff[v] = 1.0 / deg[v];
    }

    Tensor x({n, batch.feature_dim}, std::vector<double>(batch.node_features));
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        Tensor h;
        if (cfg_.architecture == GnnArch::kGin) {
            const GinLayer& layer = gin_[l];
            Tensor agg = ops::segment_reduce(ops::gather_rows(x, src), dst, ops::Reduce::kSum, n);
            Tensor z = ops::add(ops::mul(x, ops::add(layer.eps, 1.0)), agg);
            h = ops::linear(z, layer.w1, layer.b1);
            h = ops::relu(h);
            h = ops::linear(h, layer.w2, layer.b2);
        } else {
            const GcnLayer& layer = gcn_[l];
            Tensor msgs = ops::scale_rows(ops::gather_rows(x, src), gcn_edge_coeff);
            Tensor agg = ops::add(ops::segment_reduce(msgs, dst, ops::Reduce::kSum, n),
                                  ops::scale_rows(x, gcn_self_coeff));
            h = ops::linear(agg, layer.w, layer.b);
        }
        if (cfg_.batch_norm) {
            BatchNorm& bn = bn_[l];
            h = training ? ops::batch_norm_train(h, bn.gamma, bn.beta, bn.running_mean,
                                                 bn.running_var, 0.9, 1e-5)
                         : ops::batch_norm_eval(h, bn.gamma, bn.beta, bn.running_mean,
                                                bn.running_var, 1e-5);
        }
        h = ops::relu(h);
        if (training && cfg_.dropout > 0.0) h = ops::dropout(h, cfg_.dropout, *rng);
        x = h;
    }
    return x;
}

Tensor GnnTrunk::pooled(const Tensor& states, const BatchedGraph& batch) const {
    Tensor out;
    if (cfg_.pool_mean) {
        out = ops::segment_reduce(states, batch.node_to_graph, ops::Reduce::kMean,
                                  batch.num_graphs);
    }
    if (cfg_.pool_add) {
        Tensor added =
            ops::segment_reduce(states, batch.node_to_graph, ops::Reduce::kSum, batch.num_graphs);
        out = out.defined() ? ops::concat_cols(out, added) : added;
    }
    return out;
}

void GnnTrunk::collect_parameters(const std::string& prefix,
                                  std::vector<std::pair<std::string, Tensor>>& named,
                                  std::vector<Tensor>& trainable) const {
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        const std::string base = prefix + "layer" + std::to_string(l) + ".";
        if (cfg_.architecture == GnnArch::kGin) {
            const GinLayer& layer = gin_[l];
            named.emplace_back(base + "w1", layer.w1);
            named.emplace_back(base + "b1", layer.b1);
            named.emplace_back(base + "w2", layer.w2);
            named.emplace_back(base + "b2", layer.b2);
            named.emplace_back(base + "eps", layer.eps);
            trainable.insert(trainable.end(), {layer.w1, layer.b1, layer.w2, layer.b2});
            if (cfg_.gin_epsilon_trainable) trainable.push_back(layer.eps);
        } else {
            const GcnLayer& layer = gcn_[l];
            named.emplace_back(base + "w", layer.w);
            named.emplace_back(base + "b", layer.b);
            trainable.insert(trainable.end(), {layer.w, layer.b});
        }
        if (cfg_.batch_norm) {
            const BatchNorm& bn = bn_[l];
            named.emplace_back(base + "bn.gamma", bn.gamma);
            named.emplace_back(base + "bn.beta", bn.beta);
            named.emplace_back(base + "bn.running_mean",
                               Tensor({bn.running_mean.size()}, bn.running_mean));
            named.emplace_back(base + "bn.running_var",
                               Tensor({bn.running_var.size()}, bn.running_var));
            trainable.insert(trainable.end(), {bn.gamma, bn.beta});
        }
    }
}

namespace {

void copy_from_checkpoint(const Checkpoint& ckpt, const std::string& name, Tensor& dst) {
    const Tensor* src = ckpt.find(name);
    if (src == nullptr) throw ParseError("checkpoint missing parameter: " + name);
    if (src->numel() != dst.numel()) {
        throw ParseError("checkpoint parameter " + name + " has wrong size");
    }
    std::copy(src->data().begin(), src->data().end(), dst.mutable_data().begin());
}

void copy_stats(const Checkpoint& ckpt, const std::string& name, std::vector<double>& dst) {
    const Tensor* src = ckpt.find(name);
    if (src == nullptr) throw ParseError("checkpoint missing parameter: " + name);
    if (src->numel() != dst.size()) {
        throw ParseError("checkpoint parameter " + name + " has wrong size");
    }
    std::copy(src->data().begin(), src->data().end(), dst.begin());
}

}  // namespace

void GnnTrunk::load_parameters(const std::string& prefix, const Checkpoint& ckpt) {
    for (std::size_t l = 0; l < cfg_.num_layers; ++l) {
        const std::string base = prefix + "layer" + std::to_string(l) + ".";
        if (cfg_.architecture == GnnArch::kGin) {
            GinLayer& layer = gin_[l];
            copy_from_checkpoint(ckpt, base + "w1", layer.w1);
            copy_from_checkpoint(ckpt, base + "b1", layer.b1);
            copy_from_checkpoint(ckpt, base + "w2", layer.w2);
            copy_from_checkpoint(ckpt, base + "b2", layer.b2);
            copy_from_checkpoint(ckpt, base + "eps", layer.eps);
        } else {
            GcnLayer& layer = gcn_[l];
            copy_from_checkpoint(ckpt, base + "w", layer.w);
            copy_from_checkpoint(ckpt, base + "b", layer.b);
        }
        if (cfg_.batch_norm) {
            BatchNorm& bn = bn_[l];
            copy_from_checkpoint(ckpt, base + "bn.gamma", bn.gamma);
            copy_from_checkpoint(ckpt, base + "bn.beta", bn.beta);
            copy_stats(ckpt, base + "bn.running_mean", bn.running_mean);
            copy_stats(ckpt, base + "bn.running_var", bn.running_var);
        }
    }
}

ClassifierModel::ClassifierModel(const GnnConfig& cfg, std::size_t in_dim, std::mt19937_64& rng)
    : trunk_(cfg, in_dim, rng) {
    const std::size_t pooled = cfg.pooled_dim();
    head_w1 = Tensor::glorot(pooled, cfg.hidden_dim, rng);
    head_b1 = Tensor::zeros({cfg.hidden_dim}, true);
    head_w2 = Tensor::glorot(cfg.hidden_dim, cfg.num_classes, rng);
    head_b2 = Tensor::zeros({cfg.num_classes}, true);
}

Tensor ClassifierModel::forward(const BatchedGraph& batch, bool training,
                                std::mt19937_64* rng) const {
    Tensor states = trunk_.node_states(batch, training, rng);
    Tensor g = trunk_.pooled(states, batch);
    Tensor h = ops::relu(ops::linear(g, head_w1, head_b1));
    return ops::linear(h, head_w2, head_b2);
}

Tensor ClassifierModel::predict_proba(const BatchedGraph& batch) const {
    return ops::softmax_rows(forward(batch, /*training=*/false, nullptr));
}

std::vector<Tensor> ClassifierModel::trainable_parameters() const {
    std::vector<std::pair<std::string, Tensor>> named;
    std::vector<Tensor> trainable;
    trunk_.collect_parameters("trunk.", named, trainable);
    trainable.insert(trainable.end(), {head_w1, head_b1, head_w2, head_b2});
    return trainable;
}

Checkpoint ClassifierModel::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.header = "kind=classifier\nin_dim=" + std::to_string(trunk_.in_dim()) + "\n" +
                  trunk_.config().to_key_values();
    std::vector<Tensor> trainable;
    trunk_.collect_parameters("trunk.", ckpt.params, trainable);
    ckpt.params.emplace_back("head.w1", head_w1);
    ckpt.params.emplace_back("head.b1", head_b1);
    ckpt.params.emplace_back("head.w2", head_w2);
    ckpt.params.emplace_back("head.b2", head_b2);
    // Detach: checkpoints hold copies, not views of live parameters.
    for (auto& [name, tensor] : ckpt.params) {
        tensor = Tensor(tensor.shape(), {tensor.data().begin(), tensor.data().end()});
    }
    return ckpt;
}

ClassifierModel ClassifierModel::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.header.find("kind=classifier") == std::string::npos) {
        throw ParseError("not a classifier checkpoint");
    }
    const GnnConfig cfg = GnnConfig::from_key_values(ckpt.header);
    std::size_t in_dim = 0;
    std::istringstream is(ckpt.header);
    std::string line;
    while (std::getline(is, line)) {
        if (line.rfind("in_dim=", 0) == 0) in_dim = std::stoul(line.substr(7));
    }
    std::mt19937_64 rng(0);
    ClassifierModel model(cfg, in_dim, rng);
    model.trunk_.load_parameters("trunk.", ckpt);
    copy_from_checkpoint(ckpt, "head.w1", model.head_w1);
    copy_from_checkpoint(ckpt, "head.b1", model.head_b1);
    copy_from_checkpoint(ckpt, "head.w2", model.head_w2);
    copy_from_checkpoint(ckpt, "head.b2", model.head_b2);
    return model;
}

void ClassifierModel::save(const std::string& path) const {
    write_checkpoint(path, to_checkpoint());
}

ClassifierModel ClassifierModel::load(const std::string& path) {
    return from_checkpoint(read_checkpoint(path));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy expects [n x K] logits");
    if (labels.size() != logits.shape()[0]) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.shape()[0]) + " rows");
    }
    const std::size_t k = logits.shape()[1];
    for (std::size_t label : labels) {
        if (label >= k) {
            throw IndexError("cross_entropy: label " + std::to_string(label) +
                             " out of range [0, " + std::to_string(k) + ")");
        }
    }
    Tensor ls = ops::log_softmax_rows(logits);
    Tensor picked = ops::pick_per_row(ls, labels);
    return ops::neg(ops::mean_all(picked));
}

}  // namespace cores
