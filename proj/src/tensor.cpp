#include "cores/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace cores {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

thread_local std::vector<Tape*> g_tape_stack;
std::atomic<std::uint64_t> g_tape_gen{1};

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    }
    impl_ = std::make_shared<detail::TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), 0.0);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), value);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::uniform(std::vector<std::size_t> shape, double lo, double hi, std::mt19937_64& rng,
                       bool requires_grad) {
    std::vector<double> data(shape_numel(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : data) v = dist(rng);
    return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng,
                      bool requires_grad) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return uniform({fan_in, fan_out}, -limit, limit, rng, requires_grad);
}

std::size_t Tensor::rows() const {
    if (rank() == 0) return 1;
    return impl_->shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() < 2) return 1;
    return impl_->shape[1];
}

double Tensor::value() const {
    if (numel() != 1) {
        throw ShapeError("expected a scalar tensor, got shape " + shape_str(impl_->shape));
    }
    return impl_->data[0];
}

Tape::Tape() : gen_(g_tape_gen.fetch_add(1)) { g_tape_stack.push_back(this); }

Tape::~Tape() {
    auto it = std::find(g_tape_stack.rbegin(), g_tape_stack.rend(), this);
    if (it != g_tape_stack.rend()) g_tape_stack.erase(std::next(it).base());
}

Tape* Tape::active() { return g_tape_stack.empty() ? nullptr : g_tape_stack.back(); }

void Tape::record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
}

void Tape::track(const Tensor& t) {
    auto impl = t.impl();
    if (!impl || !impl->requires_grad) return;
    if (impl->tape_gen == gen_) return;
    impl->tape_gen = gen_;
    tracked_.push_back(impl);
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) {
        throw StateError("tape already consumed by a previous backward pass");
    }
    if (!loss.defined() || loss.numel() != 1) {
        throw ShapeError("backward requires a scalar loss");
    }
    if (loss.impl()->tape_gen != gen_) {
        throw StateError("loss tensor was not recorded on this tape");
    }
    for (auto& impl : tracked_) {
        impl->grad.assign(impl->data.size(), 0.0);
    }
    loss.impl()->grad.assign(1, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    consumed_ = true;
    nodes_.clear();
}

void backward(const Tensor& loss) {
    Tape* tape = Tape::active();
    if (tape == nullptr) throw StateError("backward called with no active tape");
    tape->backward(loss);
}

NoGrad::NoGrad() { g_tape_stack.push_back(nullptr); }

NoGrad::~NoGrad() {
    if (!g_tape_stack.empty() && g_tape_stack.back() == nullptr) g_tape_stack.pop_back();
}

namespace ops {

namespace {

// Shared helper: makes the op output, registers the backward closure when a
// tape is active and any input needs gradients. The closure sees grads via
// the impl pointers it captures.
struct Recorder {
    Tape* tape = Tape::active();
    bool live = false;

    explicit Recorder(std::initializer_list<const Tensor*> inputs) {
        if (tape == nullptr) return;
        for (const Tensor* t : inputs) {
            if (t->requires_grad()) {
                live = true;
                tape->track(*t);
            }
        }
    }

    Tensor finish(Tensor out, std::function<void()> backward_fn) {
        if (live) {
            out.set_requires_grad(true);
            tape->track(out);
            tape->record(std::move(backward_fn));
        }
        return out;
    }
};

std::span<double> grad_of(const std::shared_ptr<detail::TensorImpl>& impl) {
    return {impl->grad.data(), impl->grad.size()};
}

bool wants_grad(const std::shared_ptr<detail::TensorImpl>& impl) {
    return impl->requires_grad && !impl->grad.empty();
}

void check_binary_shapes(const Tensor& a, const Tensor& b, const char* op) {
    if (a.numel() == 1 || b.numel() == 1 || a.shape() == b.shape()) return;
    throw ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.numel()) +
                     " vs " + std::to_string(b.numel()) + " elements");
}

// Elementwise binary with scalar broadcast on either side.
template <typename Fwd, typename BwdA, typename BwdB>
Tensor binary_ew(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, BwdA bwd_a,
                 BwdB bwd_b) {
    check_binary_shapes(a, b, name);
    const bool a_scalar = a.numel() == 1 && b.numel() != 1;
    const bool b_scalar = b.numel() == 1 && a.numel() != 1;
    const std::size_t n = std::max(a.numel(), b.numel());
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double av = a.at(a_scalar ? 0 : i);
        const double bv = b.at(b_scalar ? 0 : i);
        out[i] = fwd(av, bv);
    }
    auto shape = a_scalar ? b.shape() : a.shape();
    Recorder rec({&a, &b});
    Tensor result(shape, std::move(out));
    auto ai = a.impl(), bi = b.impl(), oi = result.impl();
    return rec.finish(result, [ai, bi, oi, a_scalar, b_scalar, n, bwd_a, bwd_b]() {
        auto g = grad_of(oi);
        if (wants_grad(ai)) {
            for (std::size_t i = 0; i < n; ++i) {
                const double av = ai->data[a_scalar ? 0 : i];
                const double bv = bi->data[b_scalar ? 0 : i];
                ai->grad[a_scalar ? 0 : i] += bwd_a(av, bv) * g[i];
            }
        }
        if (wants_grad(bi)) {
            for (std::size_t i = 0; i < n; ++i) {
                const double av = ai->data[a_scalar ? 0 : i];
                const double bv = bi->data[b_scalar ? 0 : i];
                bi->grad[b_scalar ? 0 : i] += bwd_b(av, bv) * g[i];
            }
        }
    });
}

template <typename Fwd, typename Bwd>
Tensor unary_ew(const Tensor& a, Fwd fwd, Bwd bwd) {
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = fwd(a.at(i));
    Recorder rec({&a});
    Tensor result(a.shape(), std::move(out));
    auto ai = a.impl(), oi = result.impl();
    return rec.finish(result, [ai, oi, bwd]() {
        if (!wants_grad(ai)) return;
        auto g = grad_of(oi);
        for (std::size_t i = 0; i < ai->data.size(); ++i) {
            ai->grad[i] += bwd(ai->data[i], oi->data[i]) * g[i];
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_ew(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_ew(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }

Tensor neg(const Tensor& a) {
    return unary_ew(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor relu(const Tensor& a) {
    return unary_ew(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary_ew(a, [](double x) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (std::size_t i = 0; i < a.numel(); ++i) {
        if (!(a.at(i) > 0.0)) {
            throw DomainError("log of non-positive value " + std::to_string(a.at(i)));
        }
    }
    return unary_ew(a, [](double x) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor clip(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw ValueError("clip: lo > hi");
    return unary_ew(a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                    [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
    auto fwd = [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    };
    return unary_ew(a, fwd, [](double, double y) { return y * (1.0 - y); });
}

Tensor minimum(const Tensor& a, const Tensor& b) { return sub(a, relu(sub(a, b))); }

Tensor maximum(const Tensor& a, const Tensor& b) { return add(a, relu(sub(b, a))); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a.at(i, p);
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.at(p, j);
        }
    }
    Recorder rec({&a, &b});
    Tensor result({m, n}, std::move(out));
    auto ai = a.impl(), bi = b.impl(), oi = result.impl();
    return rec.finish(result, [ai, bi, oi, m, k, n]() {
        auto g = grad_of(oi);
        if (wants_grad(ai)) {  // dA += g . B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bi->data[p * n + j];
                    ai->grad[i * k + p] += acc;
                }
        }
        if (wants_grad(bi)) {  // dB += A^T . g
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i) acc += ai->data[i * k + p] * g[i * n + j];
                    bi->grad[p * n + j] += acc;
                }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.rank() != 2 || w.rank() != 2 || x.shape()[1] != w.shape()[0]) {
        throw ShapeError("linear: incompatible shapes " + shape_str(x.shape()) + " and " +
                         shape_str(w.shape()));
    }
    const std::size_t n = x.shape()[0], d = x.shape()[1], h = w.shape()[1];
    if (bias.numel() != h) {
        throw ShapeError("linear: bias length " + std::to_string(bias.numel()) +
                         " does not match output width " + std::to_string(h));
    }
    std::vector<double> out(n * h);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < h; ++j) out[i * h + j] = bias.at(j);
        for (std::size_t p = 0; p < d; ++p) {
            const double xv = x.at(i, p);
            if (xv == 0.0) continue;
            for (std::size_t j = 0; j < h; ++j) out[i * h + j] += xv * w.at(p, j);
        }
    }
    Recorder rec({&x, &w, &bias});
    Tensor result({n, h}, std::move(out));
    auto xi = x.impl(), wi = w.impl(), bi = bias.impl(), oi = result.impl();
    return rec.finish(result, [xi, wi, bi, oi, n, d, h]() {
        auto g = grad_of(oi);
        if (wants_grad(xi)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t p = 0; p < d; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < h; ++j) acc += g[i * h + j] * wi->data[p * h + j];
                    xi->grad[i * d + p] += acc;
                }
        }
        if (wants_grad(wi)) {
            for (std::size_t p = 0; p < d; ++p)
                for (std::size_t j = 0; j < h; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < n; ++i) acc += xi->data[i * d + p] * g[i * h + j];
                    wi->grad[p * h + j] += acc;
                }
        }
        if (wants_grad(bi)) {
            for (std::size_t j = 0; j < h; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += g[i * h + j];
                bi->grad[j] += acc;
            }
        }
    });
}

Tensor segment_reduce(const Tensor& values, std::span<const std::size_t> segments, Reduce mode,
                      std::size_t num_segments) {
    if (values.rank() != 2) throw ShapeError("segment_reduce expects a 2-d tensor");
    const std::size_t n = values.shape()[0], d = values.shape()[1];
    if (segments.size() != n) {
        throw ShapeError("segment_reduce: " + std::to_string(segments.size()) +
                         " segment ids for " + std::to_string(n) + " rows");
    }
    for (std::size_t s : segments) {
        if (s >= num_segments) {
            throw IndexError("segment id " + std::to_string(s) + " out of range [0, " +
                             std::to_string(num_segments) + ")");
        }
    }
    std::vector<double> out(num_segments * d, 0.0);
    std::vector<std::size_t> counts(num_segments, 0);
    std::vector<std::size_t> argmax;  // row index feeding each output cell (max mode)
    if (mode == Reduce::kMax) {
        argmax.assign(num_segments * d, std::numeric_limits<std::size_t>::max());
    }
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = segments[i];
        ++counts[s];
        for (std::size_t j = 0; j < d; ++j) {
            const double v = values.at(i, j);
            switch (mode) {
                case Reduce::kSum:
                case Reduce::kMean:
                    out[s * d + j] += v;
                    break;
                case Reduce::kMax:
                    if (argmax[s * d + j] == std::numeric_limits<std::size_t>::max() ||
                        v > out[s * d + j]) {
                        out[s * d + j] = v;
                        argmax[s * d + j] = i;
                    }
                    break;
            }
        }
    }
    if (mode == Reduce::kMean) {
        for (std::size_t s = 0; s < num_segments; ++s) {
            if (counts[s] == 0) continue;
            for (std::size_t j = 0; j < d; ++j) out[s * d + j] /= static_cast<double>(counts[s]);
        }
    }
    if (mode == Reduce::kMax) {
        // Empty segments keep the zero convention.
        for (std::size_t c = 0; c < num_segments * d; ++c) {
            if (argmax[c] == std::numeric_limits<std::size_t>::max()) out[c] = 0.0;
        }
    }
    Recorder rec({&values});
    Tensor result({num_segments, d}, std::move(out));
    auto vi = values.impl(), oi = result.impl();
    std::vector<std::size_t> seg(segments.begin(), segments.end());
    return rec.finish(result, [vi, oi, seg = std::move(seg), counts = std::move(counts),
                               argmax = std::move(argmax), mode, d]() {
        if (!wants_grad(vi)) return;
        auto g = grad_of(oi);
        const std::size_t n = seg.size();
        switch (mode) {
            case Reduce::kSum:
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j) vi->grad[i * d + j] += g[seg[i] * d + j];
                break;
            case Reduce::kMean:
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < d; ++j)
                        vi->grad[i * d + j] +=
                            g[seg[i] * d + j] / static_cast<double>(counts[seg[i]]);
                break;
            case Reduce::kMax:
                for (std::size_t c = 0; c < argmax.size(); ++c) {
                    if (argmax[c] == std::numeric_limits<std::size_t>::max()) continue;
                    vi->grad[argmax[c] * d + (c % d)] += g[c];
                }
                break;
        }
    });
}

Tensor gather_rows(const Tensor& values, std::span<const std::size_t> indices) {
    if (values.rank() != 2) throw ShapeError("gather_rows expects a 2-d tensor");
    const std::size_t n = values.shape()[0], d = values.shape()[1];
    std::vector<double> out(indices.size() * d);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        if (indices[k] >= n) {
            throw IndexError("gather_rows: index " + std::to_string(indices[k]) +
                             " out of range [0, " + std::to_string(n) + ")");
        }
        for (std::size_t j = 0; j < d; ++j) out[k * d + j] = values.at(indices[k], j);
    }
    Recorder rec({&values});
    Tensor result({indices.size(), d}, std::move(out));
    auto vi = values.impl(), oi = result.impl();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return rec.finish(result, [vi, oi, idx = std::move(idx), d]() {
        if (!wants_grad(vi)) return;
        auto g = grad_of(oi);
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t j = 0; j < d; ++j) vi->grad[idx[k] * d + j] += g[k * d + j];
    });
}

Tensor scale_rows(const Tensor& values, std::span<const double> coeffs) {
    if (values.rank() != 2) throw ShapeError("scale_rows expects a 2-d tensor");
    const std::size_t n = values.shape()[0], d = values.shape()[1];
    if (coeffs.size() != n) throw ShapeError("scale_rows: coefficient count mismatch");
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = coeffs[i] * values.at(i, j);
    Recorder rec({&values});
    Tensor result({n, d}, std::move(out));
    auto vi = values.impl(), oi = result.impl();
    std::vector<double> c(coeffs.begin(), coeffs.end());
    return rec.finish(result, [vi, oi, c = std::move(c), d]() {
        if (!wants_grad(vi)) return;
        auto g = grad_of(oi);
        for (std::size_t i = 0; i < c.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) vi->grad[i * d + j] += c[i] * g[i * d + j];
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0]) {
        throw ShapeError("concat_cols: row counts differ");
    }
    const std::size_t n = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
    std::vector<double> out(n * (p + q));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) out[i * (p + q) + j] = a.at(i, j);
        for (std::size_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = b.at(i, j);
    }
    Recorder rec({&a, &b});
    Tensor result({n, p + q}, std::move(out));
    auto ai = a.impl(), bi = b.impl(), oi = result.impl();
    return rec.finish(result, [ai, bi, oi, n, p, q]() {
        auto g = grad_of(oi);
        if (wants_grad(ai)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j) ai->grad[i * p + j] += g[i * (p + q) + j];
        }
        if (wants_grad(bi)) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < q; ++j) bi->grad[i * q + j] += g[i * (p + q) + p + j];
        }
    });
}

Tensor pick_per_row(const Tensor& x, std::span<const std::size_t> index) {
    if (x.rank() != 2) throw ShapeError("pick_per_row expects a 2-d tensor");
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    if (index.size() != n) throw ShapeError("pick_per_row: index count mismatch");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (index[i] >= k) {
            throw IndexError("pick_per_row: index " + std::to_string(index[i]) +
                             " out of range [0, " + std::to_string(k) + ")");
        }
        out[i] = x.at(i, index[i]);
    }
    Recorder rec({&x});
    Tensor result({n, 1}, std::move(out));
    auto xi = x.impl(), oi = result.impl();
    std::vector<std::size_t> idx(index.begin(), index.end());
    return rec.finish(result, [xi, oi, idx = std::move(idx), k]() {
        if (!wants_grad(xi)) return;
        auto g = grad_of(oi);
        for (std::size_t i = 0; i < idx.size(); ++i) xi->grad[i * k + idx[i]] += g[i];
    });
}

namespace {

// Shared forward for the row softmax family; max-subtracted for stability.
void softmax_forward(const Tensor& x, std::vector<double>& soft, std::vector<double>& logsoft) {
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    soft.resize(n * k);
    logsoft.resize(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < k; ++j) mx = std::max(mx, x.at(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) denom += std::exp(x.at(i, j) - mx);
        const double log_denom = std::log(denom);
        for (std::size_t j = 0; j < k; ++j) {
            logsoft[i * k + j] = x.at(i, j) - mx - log_denom;
            soft[i * k + j] = std::exp(logsoft[i * k + j]);
        }
    }
}

}  // namespace

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("softmax_rows expects a 2-d tensor");
    std::vector<double> soft, logsoft;
    softmax_forward(x, soft, logsoft);
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    Recorder rec({&x});
    Tensor result({n, k}, std::move(soft));
    auto xi = x.impl(), oi = result.impl();
    return rec.finish(result, [xi, oi, n, k]() {
        if (!wants_grad(xi)) return;
        auto g = grad_of(oi);
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += g[i * k + j] * oi->data[i * k + j];
            for (std::size_t j = 0; j < k; ++j) {
                xi->grad[i * k + j] += oi->data[i * k + j] * (g[i * k + j] - dot);
            }
        }
    });
}

Tensor log_softmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("log_softmax_rows expects a 2-d tensor");
    std::vector<double> soft, logsoft;
    softmax_forward(x, soft, logsoft);
    const std::size_t n = x.shape()[0], k = x.shape()[1];
    Recorder rec({&x});
    Tensor result({n, k}, std::move(logsoft));
    auto xi = x.impl(), oi = result.impl();
    return rec.finish(result, [xi, oi, soft = std::move(soft), n, k]() {
        if (!wants_grad(xi)) return;
        auto g = grad_of(oi);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < k; ++j) sum += g[i * k + j];
            for (std::size_t j = 0; j < k; ++j) {
                xi->grad[i * k + j] += g[i * k + j] - soft[i * k + j] * sum;
            }
        }
    });
}

Tensor sum_all(const Tensor& x) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) total += x.at(i);
    Recorder rec({&x});
    Tensor result = Tensor::scalar(total);
    auto xi = x.impl(), oi = result.impl();
    return rec.finish(result, [xi, oi]() {
        if (!wants_grad(xi)) return;
        const double g = oi->grad[0];
        for (double& gv : xi->grad) gv += g;
    });
}

Tensor mean_all(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean_all of empty tensor");
    double total = 0.0;
    for (std::size_t i = 0; i < x.numel(); ++i) total += x.at(i);
    const double inv = 1.0 / static_cast<double>(x.numel());
    Recorder rec({&x});
    Tensor result = Tensor::scalar(total * inv);
    auto xi = x.impl(), oi = result.impl();
    return rec.finish(result, [xi, oi, inv]() {
        if (!wants_grad(xi)) return;
        const double g = oi->grad[0] * inv;
        for (double& gv : xi->grad) gv += g;
    });
}

Tensor colwise_affine(const Tensor& x, std::span<const double> col_scale,
                      std::span<const double> col_shift) {
    if (x.rank() != 2) throw ShapeError("colwise_affine expects a 2-d tensor");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    if (col_scale.size() != d || col_shift.size() != d) {
        throw ShapeError("colwise_affine: column count mismatch");
    }
    std::vector<double> out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = x.at(i, j) * col_scale[j] + col_shift[j];
    Recorder rec({&x});
    Tensor result({n, d}, std::move(out));
    auto xi = x.impl(), oi = result.impl();
    std::vector<double> scale(col_scale.begin(), col_scale.end());
    return rec.finish(result, [xi, oi, scale = std::move(scale), n, d]() {
        if (!wants_grad(xi)) return;
        auto g = grad_of(oi);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) xi->grad[i * d + j] += scale[j] * g[i * d + j];
    });
}

Tensor stack_scalars(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("stack_scalars of empty sequence");
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i].value();
    Recorder rec({});
    for (const Tensor& t : xs) {
        if (t.requires_grad() && rec.tape != nullptr) {
            rec.live = true;
            rec.tape->track(t);
        }
    }
    Tensor result({xs.size()}, std::move(out));
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    impls.reserve(xs.size());
    for (const Tensor& t : xs) impls.push_back(t.impl());
    auto oi = result.impl();
    return rec.finish(result, [impls = std::move(impls), oi]() {
        auto g = grad_of(oi);
        for (std::size_t i = 0; i < impls.size(); ++i) {
            if (wants_grad(impls[i])) impls[i]->grad[0] += g[i];
        }
    });
}

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        std::vector<double>& running_mean, std::vector<double>& running_var,
                        double momentum, double eps) {
    if (x.rank() != 2) throw ShapeError("batch_norm expects a 2-d tensor");
    const std::size_t n = x.shape()[0], d = x.shape()[1];
    if (gamma.numel() != d || beta.numel() != d) throw ShapeError("batch_norm: width mismatch");
    if (running_mean.size() != d || running_var.size() != d) {
        throw ShapeError("batch_norm: running statistics width mismatch");
    }
    std::vector<double> mean(d, 0.0), var(d, 0.0), inv_std(d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += x.at(i, j);
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = x.at(i, j) - mean[j];
            var[j] += c * c;
        }
    for (std::size_t j = 0; j < d; ++j) {
        var[j] /= static_cast<double>(n);
        inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
        running_mean[j] = momentum * running_mean[j] + (1.0 - momentum) * mean[j];
        running_var[j] = momentum * running_var[j] + (1.0 - momentum) * var[j];
    }
    std::vector<double> xhat(n * d), out(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (x.at(i, j) - mean[j]) * inv_std[j];
            out[i * d + j] = gamma.at(j) * xhat[i * d + j] + beta.at(j);
        }
    Recorder rec({&x, &gamma, &beta});
    Tensor result({n, d}, std::move(out));
    auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = result.impl();
    return rec.finish(result, [xi, gi, bi, oi, xhat = std::move(xhat),
                               inv_std = std::move(inv_std), n, d]() {
        auto g = grad_of(oi);
        if (wants_grad(gi)) {
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += g[i * d + j] * xhat[i * d + j];
                gi->grad[j] += acc;
            }
        }
        if (wants_grad(bi)) {
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) acc += g[i * d + j];
                bi->grad[j] += acc;
            }
        }
        if (wants_grad(xi)) {
            const double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t j = 0; j < d; ++j) {
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                const double gj = gi->data[j];
                for (std::size_t i = 0; i < n; ++i) {
                    const double dxhat = g[i * d + j] * gj;
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat[i * d + j];
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double dxhat = g[i * d + j] * gj;
                    xi->grad[i * d + j] += inv_std[j] * (dxhat - inv_n * sum_dxhat -
                                                         inv_n * xhat[i * d + j] * sum_dxhat_xhat);
                }
            }
        }
    });
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eps) {
    if (x.rank() != 2) throw ShapeError("batch_norm expects a 2-d tensor");
    const std::size_t d = x.shape()[1];
    if (gamma.numel() != d || beta.numel() != d || running_mean.size() != d ||
        running_var.size() != d) {
        throw ShapeError("batch_norm: width mismatch");
    }
    std::vector<double> scale(d), shift(d);
    for (std::size_t j = 0; j < d; ++j) {
        const double inv_std = 1.0 / std::sqrt(running_var[j] + eps);
        scale[j] = gamma.at(j) * inv_std;
        shift[j] = beta.at(j) - running_mean[j] * scale[j];
    }
    return colwise_affine(x, scale, shift);
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ValueError("dropout rate must be in [0, 1)");
    if (rate == 0.0) return x;
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(x.numel());
    for (double& m : mask) m = dist(rng) < rate ? 0.0 : keep_scale;
    return mul(x, Tensor(x.shape(), std::move(mask)));
}

}  // namespace ops

}  // namespace cores
