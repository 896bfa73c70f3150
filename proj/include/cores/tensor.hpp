#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cores/error.hpp"

namespace cores {

class Tape;

namespace detail {

struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;      // sized lazily by Tape::backward
    std::uint64_t tape_gen = 0;    // generation of the tape that last saw this tensor
};

}  // namespace detail

// Dense row-major tensor of doubles. Value-semantic handle onto shared
// storage; data is immutable once the tensor participates in a recorded
// forward pass (only grad buffers and optimizer updates mutate storage).
class Tensor {
 public:
    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<double> data, bool requires_grad = false);

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    // Uniform in [lo, hi); deterministic given the generator state.
    static Tensor uniform(std::vector<std::size_t> shape, double lo, double hi,
                          std::mt19937_64& rng, bool requires_grad = false);
    // Glorot-uniform fan_in/fan_out initialization for a [fan_in x fan_out] matrix.
    static Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng,
                         bool requires_grad = true);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t numel() const { return impl_->data.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool is_scalar() const { return numel() == 1; }

    double value() const;  // scalar read; throws ShapeError if numel != 1
    double at(std::size_t i) const { return impl_->data[i]; }
    double at(std::size_t i, std::size_t j) const { return impl_->data[i * cols() + j]; }

    std::span<const double> data() const { return impl_->data; }
    std::span<double> mutable_data() { return impl_->data; }
    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::span<const double> grad() const { return impl_->grad; }
    std::span<double> mutable_grad() { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Records the operations of one forward pass. Ops append nodes while a tape
// is active on the current thread; backward replays them in reverse order
// exactly once, then the tape is consumed. One tape per forward pass; a tape
// must stay on the thread that created it.
class Tape {
 public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    // Populates grad on every requires_grad tensor the tape has seen;
    // tensors unreachable from the loss end up with zero grad.
    void backward(const Tensor& loss);

    bool consumed() const { return consumed_; }
    std::size_t size() const { return nodes_.size(); }

    // Internal: used by ops to register backward rules and touched tensors.
    void record(std::function<void()> backward_fn);
    void track(const Tensor& t);

 private:
    std::vector<std::function<void()>> nodes_;
    std::vector<std::shared_ptr<detail::TensorImpl>> tracked_;
    std::uint64_t gen_;
    bool consumed_ = false;
};

// Convenience: runs backward on the tape the loss was recorded on.
void backward(const Tensor& loss);

// Suppresses recording for its scope even when an outer tape is active.
class NoGrad {
 public:
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;
};

namespace ops {

// Elementwise binary ops accept equal shapes or a scalar (numel == 1) on
// either side; no other broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, double b);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);  // DomainError on non-positive input
Tensor clip(const Tensor& a, double lo, double hi);  // zero gradient outside [lo, hi]
Tensor sigmoid(const Tensor& a);

// min/max composed from relu so the subgradient convention is inherited:
// ties route the gradient to `a`.
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
// x[n x d] * w[d x h] + row-broadcast bias[h]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

enum class Reduce { kSum, kMean, kMax };

// Row s of the output is the reduction of the rows of `values` whose segment
// id is s; empty segments yield zero rows. Mean divides by the segment size;
// max routes the gradient to the first argmax row.
Tensor segment_reduce(const Tensor& values, std::span<const std::size_t> segments,
                      Reduce mode, std::size_t num_segments);

// out[k, :] = values[indices[k], :]; backward scatter-adds.
Tensor gather_rows(const Tensor& values, std::span<const std::size_t> indices);

// out[k, :] = coeffs[k] * values[k, :]; coeffs are constants.
Tensor scale_rows(const Tensor& values, std::span<const double> coeffs);

Tensor concat_cols(const Tensor& a, const Tensor& b);

// out[i] = x[i, index[i]] as an [n x 1] column.
Tensor pick_per_row(const Tensor& x, std::span<const std::size_t> index);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// out = x * col_scale + col_shift (per-column constants; backward scales g).
Tensor colwise_affine(const Tensor& x, std::span<const double> col_scale,
                      std::span<const double> col_shift);

// Column vector [b] tensors or scalars stacked into one [n] tensor.
Tensor stack_scalars(const std::vector<Tensor>& xs);

// Batch normalization over rows (feature-wise statistics) in training mode;
// population variance; gradients flow through the batch statistics.
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        std::vector<double>& running_mean, std::vector<double>& running_var,
                        double momentum, double eps);
// Evaluation mode: normalizes with the running statistics (constants).
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eps);

// Inverted dropout; the mask is a constant drawn from rng.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace ops

}  // namespace cores
