#pragma once

#include <vector>

#include "cores/tensor.hpp"

namespace cores {

// Adaptive-moment gradient descent over a fixed parameter list. The learning
// rate is mutable so schedulers can decay it between epochs.
class Adam {
 public:
    Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void step();
    void zero_grad();

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

 private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    long t_ = 0;
};

}  // namespace cores
