#pragma once

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cores/graph.hpp"
#include "cores/tensor.hpp"

namespace testutil {

// Central-difference gradient check: rebuilds the forward pass per probe and
// compares autodiff gradients against (f(x+h) - f(x-h)) / 2h element-wise.
// The comparison is relative for large gradients and absolute near zero.
inline void check_gradients(const std::function<cores::Tensor()>& forward,
                            std::vector<cores::Tensor> inputs, double h = 1e-3,
                            double tol = 1e-4) {
    using namespace cores;
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = forward();
        tape.backward(loss);
        for (auto& t : inputs) {
            analytic.emplace_back(t.grad().begin(), t.grad().end());
            t.zero_grad();
        }
    }
    auto eval = [&]() {
        NoGrad guard;
        return forward().value();
    };
    for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
        auto data = inputs[ti].mutable_data();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double keep = data[i];
            data[i] = keep + h;
            const double f_plus = eval();
            data[i] = keep - h;
            const double f_minus = eval();
            data[i] = keep;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double g = analytic[ti][i];
            const double err = std::abs(g - fd) / std::max({1.0, std::abs(g), std::abs(fd)});
            if (!(err < tol)) {
                FAIL("gradient mismatch at tensor " << ti << " element " << i << ": autodiff "
                     << g << " vs finite difference " << fd);
            }
        }
    }
}

inline cores::Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                                   double lo = -2.0, double hi = 2.0) {
    return cores::Tensor::uniform(std::move(shape), lo, hi, rng, /*requires_grad=*/true);
}

// Small path graph 0-1-2-... with unit features.
inline cores::Graph path_graph(std::size_t n, std::size_t feat_dim = 2) {
    cores::Graph g;
    g.num_nodes = n;
    for (std::size_t v = 0; v + 1 < n; ++v) g.edges.emplace_back(v, v + 1);
    g.node_features.assign(n, std::vector<double>(feat_dim, 1.0));
    return g;
}

inline cores::Graph random_graph(std::size_t n, double edge_prob, std::mt19937_64& rng,
                                 std::size_t feat_dim = 2) {
    cores::Graph g;
    g.num_nodes = n;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t v = u + 1; v < n; ++v) {
            if (unit(rng) < edge_prob) g.edges.emplace_back(u, v);
        }
    }
    g.node_features.resize(n);
    for (auto& row : g.node_features) {
        row.resize(feat_dim);
        for (auto& x : row) x = unit(rng);
    }
    return g;
}

}  // namespace testutil
