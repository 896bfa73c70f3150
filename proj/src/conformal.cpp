#include "cores/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace cores {

namespace {

// Permutation of [K] sorting probabilities from most to least likely; equal
// probabilities keep ascending class order.
std::vector<std::size_t> descending_order(std::span<const double> probs) {
    std::vector<std::size_t> order(probs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    return order;
}

}  // namespace

double aps_score(std::span<const double> probs, std::size_t label) {
    if (label >= probs.size()) {
        throw IndexError("aps_score: label " + std::to_string(label) + " out of range [0, " +
                         std::to_string(probs.size()) + ")");
    }
    const auto order = descending_order(probs);
    double cumulative = 0.0;
    for (std::size_t cls : order) {
        cumulative += probs[cls];
        if (cls == label) return cumulative;
    }
    return cumulative;  // unreachable: label is always in order
}

CalibrationState calibrate(std::span<const double> scores, double alpha_conf) {
    if (scores.empty()) throw ValueError("calibrate: empty calibration score set");
    if (!(alpha_conf > 0.0 && alpha_conf < 1.0)) {
        throw ValueError("calibrate: alpha must be in (0, 1)");
    }
    CalibrationState state;
    state.scores.assign(scores.begin(), scores.end());
    std::sort(state.scores.begin(), state.scores.end());
    state.alpha_conf = alpha_conf;
    const std::size_t n = state.scores.size();
    const auto k = static_cast<std::size_t>(
        std::ceil(static_cast<double>(n + 1) * (1.0 - alpha_conf)));
    if (k == 0) {
        state.quantile = -std::numeric_limits<double>::infinity();
    } else if (k <= n) {
        state.quantile = state.scores[k - 1];  // k-th smallest
    } else {
        state.quantile = std::numeric_limits<double>::infinity();
    }
    return state;
}

PredictionSet prediction_set(std::span<const double> probs, const CalibrationState& state) {
    PredictionSet set;
    if (std::isinf(state.quantile) && state.quantile > 0.0) {
        for (std::size_t cls = 0; cls < probs.size(); ++cls) set.classes.insert(cls);
        return set;
    }
    for (std::size_t cls = 0; cls < probs.size(); ++cls) {
        if (aps_score(probs, cls) <= state.quantile) set.classes.insert(cls);
    }
    return set;
}

}  // namespace cores
