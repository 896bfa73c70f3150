#pragma once

#include <set>
#include <span>
#include <vector>

#include "cores/error.hpp"

namespace cores {

// Calibrated quantile state for adaptive prediction sets. quantile is +inf
// when ceil((n+1)(1-alpha)) exceeds n; prediction sets then contain every
// class.
struct CalibrationState {
    std::vector<double> scores;  // sorted ascending
    double alpha_conf = 0.1;
    double quantile = 0.0;
};

struct PredictionSet {
    std::set<std::size_t> classes;

    std::size_t size() const { return classes.size(); }
    bool contains(std::size_t label) const { return classes.count(label) > 0; }
};

// Cumulative softmax mass through the true label's rank, classes sorted by
// descending probability with ties broken by ascending class index.
double aps_score(std::span<const double> probs, std::size_t label);

CalibrationState calibrate(std::span<const double> scores, double alpha_conf);

PredictionSet prediction_set(std::span<const double> probs, const CalibrationState& state);

}  // namespace cores
