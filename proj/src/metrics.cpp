#include "cores/metrics.hpp"

#include <array>
#include <chrono>
#include <cmath>

#include "cores/numfmt.hpp"

namespace cores {

namespace {

constexpr std::array kVocabulary = {
    "accuracy",        "node_ratio",   "edge_ratio",     "reward",
    "set_size",        "coverage",     "classifier_loss", "ppo_surrogate",
    "ppo_value_loss",  "ppo_entropy",  "ppo_clip_fraction", "lr_classifier",
    "lr_policy",       "wall_clock_s", "calibration_quantile", "buffer_size",
};

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

bool MetricsSink::known_name(const std::string& name) {
    for (const char* n : kVocabulary) {
        if (name == n) return true;
    }
    return false;
}

MetricsSink::MetricsSink(const std::string& path, std::string run_id)
    : run_id_(std::move(run_id)), path_(path) {
    out_.open(path, std::ios::out | std::ios::trunc);
    if (!out_) throw IoError("cannot open metrics sink: " + path);
    out_ << "timestamp,run_id,epoch,split,name,value\n";
}

void MetricsSink::record(long epoch, const std::string& split, const std::string& name,
                         double value) {
    if (!out_.is_open()) throw StateError("metrics sink is closed");
    if (!known_name(name)) throw ValueError("unregistered metric name: " + name);
    if (!std::isfinite(value)) {
        throw ValueError("non-finite value for metric " + name);
    }
    out_ << now_ms() << ',' << run_id_ << ',' << epoch << ',' << split << ',' << name << ','
         << format_double(value) << "\n";
    if (!out_) throw IoError("metrics sink write failed: " + path_);
}

void MetricsSink::flush() {
    if (out_.is_open()) out_.flush();
}

void MetricsSink::close() {
    if (out_.is_open()) {
        out_.flush();
        out_.close();
    }
}

RewardCsv::RewardCsv(const std::string& path) {
    out_.open(path, std::ios::out | std::ios::trunc);
    if (!out_) throw IoError("cannot open reward stream: " + path);
    out_ << "epoch,case,r_perf,r_sparse,set_size,total\n";
}

void RewardCsv::record(long epoch, const RewardBreakdown& b) {
    out_ << epoch << ',' << to_string(b.reward_case) << ',' << format_double(b.r_perf) << ','
         << format_double(b.r_sparse) << ',' << b.set_size << ',' << format_double(b.total)
         << "\n";
}

}  // namespace cores
