#pragma once

#include <fstream>
#include <string>

#include "cores/error.hpp"
#include "cores/reward.hpp"

namespace cores {

struct MetricRow {
    std::int64_t timestamp_ms = 0;  // filled by the sink at record time
    std::string run_id;
    long epoch = 0;
    std::string split;
    std::string name;
    double value = 0.0;
};

// Append-only CSV sink with schema timestamp,run_id,epoch,split,name,value.
// Names must come from the registered vocabulary and values must be finite;
// rows appear in write order.
class MetricsSink {
 public:
    MetricsSink(const std::string& path, std::string run_id);

    void record(long epoch, const std::string& split, const std::string& name, double value);
    void flush();
    void close();

    static bool known_name(const std::string& name);

 private:
    std::ofstream out_;
    std::string run_id_;
    std::string path_;
};

// Streams reward breakdown rows (case, components, set size, total) next to
// the metric sink.
class RewardCsv {
 public:
    explicit RewardCsv(const std::string& path);

    void record(long epoch, const RewardBreakdown& breakdown);
    void flush() { out_.flush(); }

 private:
    std::ofstream out_;
};

}  // namespace cores
