#pragma once

#include <string>
#include <vector>

#include "cores/config.hpp"
#include "cores/trainer.hpp"

namespace cores {

// Resolves a dataset by name: a TU directory under data_dir takes priority;
// the built-in synthetic generator answers to "ba-shapes". Throws IoError
// when neither applies.
std::vector<Graph> load_dataset(const DataConfig& data);

// Deterministic epoch-metrics table. First line carries the schema version;
// float columns use shortest round-trip formatting so identical histories
// serialize bitwise-identically.
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

// One run directory: config echo, metrics.csv, summary.json, checkpoints.
void write_run_outputs(const std::string& out_dir, const FullConfig& cfg,
                       const TrainResult& result, std::size_t fold_index,
                       const std::string& run_id);

}  // namespace cores
