#pragma once

#include <string>

#include "cores/trainer.hpp"

namespace cores {

struct DataConfig {
    std::string dataset;
    std::string data_dir;
    std::size_t num_folds = 5;
    std::size_t synthetic_graphs = 200;
    std::size_t synthetic_base_nodes = 15;
    std::uint64_t synthetic_seed = 7;
};

// Layered key=value document with [gnn], [ppo], [reward], [train] and
// [data] sections. Unknown sections or keys are rejected; serialization is
// canonical so serialize(parse(text)) is idempotent.
struct FullConfig {
    TrainConfig train;
    DataConfig data;

    static FullConfig parse_file(const std::string& path);
    static FullConfig parse_text(const std::string& text);
    std::string serialize() const;
};

}  // namespace cores
