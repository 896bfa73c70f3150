#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cores/tensor.hpp"

namespace cores {

// Portable binary parameter file. Layout, all integers little-endian:
//   magic "CORESCKPT" | version u32 | header length u32 | header bytes
//   | record count u32 | records
// Each record: name length u32 | name bytes | rank u32 | dims u32[rank]
//   | payload f64[numel].
// The header is a canonical key=value text block (one pair per line).
struct Checkpoint {
    std::string header;
    std::vector<std::pair<std::string, Tensor>> params;

    const Tensor* find(const std::string& name) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace cores
