#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chamber/core/adam.hpp"

namespace chamber::nn {

/// Weight checkpoint container, all integers and floats little-endian:
///
///   bytes 0..7   magic "CHAMBCKP"
///   u32          format version (currently 1)
///   u32 + bytes  model kind string
///   u64          config hash
///   u64          seed
///   u32          parameter count
///   per parameter, in declaration order:
///     u32 + bytes  name
///     u32          rank, then u32 dims[rank]
///     u64          payload byte count, then IEEE-754 binary32 values
struct CheckpointHeader {
    uint32_t format_version = 1;
    std::string model_kind;
    uint64_t config_hash = 0;
    uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const CheckpointHeader& header,
                     const std::vector<NamedParam>& params);

/// Loads into existing parameters; names, order and shapes must match.
CheckpointHeader load_checkpoint(const std::string& path, std::vector<NamedParam>& params);

CheckpointHeader read_checkpoint_header(const std::string& path);

} // namespace chamber::nn
