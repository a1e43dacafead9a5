#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "dehaze/c2msnet.hpp"

namespace dehaze::net {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Checkpoint layout, version 1. All integers are little-endian uint32,
/// all reals little-endian IEEE-754 binary64.
///
///   magic        8 bytes  "C2MSCKPT"
///   version      u32      1
///   layer_count  u32      7
///   per layer, in NetworkParams::parameters() order:
///     name_len u32, name bytes (e.g. "stage2_5x5")
///     rank u32 (= 4), extents u32 x rank (kH, kW, inC, outC)
///     kernel values f64 x product(extents)
///     bias_len u32, bias values f64 x bias_len
///   birelu       f64 t_min, f64 t_max
///
/// Loading rejects trailing bytes and validates every shape.
std::string serialize_checkpoint(const NetworkParams& params);
NetworkParams deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const NetworkParams& params);
NetworkParams load_checkpoint(const std::filesystem::path& path);

}  // namespace dehaze::net
