#pragma once

#include <filesystem>

#include "msecnn/model.hpp"

namespace msecnn {

struct LoadedCheckpoint {
  ModelState<float> state;
  ModelConfig config;
};

/// Layout: 8-byte magic "MSECNN01", a u64 little-endian manifest length, the
/// UTF-8 JSON manifest (config plus an ordered tensor name/shape/offset
/// table), then the payload of concatenated little-endian float32 arrays.
/// save/load round-trips are bit-exact.
void save_checkpoint(const ModelState<float>& state, const ModelConfig& config,
                     const std::filesystem::path& path);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace msecnn
