#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msecnn/frontend.hpp"
#include "msecnn/model.hpp"
#include "msecnn/training.hpp"

namespace msecnn {

/// Merged run settings: audio front end, model, optimizer, dataset policy.
/// Populated from defaults, then an optional config file, then CLI flags.
struct RunConfig {
  SpectrogramConfig audio;
  std::string variant = "msecnn";
  std::vector<Index> channels{64, 128, 128, 128, 64};
  std::vector<PoolSize> pooling{{2, 4}, {2, 4}, {2, 4}, {3, 5}, {4, 4}};
  double dropout = 0.0;
  TrainConfig train;
  Index top_tags = 50;

  /// Model config for a known tag vocabulary; input shape follows the audio
  /// settings.
  ModelConfig model(Index n_tags, std::vector<std::string> tag_names = {}) const;
};

std::vector<Index> parse_channels(const std::string& text);
std::vector<PoolSize> parse_pooling(const std::string& text);

/// Line-oriented `key = value` grammar with [section] headers. Sections:
/// [audio], [model], [train], [dataset]. `#` starts a comment line. Unknown
/// sections or keys are rejected with their line number.
void load_config_file(RunConfig& cfg, const std::filesystem::path& path);

/// One `section.key = value` line per setting, for the run log.
std::string format_config(const RunConfig& cfg);

}  // namespace msecnn
