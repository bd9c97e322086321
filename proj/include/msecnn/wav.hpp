#pragma once

#include <filesystem>
#include <vector>

namespace msecnn {

struct AudioClip {
  std::vector<double> samples;  // in [-1, 1)
  int sample_rate = 0;
};

/// Reads a mono 16-bit PCM RIFF/WAVE file; samples are scaled by 1/32768.
AudioClip load_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM; samples are rounded to round(s*32768) and clamped,
/// so values originating from load_wav round-trip bit-exactly.
void save_wav16(const std::filesystem::path& path, const std::vector<double>& samples,
                int sample_rate);

}  // namespace msecnn
