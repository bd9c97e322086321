#pragma once

#include <string>

#include "msecnn/tensor.hpp"
#include "msecnn/wav.hpp"

namespace msecnn {

struct SpectrogramConfig {
  int sample_rate = 12000;
  int n_fft = 512;
  int hop = 256;
  int n_mels = 96;
  double f_min = 0.0;
  double f_max = 6000.0;
  double clip_seconds = 29.12;

  /// Integer sample count of one fixed-length clip.
  long long clip_samples() const {
    return std::llround(clip_seconds * static_cast<double>(sample_rate));
  }

  /// Frame count after fix_length: floor(samples/hop) + 1, computed in
  /// integer arithmetic so 29.12 s at 12 kHz lands on exactly 1366.
  Index target_frames() const {
    return static_cast<Index>(clip_samples() / hop + 1);
  }

  void validate() const;
};

struct MelSpectrogram {
  Tensor<float> values;  // [n_mels, target_frames], log10 power
  std::string clip_id;
};

/// Power spectrogram [n_fft/2+1, n_frames], periodic Hann window, reflection
/// padding of n_fft/2 on both ends, n_frames = floor(len/hop) + 1.
Tensor<double> stft(const AudioClip& clip, const SpectrogramConfig& cfg);

/// Triangular filters [n_mels, n_fft/2+1] with peaks equally spaced on the
/// HTK mel scale between f_min and f_max; each triangle peaks at 1.
Tensor<double> mel_filterbank(const SpectrogramConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// log10(filterbank * power + 1e-10), padded or truncated to target_frames.
MelSpectrogram mel_spectrogram(const AudioClip& clip, const SpectrogramConfig& cfg);

}  // namespace msecnn
