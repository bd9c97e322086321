#include "msecnn/frontend.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "msecnn/errors.hpp"
#include "msecnn/fft.hpp"

namespace msecnn {

void SpectrogramConfig::validate() const {
  if (n_fft <= 0 || (n_fft & (n_fft - 1)) != 0)
    throw ArgumentError("n_fft must be a power of two, got " + std::to_string(n_fft));
  if (hop <= 0 || hop > n_fft)
    throw ArgumentError("hop must be in [1, n_fft], got " + std::to_string(hop));
  if (sample_rate <= 0)
    throw ArgumentError("sample_rate must be positive, got " + std::to_string(sample_rate));
  if (f_max > sample_rate / 2.0)
    throw ArgumentError("f_max exceeds Nyquist: " + std::to_string(f_max) + " > " +
                        std::to_string(sample_rate / 2.0));
  if (f_min < 0 || f_min >= f_max) throw ArgumentError("need 0 <= f_min < f_max");
  if (n_mels < 1) throw ArgumentError("n_mels must be at least 1");
  if (clip_seconds <= 0) throw ArgumentError("clip_seconds must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Tensor<double> stft(const AudioClip& clip, const SpectrogramConfig& cfg) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate)
    throw ArgumentError("clip sample rate " + std::to_string(clip.sample_rate) +
                        " does not match configured " + std::to_string(cfg.sample_rate));
  const long long len = static_cast<long long>(clip.samples.size());
  if (len == 0) throw ArgumentError("stft: empty signal");
  const int n_fft = cfg.n_fft;
  const int pad = n_fft / 2;
  if (len < pad + 1)
    throw ArgumentError("stft: signal of " + std::to_string(len) +
                        " samples is too short for reflection padding of " +
                        std::to_string(pad));

  // Center alignment: reflect (without repeating the edge sample) on both ends.
  std::vector<double> padded(static_cast<size_t>(len + 2 * pad));
  for (int i = 0; i < pad; ++i) padded[static_cast<size_t>(i)] = clip.samples[static_cast<size_t>(pad - i)];
  for (long long i = 0; i < len; ++i) padded[static_cast<size_t>(pad + i)] = clip.samples[static_cast<size_t>(i)];
  for (int i = 0; i < pad; ++i)
    padded[static_cast<size_t>(pad + len + i)] = clip.samples[static_cast<size_t>(len - 2 - i)];

  std::vector<double> window(static_cast<size_t>(n_fft));
  for (int n = 0; n < n_fft; ++n)
    window[static_cast<size_t>(n)] =
        0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * n / n_fft));

  const Index n_bins = n_fft / 2 + 1;
  const Index n_frames = static_cast<Index>(len / cfg.hop) + 1;
  Tensor<double> power({n_bins, n_frames});

  std::vector<std::complex<double>> frame(static_cast<size_t>(n_fft));
  for (Index t = 0; t < n_frames; ++t) {
    const long long start = static_cast<long long>(t) * cfg.hop;
    for (int n = 0; n < n_fft; ++n)
      frame[static_cast<size_t>(n)] =
          padded[static_cast<size_t>(start + n)] * window[static_cast<size_t>(n)];
    fft_radix2(frame);
    for (Index k = 0; k < n_bins; ++k) power(k, t) = std::norm(frame[static_cast<size_t>(k)]);
  }
  return power;
}

Tensor<double> mel_filterbank(const SpectrogramConfig& cfg) {
  cfg.validate();
  const Index n_bins = cfg.n_fft / 2 + 1;
  const int n_mels = cfg.n_mels;
  const double mel_lo = hz_to_mel(cfg.f_min);
  const double mel_hi = hz_to_mel(cfg.f_max);

  std::vector<double> edges(static_cast<size_t>(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m)
    edges[static_cast<size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));

  Tensor<double> fb({static_cast<Index>(n_mels), n_bins});
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[static_cast<size_t>(m)];
    const double center = edges[static_cast<size_t>(m) + 1];
    const double right = edges[static_cast<size_t>(m) + 2];
    for (Index k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      const double rising = (f - left) / (center - left);
      const double falling = (right - f) / (right - center);
      fb(m, k) = std::max(0.0, std::min(rising, falling));
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const SpectrogramConfig& cfg) {
  const Tensor<double> power = stft(clip, cfg);
  const Tensor<double> fb = mel_filterbank(cfg);
  const Index n_mels = fb.shape[0];
  const Index n_bins = fb.shape[1];
  const Index n_frames = power.shape[1];

  Tensor<double> mel({n_mels, n_frames});
  mel.as_matrix(n_mels, n_frames).noalias() =
      fb.as_matrix(n_mels, n_bins) * power.as_matrix(n_bins, n_frames);

  const double floor_value = std::log10(1e-10);
  const Index target = cfg.target_frames();
  Tensor<double> out = Tensor<double>::full({n_mels, target}, floor_value);
  const Index keep = std::min(n_frames, target);
  for (Index m = 0; m < n_mels; ++m)
    for (Index t = 0; t < keep; ++t) out(m, t) = std::log10(mel(m, t) + 1e-10);

  MelSpectrogram result;
  result.values = out.cast<float>();
  return result;
}

}  // namespace msecnn
