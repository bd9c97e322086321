#include <cmath>
#include <cstdio>
#include <numbers>

#include "msecnn/dataset.hpp"
#include "msecnn/io_util.hpp"
#include "msecnn/rng.hpp"
#include "msecnn/wav.hpp"

namespace msecnn {

namespace fs = std::filesystem;

namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

// Sum of random-phase sinusoids packed into a band reads as colored noise.
void add_noise_band(std::vector<double>& sig, int sr, double f_lo, double f_hi,
                    Xoshiro256pp& rng) {
  constexpr int kPartials = 40;
  std::vector<double> freqs(kPartials), phases(kPartials);
  for (int p = 0; p < kPartials; ++p) {
    freqs[static_cast<size_t>(p)] = rng.uniform(f_lo, f_hi);
    phases[static_cast<size_t>(p)] = rng.uniform(0.0, kTau);
  }
  for (size_t n = 0; n < sig.size(); ++n) {
    const double t = static_cast<double>(n) / sr;
    double v = 0.0;
    for (int p = 0; p < kPartials; ++p)
      v += std::sin(kTau * freqs[static_cast<size_t>(p)] * t + phases[static_cast<size_t>(p)]);
    sig[n] += v;
  }
}

void add_tremolo(std::vector<double>& sig, int sr, Xoshiro256pp& rng) {
  const double phase = rng.uniform(0.0, kTau);
  for (size_t n = 0; n < sig.size(); ++n) {
    const double t = static_cast<double>(n) / sr;
    sig[n] += std::sin(kTau * 500.0 * t + phase) * (0.5 + 0.5 * std::sin(kTau * 6.0 * t));
  }
}

void add_harmonic_comb(std::vector<double>& sig, int sr, Xoshiro256pp& rng) {
  constexpr int kHarmonics = 8;
  std::vector<double> phases(kHarmonics);
  for (int h = 0; h < kHarmonics; ++h) phases[static_cast<size_t>(h)] = rng.uniform(0.0, kTau);
  for (size_t n = 0; n < sig.size(); ++n) {
    const double t = static_cast<double>(n) / sr;
    double v = 0.0;
    for (int h = 1; h <= kHarmonics; ++h)
      v += std::sin(kTau * 220.0 * h * t + phases[static_cast<size_t>(h - 1)]) / h;
    sig[n] += v;
  }
}

void add_sweep(std::vector<double>& sig, int sr, double total_seconds, double f0, double f1,
               Xoshiro256pp& rng) {
  const double phase = rng.uniform(0.0, kTau);
  for (size_t n = 0; n < sig.size(); ++n) {
    const double t = static_cast<double>(n) / sr;
    sig[n] += std::sin(kTau * (f0 * t + (f1 - f0) * t * t / (2.0 * total_seconds)) + phase);
  }
}

void add_gated_tone(std::vector<double>& sig, int sr, double total_seconds,
                    Xoshiro256pp& rng) {
  const double phase = rng.uniform(0.0, kTau);
  const double section = total_seconds / 8.0;
  for (size_t n = 0; n < sig.size(); ++n) {
    const double t = static_cast<double>(n) / sr;
    const bool on = static_cast<long long>(t / section) % 2 == 0;
    if (on) sig[n] += std::sin(kTau * 800.0 * t + phase);
  }
}

void add_slow_am(std::vector<double>& sig, int sr, double total_seconds, Xoshiro256pp& rng) {
  const double phase = rng.uniform(0.0, kTau);
  for (size_t n = 0; n < sig.size(); ++n) {
    const double t = static_cast<double>(n) / sr;
    sig[n] += std::sin(kTau * 1500.0 * t + phase) *
              (0.5 + 0.5 * std::sin(kTau * 2.0 * t / total_seconds));
  }
}

void render_cue(Index tag, std::vector<double>& sig, int sr, double total_seconds,
                Xoshiro256pp& rng) {
  switch (tag) {
    case 0: add_noise_band(sig, sr, 700.0, 1100.0, rng); break;
    case 1: add_noise_band(sig, sr, 2600.0, 3400.0, rng); break;
    case 2: add_tremolo(sig, sr, rng); break;
    case 3: add_harmonic_comb(sig, sr, rng); break;
    case 4: add_sweep(sig, sr, total_seconds, 300.0, 2000.0, rng); break;
    case 5: add_sweep(sig, sr, total_seconds, 2000.0, 300.0, rng); break;
    case 6: add_gated_tone(sig, sr, total_seconds, rng); break;
    case 7: add_slow_am(sig, sr, total_seconds, rng); break;
    default: throw InternalError("no cue for tag index " + std::to_string(tag));
  }
}

}  // namespace

const std::vector<std::string>& synth_tag_names() {
  // Local-texture cues lead so a small vocabulary stays texture-only.
  static const std::vector<std::string> names = {
      "noise_low", "noise_high", "tremolo", "harmonic_comb",
      "sweep_up",  "sweep_down", "gated",   "slow_am"};
  return names;
}

void synth_generate(const SynthConfig& cfg, const fs::path& out_dir) {
  if (cfg.n_tags < 1 || cfg.n_tags > 8)
    throw ArgumentError("synth supports 1 to 8 tags, got " + std::to_string(cfg.n_tags));
  if (cfg.n_clips < 1) throw ArgumentError("synth needs at least one clip");
  if (cfg.sample_rate <= 0) throw ArgumentError("synth sample rate must be positive");
  if (cfg.clip_seconds <= 0) throw ArgumentError("synth clip_seconds must be positive");
  if (cfg.activation_p <= 0.0 || cfg.activation_p >= 1.0)
    throw ArgumentError("synth activation probability must lie in (0,1)");

  fs::create_directories(out_dir);
  const long long n_samples =
      std::llround(cfg.clip_seconds * static_cast<double>(cfg.sample_rate));

  std::string annotations = "clip_id";
  for (Index t = 0; t < cfg.n_tags; ++t)
    annotations += "\t" + synth_tag_names()[static_cast<size_t>(t)];
  annotations += "\tpath\n";

  for (Index i = 0; i < cfg.n_clips; ++i) {
    Xoshiro256pp rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    std::vector<int> labels(static_cast<size_t>(cfg.n_tags));
    int n_active = 0;
    for (Index t = 0; t < cfg.n_tags; ++t) {
      labels[static_cast<size_t>(t)] = rng.bernoulli(cfg.activation_p) ? 1 : 0;
      n_active += labels[static_cast<size_t>(t)];
    }

    std::vector<double> mix(static_cast<size_t>(n_samples), 0.0);
    for (Index t = 0; t < cfg.n_tags; ++t) {
      if (!labels[static_cast<size_t>(t)]) continue;
      std::vector<double> cue(static_cast<size_t>(n_samples), 0.0);
      render_cue(t, cue, cfg.sample_rate, cfg.clip_seconds, rng);
      double peak = 0.0;
      for (double v : cue) peak = std::max(peak, std::abs(v));
      const double scale = peak > 0.0 ? 0.8 / (peak * n_active) : 0.0;
      for (size_t n = 0; n < cue.size(); ++n) mix[n] += cue[n] * scale;
    }

    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04lld.wav", static_cast<long long>(i));
    const char hex = "0123456789abcdef"[i % 16];
    const std::string rel = std::string(1, hex) + "/" + name;
    fs::create_directories(out_dir / std::string(1, hex));
    save_wav16(out_dir / rel, mix, cfg.sample_rate);

    annotations += std::to_string(i);
    for (Index t = 0; t < cfg.n_tags; ++t)
      annotations += labels[static_cast<size_t>(t)] ? "\t1" : "\t0";
    annotations += "\t" + rel + "\n";
  }
  write_file_atomic(out_dir / "annotations.tsv", annotations);
}

}  // namespace msecnn
