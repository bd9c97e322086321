#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "msecnn/frontend.hpp"
#include "msecnn/tensor.hpp"
#include "msecnn/training.hpp"

namespace msecnn {

struct AnnotationRow {
  std::string clip_id;
  std::vector<int> labels;  // one per tag column, 0/1
  std::string path;         // relative audio path, last column of the file
};

struct AnnotationTable {
  std::vector<std::string> tag_columns;
  std::vector<AnnotationRow> rows;
};

/// Tab-separated annotations: header `clip_id`, tag columns, then the audio
/// path column. Malformed cells are reported with their line number.
AnnotationTable parse_annotations(const std::filesystem::path& path);

enum class Split { Train, Val, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& name);

/// Community split rule on the leading path segment: hex 0-b train, c val,
/// d-f test.
Split split_for_path(const std::string& path);

struct ManifestClip {
  std::string clip_id;
  std::string audio_path;
  std::vector<int> labels;  // length == tags.size()
  Split split = Split::Train;
};

struct DatasetManifest {
  std::vector<std::string> tags;  // ordered vocabulary
  std::vector<ManifestClip> clips;
};

/// Keeps the k most frequent tags (frequency ties broken alphabetically),
/// restricts labels to that vocabulary, and drops clips left all-zero.
/// Splits are not assigned yet.
DatasetManifest select_top_tags(const AnnotationTable& table, size_t k);

/// Applies split_for_path to every clip.
void assign_splits(DatasetManifest& manifest);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Feature cache: one record per clip, `<cache_dir>/<clip_id>.feat`, layout
// magic "MSEFEAT1", u32le n_mels, u32le n_frames, then float32le row-major.
std::filesystem::path feature_path(const std::filesystem::path& cache_dir,
                                   const std::string& clip_id);
void write_feature_record(const std::filesystem::path& path, const Tensor<float>& values);
Tensor<float> read_feature_record(const std::filesystem::path& path);

/// Extracts features for every manifest clip (parallel across clips) into
/// cache_dir. Output bytes are deterministic for a given config and audio.
void cache_build(const DatasetManifest& manifest, const SpectrogramConfig& cfg,
                 const std::filesystem::path& audio_root,
                 const std::filesystem::path& cache_dir);

/// Reads one record and checks its dimensions against the config.
MelSpectrogram cache_read(const std::filesystem::path& cache_dir, const std::string& clip_id,
                          const SpectrogramConfig& cfg);

/// Batch source serving cached features for one split. Records are read
/// lazily per access, so memory stays flat at any corpus size. Every record
/// must match the expected (n_mels, n_frames).
class CachedDataset : public BatchSource<float> {
 public:
  CachedDataset(const DatasetManifest& manifest, std::filesystem::path cache_dir,
                Index n_mels, Index n_frames, Split split);

  Index size() const override { return static_cast<Index>(clips_.size()); }
  Example<float> get(Index i) const override;
  const std::vector<ManifestClip>& clips() const { return clips_; }

 private:
  std::vector<ManifestClip> clips_;
  std::filesystem::path cache_dir_;
  Index n_mels_ = 0, n_frames_ = 0;
  Index n_tags_ = 0;
};

// Synthetic corpus. Tags bind to fixed acoustic cues; the first half of the
// vocabulary are local-texture cues (band-limited noise color, tremolo,
// harmonic comb spacing), the rest long-time-structure cues (sweep direction,
// section gating, slow amplitude modulation).
struct SynthConfig {
  Index n_clips = 32;
  Index n_tags = 4;  // at most 8
  std::uint64_t seed = 7;
  int sample_rate = 12000;
  double clip_seconds = 29.12;
  double activation_p = 0.35;
};

const std::vector<std::string>& synth_tag_names();

/// Writes `<hex>/clip_NNNN.wav` files plus `annotations.tsv` under out_dir;
/// bit-identical for identical configs. Clips with no active tags render
/// exact silence.
void synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace msecnn
