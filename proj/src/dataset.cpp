#include "msecnn/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "msecnn/io_util.hpp"
#include "msecnn/parallel.hpp"
#include "msecnn/wav.hpp"

namespace msecnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cells;
  size_t start = 0;
  while (true) {
    const size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cells;
}

}  // namespace

AnnotationTable parse_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("annotations '" + path.string() + "': cannot open file");
  std::string line;
  if (!std::getline(in, line))
    throw FormatError("annotations '" + path.string() + "': missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = split_tabs(line);
  if (header.empty() || header[0] != "clip_id")
    throw FormatError("annotations '" + path.string() +
                      "': header must start with 'clip_id'");
  if (header.size() < 3)
    throw FormatError("annotations '" + path.string() +
                      "': need at least one tag column and a path column");

  AnnotationTable table;
  table.tag_columns.assign(header.begin() + 1, header.end() - 1);

  std::set<std::string> seen_ids;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_tabs(line);
    if (cells.size() != header.size())
      throw FormatError("annotations '" + path.string() + "' line " +
                        std::to_string(line_no) + ": " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(header.size()));
    AnnotationRow row;
    row.clip_id = cells[0];
    if (row.clip_id.empty())
      throw FormatError("annotations '" + path.string() + "' line " +
                        std::to_string(line_no) + ": empty clip_id");
    if (!seen_ids.insert(row.clip_id).second)
      throw FormatError("annotations '" + path.string() + "' line " +
                        std::to_string(line_no) + ": duplicate clip_id '" + row.clip_id + "'");
    for (size_t c = 1; c + 1 < cells.size(); ++c) {
      if (cells[c] == "0")
        row.labels.push_back(0);
      else if (cells[c] == "1")
        row.labels.push_back(1);
      else
        throw FormatError("annotations '" + path.string() + "' line " +
                          std::to_string(line_no) + " column '" + header[c] + "': cell '" +
                          cells[c] + "' is not 0 or 1");
    }
    row.path = cells.back();
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  throw InternalError("unreachable split value");
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw ArgumentError("unknown split '" + name + "' (expected train, val, or test)");
}

Split split_for_path(const std::string& path) {
  if (path.size() < 2 || path[1] != '/')
    throw FormatError("path '" + path + "' has no leading hex segment");
  const char c = path[0];
  int digit;
  if (c >= '0' && c <= '9')
    digit = c - '0';
  else if (c >= 'a' && c <= 'f')
    digit = 10 + (c - 'a');
  else
    throw FormatError("path '" + path + "' has no leading hex segment");
  if (digit <= 0xb) return Split::Train;
  if (digit == 0xc) return Split::Val;
  return Split::Test;
}

DatasetManifest select_top_tags(const AnnotationTable& table, size_t k) {
  if (k == 0) throw ArgumentError("select_top_tags: k must be positive");
  if (k > table.tag_columns.size())
    throw ArgumentError("select_top_tags: k=" + std::to_string(k) + " but table has only " +
                        std::to_string(table.tag_columns.size()) + " tag columns");

  std::vector<long long> freq(table.tag_columns.size(), 0);
  for (const AnnotationRow& row : table.rows)
    for (size_t t = 0; t < row.labels.size(); ++t) freq[t] += row.labels[t];

  std::vector<size_t> order(table.tag_columns.size());
  for (size_t t = 0; t < order.size(); ++t) order[t] = t;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (freq[a] != freq[b]) return freq[a] > freq[b];
    return table.tag_columns[a] < table.tag_columns[b];
  });
  order.resize(k);

  DatasetManifest manifest;
  for (size_t t : order) manifest.tags.push_back(table.tag_columns[t]);
  for (const AnnotationRow& row : table.rows) {
    ManifestClip clip;
    clip.clip_id = row.clip_id;
    clip.audio_path = row.path;
    bool any = false;
    for (size_t t : order) {
      clip.labels.push_back(row.labels[t]);
      any = any || row.labels[t] == 1;
    }
    if (any) manifest.clips.push_back(std::move(clip));
  }
  return manifest;
}

void assign_splits(DatasetManifest& manifest) {
  for (ManifestClip& clip : manifest.clips) clip.split = split_for_path(clip.audio_path);
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  json j;
  j["tags"] = manifest.tags;
  json clips = json::array();
  for (const ManifestClip& clip : manifest.clips) {
    json c;
    c["clip_id"] = clip.clip_id;
    c["path"] = clip.audio_path;
    c["labels"] = clip.labels;
    c["split"] = to_string(clip.split);
    clips.push_back(std::move(c));
  }
  j["clips"] = clips;
  write_file_atomic(path, j.dump(1, '\t') + "\n");
}

DatasetManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file_bytes(path));
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path.string() + "': not valid JSON: " + e.what());
  }
  DatasetManifest manifest;
  try {
    manifest.tags = j.at("tags").get<std::vector<std::string>>();
    for (const auto& c : j.at("clips")) {
      ManifestClip clip;
      clip.clip_id = c.at("clip_id").get<std::string>();
      clip.audio_path = c.at("path").get<std::string>();
      clip.labels = c.at("labels").get<std::vector<int>>();
      clip.split = split_from_string(c.at("split").get<std::string>());
      if (clip.labels.size() != manifest.tags.size())
        throw FormatError("manifest '" + path.string() + "': clip '" + clip.clip_id +
                          "' has " + std::to_string(clip.labels.size()) + " labels for " +
                          std::to_string(manifest.tags.size()) + " tags");
      for (int v : clip.labels)
        if (v != 0 && v != 1)
          throw FormatError("manifest '" + path.string() + "': clip '" + clip.clip_id +
                            "' has a non-binary label");
      manifest.clips.push_back(std::move(clip));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path.string() + "': bad structure: " + e.what());
  }
  return manifest;
}

fs::path feature_path(const fs::path& cache_dir, const std::string& clip_id) {
  return cache_dir / (clip_id + ".feat");
}

namespace {
constexpr char kFeatMagic[] = "MSEFEAT1";
constexpr size_t kFeatMagicLen = 8;
}  // namespace

void write_feature_record(const fs::path& path, const Tensor<float>& values) {
  require_dim(values, 2, "feature record");
  std::string bytes;
  bytes.reserve(kFeatMagicLen + 8 + values.data.size() * 4);
  bytes.append(kFeatMagic, kFeatMagicLen);
  put_u32le(bytes, static_cast<std::uint32_t>(values.shape[0]));
  put_u32le(bytes, static_cast<std::uint32_t>(values.shape[1]));
  for (Index i = 0; i < values.numel(); ++i) put_f32le(bytes, values[i]);
  write_file_atomic(path, bytes);
}

Tensor<float> read_feature_record(const fs::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < kFeatMagicLen + 8 || bytes.compare(0, kFeatMagicLen, kFeatMagic) != 0)
    throw FormatError("feature record '" + path.string() + "': bad magic, not a MSEFEAT1 file");
  const Index n_mels = static_cast<Index>(get_u32le(bytes, kFeatMagicLen));
  const Index n_frames = static_cast<Index>(get_u32le(bytes, kFeatMagicLen + 4));
  const size_t need = kFeatMagicLen + 8 + static_cast<size_t>(n_mels) * static_cast<size_t>(n_frames) * 4;
  if (bytes.size() != need)
    throw FormatError("feature record '" + path.string() + "': has " +
                      std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(need));
  Tensor<float> values({n_mels, n_frames});
  size_t pos = kFeatMagicLen + 8;
  for (Index i = 0; i < values.numel(); ++i, pos += 4) values[i] = get_f32le(bytes, pos);
  return values;
}

void cache_build(const DatasetManifest& manifest, const SpectrogramConfig& cfg,
                 const fs::path& audio_root, const fs::path& cache_dir) {
  cfg.validate();
  fs::create_directories(cache_dir);
  parallel_for(static_cast<long long>(manifest.clips.size()), [&](long long i) {
    const ManifestClip& clip = manifest.clips[static_cast<size_t>(i)];
    const AudioClip audio = load_wav(audio_root / clip.audio_path);
    MelSpectrogram mel = mel_spectrogram(audio, cfg);
    write_feature_record(feature_path(cache_dir, clip.clip_id), mel.values);
  });
}

MelSpectrogram cache_read(const fs::path& cache_dir, const std::string& clip_id,
                          const SpectrogramConfig& cfg) {
  Tensor<float> values = read_feature_record(feature_path(cache_dir, clip_id));
  if (values.shape[0] != cfg.n_mels || values.shape[1] != cfg.target_frames())
    throw ShapeError("feature record for clip '" + clip_id + "' is " +
                     shape_str(values.shape) + ", config expects (" +
                     std::to_string(cfg.n_mels) + ", " + std::to_string(cfg.target_frames()) +
                     ")");
  MelSpectrogram mel;
  mel.values = std::move(values);
  mel.clip_id = clip_id;
  return mel;
}

CachedDataset::CachedDataset(const DatasetManifest& manifest, fs::path cache_dir,
                             Index n_mels, Index n_frames, Split split)
    : cache_dir_(std::move(cache_dir)), n_mels_(n_mels), n_frames_(n_frames),
      n_tags_(static_cast<Index>(manifest.tags.size())) {
  for (const ManifestClip& clip : manifest.clips)
    if (clip.split == split) clips_.push_back(clip);
}

Example<float> CachedDataset::get(Index i) const {
  if (i < 0 || i >= size())
    throw ArgumentError("dataset index " + std::to_string(i) + " out of range");
  const ManifestClip& clip = clips_[static_cast<size_t>(i)];
  Tensor<float> values = read_feature_record(feature_path(cache_dir_, clip.clip_id));
  if (values.shape[0] != n_mels_ || values.shape[1] != n_frames_)
    throw ShapeError("feature record for clip '" + clip.clip_id + "' is " +
                     shape_str(values.shape) + ", expected (" + std::to_string(n_mels_) +
                     ", " + std::to_string(n_frames_) + ")");
  Example<float> ex;
  ex.x.shape = {1, values.shape[0], values.shape[1]};
  ex.x.data = std::move(values.data);
  ex.y = Tensor<float>({n_tags_});
  for (Index t = 0; t < n_tags_; ++t)
    ex.y[t] = static_cast<float>(clip.labels[static_cast<size_t>(t)]);
  return ex;
}

}  // namespace msecnn
