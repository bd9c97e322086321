#include "msecnn/checkpoint.hpp"

#include <json.hpp>

#include "msecnn/io_util.hpp"

namespace msecnn {

namespace {

using nlohmann::json;

constexpr char kMagic[] = "MSECNN01";
constexpr size_t kMagicLen = 8;

struct NamedTensor {
  std::string name;
  const Tensor<float>* tensor;
};

std::vector<NamedTensor> tensor_table(const ModelState<float>& state) {
  std::vector<NamedTensor> table;
  for (size_t k = 0; k < state.params.levels.size(); ++k) {
    const std::string tag = std::to_string(k + 1);
    const auto& lv = state.params.levels[k];
    table.push_back({"conv" + tag + ".weight", &lv.conv_w});
    table.push_back({"conv" + tag + ".bias", &lv.conv_b});
    table.push_back({"bn" + tag + ".gamma", &lv.gamma});
    table.push_back({"bn" + tag + ".beta", &lv.beta});
    table.push_back({"bn" + tag + ".running_mean", &state.bn_stats[k].running_mean});
    table.push_back({"bn" + tag + ".running_var", &state.bn_stats[k].running_var});
  }
  table.push_back({"dense.weight", &state.params.dense_w});
  table.push_back({"dense.bias", &state.params.dense_b});
  return table;
}

std::vector<Tensor<float>*> mutable_tensors(ModelState<float>& state) {
  std::vector<Tensor<float>*> out;
  for (size_t k = 0; k < state.params.levels.size(); ++k) {
    auto& lv = state.params.levels[k];
    out.push_back(&lv.conv_w);
    out.push_back(&lv.conv_b);
    out.push_back(&lv.gamma);
    out.push_back(&lv.beta);
    out.push_back(&state.bn_stats[k].running_mean);
    out.push_back(&state.bn_stats[k].running_var);
  }
  out.push_back(&state.params.dense_w);
  out.push_back(&state.params.dense_b);
  return out;
}

json config_to_json(const ModelConfig& cfg, const std::vector<BatchNormStats<float>>& stats) {
  json j;
  j["variant"] = to_string(cfg.variant);
  j["channels"] = cfg.channels;
  json pooling = json::array();
  for (const PoolSize& p : cfg.pooling) pooling.push_back({p.h, p.w});
  j["pooling"] = pooling;
  j["n_tags"] = cfg.n_tags;
  j["input_shape"] = {cfg.input_shape[0], cfg.input_shape[1], cfg.input_shape[2]};
  j["dropout_rate"] = cfg.dropout_rate;
  j["tag_names"] = cfg.tag_names;
  json updates = json::array();
  for (const auto& s : stats) updates.push_back(s.updates);
  j["bn_updates"] = updates;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  cfg.channels = j.at("channels").get<std::vector<Index>>();
  cfg.pooling.clear();
  for (const auto& p : j.at("pooling")) {
    if (!p.is_array() || p.size() != 2)
      throw FormatError("checkpoint manifest: pooling entries must be [h, w] pairs");
    cfg.pooling.push_back({p[0].get<Index>(), p[1].get<Index>()});
  }
  cfg.n_tags = j.at("n_tags").get<Index>();
  const auto shape = j.at("input_shape").get<std::vector<Index>>();
  if (shape.size() != 3)
    throw FormatError("checkpoint manifest: input_shape must have 3 entries");
  cfg.input_shape = {shape[0], shape[1], shape[2]};
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.tag_names = j.at("tag_names").get<std::vector<std::string>>();
  return cfg;
}

}  // namespace

void save_checkpoint(const ModelState<float>& state, const ModelConfig& config,
                     const std::filesystem::path& path) {
  if (state.params.levels.size() != state.bn_stats.size())
    throw InternalError("model state level/stats count mismatch");
  const auto table = tensor_table(state);

  json manifest;
  manifest["config"] = config_to_json(config, state.bn_stats);
  json tensors = json::array();
  long long offset = 0;
  for (const auto& entry : table) {
    json t;
    t["name"] = entry.name;
    t["shape"] = entry.tensor->shape;
    t["offset"] = offset;
    tensors.push_back(t);
    offset += entry.tensor->numel() * 4;
  }
  manifest["tensors"] = tensors;
  const std::string manifest_text = manifest.dump();

  std::string bytes;
  bytes.reserve(kMagicLen + 8 + manifest_text.size() + static_cast<size_t>(offset));
  bytes.append(kMagic, kMagicLen);
  put_u64le(bytes, manifest_text.size());
  bytes += manifest_text;
  for (const auto& entry : table)
    for (Index i = 0; i < entry.tensor->numel(); ++i) put_f32le(bytes, (*entry.tensor)[i]);
  write_file_atomic(path, bytes);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < kMagicLen + 8 || bytes.compare(0, kMagicLen, kMagic) != 0)
    throw FormatError("checkpoint '" + path.string() + "': bad magic, not a MSECNN01 file");
  const std::uint64_t manifest_len = get_u64le(bytes, kMagicLen);
  const size_t payload_start = kMagicLen + 8 + manifest_len;
  if (payload_start > bytes.size())
    throw FormatError("checkpoint '" + path.string() + "': truncated manifest");

  json manifest;
  try {
    manifest = json::parse(bytes.substr(kMagicLen + 8, manifest_len));
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path.string() + "': manifest is not valid JSON: " +
                      e.what());
  }

  LoadedCheckpoint out;
  std::vector<long long> bn_updates;
  try {
    out.config = config_from_json(manifest.at("config"));
    bn_updates = manifest.at("config").at("bn_updates").get<std::vector<long long>>();
  } catch (const json::exception& e) {
    throw FormatError("checkpoint '" + path.string() + "': bad manifest config: " + e.what());
  }

  ModelPlan plan;
  try {
    plan = plan_model(out.config);
  } catch (const ArgumentError& e) {
    throw FormatError("checkpoint '" + path.string() + "': manifest config is invalid: " +
                      e.what());
  }
  const size_t n_levels = plan.levels.size();
  if (bn_updates.size() != n_levels)
    throw FormatError("checkpoint '" + path.string() + "': bn_updates lists " +
                      std::to_string(bn_updates.size()) + " levels, config has " +
                      std::to_string(n_levels));

  // Materialize an empty state with config-derived shapes, then demand the
  // manifest match it exactly.
  out.state.params.levels.resize(n_levels);
  for (size_t k = 0; k < n_levels; ++k) {
    const LevelPlan& lv = plan.levels[k];
    auto& p = out.state.params.levels[k];
    p.conv_w = Tensor<float>({lv.conv_channels, lv.in_channels, 3, 3});
    p.conv_b = Tensor<float>({lv.conv_channels});
    p.gamma = Tensor<float>({lv.conv_channels});
    p.beta = Tensor<float>({lv.conv_channels});
    auto stats = BatchNormStats<float>::init(lv.conv_channels);
    stats.updates = bn_updates[k];
    out.state.bn_stats.push_back(std::move(stats));
  }
  out.state.params.dense_w = Tensor<float>({out.config.n_tags, plan.feature_width});
  out.state.params.dense_b = Tensor<float>({out.config.n_tags});

  auto table = tensor_table(out.state);
  const json& tensors = manifest.at("tensors");
  if (!tensors.is_array() || tensors.size() != table.size())
    throw FormatError("checkpoint '" + path.string() + "': expected " +
                      std::to_string(table.size()) + " tensors, manifest lists " +
                      std::to_string(tensors.size()));

  long long expected_offset = 0;
  for (size_t i = 0; i < table.size(); ++i) {
    const json& t = tensors[i];
    const std::string name = t.at("name").get<std::string>();
    if (name != table[i].name)
      throw FormatError("checkpoint '" + path.string() + "': tensor " + std::to_string(i) +
                        " is '" + name + "', expected '" + table[i].name + "'");
    const auto shape = t.at("shape").get<std::vector<Index>>();
    if (shape != table[i].tensor->shape)
      throw FormatError("checkpoint '" + path.string() + "': tensor '" + name + "' shape " +
                        shape_str(shape) + " does not match config-derived " +
                        shape_str(table[i].tensor->shape));
    const long long offset = t.at("offset").get<long long>();
    if (offset != expected_offset)
      throw FormatError("checkpoint '" + path.string() + "': tensor '" + name +
                        "' offset " + std::to_string(offset) + ", expected " +
                        std::to_string(expected_offset));
    expected_offset += table[i].tensor->numel() * 4;
  }
  if (payload_start + static_cast<size_t>(expected_offset) != bytes.size())
    throw FormatError("checkpoint '" + path.string() + "': payload has " +
                      std::to_string(bytes.size() - payload_start) + " bytes, manifest needs " +
                      std::to_string(expected_offset));

  size_t pos = payload_start;
  for (Tensor<float>* tensor : mutable_tensors(out.state))
    for (Index i = 0; i < tensor->numel(); ++i, pos += 4) (*tensor)[i] = get_f32le(bytes, pos);
  return out;
}

}  // namespace msecnn
