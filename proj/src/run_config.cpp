#include "msecnn/run_config.hpp"

#include <fstream>
#include <sstream>

namespace msecnn {

namespace {

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long long to_int(const std::string& value, const std::string& where) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ArgumentError(where + ": '" + value + "' is not an integer");
  }
}

double to_double(const std::string& value, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ArgumentError(where + ": '" + value + "' is not a number");
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) items.push_back(trim(item));
  return items;
}

}  // namespace

std::vector<Index> parse_channels(const std::string& text) {
  std::vector<Index> out;
  for (const std::string& item : split_list(text)) {
    const long long v = to_int(item, "channels");
    if (v < 1) throw ArgumentError("channels: '" + item + "' is not a positive count");
    out.push_back(static_cast<Index>(v));
  }
  if (out.empty()) throw ArgumentError("channels: empty list");
  return out;
}

std::vector<PoolSize> parse_pooling(const std::string& text) {
  std::vector<PoolSize> out;
  for (const std::string& item : split_list(text)) {
    const size_t x = item.find('x');
    if (x == std::string::npos)
      throw ArgumentError("pooling: '" + item + "' is not of the form HxW");
    const long long h = to_int(item.substr(0, x), "pooling");
    const long long w = to_int(item.substr(x + 1), "pooling");
    if (h < 1 || w < 1)
      throw ArgumentError("pooling: '" + item + "' must have positive window sides");
    out.push_back({static_cast<Index>(h), static_cast<Index>(w)});
  }
  if (out.empty()) throw ArgumentError("pooling: empty list");
  return out;
}

namespace {

void apply(RunConfig& cfg, const std::string& section, const std::string& key,
           const std::string& value, const std::string& where) {
  if (section == "audio") {
    if (key == "sample_rate") cfg.audio.sample_rate = static_cast<int>(to_int(value, where));
    else if (key == "n_fft") cfg.audio.n_fft = static_cast<int>(to_int(value, where));
    else if (key == "hop") cfg.audio.hop = static_cast<int>(to_int(value, where));
    else if (key == "n_mels") cfg.audio.n_mels = static_cast<int>(to_int(value, where));
    else if (key == "f_min") cfg.audio.f_min = to_double(value, where);
    else if (key == "f_max") cfg.audio.f_max = to_double(value, where);
    else if (key == "clip_seconds") cfg.audio.clip_seconds = to_double(value, where);
    else throw ArgumentError(where + ": unknown [audio] key '" + key + "'");
  } else if (section == "model") {
    if (key == "variant") cfg.variant = value;
    else if (key == "channels") cfg.channels = parse_channels(value);
    else if (key == "pooling") cfg.pooling = parse_pooling(value);
    else if (key == "dropout") cfg.dropout = to_double(value, where);
    else throw ArgumentError(where + ": unknown [model] key '" + key + "'");
  } else if (section == "train") {
    if (key == "learning_rate") cfg.train.learning_rate = to_double(value, where);
    else if (key == "beta1") cfg.train.beta1 = to_double(value, where);
    else if (key == "beta2") cfg.train.beta2 = to_double(value, where);
    else if (key == "eps") cfg.train.eps = to_double(value, where);
    else if (key == "batch_size") cfg.train.batch_size = static_cast<Index>(to_int(value, where));
    else if (key == "max_epochs") cfg.train.max_epochs = static_cast<Index>(to_int(value, where));
    else if (key == "seed") cfg.train.seed = static_cast<std::uint64_t>(to_int(value, where));
    else if (key == "patience")
      cfg.train.early_stop_patience = static_cast<Index>(to_int(value, where));
    else throw ArgumentError(where + ": unknown [train] key '" + key + "'");
  } else if (section == "dataset") {
    if (key == "top_tags") cfg.top_tags = static_cast<Index>(to_int(value, where));
    else throw ArgumentError(where + ": unknown [dataset] key '" + key + "'");
  } else {
    throw ArgumentError(where + ": unknown section [" + section + "]");
  }
}

}  // namespace

void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("config file '" + path.string() + "' cannot be opened");
  std::string line, section;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "config '" + path.string() + "' line " + std::to_string(line_no);
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']')
        throw ArgumentError(where + ": unterminated section header");
      section = trim(stripped.substr(1, stripped.size() - 2));
      continue;
    }
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ArgumentError(where + ": expected 'key = value' or a [section] header");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ArgumentError(where + ": empty key");
    if (section.empty())
      throw ArgumentError(where + ": key '" + key + "' appears before any [section]");
    apply(cfg, section, key, value, where);
  }
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "audio.sample_rate = " << cfg.audio.sample_rate << "\n";
  os << "audio.n_fft = " << cfg.audio.n_fft << "\n";
  os << "audio.hop = " << cfg.audio.hop << "\n";
  os << "audio.n_mels = " << cfg.audio.n_mels << "\n";
  os << "audio.f_min = " << cfg.audio.f_min << "\n";
  os << "audio.f_max = " << cfg.audio.f_max << "\n";
  os << "audio.clip_seconds = " << cfg.audio.clip_seconds << "\n";
  os << "model.variant = " << cfg.variant << "\n";
  os << "model.channels = ";
  for (size_t i = 0; i < cfg.channels.size(); ++i)
    os << (i ? "," : "") << cfg.channels[i];
  os << "\n";
  os << "model.pooling = ";
  for (size_t i = 0; i < cfg.pooling.size(); ++i)
    os << (i ? "," : "") << cfg.pooling[i].h << 'x' << cfg.pooling[i].w;
  os << "\n";
  os << "model.dropout = " << cfg.dropout << "\n";
  os << "train.learning_rate = " << cfg.train.learning_rate << "\n";
  os << "train.beta1 = " << cfg.train.beta1 << "\n";
  os << "train.beta2 = " << cfg.train.beta2 << "\n";
  os << "train.eps = " << cfg.train.eps << "\n";
  os << "train.batch_size = " << cfg.train.batch_size << "\n";
  os << "train.max_epochs = " << cfg.train.max_epochs << "\n";
  os << "train.seed = " << cfg.train.seed << "\n";
  os << "train.patience = " << cfg.train.early_stop_patience << "\n";
  os << "dataset.top_tags = " << cfg.top_tags << "\n";
  return os.str();
}

ModelConfig RunConfig::model(Index n_tags, std::vector<std::string> tag_names) const {
  if (n_tags < 1) throw ArgumentError("model: tag count must be positive, got " +
                                      std::to_string(n_tags));
  ModelConfig cfg;
  cfg.variant = variant_from_string(variant);
  cfg.channels = channels;
  cfg.pooling = pooling;
  cfg.n_tags = n_tags;
  cfg.input_shape = {1, static_cast<Index>(audio.n_mels), audio.target_frames()};
  cfg.dropout_rate = dropout;
  cfg.tag_names = std::move(tag_names);
  return cfg;
}

}  // namespace msecnn
