#include "msecnn/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "msecnn/errors.hpp"
#include "msecnn/io_util.hpp"

namespace msecnn {

namespace {

std::uint16_t get_u16le(const std::string& in, size_t offset) {
  if (offset + 2 > in.size()) throw FormatError("wav: truncated header");
  return static_cast<std::uint16_t>(static_cast<unsigned char>(in[offset]) |
                                    (static_cast<unsigned char>(in[offset + 1]) << 8));
}

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0)
    throw FormatError("wav '" + path.string() + "': missing RIFF chunk id");
  if (bytes.compare(8, 4, "WAVE") != 0)
    throw FormatError("wav '" + path.string() + "': RIFF form type is not WAVE");

  bool have_fmt = false;
  int sample_rate = 0;
  size_t data_offset = 0, data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id = bytes.substr(pos, 4);
    const std::uint32_t chunk_size = get_u32le(bytes, pos + 4);
    const size_t body = pos + 8;
    if (body + chunk_size > bytes.size())
      throw FormatError("wav '" + path.string() + "': chunk '" + id +
                        "' extends past end of file");
    if (id == "fmt ") {
      if (chunk_size < 16) throw FormatError("wav '" + path.string() + "': fmt chunk too short");
      const std::uint16_t audio_format = get_u16le(bytes, body);
      if (audio_format != 1)
        throw FormatError("wav '" + path.string() + "': audio_format=" +
                          std::to_string(audio_format) + ", only PCM (1) is supported");
      const std::uint16_t channels = get_u16le(bytes, body + 2);
      if (channels != 1)
        throw FormatError("wav '" + path.string() + "': num_channels=" +
                          std::to_string(channels) + ", only mono is supported");
      sample_rate = static_cast<int>(get_u32le(bytes, body + 4));
      const std::uint16_t bits = get_u16le(bytes, body + 14);
      if (bits != 16)
        throw FormatError("wav '" + path.string() + "': bits_per_sample=" +
                          std::to_string(bits) + ", only 16 is supported");
      have_fmt = true;
    } else if (id == "data") {
      data_offset = body;
      data_size = chunk_size;
    }
    pos = body + chunk_size + (chunk_size % 2);  // chunks are word aligned
  }
  if (!have_fmt) throw FormatError("wav '" + path.string() + "': missing fmt chunk");
  if (data_offset == 0) throw FormatError("wav '" + path.string() + "': missing data chunk");
  if (sample_rate <= 0)
    throw FormatError("wav '" + path.string() + "': sample_rate field is not positive");
  if (data_size % 2 != 0)
    throw FormatError("wav '" + path.string() + "': data chunk has odd byte count");

  AudioClip clip;
  clip.sample_rate = sample_rate;
  clip.samples.resize(data_size / 2);
  for (size_t i = 0; i < clip.samples.size(); ++i) {
    const std::uint16_t raw = get_u16le(bytes, data_offset + 2 * i);
    const std::int16_t s = static_cast<std::int16_t>(raw);
    clip.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return clip;
}

void save_wav16(const std::filesystem::path& path, const std::vector<double>& samples,
                int sample_rate) {
  if (sample_rate <= 0) throw ArgumentError("save_wav16: sample rate must be positive");
  const std::uint32_t data_size = static_cast<std::uint32_t>(samples.size() * 2);
  std::string out;
  out.reserve(44 + data_size);
  out += "RIFF";
  put_u32le(out, 36 + data_size);
  out += "WAVE";
  out += "fmt ";
  put_u32le(out, 16);
  const std::uint32_t byte_rate = static_cast<std::uint32_t>(sample_rate) * 2;
  out.push_back(1);  // PCM
  out.push_back(0);
  out.push_back(1);  // mono
  out.push_back(0);
  put_u32le(out, static_cast<std::uint32_t>(sample_rate));
  put_u32le(out, byte_rate);
  out.push_back(2);  // block align
  out.push_back(0);
  out.push_back(16);  // bits per sample
  out.push_back(0);
  out += "data";
  put_u32le(out, data_size);
  for (double s : samples) {
    long v = std::lround(s * 32768.0);
    v = std::clamp(v, -32768l, 32767l);
    const std::uint16_t raw = static_cast<std::uint16_t>(static_cast<std::int16_t>(v));
    out.push_back(static_cast<char>(raw & 0xff));
    out.push_back(static_cast<char>((raw >> 8) & 0xff));
  }
  write_file_atomic(path, out);
}

}  // namespace msecnn
