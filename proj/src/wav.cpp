#include "doawave/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "doawave/error.hpp"

namespace doawave {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
};

}  // namespace

MultichannelWaveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError("RIFF", "cannot open " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 12) throw WavError("RIFF", "file shorter than the RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) throw WavError("RIFF", "missing RIFF tag");
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) throw WavError("WAVE", "missing WAVE tag");

  std::optional<FormatChunk> fmt;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string id(reinterpret_cast<const char*>(bytes.data() + pos), 4);
    const std::uint32_t size = le32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + 16 > bytes.size()) throw WavError("fmt ", "truncated chunk");
      FormatChunk f;
      f.format = le16(bytes.data() + body);
      f.channels = le16(bytes.data() + body + 2);
      f.sample_rate = le32(bytes.data() + body + 4);
      f.bits = le16(bytes.data() + body + 14);
      if (f.format == kFormatExtensible) {
        if (size < 40 || body + 40 > bytes.size()) {
          throw WavError("fmt ", "truncated extensible format");
        }
        f.format = le16(bytes.data() + body + 24);
      }
      fmt = f;
    } else if (id == "data") {
      if (body + size > bytes.size()) throw WavError("data", "truncated chunk");
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!fmt) throw WavError("fmt ", "missing chunk");
  if (!data) throw WavError("data", "missing chunk");
  if (fmt->channels == 0) throw WavError("fmt ", "zero channels");
  if (fmt->sample_rate == 0) throw WavError("fmt ", "zero sample rate");

  const bool is_float = fmt->format == kFormatFloat && fmt->bits == 32;
  const bool is_pcm16 = fmt->format == kFormatPcm && fmt->bits == 16;
  if (!is_float && !is_pcm16) {
    throw WavError("fmt ", "unsupported encoding (format " + std::to_string(fmt->format) +
                               ", " + std::to_string(fmt->bits) + " bits)");
  }
  const std::size_t bytes_per_sample = fmt->bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt->channels;
  const std::size_t frames = data_size / frame_bytes;

  MultichannelWaveform wave;
  wave.sample_rate = static_cast<int>(fmt->sample_rate);
  wave.channels.assign(fmt->channels, std::vector<double>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < fmt->channels; ++c) {
      const std::uint8_t* p = data + i * frame_bytes + c * bytes_per_sample;
      if (is_float) {
        const std::uint32_t bits = le32(p);
        float v;
        std::memcpy(&v, &bits, sizeof v);
        wave.channels[c][i] = static_cast<double>(v);
      } else {
        const auto v = static_cast<std::int16_t>(le16(p));
        wave.channels[c][i] = static_cast<double>(v) / 32768.0;
      }
    }
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const MultichannelWaveform& wave,
               WavEncoding encoding) {
  wave.validate();
  const auto channels = static_cast<std::uint16_t>(wave.num_channels());
  const std::uint16_t bits = encoding == WavEncoding::kFloat32 ? 32 : 16;
  const std::uint32_t frame_bytes = channels * (bits / 8u);
  const auto frames = static_cast<std::uint32_t>(wave.num_samples());
  const std::uint32_t data_bytes = frames * frame_bytes;

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put32(out, 16);
  put16(out, encoding == WavEncoding::kFloat32 ? kFormatFloat : kFormatPcm);
  put16(out, channels);
  put32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put32(out, static_cast<std::uint32_t>(wave.sample_rate) * frame_bytes);
  put16(out, static_cast<std::uint16_t>(frame_bytes));
  put16(out, bits);
  put_tag(out, "data");
  put32(out, data_bytes);
  for (std::uint32_t i = 0; i < frames; ++i) {
    for (std::uint16_t c = 0; c < channels; ++c) {
      const double x = wave.channels[c][i];
      if (encoding == WavEncoding::kFloat32) {
        const auto v = static_cast<float>(x);
        std::uint32_t b;
        std::memcpy(&b, &v, sizeof b);
        put32(out, b);
      } else {
        const double scaled = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
        put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
      }
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("wav: cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error("wav: write failed for " + path.string());
}

}  // namespace doawave
