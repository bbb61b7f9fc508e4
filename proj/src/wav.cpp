#include "hoaf/wav.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "hoaf/errors.hpp"

namespace hoaf {
namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

template <typename T>
T read_le(const std::vector<char>& buf, size_t pos) {
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw InvalidArgument(path.string() + ": not a RIFF/WAVE file");

  uint16_t audio_format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_pos = 0, data_size = 0;
  bool have_fmt = false;
  for (size_t pos = 12; pos + 8 <= buf.size();) {
    const uint32_t size = read_le<uint32_t>(buf, pos + 4);
    const size_t body = pos + 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0 && body + 16 <= buf.size()) {
      audio_format = read_le<uint16_t>(buf, body);
      channels = read_le<uint16_t>(buf, body + 2);
      rate = read_le<uint32_t>(buf, body + 4);
      bits = read_le<uint16_t>(buf, body + 14);
      if (audio_format == 0xFFFE && size >= 26) audio_format = read_le<uint16_t>(buf, body + 24);
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_pos = body;
      data_size = std::min<size_t>(size, buf.size() - body);
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || data_pos == 0) throw InvalidArgument(path.string() + ": missing fmt or data chunk");
  if (channels != 1) throw InvalidArgument(path.string() + ": only mono WAV is supported");

  WavData out;
  out.sample_rate = rate;
  if (audio_format == 3 && bits == 32) {
    out.format = WavFormat::Float32;
    const size_t n = data_size / 4;
    out.samples.resize(static_cast<Eigen::Index>(n));
    for (size_t i = 0; i < n; ++i) out.samples[i] = read_le<float>(buf, data_pos + 4 * i);
  } else if (audio_format == 1 && bits == 16) {
    out.format = WavFormat::Int16;
    const size_t n = data_size / 2;
    out.samples.resize(static_cast<Eigen::Index>(n));
    for (size_t i = 0; i < n; ++i)
      out.samples[i] = read_le<int16_t>(buf, data_pos + 2 * i) / 32768.0;
  } else {
    throw InvalidArgument(path.string() + ": unsupported sample format (need float32 or int16 PCM)");
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const RealVector& samples, double sample_rate,
               WavFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const uint16_t bits = format == WavFormat::Float32 ? 32 : 16;
  const uint16_t block = bits / 8;
  const uint32_t data_size = static_cast<uint32_t>(samples.size()) * block;
  const uint32_t rate = static_cast<uint32_t>(std::lround(sample_rate));

  out.write("RIFF", 4);
  put<uint32_t>(out, 36 + data_size);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put<uint32_t>(out, 16);
  put<uint16_t>(out, format == WavFormat::Float32 ? 3 : 1);
  put<uint16_t>(out, 1);
  put<uint32_t>(out, rate);
  put<uint32_t>(out, rate * block);
  put<uint16_t>(out, block);
  put<uint16_t>(out, bits);
  out.write("data", 4);
  put<uint32_t>(out, data_size);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    if (format == WavFormat::Float32) {
      put<float>(out, static_cast<float>(samples[i]));
    } else {
      const double clipped = std::clamp(samples[i], -1.0, 32767.0 / 32768.0);
      put<int16_t>(out, static_cast<int16_t>(std::lround(clipped * 32768.0)));
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace hoaf
