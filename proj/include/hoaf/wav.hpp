#pragma once

#include <filesystem>

#include "hoaf/dsp.hpp"

namespace hoaf {

enum class WavFormat { Float32, Int16 };

struct WavData {
  double sample_rate = 16000.0;
  WavFormat format = WavFormat::Float32;
  RealVector samples;
};

// Mono RIFF/WAVE, PCM int16 or IEEE float32. Throws IoError on unreadable
// files and InvalidArgument on unsupported layouts.
WavData read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const RealVector& samples, double sample_rate,
               WavFormat format = WavFormat::Float32);

}  // namespace hoaf
