#pragma once

#include <filesystem>

#include "doawave/signals.hpp"

namespace doawave {

enum class WavEncoding { kFloat32, kPcm16 };

// Reads RIFF/WAVE files holding 32-bit IEEE float or 16-bit PCM samples
// (plain or WAVE_FORMAT_EXTENSIBLE). PCM16 is scaled by 1/32768. Failures are
// reported as WavError naming the offending chunk.
MultichannelWaveform read_wav(const std::filesystem::path& path);

void write_wav(const std::filesystem::path& path, const MultichannelWaveform& wave,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace doawave
