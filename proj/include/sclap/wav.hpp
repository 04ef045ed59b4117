#pragma once

#include <string>
#include <vector>

#include "sclap/dsp.hpp"

namespace sclap {

// 32-bit float PCM WAV (RIFF). Fixed layout, 44-byte header:
//   "RIFF" u32(size-8) "WAVE"
//   "fmt " u32(16) u16(3=IEEE float) u16(channels) u32(rate)
//          u32(byte_rate) u16(block_align) u16(32)
//   "data" u32(n_bytes) interleaved f32 samples
void write_wav_stereo(const std::string& path, const StereoClip& clip);
void write_wav_mono(const std::string& path, const MonoClip& clip);

StereoClip read_wav_stereo(const std::string& path);

}  // namespace sclap
