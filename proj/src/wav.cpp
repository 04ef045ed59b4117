#include "sclap/wav.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sclap {

namespace {

void write_u32(std::ofstream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u16(std::ofstream& os, std::uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); }

void write_wav(const std::string& path, const std::vector<const std::vector<double>*>& channels, int rate) {
  const std::uint16_t nch = static_cast<std::uint16_t>(channels.size());
  const std::uint32_t nsamp = static_cast<std::uint32_t>(channels[0]->size());
  const std::uint32_t data_bytes = nsamp * nch * 4;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("wav: cannot open " + path + " for writing");
  os.write("RIFF", 4);
  write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u16(os, 3);  // IEEE float
  write_u16(os, nch);
  write_u32(os, static_cast<std::uint32_t>(rate));
  write_u32(os, static_cast<std::uint32_t>(rate) * nch * 4);
  write_u16(os, nch * 4);
  write_u16(os, 32);
  os.write("data", 4);
  write_u32(os, data_bytes);
  for (std::uint32_t i = 0; i < nsamp; ++i)
    for (std::uint16_t c = 0; c < nch; ++c) {
      const float f = static_cast<float>((*channels[c])[i]);
      os.write(reinterpret_cast<const char*>(&f), 4);
    }
  if (!os) throw std::runtime_error("wav: write failure on " + path);
}

}  // namespace

void write_wav_stereo(const std::string& path, const StereoClip& clip) {
  if (clip.left.size() != clip.right.size()) throw std::invalid_argument("wav: channel length mismatch");
  write_wav(path, {&clip.left, &clip.right}, clip.sample_rate);
}

void write_wav_mono(const std::string& path, const MonoClip& clip) {
  write_wav(path, {&clip.samples}, clip.sample_rate);
}

StereoClip read_wav_stereo(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("wav: cannot open " + path);
  char tag[4];
  std::uint32_t u32;
  std::uint16_t fmt = 0, nch = 0, bits = 0;
  std::uint32_t rate = 0;
  is.read(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw std::runtime_error("wav: not a RIFF file");
  is.read(reinterpret_cast<char*>(&u32), 4);
  is.read(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw std::runtime_error("wav: not a WAVE file");
  StereoClip clip;
  while (is.read(tag, 4)) {
    std::uint32_t chunk;
    is.read(reinterpret_cast<char*>(&chunk), 4);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      is.read(reinterpret_cast<char*>(&fmt), 2);
      is.read(reinterpret_cast<char*>(&nch), 2);
      is.read(reinterpret_cast<char*>(&rate), 4);
      is.seekg(6, std::ios::cur);
      is.read(reinterpret_cast<char*>(&bits), 2);
      is.seekg(chunk - 16, std::ios::cur);
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (fmt != 3 || bits != 32 || nch != 2) throw std::runtime_error("wav: expected stereo 32-bit float data");
      const std::uint32_t nsamp = chunk / 8;
      clip.sample_rate = static_cast<int>(rate);
      clip.left.resize(nsamp);
      clip.right.resize(nsamp);
      for (std::uint32_t i = 0; i < nsamp; ++i) {
        float l, r;
        is.read(reinterpret_cast<char*>(&l), 4);
        is.read(reinterpret_cast<char*>(&r), 4);
        clip.left[i] = l;
        clip.right[i] = r;
      }
      return clip;
    } else {
      is.seekg(chunk, std::ios::cur);
    }
  }
  throw std::runtime_error("wav: no data chunk in " + path);
}

}  // namespace sclap
