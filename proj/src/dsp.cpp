#include "sclap/dsp.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace sclap {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void check_inside(const RoomSpec& room, const Point3& p, const char* what) {
  for (int i = 0; i < 3; ++i) {
    if (!(p[i] > 0.0 && p[i] < room.dimensions[i])) {
      throw std::invalid_argument(std::string(what) + " at (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                                  ", " + std::to_string(p[2]) + ") is outside the room");
    }
  }
}

double dist(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

void fft_inplace(std::vector<std::complex<double>>& buf, bool inverse) {
  const std::size_t n = buf.size();
  if (!is_pow2(n)) throw std::invalid_argument("fft: size " + std::to_string(n) + " is not a power of two");
  // bit-reversal permutation
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(buf[i], buf[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = buf[i + k];
        const std::complex<double> v = buf[i + k + len / 2] * w;
        buf[i + k] = u + v;
        buf[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

std::vector<double> convolve_raw(const std::vector<double>& x, const std::vector<double>& h) {
  if (x.empty() || h.empty()) throw std::invalid_argument("convolve: empty input");
  const std::size_t out_len = x.size() + h.size() - 1;
  // direct form for small products, FFT otherwise
  if (x.size() * h.size() <= (1u << 16)) {
    std::vector<double> out(out_len, 0.0);
#pragma omp parallel for if (out_len > 4096)
    for (long long n = 0; n < static_cast<long long>(out_len); ++n) {
      const std::size_t lo = n >= static_cast<long long>(h.size()) ? n - h.size() + 1 : 0;
      const std::size_t hi = std::min(static_cast<std::size_t>(n), x.size() - 1);
      double s = 0.0;
      for (std::size_t i = lo; i <= hi; ++i) s += x[i] * h[n - i];
      out[n] = s;
    }
    return out;
  }
  const std::size_t size = next_pow2(out_len);
  std::vector<std::complex<double>> fx(size), fh(size);
  for (std::size_t i = 0; i < x.size(); ++i) fx[i] = x[i];
  for (std::size_t i = 0; i < h.size(); ++i) fh[i] = h[i];
  fft_inplace(fx, false);
  fft_inplace(fh, false);
  for (std::size_t i = 0; i < size; ++i) fx[i] *= fh[i];
  fft_inplace(fx, true);
  std::vector<double> out(out_len);
  const double inv = 1.0 / static_cast<double>(size);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fx[i].real() * inv;
  return out;
}

MonoClip convolve(const MonoClip& x, const std::vector<double>& h) {
  return MonoClip{convolve_raw(x.samples, h), x.sample_rate};
}

StereoClip mix(const std::vector<StereoClip>& clips) {
  if (clips.empty()) throw std::invalid_argument("mix: empty clip list");
  const int rate = clips[0].sample_rate;
  std::size_t len = 0;
  for (const StereoClip& c : clips) {
    if (c.sample_rate != rate) throw std::invalid_argument("mix: sample rate mismatch");
    len = std::max(len, c.length());
  }
  StereoClip out;
  out.sample_rate = rate;
  out.left.assign(len, 0.0);
  out.right.assign(len, 0.0);
  for (const StereoClip& c : clips) {
    for (std::size_t i = 0; i < c.length(); ++i) {
      out.left[i] += c.left[i];
      out.right[i] += c.right[i];
    }
  }
  return out;
}

double peak_abs(const std::vector<double>& v) {
  double peak = 0.0;
  for (double s : v) peak = std::max(peak, std::abs(s));
  return peak;
}

RoomSpec make_room(Point3 dimensions, double target_rt60, double mic_spacing, double mic_height,
                   std::uint64_t seed) {
  if (mic_spacing <= 0.0) throw std::invalid_argument("room: mic spacing must be positive");
  RoomSpec room;
  room.dimensions = dimensions;
  room.target_rt60 = target_rt60;
  room.seed = seed;
  const double cx = dimensions[0] / 2.0, cy = dimensions[1] / 2.0;
  room.mic_positions[0] = {cx - mic_spacing / 2.0, cy, mic_height};
  room.mic_positions[1] = {cx + mic_spacing / 2.0, cy, mic_height};
  check_inside(room, room.mic_positions[0], "microphone");
  check_inside(room, room.mic_positions[1], "microphone");
  room.max_image_order = auto_image_order(room);
  return room;
}

int auto_image_order(const RoomSpec& room) {
  const double reach = kSpeedOfSound * 1.25 * room.target_rt60;
  const double min_dim = std::min({room.dimensions[0], room.dimensions[1], room.dimensions[2]});
  return std::max(1, static_cast<int>(std::ceil(reach / (2.0 * min_dim))) + 1);
}

double wall_absorption(const RoomSpec& room) {
  if (room.absorption_override >= 0.0) return room.absorption_override;
  const double sabine_exponent = 0.161 * room.volume() / (room.surface() * room.target_rt60);
  double alpha;
  if (room.absorption_model == AbsorptionModel::kSabine) {
    alpha = sabine_exponent;
  } else {
    alpha = 1.0 - std::exp(-sabine_exponent);
  }
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("room: absorption " + std::to_string(alpha) + " out of (0,1); rt60 " +
                                std::to_string(room.target_rt60) + " is infeasible for this geometry");
  }
  return alpha;
}

double azimuth_of(const RoomSpec& room, const Point3& source) {
  const Point3& ml = room.mic_positions[0];
  const Point3& mr = room.mic_positions[1];
  const double cx = (ml[0] + mr[0]) / 2.0, cy = (ml[1] + mr[1]) / 2.0;
  return std::atan2(source[0] - cx, source[1] - cy) * 180.0 / kPi;
}

Rir simulate_rir(const RoomSpec& room, const Point3& source) {
  check_inside(room, source, "source");
  for (const Point3& mic : room.mic_positions) {
    check_inside(room, mic, "microphone");
    if (dist(mic, source) < 1e-6) throw std::invalid_argument("source coincides with a microphone");
  }
  if (dist(room.mic_positions[0], room.mic_positions[1]) <= 0.0) {
    throw std::invalid_argument("mic spacing must be positive");
  }

  const double fs = static_cast<double>(kDefaultSampleRate);
  const double alpha = wall_absorption(room);
  const double beta = std::sqrt(std::max(0.0, 1.0 - alpha));  // amplitude reflection coefficient
  const int n = room.max_image_order;

  const double d_direct_max =
      std::max(dist(room.mic_positions[0], source), dist(room.mic_positions[1], source));
  const std::size_t len =
      static_cast<std::size_t>(std::ceil(fs * (d_direct_max / kSpeedOfSound + 1.25 * room.target_rt60))) + 2;

  Rir rir;
  rir.source_azimuth_deg = azimuth_of(room, source);
  rir.h_left.assign(len, 0.0);
  rir.h_right.assign(len, 0.0);

  // Slab decomposition over the (qx, nx) lattice axis: each slab owns private
  // tap buffers, merged in slab order, so results are thread-count invariant.
  const int slabs = 2 * (2 * n + 1);
  std::vector<std::vector<double>> acc_l(slabs), acc_r(slabs);
#pragma omp parallel for schedule(static)
  for (int slab = 0; slab < slabs; ++slab) {
    const int qx = slab % 2;
    const int nx = slab / 2 - n;
    auto& hl = acc_l[slab];
    auto& hr = acc_r[slab];
    hl.assign(len, 0.0);
    hr.assign(len, 0.0);
    const double img_x = (1 - 2 * qx) * source[0] + 2.0 * nx * room.dimensions[0];
    const int refl_x = std::abs(nx - qx) + std::abs(nx);
    for (int qy = 0; qy <= 1; ++qy)
      for (int ny = -n; ny <= n; ++ny) {
        const double img_y = (1 - 2 * qy) * source[1] + 2.0 * ny * room.dimensions[1];
        const int refl_xy = refl_x + std::abs(ny - qy) + std::abs(ny);
        for (int qz = 0; qz <= 1; ++qz)
          for (int nz = -n; nz <= n; ++nz) {
            const double img_z = (1 - 2 * qz) * source[2] + 2.0 * nz * room.dimensions[2];
            const int refl = refl_xy + std::abs(nz - qz) + std::abs(nz);
            if (beta == 0.0 && refl > 0) continue;
            const double gain_refl = std::pow(beta, refl);
            const Point3 img{img_x, img_y, img_z};
            for (int mic = 0; mic < 2; ++mic) {
              const double d = dist(room.mic_positions[mic], img);
              const std::size_t tap = static_cast<std::size_t>(std::llround(fs * d / kSpeedOfSound));
              if (tap >= len) continue;
              const double a = gain_refl / (4.0 * kPi * std::max(d, 1e-3));
              (mic == 0 ? hl : hr)[tap] += a;
            }
          }
      }
  }
  for (int slab = 0; slab < slabs; ++slab) {
    for (std::size_t i = 0; i < len; ++i) {
      rir.h_left[i] += acc_l[slab][i];
      rir.h_right[i] += acc_r[slab][i];
    }
  }
  return rir;
}

SpectrogramFeature stft_features(const StereoClip& clip, int window_size, int hop) {
  if (window_size < hop || hop <= 0) throw std::invalid_argument("stft: window must be >= hop > 0");
  if (clip.length() < static_cast<std::size_t>(window_size)) {
    throw std::invalid_argument("stft: clip of " + std::to_string(clip.length()) + " samples is shorter than one " +
                                std::to_string(window_size) + "-sample window");
  }
  if (clip.left.size() != clip.right.size()) throw std::invalid_argument("stft: channel length mismatch");
  const int frames = static_cast<int>((clip.length() - window_size) / hop) + 1;
  const int bins = window_size / 2 + 1;

  std::vector<double> window(window_size);
  for (int i = 0; i < window_size; ++i)
    window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / static_cast<double>(window_size)));

  SpectrogramFeature feat;
  feat.frames = frames;
  feat.bins = bins;
  feat.window_size = window_size;
  feat.frame_hop = hop;
  feat.magnitude_left.resize(static_cast<std::size_t>(frames) * bins);
  feat.magnitude_right.resize(static_cast<std::size_t>(frames) * bins);
  feat.phase_left.resize(static_cast<std::size_t>(frames) * bins);
  feat.phase_right.resize(static_cast<std::size_t>(frames) * bins);

  const bool pow2 = is_pow2(static_cast<std::size_t>(window_size));
#pragma omp parallel for schedule(static)
  for (int f = 0; f < frames; ++f) {
    std::vector<std::complex<double>> buf(window_size);
    for (int ch = 0; ch < 2; ++ch) {
      const std::vector<double>& sig = ch == 0 ? clip.left : clip.right;
      const std::size_t off = static_cast<std::size_t>(f) * hop;
      for (int i = 0; i < window_size; ++i) buf[i] = sig[off + i] * window[i];
      if (pow2) {
        fft_inplace(buf, false);
      } else {
        // naive DFT fallback for non-power-of-two windows
        std::vector<std::complex<double>> out(window_size);
        for (int k = 0; k < window_size; ++k) {
          std::complex<double> acc(0.0, 0.0);
          for (int t = 0; t < window_size; ++t) {
            const double ph = -2.0 * kPi * k * t / static_cast<double>(window_size);
            acc += buf[t].real() * std::complex<double>(std::cos(ph), std::sin(ph));
          }
          out[k] = acc;
        }
        buf = std::move(out);
      }
      std::vector<double>& mag = ch == 0 ? feat.magnitude_left : feat.magnitude_right;
      std::vector<double>& pha = ch == 0 ? feat.phase_left : feat.phase_right;
      for (int b = 0; b < bins; ++b) {
        const std::size_t idx = static_cast<std::size_t>(f) * bins + b;
        mag[idx] = std::abs(buf[b]);
        double p = std::atan2(buf[b].imag(), buf[b].real());
        if (p == -kPi) p = kPi;
        pha[idx] = p;
      }
    }
  }
  return feat;
}

}  // namespace sclap
