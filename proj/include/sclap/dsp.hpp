#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <vector>

namespace sclap {

inline constexpr double kSpeedOfSound = 343.0;  // m/s
inline constexpr int kDefaultSampleRate = 16000;

struct MonoClip {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;
};

struct StereoClip {
  std::vector<double> left;
  std::vector<double> right;
  int sample_rate = kDefaultSampleRate;

  std::size_t length() const { return left.size(); }
};

using Point3 = std::array<double, 3>;

enum class AbsorptionModel {
  // alpha = 0.161 V / (S rt60). Tracks measured Schroeder RT60 well for
  // alpha <= ~0.62; room sampling keeps absorption in that regime.
  kSabine,
  // alpha = 1 - exp(-0.161 V / (S rt60)); alternative inversion, runs long
  // on measured RT60 in this simulator.
  kEyring,
};

struct RoomSpec {
  Point3 dimensions{6.0, 5.0, 3.0};       // Lx, Ly, Lz meters
  double target_rt60 = 0.2;               // seconds
  std::array<Point3, 2> mic_positions{};  // [left, right]
  int max_image_order = 0;                // per-axis lattice bound; 0 = direct path only
  std::uint64_t seed = 0;
  AbsorptionModel absorption_model = AbsorptionModel::kSabine;
  double absorption_override = -1.0;  // >= 0 forces alpha (1.0 = anechoic walls)

  double volume() const { return dimensions[0] * dimensions[1] * dimensions[2]; }
  double surface() const {
    const auto& d = dimensions;
    return 2.0 * (d[0] * d[1] + d[0] * d[2] + d[1] * d[2]);
  }
};

// Mic pair on the x-axis centered in the room at the given height; front is +y.
RoomSpec make_room(Point3 dimensions, double target_rt60, double mic_spacing = 0.2, double mic_height = 1.5,
                   std::uint64_t seed = 0);

// Per-axis image order needed to cover the late tail for this room.
int auto_image_order(const RoomSpec& room);

// Uniform wall absorption for the room under its configured model.
double wall_absorption(const RoomSpec& room);

struct Rir {
  std::vector<double> h_left;
  std::vector<double> h_right;
  double source_azimuth_deg = 0.0;  // true (unfolded) azimuth; +right of front axis
};

// Azimuth of a point relative to the mic pair's front axis (+y), in degrees;
// negative = left (-x side), computed in the horizontal plane.
double azimuth_of(const RoomSpec& room, const Point3& source);

// Shoebox image-source simulation for both mics.
Rir simulate_rir(const RoomSpec& room, const Point3& source);

// Full linear convolution, length = len(x) + len(h) - 1.
MonoClip convolve(const MonoClip& x, const std::vector<double>& h);
std::vector<double> convolve_raw(const std::vector<double>& x, const std::vector<double>& h);

// Sample-wise sum; inputs are zero-padded to the longest. No renormalization.
StereoClip mix(const std::vector<StereoClip>& clips);

struct SpectrogramFeature {
  int frames = 0;
  int bins = 0;  // window/2 + 1
  int window_size = 0;
  int frame_hop = 0;
  // frames x bins, row-major
  std::vector<double> magnitude_left, magnitude_right;
  std::vector<double> phase_left, phase_right;  // wrapped to (-pi, pi]

  double mag_l(int f, int b) const { return magnitude_left[static_cast<std::size_t>(f) * bins + b]; }
  double mag_r(int f, int b) const { return magnitude_right[static_cast<std::size_t>(f) * bins + b]; }
  double ph_l(int f, int b) const { return phase_left[static_cast<std::size_t>(f) * bins + b]; }
  double ph_r(int f, int b) const { return phase_right[static_cast<std::size_t>(f) * bins + b]; }
};

// Hann-windowed STFT magnitude/phase for both channels.
// frames = floor((len - window) / hop) + 1.
SpectrogramFeature stft_features(const StereoClip& clip, int window_size = 512, int hop = 256);

// In-place radix-2 complex FFT (size must be a power of two). inverse=true
// applies the unscaled conjugate transform; caller divides by n.
void fft_inplace(std::vector<std::complex<double>>& buf, bool inverse);

double peak_abs(const std::vector<double>& v);

}  // namespace sclap
