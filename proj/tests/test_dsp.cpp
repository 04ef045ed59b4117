#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "ref/reference.hpp"
#include "sclap/dsp.hpp"
#include "sclap/rng.hpp"
#include "sclap/wav.hpp"
#include "test_util.hpp"

using namespace sclap;

namespace {
constexpr double kPi = 3.14159265358979323846;

std::vector<double> random_signal(std::size_t n, Rng& rng, double amp = 1.0) {
  std::vector<double> v(n);
  for (auto& s : v) s = rng.uniform(-amp, amp);
  return v;
}
}  // namespace

TEST_CASE("convolution identity and hand expansion") {
  MonoClip x{{1, 0, 0}, 16000};
  auto y = convolve(x, {1.0});
  CHECK(y.samples == std::vector<double>{1, 0, 0});

  auto z = convolve_raw({1, 2}, {3, 4});
  CHECK(z == std::vector<double>{3, 10, 8});

  CHECK_THROWS_AS(convolve_raw({}, {1.0}), std::invalid_argument);
}

TEST_CASE("convolution matches the double-loop oracle") {
  Rng rng(101);
  auto x = random_signal(300, rng);
  auto h = random_signal(50, rng);
  CHECK(testutil::max_abs_diff(convolve_raw(x, h), ref::naive_convolve(x, h)) < 1e-10);
}

TEST_CASE("fft path of convolution matches the oracle") {
  Rng rng(102);
  auto x = random_signal(3000, rng);
  auto h = random_signal(400, rng);  // product > 2^16 forces the fft path
  CHECK(testutil::max_abs_diff(convolve_raw(x, h), ref::naive_convolve(x, h)) < 1e-10);
}

TEST_CASE("convolution is linear") {
  Rng rng(103);
  auto a = random_signal(200, rng);
  auto b = random_signal(200, rng);
  auto h = random_signal(31, rng);
  std::vector<double> apb(200);
  for (int i = 0; i < 200; ++i) apb[i] = a[i] + b[i];
  auto lhs = convolve_raw(apb, h);
  auto ca = convolve_raw(a, h);
  auto cb = convolve_raw(b, h);
  for (std::size_t i = 0; i < lhs.size(); ++i) ca[i] += cb[i];
  CHECK(testutil::max_abs_diff(lhs, ca) < 1e-10);
}

TEST_CASE("mix basics") {
  StereoClip a{{1, 2}, {3, 4}, 16000};
  auto single = mix({a});
  CHECK(single.left == a.left);
  CHECK(single.right == a.right);

  StereoClip neg{{-1, -2}, {-3, -4}, 16000};
  auto silent = mix({a, neg});
  CHECK(peak_abs(silent.left) == 0.0);
  CHECK(peak_abs(silent.right) == 0.0);

  CHECK_THROWS_AS(mix({}), std::invalid_argument);
}

TEST_CASE("mix of three equals sequential scalar addition") {
  Rng rng(104);
  std::vector<StereoClip> clips;
  for (int i = 0; i < 3; ++i) {
    clips.push_back({random_signal(120 + 10 * i, rng), random_signal(120 + 10 * i, rng), 16000});
  }
  auto mixed = mix(clips);
  std::vector<double> l(mixed.length(), 0.0), r(mixed.length(), 0.0);
  for (const auto& c : clips)
    for (std::size_t i = 0; i < c.length(); ++i) {
      l[i] += c.left[i];
      r[i] += c.right[i];
    }
  CHECK(testutil::max_abs_diff(mixed.left, l) == 0.0);
  CHECK(testutil::max_abs_diff(mixed.right, r) == 0.0);
}

TEST_CASE("anechoic rir is a single scaled tap at the geometric delay") {
  RoomSpec room = make_room({6, 5, 3}, 0.2);
  room.absorption_override = 1.0;
  room.max_image_order = 0;
  // source 1 m in front of the left mic
  Point3 src = {room.mic_positions[0][0], room.mic_positions[0][1] + 1.0, room.mic_positions[0][2]};
  Rir rir = simulate_rir(room, src);

  const std::size_t expect_tap = 47;  // round(16000 * 1 / 343)
  int nonzero = 0;
  for (std::size_t i = 0; i < rir.h_left.size(); ++i) {
    if (rir.h_left[i] != 0.0) {
      ++nonzero;
      CHECK(i == expect_tap);
      CHECK(rir.h_left[i] == doctest::Approx(1.0 / (4.0 * kPi)).epsilon(1e-12));
    }
  }
  CHECK(nonzero == 1);
}

TEST_CASE("source on the mid-plane gives matching left and right responses") {
  RoomSpec room = make_room({6, 5, 3}, 0.18);
  const double cx = (room.mic_positions[0][0] + room.mic_positions[1][0]) / 2.0;
  Rir rir = simulate_rir(room, {cx, room.mic_positions[0][1] + 1.5, room.mic_positions[0][2]});
  CHECK(testutil::max_abs_diff(rir.h_left, rir.h_right) < 1e-12);
}

TEST_CASE("direct-path delay within one sample of geometry, both mics") {
  Rng rng(105);
  for (int trial = 0; trial < 10; ++trial) {
    RoomSpec room = make_room({rng.uniform(4, 7), rng.uniform(4, 7), rng.uniform(2.6, 3.4)}, rng.uniform(0.13, 0.26));
    Point3 src = {rng.uniform(0.5, room.dimensions[0] - 0.5), rng.uniform(0.5, room.dimensions[1] - 0.5),
                  rng.uniform(1.0, 2.0)};
    Rir rir = simulate_rir(room, src);
    for (int mic = 0; mic < 2; ++mic) {
      const auto& h = mic == 0 ? rir.h_left : rir.h_right;
      const Point3& m = room.mic_positions[mic];
      const double dx = src[0] - m[0], dy = src[1] - m[1], dz = src[2] - m[2];
      const double d = std::sqrt(dx * dx + dy * dy + dz * dz);
      std::size_t first = 0;
      while (first < h.size() && h[first] == 0.0) ++first;
      REQUIRE(first < h.size());
      CHECK(std::abs(static_cast<double>(first) - 16000.0 * d / kSpeedOfSound) <= 1.0);
    }
  }
}

TEST_CASE("a right-side source arrives earlier at the right mic") {
  RoomSpec room = make_room({6, 5, 3}, 0.2);
  const double cx = (room.mic_positions[0][0] + room.mic_positions[1][0]) / 2.0;
  Rir rir = simulate_rir(room, {cx + 1.2, room.mic_positions[0][1] + 1.2, room.mic_positions[0][2]});
  CHECK(rir.source_azimuth_deg > 0.0);
  std::size_t first_l = 0, first_r = 0;
  while (rir.h_left[first_l] == 0.0) ++first_l;
  while (rir.h_right[first_r] == 0.0) ++first_r;
  CHECK(first_r < first_l);
}

TEST_CASE("schroeder rt60 estimate lands within 25 percent of target") {
  // Rooms in the simulator's accurate regime: absorption ~[0.45, 0.62] and
  // sources at least 1 m from the array (the dataset sampler enforces both).
  Rng rng(106);
  for (int trial = 0; trial < 8; ++trial) {
    const double lx = rng.uniform(3.2, 5.5), ly = rng.uniform(3.2, 5.5), lz = rng.uniform(2.5, 3.1);
    const double v = lx * ly * lz, s = 2.0 * (lx * ly + lx * lz + ly * lz);
    const double rt = rng.uniform(std::max(0.13, 0.26 * v / s), std::min(0.26, 0.358 * v / s));
    RoomSpec room = make_room({lx, ly, lz}, rt);
    const double az = rng.uniform(-kPi, kPi);
    const double d = rng.uniform(1.0, 1.3);
    Point3 src = {lx / 2 + d * std::sin(az), ly / 2 + d * std::cos(az), rng.uniform(1.2, 1.8)};
    Rir rir = simulate_rir(room, src);
    const double est = ref::schroeder_rt60(rir.h_left, 16000.0);
    CHECK(std::abs(est - room.target_rt60) / room.target_rt60 < 0.25);
  }
}

TEST_CASE("rir rejects bad geometry") {
  RoomSpec room = make_room({6, 5, 3}, 0.2);
  CHECK_THROWS_AS(simulate_rir(room, {7.0, 2.0, 1.5}), std::invalid_argument);
  CHECK_THROWS_AS(simulate_rir(room, room.mic_positions[0]), std::invalid_argument);
}

TEST_CASE("stft of a bin-centered sine peaks at that bin in every frame") {
  const int window = 512, hop = 256, bin = 20;
  const double freq = static_cast<double>(bin) * 16000.0 / window;
  StereoClip clip;
  clip.sample_rate = 16000;
  clip.left.resize(4096);
  for (std::size_t i = 0; i < clip.left.size(); ++i) clip.left[i] = std::sin(2.0 * kPi * freq * i / 16000.0);
  clip.right = clip.left;
  auto feat = stft_features(clip, window, hop);
  for (int f = 0; f < feat.frames; ++f) {
    double peak = feat.mag_l(f, bin);
    for (int b = 0; b < feat.bins; ++b) {
      if (std::abs(b - bin) <= 1) continue;  // skip the peak and its window-leakage neighbors
      CHECK(peak >= 20.0 * feat.mag_l(f, b));
    }
  }
}

TEST_CASE("stft of silence is all zero") {
  StereoClip clip{std::vector<double>(2048, 0.0), std::vector<double>(2048, 0.0), 16000};
  auto feat = stft_features(clip);
  CHECK(peak_abs(feat.magnitude_left) == 0.0);
  CHECK(peak_abs(feat.magnitude_right) == 0.0);
}

TEST_CASE("stft matches the naive dft oracle") {
  Rng rng(107);
  StereoClip clip{random_signal(1800, rng), random_signal(1800, rng), 16000};
  const int window = 512, hop = 256;
  auto feat = stft_features(clip, window, hop);
  std::vector<double> hann(window);
  for (int i = 0; i < window; ++i) hann[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / window));
  for (int f = 0; f < feat.frames; ++f) {
    std::vector<double> frame(window);
    for (int i = 0; i < window; ++i) frame[i] = clip.left[f * hop + i] * hann[i];
    auto spectrum = ref::naive_dft(frame);
    for (int b = 0; b < feat.bins; ++b) {
      CHECK(std::abs(feat.mag_l(f, b) - std::abs(spectrum[b])) < 1e-8);
    }
  }
}

TEST_CASE("per-frame spectral energy obeys parseval at half-window hop") {
  Rng rng(108);
  StereoClip clip{random_signal(2048, rng), random_signal(2048, rng), 16000};
  const int window = 512, hop = 256;
  auto feat = stft_features(clip, window, hop);
  std::vector<double> hann(window);
  for (int i = 0; i < window; ++i) hann[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / window));
  for (int f = 0; f < feat.frames; ++f) {
    double time_energy = 0.0;
    for (int i = 0; i < window; ++i) {
      const double v = clip.left[f * hop + i] * hann[i];
      time_energy += v * v;
    }
    // one-sided spectrum: double the interior bins
    double spec_energy = feat.mag_l(f, 0) * feat.mag_l(f, 0);
    spec_energy += feat.mag_l(f, feat.bins - 1) * feat.mag_l(f, feat.bins - 1);
    for (int b = 1; b < feat.bins - 1; ++b) spec_energy += 2.0 * feat.mag_l(f, b) * feat.mag_l(f, b);
    spec_energy /= window;
    CHECK(std::abs(spec_energy - time_energy) < 1e-8);
  }
}

TEST_CASE("stft rejects short clips") {
  StereoClip clip{std::vector<double>(100, 0.1), std::vector<double>(100, 0.1), 16000};
  CHECK_THROWS_AS(stft_features(clip, 512, 256), std::invalid_argument);
}

TEST_CASE("phase stays in the half-open interval") {
  Rng rng(109);
  StereoClip clip{random_signal(1024, rng), random_signal(1024, rng), 16000};
  auto feat = stft_features(clip);
  for (double p : feat.phase_left) {
    CHECK(p > -kPi);
    CHECK(p <= kPi);
  }
}

TEST_CASE("wav round-trip preserves float samples and header layout") {
  Rng rng(110);
  StereoClip clip{random_signal(500, rng, 0.8), random_signal(500, rng, 0.8), 16000};
  const std::string path = "test_dsp_roundtrip.wav";
  write_wav_stereo(path, clip);

  // spot-check header bytes
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  REQUIRE(fp);
  unsigned char header[44];
  REQUIRE(std::fread(header, 1, 44, fp) == 44);
  std::fclose(fp);
  CHECK(std::memcmp(header, "RIFF", 4) == 0);
  CHECK(std::memcmp(header + 8, "WAVE", 4) == 0);
  CHECK(std::memcmp(header + 12, "fmt ", 4) == 0);
  CHECK(header[20] == 3);  // IEEE float
  CHECK(header[22] == 2);  // stereo
  CHECK(std::memcmp(header + 36, "data", 4) == 0);

  StereoClip back = read_wav_stereo(path);
  REQUIRE(back.length() == clip.length());
  CHECK(back.sample_rate == 16000);
  for (std::size_t i = 0; i < clip.length(); ++i) {
    CHECK(back.left[i] == static_cast<double>(static_cast<float>(clip.left[i])));
  }
  std::remove(path.c_str());
}
