#include "sclap/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sclap/wav.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sclap {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
using ordered_json = nlohmann::ordered_json;

}  // namespace

// --- DoA classes ---

namespace {
constexpr const char* kDoaLabels[kNumDoaClasses] = {"front-left", "front", "front-right", "left", "right"};
constexpr double kDoaAzimuths[kNumDoaClasses] = {-45.0, 0.0, 45.0, -90.0, 90.0};
}  // namespace

const char* doa_label(DoaClass c) { return kDoaLabels[static_cast<int>(c)]; }
double doa_canonical_azimuth(DoaClass c) { return kDoaAzimuths[static_cast<int>(c)]; }

std::optional<DoaClass> doa_from_label(const std::string& label) {
  for (int i = 0; i < kNumDoaClasses; ++i) {
    if (label == kDoaLabels[i]) return static_cast<DoaClass>(i);
  }
  return std::nullopt;
}

double fold_azimuth(double azimuth_deg) {
  if (std::abs(azimuth_deg) <= 90.0) return azimuth_deg;
  const double sign = azimuth_deg >= 0.0 ? 1.0 : -1.0;
  return sign * (180.0 - std::abs(azimuth_deg));
}

DoaClass classify_doa(double folded_azimuth_deg) {
  if (folded_azimuth_deg < -90.0 || folded_azimuth_deg > 90.0) {
    throw std::out_of_range("classify_doa: folded azimuth " + std::to_string(folded_azimuth_deg) +
                            " outside [-90, 90]");
  }
  int best = 0;
  double best_dist = 1e9, best_abs = 1e9;
  for (int i = 0; i < kNumDoaClasses; ++i) {
    const double dist = std::abs(folded_azimuth_deg - kDoaAzimuths[i]);
    const double canon_abs = std::abs(kDoaAzimuths[i]);
    // midpoint ties break toward the class nearer front
    if (dist < best_dist - 1e-12 || (std::abs(dist - best_dist) <= 1e-12 && canon_abs < best_abs)) {
      best = i;
      best_dist = dist;
      best_abs = canon_abs;
    }
  }
  return static_cast<DoaClass>(best);
}

// --- phrase grammar ---

namespace {

const char* duration_word(double dur) { return dur < 1.0 ? "brief" : "long"; }

const char* tone_pitch_word(double f) {
  if (f < 250.0) return "deep";
  if (f < 450.0) return "low";
  if (f < 900.0) return "mid-pitched";
  if (f < 1600.0) return "high";
  return "piercing";
}

const char* chirp_slope_word(double ratio) {
  if (ratio < 3.0) return "gradually";
  if (ratio < 4.5) return "";
  return "steeply";
}

const char* am_rate_word(double r) {
  if (r < 5.0) return "slowly";
  if (r < 10.0) return "";
  return "rapidly";
}

const char* click_rate_word(double r) {
  if (r < 8.0) return "sparse";
  if (r < 16.0) return "steady";
  return "rapid";
}

const char* drone_pitch_word(double f) {
  if (f < 180.0) return "deep";
  if (f < 320.0) return "mellow";
  return "bright";
}

const char* siren_rate_word(double r) {
  if (r < 1.5) return "slow";
  if (r < 2.6) return "steady";
  return "fast";
}

std::string join_words(std::initializer_list<const char*> words) {
  std::string out;
  for (const char* w : words) {
    if (w == nullptr || w[0] == '\0') continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

std::string phrase_of(const SoundEvent& e) {
  const char* dur = duration_word(e.duration_s);
  switch (e.event_class) {
    case EventClass::kTone:
      return join_words({"a", dur, e.texture_a == 0 ? "steady" : "wavering", tone_pitch_word(e.freq_a), "tone"});
    case EventClass::kChirpUp:
      return join_words({"a", dur, chirp_slope_word(e.freq_b / e.freq_a), "rising", "chirp"});
    case EventClass::kChirpDown:
      return join_words({"a", dur, chirp_slope_word(e.freq_a / e.freq_b), "falling", "chirp"});
    case EventClass::kNoiseBurst: {
      const char* band = e.texture_a == 0 ? "rumbling" : (e.texture_a == 1 ? "harsh" : "hissing");
      return join_words({"a", dur, e.texture_b == 0 ? "sharp" : "soft", band, "noise", "burst"});
    }
    case EventClass::kAmNoise:
      return join_words(
          {"a", dur, am_rate_word(e.rate), "pulsing", e.texture_a == 0 ? "soft" : "harsh", "noise"});
    case EventClass::kClickTrain:
      return join_words(
          {"a", dur, click_rate_word(e.rate), e.texture_a == 0 ? "bright" : "dull", "click", "train"});
    case EventClass::kHarmonicStack:
      return join_words(
          {"a", dur, drone_pitch_word(e.freq_a), e.texture_a == 0 ? "smooth" : "buzzing", "drone"});
    case EventClass::kSiren:
      return join_words({"a", dur, siren_rate_word(e.rate), e.freq_a < 700.0 ? "low" : "high", "siren"});
  }
  throw std::logic_error("phrase_of: unknown event class");
}

std::optional<EventClass> event_class_of_phrase(const std::string& phrase) {
  if (phrase.find(" noise burst") != std::string::npos) return EventClass::kNoiseBurst;
  if (phrase.find(" pulsing ") != std::string::npos) return EventClass::kAmNoise;
  if (phrase.find(" tone") != std::string::npos) return EventClass::kTone;
  if (phrase.find(" rising chirp") != std::string::npos) return EventClass::kChirpUp;
  if (phrase.find(" falling chirp") != std::string::npos) return EventClass::kChirpDown;
  if (phrase.find(" click train") != std::string::npos) return EventClass::kClickTrain;
  if (phrase.find(" drone") != std::string::npos) return EventClass::kHarmonicStack;
  if (phrase.find(" siren") != std::string::npos) return EventClass::kSiren;
  return std::nullopt;
}

namespace {

double sample_duration(Rng& rng, int bucket) {
  return bucket == 0 ? rng.uniform(0.82, 0.98) : rng.uniform(1.02, 1.18);
}

}  // namespace

std::vector<SoundEvent> enumerate_phrase_events(Rng& rng) {
  std::vector<SoundEvent> out;
  auto base = [&](EventClass cls, int dur_bucket) {
    SoundEvent e;
    e.event_class = cls;
    e.duration_s = sample_duration(rng, dur_bucket);
    e.seed = rng.next_u64();
    return e;
  };
  for (int dur = 0; dur < 2; ++dur) {
    // tone: 5 pitch x 2 texture
    static constexpr double pitch_lo[5] = {155, 255, 455, 905, 1605};
    static constexpr double pitch_hi[5] = {245, 445, 895, 1595, 2395};
    for (int p = 0; p < 5; ++p)
      for (int tex = 0; tex < 2; ++tex) {
        SoundEvent e = base(EventClass::kTone, dur);
        e.freq_a = rng.uniform(pitch_lo[p], pitch_hi[p]);
        e.texture_a = tex;
        out.push_back(e);
      }
    // chirps: 3 slopes each direction
    static constexpr double slope_lo[3] = {2.05, 3.05, 4.55};
    static constexpr double slope_hi[3] = {2.9, 4.4, 5.9};
    for (int s = 0; s < 3; ++s) {
      SoundEvent up = base(EventClass::kChirpUp, dur);
      up.freq_a = rng.uniform(150, 600);
      up.freq_b = up.freq_a * rng.uniform(slope_lo[s], slope_hi[s]);
      out.push_back(up);
      SoundEvent down = base(EventClass::kChirpDown, dur);
      down.freq_b = rng.uniform(150, 600);
      down.freq_a = down.freq_b * rng.uniform(slope_lo[s], slope_hi[s]);
      out.push_back(down);
    }
    // noise burst: 3 bands x 2 attacks
    for (int band = 0; band < 3; ++band)
      for (int attack = 0; attack < 2; ++attack) {
        SoundEvent e = base(EventClass::kNoiseBurst, dur);
        e.texture_a = band;
        e.texture_b = attack;
        out.push_back(e);
      }
    // am noise: 3 rates x 2 tones
    static constexpr double am_lo[3] = {2.1, 5.1, 10.1};
    static constexpr double am_hi[3] = {4.9, 9.9, 15.9};
    for (int r = 0; r < 3; ++r)
      for (int tex = 0; tex < 2; ++tex) {
        SoundEvent e = base(EventClass::kAmNoise, dur);
        e.rate = rng.uniform(am_lo[r], am_hi[r]);
        e.texture_a = tex;
        out.push_back(e);
      }
    // click train: 3 rates x 2 colors
    static constexpr double click_lo[3] = {3.2, 8.2, 16.2};
    static constexpr double click_hi[3] = {7.8, 15.8, 24.5};
    for (int r = 0; r < 3; ++r)
      for (int tex = 0; tex < 2; ++tex) {
        SoundEvent e = base(EventClass::kClickTrain, dur);
        e.rate = rng.uniform(click_lo[r], click_hi[r]);
        e.texture_a = tex;
        out.push_back(e);
      }
    // drone: 3 pitches x 2 textures
    static constexpr double drone_lo[3] = {105, 185, 325};
    static constexpr double drone_hi[3] = {175, 315, 495};
    for (int p = 0; p < 3; ++p)
      for (int tex = 0; tex < 2; ++tex) {
        SoundEvent e = base(EventClass::kHarmonicStack, dur);
        e.freq_a = rng.uniform(drone_lo[p], drone_hi[p]);
        e.texture_a = tex;
        out.push_back(e);
      }
    // siren: 3 rates x 2 registers
    static constexpr double siren_lo[3] = {0.55, 1.55, 2.65};
    static constexpr double siren_hi[3] = {1.45, 2.55, 3.9};
    for (int r = 0; r < 3; ++r)
      for (int reg = 0; reg < 2; ++reg) {
        SoundEvent e = base(EventClass::kSiren, dur);
        e.rate = rng.uniform(siren_lo[r], siren_hi[r]);
        e.freq_a = reg == 0 ? rng.uniform(320, 680) : rng.uniform(720, 1380);
        out.push_back(e);
      }
  }
  return out;
}

SoundEvent sample_event(Rng& rng) {
  SoundEvent e;
  e.event_class = static_cast<EventClass>(rng.uniform_int(0, kNumEventClasses - 1));
  e.duration_s = rng.uniform(0.82, 1.18);
  e.seed = rng.next_u64();
  switch (e.event_class) {
    case EventClass::kTone:
      e.freq_a = std::exp(rng.uniform(std::log(155.0), std::log(2395.0)));
      e.texture_a = static_cast<int>(rng.uniform_int(0, 1));
      break;
    case EventClass::kChirpUp:
      e.freq_a = rng.uniform(150, 600);
      e.freq_b = e.freq_a * rng.uniform(2.05, 5.9);
      break;
    case EventClass::kChirpDown:
      e.freq_b = rng.uniform(150, 600);
      e.freq_a = e.freq_b * rng.uniform(2.05, 5.9);
      break;
    case EventClass::kNoiseBurst:
      e.texture_a = static_cast<int>(rng.uniform_int(0, 2));
      e.texture_b = static_cast<int>(rng.uniform_int(0, 1));
      break;
    case EventClass::kAmNoise:
      e.rate = rng.uniform(2.1, 15.9);
      e.texture_a = static_cast<int>(rng.uniform_int(0, 1));
      break;
    case EventClass::kClickTrain:
      e.rate = rng.uniform(3.2, 24.5);
      e.texture_a = static_cast<int>(rng.uniform_int(0, 1));
      break;
    case EventClass::kHarmonicStack:
      e.freq_a = rng.uniform(105, 495);
      e.texture_a = static_cast<int>(rng.uniform_int(0, 1));
      break;
    case EventClass::kSiren:
      e.rate = rng.uniform(0.55, 3.9);
      e.freq_a = rng.uniform() < 0.5 ? rng.uniform(320, 680) : rng.uniform(720, 1380);
      break;
  }
  return e;
}

// --- synthesis ---

namespace {

void apply_envelope(std::vector<double>& x, double fs, double attack_s, double release_s) {
  const std::size_t n = x.size();
  const std::size_t a = std::min(n, static_cast<std::size_t>(attack_s * fs));
  const std::size_t r = std::min(n, static_cast<std::size_t>(release_s * fs));
  for (std::size_t i = 0; i < a; ++i) x[i] *= 0.5 * (1.0 - std::cos(kPi * (i + 1.0) / a));
  for (std::size_t i = 0; i < r; ++i) x[n - 1 - i] *= 0.5 * (1.0 - std::cos(kPi * (i + 1.0) / r));
}

void one_pole_lowpass(std::vector<double>& x, double fc, double fs) {
  const double a = 1.0 - std::exp(-2.0 * kPi * fc / fs);
  double y = 0.0;
  for (double& v : x) {
    y += a * (v - y);
    v = y;
  }
}

void one_pole_highpass(std::vector<double>& x, double fc, double fs) {
  const double a = 1.0 - std::exp(-2.0 * kPi * fc / fs);
  double y = 0.0;
  for (double& v : x) {
    y += a * (v - y);
    v -= y;
  }
}

}  // namespace

MonoClip render_event(const SoundEvent& e) {
  const double fs = static_cast<double>(kDefaultSampleRate);
  if (e.duration_s < 0.1 || e.duration_s > 2.5) {
    throw std::invalid_argument("render_event: duration " + std::to_string(e.duration_s) + " out of range");
  }
  const std::size_t n = static_cast<std::size_t>(std::llround(e.duration_s * fs));
  Rng rng(e.seed == 0 ? 0x5cda9e1ull : e.seed);
  std::vector<double> x(n, 0.0);

  switch (e.event_class) {
    case EventClass::kTone: {
      double phase = rng.uniform(0.0, 2.0 * kPi);
      const double vib_phase = rng.uniform(0.0, 2.0 * kPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = i / fs;
        const double f =
            e.texture_a == 0 ? e.freq_a : e.freq_a * (1.0 + 0.03 * std::sin(2.0 * kPi * 5.0 * t + vib_phase));
        phase += 2.0 * kPi * f / fs;
        x[i] = std::sin(phase);
      }
      apply_envelope(x, fs, 0.01, 0.05);
      break;
    }
    case EventClass::kChirpUp:
    case EventClass::kChirpDown: {
      double phase = rng.uniform(0.0, 2.0 * kPi);
      const double lr = std::log(e.freq_b / e.freq_a);
      for (std::size_t i = 0; i < n; ++i) {
        const double f = e.freq_a * std::exp(lr * (static_cast<double>(i) / n));
        phase += 2.0 * kPi * f / fs;
        x[i] = std::sin(phase);
      }
      apply_envelope(x, fs, 0.01, 0.05);
      break;
    }
    case EventClass::kNoiseBurst: {
      for (double& v : x) v = rng.normal();
      if (e.texture_a == 0) {
        one_pole_lowpass(x, 400.0, fs);
        one_pole_lowpass(x, 400.0, fs);
      } else if (e.texture_a == 1) {
        one_pole_highpass(x, 700.0, fs);
        one_pole_lowpass(x, 2600.0, fs);
      } else {
        one_pole_highpass(x, 2500.0, fs);
        one_pole_highpass(x, 2500.0, fs);
      }
      apply_envelope(x, fs, e.texture_b == 0 ? 0.005 : 0.15, 0.12);
      break;
    }
    case EventClass::kAmNoise: {
      const double mod_phase = rng.uniform(0.0, 2.0 * kPi);
      for (double& v : x) v = rng.normal();
      if (e.texture_a == 0) one_pole_lowpass(x, 1500.0, fs);
      for (std::size_t i = 0; i < n; ++i) {
        x[i] *= 0.55 + 0.45 * std::sin(2.0 * kPi * e.rate * i / fs + mod_phase);
      }
      apply_envelope(x, fs, 0.02, 0.08);
      break;
    }
    case EventClass::kClickTrain: {
      const double period = fs / e.rate;
      const std::size_t click_len = static_cast<std::size_t>(0.003 * fs);
      for (double onset = 0.0; onset + click_len < n; onset += period) {
        const std::size_t o = static_cast<std::size_t>(onset);
        for (std::size_t i = 0; i < click_len; ++i) {
          x[o + i] += rng.normal() * std::exp(-static_cast<double>(i) / (0.001 * fs));
        }
      }
      if (e.texture_a == 0)
        one_pole_highpass(x, 3000.0, fs);
      else
        one_pole_lowpass(x, 1200.0, fs);
      apply_envelope(x, fs, 0.002, 0.02);
      break;
    }
    case EventClass::kHarmonicStack: {
      const int partials = e.texture_a == 0 ? 4 : 9;
      for (int k = 1; k <= partials; ++k) {
        if (e.freq_a * k > 0.45 * fs) break;
        const double amp = e.texture_a == 0 ? 1.0 / (k * k) : 1.0 / k;
        const double ph0 = rng.uniform(0.0, 2.0 * kPi);
        const double w = 2.0 * kPi * e.freq_a * k / fs;
        for (std::size_t i = 0; i < n; ++i) x[i] += amp * std::sin(w * i + ph0);
      }
      apply_envelope(x, fs, 0.06, 0.1);
      break;
    }
    case EventClass::kSiren: {
      double phase = rng.uniform(0.0, 2.0 * kPi);
      const double mod_phase = rng.uniform(0.0, 2.0 * kPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = i / fs;
        const double f = e.freq_a * (1.0 + 0.25 * std::sin(2.0 * kPi * e.rate * t + mod_phase));
        phase += 2.0 * kPi * f / fs;
        x[i] = std::sin(phase);
      }
      apply_envelope(x, fs, 0.02, 0.05);
      break;
    }
  }

  const double peak = peak_abs(x);
  if (peak < 1e-9) throw std::invalid_argument("render_event: degenerate event with zero amplitude");
  const double g = 0.9 / peak;
  for (double& v : x) v *= g;
  return MonoClip{std::move(x), kDefaultSampleRate};
}

// --- captions ---

std::string compose_caption(const std::vector<std::pair<std::string, DoaClass>>& sources) {
  if (sources.empty()) throw std::invalid_argument("compose_caption: empty source list");
  if (sources.size() > 3) throw std::invalid_argument("compose_caption: more than 3 sources");
  std::string out;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (i) out += ", and ";
    out += sources[i].first;
    out += " in the ";
    out += doa_label(sources[i].second);
  }
  return out;
}

std::vector<std::pair<std::string, DoaClass>> parse_caption(const std::string& caption) {
  std::vector<std::pair<std::string, DoaClass>> out;
  std::size_t pos = 0;
  while (pos <= caption.size()) {
    std::size_t next = caption.find(", and ", pos);
    const std::string clause = caption.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    const std::size_t sep = clause.rfind(" in the ");
    if (sep == std::string::npos) throw std::invalid_argument("parse_caption: clause without a DoA phrase: " + clause);
    const std::string phrase = clause.substr(0, sep);
    const std::string label = clause.substr(sep + 8);
    auto doa = doa_from_label(label);
    if (!doa) throw std::invalid_argument("parse_caption: unknown DoA label: " + label);
    if (phrase.empty()) throw std::invalid_argument("parse_caption: empty content phrase");
    out.emplace_back(phrase, *doa);
    if (next == std::string::npos) break;
    pos = next + 6;
  }
  if (out.empty()) throw std::invalid_argument("parse_caption: empty caption");
  return out;
}

// --- scene rendering ---

const Rir& RirCache::get(const RoomSpec& room, int room_index, const Point3& position) {
  char key[64];
  std::memcpy(key, &room_index, sizeof(int));
  std::memcpy(key + sizeof(int), position.data(), 3 * sizeof(double));
  std::string k(key, sizeof(int) + 3 * sizeof(double));
  const Rir* found = nullptr;
#ifdef _OPENMP
#pragma omp critical(sclap_rir_cache)
#endif
  {
    auto it = cache_.find(k);
    if (it == cache_.end()) {
      Rir rir = simulate_rir(room, position);
      it = cache_.emplace(std::move(k), std::move(rir)).first;
    }
    // node-based map: the reference stays valid across later inserts
    found = &it->second;
  }
  return *found;
}

void render_scene(SpatialScene& scene, const std::vector<RoomSpec>& rooms, RirCache& cache) {
  if (scene.sources.empty() || scene.sources.size() > 3) {
    throw std::invalid_argument("render_scene: scene must have 1..3 sources");
  }
  if (scene.room_index < 0 || scene.room_index >= static_cast<int>(rooms.size())) {
    throw std::invalid_argument("render_scene: bad room index");
  }
  const RoomSpec& room = rooms[scene.room_index];
  const int n = static_cast<int>(scene.sources.size());
  if (static_cast<int>(scene.permutation.size()) != n) {
    throw std::invalid_argument("render_scene: permutation size mismatch");
  }

  std::vector<StereoClip> placed;
  std::size_t natural_len = 0;
  for (int i = 0; i < n; ++i) {
    const SceneSource& src = scene.sources[i];
    const SceneSource& slot = scene.sources[scene.permutation[i]];
    const Rir& rir = cache.get(room, scene.room_index, slot.position);
    MonoClip dry = render_event(src.event);
    const double g = std::pow(10.0, src.gain_db / 20.0);
    for (double& v : dry.samples) v *= g;
    StereoClip wet;
    wet.sample_rate = dry.sample_rate;
    wet.left = convolve_raw(dry.samples, rir.h_left);
    wet.right = convolve_raw(dry.samples, rir.h_right);
    if (src.onset < 0) throw std::invalid_argument("render_scene: negative onset");
    if (src.onset > 0) {
      wet.left.insert(wet.left.begin(), src.onset, 0.0);
      wet.right.insert(wet.right.begin(), src.onset, 0.0);
    }
    natural_len = std::max(natural_len, wet.length());
    placed.push_back(std::move(wet));
  }
  const std::size_t target = scene.scene_len > 0 ? static_cast<std::size_t>(scene.scene_len) : natural_len;
  if (natural_len > target) {
    throw std::invalid_argument("render_scene: scene_len " + std::to_string(target) + " too short for mixture of " +
                                std::to_string(natural_len) + " samples");
  }
  for (StereoClip& c : placed) {
    c.left.resize(target, 0.0);
    c.right.resize(target, 0.0);
  }
  StereoClip mixed = mix(placed);
  const double peak = std::max(peak_abs(mixed.left), peak_abs(mixed.right));
  if (peak < 1e-12) throw std::invalid_argument("render_scene: silent mixture");
  scene.norm_gain = 0.9 / peak;
  for (double& v : mixed.left) v *= scene.norm_gain;
  for (double& v : mixed.right) v *= scene.norm_gain;
  scene.audio = std::move(mixed);
}

namespace {

std::string caption_for_permutation(const SpatialScene& scene, const std::vector<int>& perm) {
  std::vector<std::pair<std::string, DoaClass>> pairs;
  for (std::size_t i = 0; i < scene.sources.size(); ++i) {
    pairs.emplace_back(phrase_of(scene.sources[i].event), scene.sources[perm[i]].doa);
  }
  return compose_caption(pairs);
}

}  // namespace

SpatialScene build_scene(const std::vector<SoundEvent>& events, const RoomSpec& room,
                         const std::vector<Point3>& source_positions, const std::vector<double>& gains_db,
                         const std::vector<int>& onsets, int scene_len) {
  if (events.empty() || events.size() > 3) throw std::invalid_argument("build_scene: need 1..3 sources");
  if (events.size() != source_positions.size() || events.size() != gains_db.size()) {
    throw std::invalid_argument("build_scene: events/positions/gains size mismatch");
  }
  SpatialScene scene;
  scene.room_index = 0;
  scene.scene_len = scene_len;
  for (std::size_t i = 0; i < events.size(); ++i) {
    SceneSource src;
    src.event = events[i];
    src.position = source_positions[i];
    src.azimuth_true_deg = azimuth_of(room, src.position);
    src.folded_azimuth_deg = fold_azimuth(src.azimuth_true_deg);
    src.doa = classify_doa(src.folded_azimuth_deg);
    src.gain_db = gains_db[i];
    src.onset = onsets.empty() ? 0 : onsets[i];
    scene.sources.push_back(src);
    scene.permutation.push_back(static_cast<int>(i));
  }
  scene.caption = caption_for_permutation(scene, scene.permutation);
  std::vector<RoomSpec> rooms{room};
  RirCache cache;
  render_scene(scene, rooms, cache);
  return scene;
}

SclGroup scl_permute(const SpatialScene& scene, const std::vector<RoomSpec>& rooms, RirCache& cache) {
  const int n = static_cast<int>(scene.sources.size());
  if (n < 2) {
    throw std::invalid_argument("scl_permute: a single-source scene has no permuted variants");
  }
  if (n > 3) throw std::invalid_argument("scl_permute: more than 3 sources");
  for (int i = 0; i < n; ++i) {
    if (scene.permutation[i] != i)
      throw std::invalid_argument("scl_permute: input must carry the identity assignment");
  }
  SclGroup group;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  do {
    SpatialScene variant = scene;
    variant.permutation = perm;
    bool identity = true;
    for (int i = 0; i < n; ++i) identity = identity && perm[i] == i;
    if (!identity) {
      std::string tag = "#p";
      for (int i : perm) tag += static_cast<char>('0' + i);
      variant.id += tag;
      variant.caption = caption_for_permutation(scene, perm);
      variant.audio = StereoClip{};
      render_scene(variant, rooms, cache);
    } else if (variant.audio.length() == 0) {
      render_scene(variant, rooms, cache);
    }
    group.scenes.push_back(std::move(variant));
    group.permutations.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return group;
}

// --- dataset generation ---

namespace {

struct AzimuthCell {
  double lo, hi;
};

// sampling cells stay clear of the +-22.5 / +-67.5 midpoints
AzimuthCell doa_cell(DoaClass c) {
  switch (c) {
    case DoaClass::kFrontLeft: return {-63.0, -27.0};
    case DoaClass::kFront: return {-18.0, 18.0};
    case DoaClass::kFrontRight: return {27.0, 63.0};
    case DoaClass::kLeft: return {-88.0, -70.0};
    case DoaClass::kRight: return {70.0, 88.0};
  }
  throw std::logic_error("doa_cell");
}

RoomSpec sample_room_impl(Rng& rng, double mic_spacing) {
  const double lx = rng.uniform(3.2, 5.5);
  const double ly = rng.uniform(3.2, 5.5);
  const double lz = rng.uniform(2.5, 3.1);
  const double v = lx * ly * lz;
  const double s = 2.0 * (lx * ly + lx * lz + ly * lz);
  // keep absorption in the regime where Sabine inversion tracks measured RT60
  const double rt_lo = std::max(0.13, 0.26 * v / s);
  const double rt_hi = std::min(0.26, 0.358 * v / s);
  const double rt = rng.uniform(rt_lo, rt_hi);
  return make_room({lx, ly, lz}, rt, mic_spacing, 1.5);
}

// position realizing the requested folded azimuth; rear placements mirror
// through the fold
Point3 sample_position(const RoomSpec& room, double folded_az, bool rear, Rng& rng) {
  double az_true = folded_az;
  if (rear) az_true = folded_az >= 0.0 ? 180.0 - folded_az : -180.0 - folded_az;
  const double ux = std::sin(az_true * kDegToRad);
  const double uy = std::cos(az_true * kDegToRad);
  const double cx = room.dimensions[0] / 2.0, cy = room.dimensions[1] / 2.0;
  const double margin = 0.5;
  double dmax = 1e9;
  if (ux > 1e-9) dmax = std::min(dmax, (room.dimensions[0] - margin - cx) / ux);
  if (ux < -1e-9) dmax = std::min(dmax, (margin - cx) / ux);
  if (uy > 1e-9) dmax = std::min(dmax, (room.dimensions[1] - margin - cy) / uy);
  if (uy < -1e-9) dmax = std::min(dmax, (margin - cy) / uy);
  dmax = std::min(dmax, 2.6);
  const double d = rng.uniform(1.0, dmax);
  return {cx + d * ux, cy + d * uy, rng.uniform(1.2, 1.8)};
}

int rir_length_for(const RoomSpec& room, const Point3& source) {
  const double fs = static_cast<double>(kDefaultSampleRate);
  double dmax = 0.0;
  for (const Point3& mic : room.mic_positions) {
    const double dx = source[0] - mic[0], dy = source[1] - mic[1], dz = source[2] - mic[2];
    dmax = std::max(dmax, std::sqrt(dx * dx + dy * dy + dz * dz));
  }
  return static_cast<int>(std::ceil(fs * (dmax / kSpeedOfSound + 1.25 * room.target_rt60))) + 2;
}

struct SceneSampler {
  const DatasetConfig& cfg;
  const std::vector<RoomSpec>& rooms;
  const std::vector<std::string>& room_splits;
  int scene_len;

  std::vector<int> rooms_of(const std::string& split) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < rooms.size(); ++i)
      if (room_splits[i] == split) out.push_back(static_cast<int>(i));
    return out;
  }

  SceneSource make_source(const RoomSpec& room, DoaClass cls, SoundEvent event, Rng& rng) const {
    SceneSource src;
    src.event = std::move(event);
    const AzimuthCell cell = doa_cell(cls);
    const double folded = rng.uniform(cell.lo, cell.hi);
    const bool rear = rng.uniform() < 0.5;
    src.position = sample_position(room, folded, rear, rng);
    src.azimuth_true_deg = azimuth_of(room, src.position);
    src.folded_azimuth_deg = fold_azimuth(src.azimuth_true_deg);
    src.doa = classify_doa(src.folded_azimuth_deg);
    src.gain_db = rng.uniform(-cfg.loudness_jitter_db, cfg.loudness_jitter_db);
    const int conv_len = static_cast<int>(std::llround(src.event.duration_s * kDefaultSampleRate)) +
                         rir_length_for(room, src.position) - 1;
    const int max_onset = scene_len - conv_len;
    if (max_onset < 0) throw std::logic_error("scene sampler: scene_seconds too short for event plus tail");
    src.onset = static_cast<int>(rng.uniform_int(0, max_onset));
    return src;
  }

  SpatialScene make_scene(const std::string& split, const std::string& set_name, int room_index,
                          const std::vector<DoaClass>& classes, std::vector<SoundEvent> events, Rng& rng) const {
    SpatialScene scene;
    scene.split = split;
    scene.set_name = set_name;
    scene.room_index = room_index;
    scene.scene_len = scene_len;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      scene.sources.push_back(make_source(rooms[room_index], classes[i], events[i], rng));
      scene.permutation.push_back(static_cast<int>(i));
    }
    scene.caption = caption_for_permutation(scene, scene.permutation);
    return scene;
  }
};

}  // namespace

std::vector<int> Dataset::pool(const std::string& set_name) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    if (scenes[i].set_name == set_name) out.push_back(static_cast<int>(i));
  return out;
}

Dataset generate_dataset(const DatasetConfig& config, const std::string& out_dir) {
  if (config.rooms_train < 1 || config.rooms_val < 1 || config.rooms_test < 1) {
    throw std::invalid_argument("dataset: each split needs at least one room");
  }
  Dataset ds;
  ds.config = config;

  // disjoint rooms per split
  const struct {
    const char* split;
    int count;
  } splits[] = {{"train", config.rooms_train}, {"val", config.rooms_val}, {"test", config.rooms_test}};
  int room_counter = 0;
  for (const auto& sp : splits) {
    for (int i = 0; i < sp.count; ++i, ++room_counter) {
      Rng rng(derive_seed(config.seed, "room", room_counter));
      ds.rooms.push_back(sample_room_impl(rng, config.mic_spacing));
      ds.rooms.back().seed = derive_seed(config.seed, "room", room_counter);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%s-%02d", sp.split, i);
      ds.room_ids.push_back(buf);
      ds.room_splits.push_back(sp.split);
    }
  }

  const int scene_len = static_cast<int>(std::llround(config.scene_seconds * kDefaultSampleRate));
  SceneSampler sampler{config, ds.rooms, ds.room_splits, scene_len};
  std::uint64_t scene_counter = 0;
  auto scene_rng = [&](const char* tag) { return Rng(derive_seed(config.seed, tag, scene_counter++)); };

  auto random_classes = [](int n, bool distinct, Rng& rng) {
    std::vector<DoaClass> out;
    while (static_cast<int>(out.size()) < n) {
      DoaClass c = static_cast<DoaClass>(rng.uniform_int(0, kNumDoaClasses - 1));
      if (distinct && std::find(out.begin(), out.end(), c) != out.end()) continue;
      out.push_back(c);
    }
    return out;
  };

  auto make_id = [](const std::string& set_name, int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "-%05d", i);
    return set_name + buf;
  };

  struct PoolSpec {
    std::string set_name, split;
    int n, count;
    bool distinct;
  };
  const std::vector<PoolSpec> pools = {
      {"train_1src", "train", 1, config.train_1src, false},
      {"train_2src", "train", 2, config.train_2src, config.distinct_train_doa},
      {"val_1src", "val", 1, config.val_1src, false},
      {"val_2src", "val", 2, config.val_2src, config.distinct_train_doa},
      {"test_1src_cls", "test", 1, config.test_1src_cls, false},
      {"test_3src", "test", 3, config.test_3src, true},
  };
  for (const PoolSpec& p : pools) {
    const std::vector<int> split_rooms = sampler.rooms_of(p.split);
    for (int i = 0; i < p.count; ++i) {
      Rng rng = scene_rng(p.set_name.c_str());
      const int room = split_rooms[rng.uniform_int(0, static_cast<int>(split_rooms.size()) - 1)];
      auto classes = random_classes(p.n, p.distinct, rng);
      std::vector<SoundEvent> events;
      std::set<std::string> phrases;
      while (static_cast<int>(events.size()) < p.n) {
        SoundEvent e = sample_event(rng);
        if (p.n > 1 && !phrases.insert(phrase_of(e)).second) continue;  // distinct phrases within a scene
        events.push_back(e);
      }
      SpatialScene scene = sampler.make_scene(p.split, p.set_name, room, classes, std::move(events), rng);
      scene.id = make_id(p.set_name, i);
      ds.scenes.push_back(std::move(scene));
    }
  }

  // 2-src spatial classification: cycle all 25 ordered class combinations
  {
    const std::vector<int> split_rooms = sampler.rooms_of("test");
    for (int i = 0; i < config.test_2src_cls; ++i) {
      Rng rng = scene_rng("test_2src_cls");
      const int room = split_rooms[rng.uniform_int(0, static_cast<int>(split_rooms.size()) - 1)];
      const std::vector<DoaClass> classes = {static_cast<DoaClass>(i % 5), static_cast<DoaClass>((i / 5) % 5)};
      std::vector<SoundEvent> events;
      std::set<std::string> phrases;
      while (static_cast<int>(events.size()) < 2) {
        SoundEvent e = sample_event(rng);
        if (!phrases.insert(phrase_of(e)).second) continue;
        events.push_back(e);
      }
      SpatialScene scene = sampler.make_scene("test", "test_2src_cls", room, classes, std::move(events), rng);
      scene.id = make_id("test_2src_cls", i);
      ds.scenes.push_back(std::move(scene));
    }
  }

  // retrieval pools carry caption-unique items
  {
    const std::vector<int> split_rooms = sampler.rooms_of("test");
    // fixed-RIR: every phrase once through one shared front RIR
    {
      Rng rng = scene_rng("test_fixed_rir");
      const int room = split_rooms[0];
      const Point3 fixed_pos = sample_position(ds.rooms[room], 0.0, false, rng);
      auto events = enumerate_phrase_events(rng);
      for (std::size_t i = 0; i < events.size(); ++i) {
        Rng srng = scene_rng("test_fixed_rir_scene");
        SpatialScene scene;
        scene.split = "test";
        scene.set_name = "test_fixed_rir";
        scene.room_index = room;
        scene.scene_len = scene_len;
        SceneSource src;
        src.event = events[i];
        src.position = fixed_pos;
        src.azimuth_true_deg = azimuth_of(ds.rooms[room], fixed_pos);
        src.folded_azimuth_deg = fold_azimuth(src.azimuth_true_deg);
        src.doa = classify_doa(src.folded_azimuth_deg);
        src.gain_db = srng.uniform(-config.loudness_jitter_db, config.loudness_jitter_db);
        const int conv_len = static_cast<int>(std::llround(src.event.duration_s * kDefaultSampleRate)) +
                             rir_length_for(ds.rooms[room], fixed_pos) - 1;
        src.onset = static_cast<int>(srng.uniform_int(0, scene_len - conv_len));
        scene.sources.push_back(src);
        scene.permutation = {0};
        scene.caption = caption_for_permutation(scene, scene.permutation);
        scene.id = make_id("test_fixed_rir", static_cast<int>(i));
        ds.scenes.push_back(std::move(scene));
      }
    }
    // 1-src retrieval: every (phrase, class) pair once
    {
      int idx = 0;
      for (int c = 0; c < kNumDoaClasses; ++c) {
        Rng rng = scene_rng("test_1src_ret_enum");
        auto events = enumerate_phrase_events(rng);
        for (auto& e : events) {
          Rng srng = scene_rng("test_1src_ret");
          const int room = split_rooms[srng.uniform_int(0, static_cast<int>(split_rooms.size()) - 1)];
          SpatialScene scene =
              sampler.make_scene("test", "test_1src_ret", room, {static_cast<DoaClass>(c)}, {e}, srng);
          scene.id = make_id("test_1src_ret", idx++);
          ds.scenes.push_back(std::move(scene));
        }
      }
    }
    // 2-src retrieval: random pairs, caption-deduplicated
    {
      std::set<std::string> seen;
      int made = 0, attempts = 0;
      while (made < config.test_2src_retrieval && attempts < config.test_2src_retrieval * 50) {
        ++attempts;
        Rng rng = scene_rng("test_2src_ret");
        const int room = split_rooms[rng.uniform_int(0, static_cast<int>(split_rooms.size()) - 1)];
        auto classes = random_classes(2, false, rng);
        std::vector<SoundEvent> events;
        std::set<std::string> phrases;
        while (static_cast<int>(events.size()) < 2) {
          SoundEvent e = sample_event(rng);
          if (!phrases.insert(phrase_of(e)).second) continue;
          events.push_back(e);
        }
        SpatialScene scene = sampler.make_scene("test", "test_2src_ret", room, classes, std::move(events), rng);
        if (!seen.insert(scene.caption).second) continue;
        scene.id = make_id("test_2src_ret", made++);
        ds.scenes.push_back(std::move(scene));
      }
    }
  }

  // persist
  std::filesystem::create_directories(out_dir);
  {
    ordered_json root;
    root["seed"] = config.seed;
    root["scene_seconds"] = config.scene_seconds;
    root["loudness_jitter_db"] = config.loudness_jitter_db;
    root["mic_spacing"] = config.mic_spacing;
    root["distinct_train_doa"] = config.distinct_train_doa;
    root["rooms"] = ordered_json::array();
    for (std::size_t i = 0; i < ds.rooms.size(); ++i) {
      const RoomSpec& r = ds.rooms[i];
      ordered_json jr;
      jr["id"] = ds.room_ids[i];
      jr["split"] = ds.room_splits[i];
      jr["dims"] = {r.dimensions[0], r.dimensions[1], r.dimensions[2]};
      jr["rt60"] = r.target_rt60;
      jr["mics"] = {{r.mic_positions[0][0], r.mic_positions[0][1], r.mic_positions[0][2]},
                    {r.mic_positions[1][0], r.mic_positions[1][1], r.mic_positions[1][2]}};
      jr["order"] = r.max_image_order;
      jr["seed"] = r.seed;
      root["rooms"].push_back(jr);
    }
    std::ofstream os(out_dir + "/rooms.json");
    if (!os) throw std::runtime_error("dataset: cannot write " + out_dir + "/rooms.json");
    os << root.dump(2) << "\n";
  }
  {
    std::ofstream os(out_dir + "/manifest.jsonl");
    if (!os) throw std::runtime_error("dataset: cannot write " + out_dir + "/manifest.jsonl");
    for (const SpatialScene& s : ds.scenes) os << scene_to_json(ds, s) << "\n";
  }
  if (config.write_wav) {
    std::filesystem::create_directories(out_dir + "/audio");
    RirCache cache;
    for (const SpatialScene& s : ds.scenes) {
      SpatialScene copy = s;
      render_scene(copy, ds.rooms, cache);
      write_wav_stereo(out_dir + "/audio/" + copy.id + ".wav", copy.audio);
    }
  }
  return ds;
}

std::string scene_to_json(const Dataset& ds, const SpatialScene& scene) {
  ordered_json j;
  j["id"] = scene.id;
  j["split"] = scene.split;
  j["set"] = scene.set_name;
  j["n"] = scene.sources.size();
  j["room"] = ds.room_ids[scene.room_index];
  j["scene_len"] = scene.scene_len;
  j["perm"] = scene.permutation;
  j["sources"] = ordered_json::array();
  for (const SceneSource& s : scene.sources) {
    ordered_json js;
    js["cls"] = static_cast<int>(s.event.event_class);
    js["dur"] = s.event.duration_s;
    js["fa"] = s.event.freq_a;
    js["fb"] = s.event.freq_b;
    js["rate"] = s.event.rate;
    js["ta"] = s.event.texture_a;
    js["tb"] = s.event.texture_b;
    js["eseed"] = s.event.seed;
    js["pos"] = {s.position[0], s.position[1], s.position[2]};
    js["azimuth"] = s.azimuth_true_deg;
    js["folded"] = s.folded_azimuth_deg;
    js["doa"] = doa_label(s.doa);
    js["gain_db"] = s.gain_db;
    js["onset"] = s.onset;
    js["phrase"] = phrase_of(s.event);
    j["sources"].push_back(js);
  }
  j["caption"] = scene.caption;
  return j.dump();
}

Dataset load_dataset(const std::string& manifest_path) {
  const std::filesystem::path mpath(manifest_path);
  const std::filesystem::path rooms_path = mpath.parent_path() / "rooms.json";
  Dataset ds;
  {
    std::ifstream is(rooms_path);
    if (!is) throw std::runtime_error("dataset: cannot open " + rooms_path.string());
    ordered_json root = ordered_json::parse(is);
    ds.config.seed = root["seed"].get<std::uint64_t>();
    ds.config.scene_seconds = root["scene_seconds"].get<double>();
    ds.config.loudness_jitter_db = root["loudness_jitter_db"].get<double>();
    ds.config.mic_spacing = root["mic_spacing"].get<double>();
    ds.config.distinct_train_doa = root["distinct_train_doa"].get<bool>();
    for (const auto& jr : root["rooms"]) {
      RoomSpec r;
      r.dimensions = {jr["dims"][0].get<double>(), jr["dims"][1].get<double>(), jr["dims"][2].get<double>()};
      r.target_rt60 = jr["rt60"].get<double>();
      r.mic_positions[0] = {jr["mics"][0][0].get<double>(), jr["mics"][0][1].get<double>(),
                            jr["mics"][0][2].get<double>()};
      r.mic_positions[1] = {jr["mics"][1][0].get<double>(), jr["mics"][1][1].get<double>(),
                            jr["mics"][1][2].get<double>()};
      r.max_image_order = jr["order"].get<int>();
      r.seed = jr["seed"].get<std::uint64_t>();
      ds.rooms.push_back(r);
      ds.room_ids.push_back(jr["id"].get<std::string>());
      ds.room_splits.push_back(jr["split"].get<std::string>());
    }
  }
  std::ifstream is(manifest_path);
  if (!is) throw std::runtime_error("dataset: cannot open " + manifest_path);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    SpatialScene scene;
    scene.id = j["id"].get<std::string>();
    scene.split = j["split"].get<std::string>();
    scene.set_name = j["set"].get<std::string>();
    scene.scene_len = j["scene_len"].get<int>();
    const std::string room_id = j["room"].get<std::string>();
    scene.room_index = -1;
    for (std::size_t i = 0; i < ds.room_ids.size(); ++i)
      if (ds.room_ids[i] == room_id) scene.room_index = static_cast<int>(i);
    if (scene.room_index < 0) throw std::runtime_error("dataset: unknown room id " + room_id);
    scene.permutation = j["perm"].get<std::vector<int>>();
    for (const auto& js : j["sources"]) {
      SceneSource s;
      s.event.event_class = static_cast<EventClass>(js["cls"].get<int>());
      s.event.duration_s = js["dur"].get<double>();
      s.event.freq_a = js["fa"].get<double>();
      s.event.freq_b = js["fb"].get<double>();
      s.event.rate = js["rate"].get<double>();
      s.event.texture_a = js["ta"].get<int>();
      s.event.texture_b = js["tb"].get<int>();
      s.event.seed = js["eseed"].get<std::uint64_t>();
      s.position = {js["pos"][0].get<double>(), js["pos"][1].get<double>(), js["pos"][2].get<double>()};
      s.azimuth_true_deg = js["azimuth"].get<double>();
      s.folded_azimuth_deg = js["folded"].get<double>();
      s.doa = *doa_from_label(js["doa"].get<std::string>());
      s.gain_db = js["gain_db"].get<double>();
      s.onset = js["onset"].get<int>();
      scene.sources.push_back(s);
    }
    scene.caption = j["caption"].get<std::string>();
    ds.scenes.push_back(std::move(scene));
  }
  return ds;
}

}  // namespace sclap
