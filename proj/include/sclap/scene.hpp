#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sclap/dsp.hpp"
#include "sclap/rng.hpp"

namespace sclap {

// --- direction-of-arrival classes ---

enum class DoaClass { kFrontLeft = 0, kFront = 1, kFrontRight = 2, kLeft = 3, kRight = 4 };

inline constexpr int kNumDoaClasses = 5;

const char* doa_label(DoaClass c);                 // "front-left" etc.
double doa_canonical_azimuth(DoaClass c);          // -45, 0, +45, -90, +90
std::optional<DoaClass> doa_from_label(const std::string& label);

// Rear-hemisphere azimuths mirror onto the front: theta if |theta| <= 90,
// else sign(theta) * (180 - |theta|).
double fold_azimuth(double azimuth_deg);

// Nearest canonical azimuth; exact midpoints break toward the class nearer
// the front axis. Input must be a folded azimuth in [-90, 90].
DoaClass classify_doa(double folded_azimuth_deg);

// --- procedural sound events ---

enum class EventClass {
  kTone = 0,
  kChirpUp,
  kChirpDown,
  kNoiseBurst,
  kAmNoise,
  kClickTrain,
  kHarmonicStack,
  kSiren,
};
inline constexpr int kNumEventClasses = 8;

struct SoundEvent {
  EventClass event_class = EventClass::kTone;
  double duration_s = 1.0;   // [0.8, 1.2]
  double freq_a = 440.0;     // primary frequency (Hz); meaning varies by class
  double freq_b = 0.0;       // secondary frequency (chirp endpoint, unused otherwise)
  double rate = 0.0;         // modulation / repetition rate (Hz)
  int texture_a = 0;         // class-specific discrete choice
  int texture_b = 0;
  std::uint64_t seed = 0;
};

// Deterministic caption fragment, e.g. "a brief steady low tone".
std::string phrase_of(const SoundEvent& event);

// Every phrase the grammar can produce, with a representative bucket-centered
// event for each; order is deterministic.
std::vector<SoundEvent> enumerate_phrase_events(Rng& rng);

// Phrase -> event class for the closed lexicon.
std::optional<EventClass> event_class_of_phrase(const std::string& phrase);

// Deterministic synthesis at 16 kHz, peak-normalized to 0.9.
MonoClip render_event(const SoundEvent& event);

// Uniformly random event (class + params) from the full parameter ranges.
SoundEvent sample_event(Rng& rng);

// --- captions ---

std::string compose_caption(const std::vector<std::pair<std::string, DoaClass>>& sources);
// Inverse of compose_caption; throws on strings outside the grammar.
std::vector<std::pair<std::string, DoaClass>> parse_caption(const std::string& caption);

// --- scenes ---

struct SceneSource {
  SoundEvent event;
  Point3 position{};
  double azimuth_true_deg = 0.0;
  double folded_azimuth_deg = 0.0;
  DoaClass doa = DoaClass::kFront;
  double gain_db = 0.0;
  int onset = 0;  // samples
};

struct SpatialScene {
  std::string id;
  std::string split;     // train | val | test
  std::string set_name;  // pool tag, e.g. train_1src, test_2src_cls
  int room_index = -1;
  std::vector<SceneSource> sources;
  std::vector<int> permutation;  // source i renders through RIR of slot permutation[i]
  std::string caption;
  int scene_len = 0;  // samples; 0 = natural length
  // rendered audio; empty until render_scene fills it
  StereoClip audio;
  double norm_gain = 1.0;  // factor applied for 0.9 peak normalization
};

struct SclGroup {
  std::vector<SpatialScene> scenes;             // index 0 = identity assignment
  std::vector<std::vector<int>> permutations;
};

// Memoizing RIR cache; safe for concurrent lookup.
class RirCache {
 public:
  const Rir& get(const RoomSpec& room, int room_index, const Point3& position);
  std::size_t size() const { return cache_.size(); }

 private:
  std::map<std::string, Rir> cache_;
};

// Convolve, place at onsets, mix, and peak-normalize to 0.9. Sources render
// through the RIR slot given by scene.permutation. Fills audio and norm_gain.
void render_scene(SpatialScene& scene, const std::vector<RoomSpec>& rooms, RirCache& cache);

// Single-call construction: derives DoA classes from positions, composes the
// caption, and renders. scene_len 0 keeps the natural mixture length.
SpatialScene build_scene(const std::vector<SoundEvent>& events, const RoomSpec& room,
                         const std::vector<Point3>& source_positions, const std::vector<double>& gains_db,
                         const std::vector<int>& onsets = {}, int scene_len = 0);

// All n! assignment variants of a rendered scene (identity first). Requires
// n in {2, 3}.
SclGroup scl_permute(const SpatialScene& scene, const std::vector<RoomSpec>& rooms, RirCache& cache);

// --- dataset ---

struct DatasetConfig {
  std::uint64_t seed = 1234;
  int rooms_train = 40, rooms_val = 8, rooms_test = 8;
  int train_1src = 2560, train_2src = 1280;
  int val_1src = 240, val_2src = 160;
  int test_2src_retrieval = 600;
  int test_1src_cls = 2200, test_2src_cls = 2600, test_3src = 2200;
  // fixed-RIR and 1-src retrieval pools enumerate the phrase grammar, one
  // scene per distinct caption
  double scene_seconds = 1.6;
  double loudness_jitter_db = 3.0;
  double mic_spacing = 0.2;
  bool distinct_train_doa = true;  // train pairs carry distinct DoA classes
  bool write_wav = false;          // export per-scene wav files alongside the manifest
};

struct Dataset {
  DatasetConfig config;
  std::vector<RoomSpec> rooms;
  std::vector<std::string> room_ids;
  std::vector<std::string> room_splits;
  std::vector<SpatialScene> scenes;  // audio not rendered

  std::vector<int> pool(const std::string& set_name) const;  // indices into scenes
};

// Samples rooms (disjoint across splits) and every scene pool, then writes
// <out_dir>/manifest.jsonl plus a summary. Deterministic per seed.
Dataset generate_dataset(const DatasetConfig& config, const std::string& out_dir);

Dataset load_dataset(const std::string& manifest_path);

// Serialization of a single scene (one manifest line round-trips exactly).
std::string scene_to_json(const Dataset& ds, const SpatialScene& scene);

}  // namespace sclap
