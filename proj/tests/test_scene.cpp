#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "sclap/scene.hpp"
#include "test_util.hpp"

using namespace sclap;

TEST_CASE("azimuth folding") {
  CHECK(fold_azimuth(0.0) == 0.0);
  CHECK(fold_azimuth(135.0) == doctest::Approx(45.0));
  CHECK(fold_azimuth(-170.0) == doctest::Approx(-10.0));
  CHECK(fold_azimuth(90.0) == 90.0);
  CHECK(fold_azimuth(180.0) == doctest::Approx(0.0));

  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double theta = rng.uniform(-179.999, 180.0);
    const double folded = fold_azimuth(theta);
    CHECK(fold_azimuth(folded) == folded);  // idempotent
    CHECK(folded >= -90.0);
    CHECK(folded <= 90.0);
    // mirror pairs fold to the same point and the same class
    const double mirror = theta >= 0.0 ? 180.0 - theta : -180.0 - theta;
    CHECK(fold_azimuth(mirror) == doctest::Approx(folded).epsilon(1e-12));
    CHECK(classify_doa(fold_azimuth(mirror)) == classify_doa(folded));
  }
}

TEST_CASE("doa classification") {
  CHECK(classify_doa(0.0) == DoaClass::kFront);
  CHECK(classify_doa(-90.0) == DoaClass::kLeft);
  CHECK(classify_doa(30.0) == DoaClass::kFrontRight);
  CHECK(classify_doa(-30.0) == DoaClass::kFrontLeft);
  CHECK(classify_doa(88.0) == DoaClass::kRight);
  // midpoints break toward the class nearer front
  CHECK(classify_doa(22.5) == DoaClass::kFront);
  CHECK(classify_doa(-22.5) == DoaClass::kFront);
  CHECK(classify_doa(67.5) == DoaClass::kFrontRight);
  CHECK(classify_doa(-67.5) == DoaClass::kFrontLeft);
  CHECK_THROWS_AS(classify_doa(91.0), std::out_of_range);
}

TEST_CASE("doa labels and canonical azimuths are a fixed bijection") {
  const DoaClass all[] = {DoaClass::kFrontLeft, DoaClass::kFront, DoaClass::kFrontRight, DoaClass::kLeft,
                          DoaClass::kRight};
  std::set<std::string> labels;
  std::set<double> azimuths;
  for (DoaClass c : all) {
    labels.insert(doa_label(c));
    azimuths.insert(doa_canonical_azimuth(c));
    CHECK(doa_from_label(doa_label(c)) == c);
    CHECK(classify_doa(doa_canonical_azimuth(c)) == c);
  }
  CHECK(labels.size() == 5);
  CHECK(azimuths.size() == 5);
  CHECK(doa_canonical_azimuth(DoaClass::kFrontLeft) == -45.0);
  CHECK(doa_canonical_azimuth(DoaClass::kRight) == 90.0);
}

TEST_CASE("rendered tone has the requested period") {
  SoundEvent e;
  e.event_class = EventClass::kTone;
  e.duration_s = 1.0;
  e.freq_a = 440.0;
  e.texture_a = 0;
  e.seed = 99;
  MonoClip clip = render_event(e);
  REQUIRE(clip.samples.size() == 16000);
  // autocorrelation peak near 16000/440 = 36.36 samples
  double best = -1e18;
  int best_lag = 0;
  for (int lag = 20; lag <= 60; ++lag) {
    double acc = 0.0;
    for (int i = 2000; i < 12000; ++i) acc += clip.samples[i] * clip.samples[i + lag];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(std::abs(best_lag - 16000.0 / 440.0) <= 1.0);
  CHECK(peak_abs(clip.samples) == doctest::Approx(0.9));
}

TEST_CASE("degenerate events are rejected") {
  SoundEvent e;
  e.event_class = EventClass::kHarmonicStack;
  e.freq_a = 8000.0;  // every partial above Nyquist guard -> silence
  e.duration_s = 1.0;
  e.seed = 3;
  CHECK_THROWS_WITH_AS(render_event(e), doctest::Contains("degenerate"), std::invalid_argument);
}

TEST_CASE("event rendering is deterministic") {
  Rng rng(7);
  for (int i = 0; i < 8; ++i) {
    SoundEvent e = sample_event(rng);
    MonoClip a = render_event(e);
    MonoClip b = render_event(e);
    REQUIRE(a.samples.size() == b.samples.size());
    CHECK(std::memcmp(a.samples.data(), b.samples.data(), a.samples.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("every grammar phrase maps back to its event class") {
  Rng rng(11);
  auto events = enumerate_phrase_events(rng);
  CHECK(events.size() == 92);
  std::set<std::string> phrases;
  for (const SoundEvent& e : events) {
    const std::string p = phrase_of(e);
    CHECK(phrases.insert(p).second);  // all distinct
    auto cls = event_class_of_phrase(p);
    REQUIRE(cls.has_value());
    CHECK(*cls == e.event_class);
  }
}

TEST_CASE("caption composition") {
  CHECK(compose_caption({{"a steady high tone", DoaClass::kFront}}) == "a steady high tone in the front");
  CHECK(compose_caption({{"p1", DoaClass::kLeft}, {"p2", DoaClass::kFrontRight}}) ==
        "p1 in the left, and p2 in the front-right");
  // identical phrases, different DoA: both clauses retained in order
  CHECK(compose_caption({{"a hum", DoaClass::kLeft}, {"a hum", DoaClass::kRight}}) ==
        "a hum in the left, and a hum in the right");
  CHECK_THROWS_AS(compose_caption({}), std::invalid_argument);
}

TEST_CASE("caption grammar round-trips") {
  Rng rng(13);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(1, 3));
    std::vector<std::pair<std::string, DoaClass>> pairs;
    for (int i = 0; i < n; ++i) {
      pairs.emplace_back(phrase_of(sample_event(rng)), static_cast<DoaClass>(rng.uniform_int(0, 4)));
    }
    auto parsed = parse_caption(compose_caption(pairs));
    REQUIRE(parsed.size() == pairs.size());
    for (int i = 0; i < n; ++i) {
      CHECK(parsed[i].first == pairs[i].first);
      CHECK(parsed[i].second == pairs[i].second);
    }
  }
  CHECK_THROWS_AS(parse_caption("no spatial phrase here"), std::invalid_argument);
  CHECK_THROWS_AS(parse_caption("a tone in the nowhere"), std::invalid_argument);
}

namespace {

RoomSpec anechoic_room() {
  RoomSpec room = make_room({6, 5, 3}, 0.2);
  room.absorption_override = 1.0;
  room.max_image_order = 0;
  return room;
}

SoundEvent tone_event(double freq, std::uint64_t seed) {
  SoundEvent e;
  e.event_class = EventClass::kTone;
  e.duration_s = 0.9;
  e.freq_a = freq;
  e.seed = seed;
  return e;
}

}  // namespace

TEST_CASE("anechoic single-source scene is the delayed attenuated event") {
  RoomSpec room = anechoic_room();
  // 1 m in front of the array center
  const double cx = room.dimensions[0] / 2.0, cy = room.dimensions[1] / 2.0;
  Point3 src = {cx, cy + 1.0, 1.5};
  SoundEvent e = tone_event(500.0, 21);
  SpatialScene scene = build_scene({e}, room, {src}, {0.0});

  MonoClip dry = render_event(e);
  const Point3& mic = room.mic_positions[0];
  const double d = std::sqrt((src[0] - mic[0]) * (src[0] - mic[0]) + (src[1] - mic[1]) * (src[1] - mic[1]) +
                             (src[2] - mic[2]) * (src[2] - mic[2]));
  const std::size_t tap = static_cast<std::size_t>(std::llround(16000.0 * d / 343.0));
  const double amp = 1.0 / (4.0 * 3.14159265358979323846 * d);
  for (std::size_t i = 0; i < 1000; ++i) {
    CHECK(scene.audio.left[tap + i] / scene.norm_gain == doctest::Approx(dry.samples[i] * amp).epsilon(1e-12));
  }
  for (std::size_t i = 0; i < tap; ++i) CHECK(std::abs(scene.audio.left[i]) < 1e-12);
  CHECK(scene.sources[0].doa == DoaClass::kFront);
  CHECK(scene.caption == phrase_of(e) + " in the front");
}

TEST_CASE("two-source scene is the superposition of its single-source scenes") {
  RoomSpec room = make_room({5, 4.5, 2.8}, 0.18);
  const double cx = room.dimensions[0] / 2.0, cy = room.dimensions[1] / 2.0;
  Point3 p1 = {cx - 1.2, cy + 1.0, 1.5};
  Point3 p2 = {cx + 1.1, cy + 0.9, 1.6};
  SoundEvent e1 = tone_event(350.0, 31);
  SoundEvent e2 = tone_event(900.0, 32);

  SpatialScene both = build_scene({e1, e2}, room, {p1, p2}, {1.5, -2.0});
  SpatialScene s1 = build_scene({e1}, room, {p1}, {1.5});
  SpatialScene s2 = build_scene({e2}, room, {p2}, {-2.0});

  REQUIRE(both.audio.length() >= std::max(s1.audio.length(), s2.audio.length()));
  for (std::size_t i = 0; i < both.audio.length(); ++i) {
    const double a = i < s1.audio.length() ? s1.audio.left[i] / s1.norm_gain : 0.0;
    const double b = i < s2.audio.length() ? s2.audio.left[i] / s2.norm_gain : 0.0;
    CHECK(both.audio.left[i] / both.norm_gain == doctest::Approx(a + b).epsilon(1e-10));
  }
}

TEST_CASE("three-source caption carries three clauses") {
  RoomSpec room = make_room({5, 4.5, 2.8}, 0.18);
  const double cx = room.dimensions[0] / 2.0, cy = room.dimensions[1] / 2.0;
  SpatialScene scene = build_scene({tone_event(300, 1), tone_event(600, 2), tone_event(1200, 3)}, room,
                                   {{cx - 1.2, cy + 1.0, 1.5}, {cx, cy + 1.3, 1.5}, {cx + 1.2, cy + 1.0, 1.5}},
                                   {0.0, 0.0, 0.0});
  std::size_t count = 0, pos = 0;
  while ((pos = scene.caption.find(" in the ", pos)) != std::string::npos) {
    ++count;
    pos += 8;
  }
  CHECK(count == 3);
  CHECK(parse_caption(scene.caption).size() == 3);
}

TEST_CASE("scl swap renders sources through exchanged impulse responses") {
  RoomSpec room = make_room({5, 4.5, 2.8}, 0.18);
  const double cx = room.dimensions[0] / 2.0, cy = room.dimensions[1] / 2.0;
  Point3 p1 = {cx - 1.2, cy + 1.0, 1.5};
  Point3 p2 = {cx + 1.1, cy + 0.9, 1.6};
  SoundEvent e1 = tone_event(350.0, 41);
  SoundEvent e2 = tone_event(900.0, 42);
  SpatialScene scene = build_scene({e1, e2}, room, {p1, p2}, {1.0, -1.0});

  std::vector<RoomSpec> rooms{room};
  RirCache cache;
  SclGroup group = scl_permute(scene, rooms, cache);
  REQUIRE(group.scenes.size() == 2);
  CHECK(group.permutations[0] == std::vector<int>{0, 1});
  CHECK(group.permutations[1] == std::vector<int>{1, 0});

  // manual swap: h2 * x1 + h1 * x2 (with per-source gains), renormalized
  Rir r1 = simulate_rir(room, p1);
  Rir r2 = simulate_rir(room, p2);
  MonoClip x1 = render_event(e1);
  MonoClip x2 = render_event(e2);
  const double g1 = std::pow(10.0, 1.0 / 20.0), g2 = std::pow(10.0, -1.0 / 20.0);
  for (double& v : x1.samples) v *= g1;
  for (double& v : x2.samples) v *= g2;
  StereoClip a{convolve_raw(x1.samples, r2.h_left), convolve_raw(x1.samples, r2.h_right), 16000};
  StereoClip b{convolve_raw(x2.samples, r1.h_left), convolve_raw(x2.samples, r1.h_right), 16000};
  StereoClip manual = mix({a, b});

  const SpatialScene& swapped = group.scenes[1];
  REQUIRE(swapped.audio.length() == manual.length());
  for (std::size_t i = 0; i < manual.length(); ++i) {
    CHECK(swapped.audio.left[i] / swapped.norm_gain == doctest::Approx(manual.left[i]).epsilon(1e-10));
    CHECK(swapped.audio.right[i] / swapped.norm_gain == doctest::Approx(manual.right[i]).epsilon(1e-10));
  }

  // caption has the DoA phrases swapped
  auto orig = parse_caption(scene.caption);
  auto swap = parse_caption(swapped.caption);
  CHECK(swap[0].first == orig[0].first);
  CHECK(swap[1].first == orig[1].first);
  CHECK(swap[0].second == orig[1].second);
  CHECK(swap[1].second == orig[0].second);
}

TEST_CASE("scl with identical rirs reproduces the original") {
  RoomSpec room = make_room({5, 4.5, 2.8}, 0.18);
  const double cx = room.dimensions[0] / 2.0, cy = room.dimensions[1] / 2.0;
  Point3 p = {cx - 1.0, cy + 1.1, 1.5};
  SpatialScene scene = build_scene({tone_event(350, 51), tone_event(900, 52)}, room, {p, p}, {0.0, 0.0});
  std::vector<RoomSpec> rooms{room};
  RirCache cache;
  SclGroup group = scl_permute(scene, rooms, cache);
  const SpatialScene& swapped = group.scenes[1];
  CHECK(swapped.caption == scene.caption);
  REQUIRE(swapped.audio.length() == scene.audio.length());
  CHECK(testutil::max_abs_diff(swapped.audio.left, scene.audio.left) < 1e-12);
}

TEST_CASE("scl on three sources yields five non-identity variants sharing multisets") {
  RoomSpec room = make_room({5, 4.5, 2.8}, 0.18);
  const double cx = room.dimensions[0] / 2.0, cy = room.dimensions[1] / 2.0;
  SpatialScene scene = build_scene({tone_event(300, 61), tone_event(600, 62), tone_event(1200, 63)}, room,
                                   {{cx - 1.2, cy + 1.0, 1.5}, {cx, cy + 1.3, 1.5}, {cx + 1.2, cy + 1.0, 1.5}},
                                   {0.0, 0.0, 0.0});
  std::vector<RoomSpec> rooms{room};
  RirCache cache;
  SclGroup group = scl_permute(scene, rooms, cache);
  CHECK(group.scenes.size() == 6);  // 3! variants, index 0 identity

  auto phrase_multiset = [](const SpatialScene& s) {
    std::multiset<std::string> out;
    for (const auto& src : s.sources) out.insert(phrase_of(src.event));
    return out;
  };
  auto label_multiset = [](const SpatialScene& s) {
    std::multiset<std::string> out;
    for (const auto& [phrase, doa] : parse_caption(s.caption)) out.insert(doa_label(doa));
    return out;
  };
  std::set<std::vector<int>> perms;
  for (std::size_t i = 0; i < group.scenes.size(); ++i) {
    perms.insert(group.permutations[i]);
    CHECK(phrase_multiset(group.scenes[i]) == phrase_multiset(scene));
    CHECK(label_multiset(group.scenes[i]) == label_multiset(scene));
  }
  CHECK(perms.size() == 6);
}

TEST_CASE("scl rejects single-source scenes") {
  RoomSpec room = make_room({5, 4.5, 2.8}, 0.18);
  SpatialScene scene =
      build_scene({tone_event(350, 71)}, room, {{room.dimensions[0] / 2.0, room.dimensions[1] / 2.0 + 1.0, 1.5}},
                  {0.0});
  std::vector<RoomSpec> rooms{room};
  RirCache cache;
  CHECK_THROWS_AS(scl_permute(scene, rooms, cache), std::invalid_argument);
}

namespace {

DatasetConfig tiny_config(std::uint64_t seed = 555) {
  DatasetConfig cfg;
  cfg.seed = seed;
  cfg.rooms_train = 4;
  cfg.rooms_val = 2;
  cfg.rooms_test = 2;
  cfg.train_1src = 30;
  cfg.train_2src = 12;
  cfg.val_1src = 6;
  cfg.val_2src = 4;
  cfg.test_2src_retrieval = 10;
  cfg.test_1src_cls = 10;
  cfg.test_2src_cls = 10;
  cfg.test_3src = 8;
  return cfg;
}

}  // namespace

TEST_CASE("dataset splits use disjoint rooms and reload exactly") {
  const std::string dir = "test_scene_dataset";
  Dataset ds = generate_dataset(tiny_config(), dir);

  std::set<std::string> train_rooms, other_rooms;
  for (const SpatialScene& s : ds.scenes) {
    CHECK(ds.room_splits[s.room_index] == s.split);
    (s.split == "train" ? train_rooms : other_rooms).insert(ds.room_ids[s.room_index]);
  }
  for (const std::string& r : train_rooms) CHECK(other_rooms.count(r) == 0);

  // reload and compare the serialized form of every scene
  Dataset back = load_dataset(dir + "/manifest.jsonl");
  REQUIRE(back.scenes.size() == ds.scenes.size());
  for (std::size_t i = 0; i < ds.scenes.size(); ++i) {
    CHECK(scene_to_json(back, back.scenes[i]) == scene_to_json(ds, ds.scenes[i]));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset generation is bit-identical under one seed") {
  Dataset a = generate_dataset(tiny_config(777), "test_scene_ds_a");
  Dataset b = generate_dataset(tiny_config(777), "test_scene_ds_b");
  std::ifstream fa("test_scene_ds_a/manifest.jsonl"), fb("test_scene_ds_b/manifest.jsonl");
  std::string ca((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string cb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(ca == cb);
  CHECK(!ca.empty());
  std::filesystem::remove_all("test_scene_ds_a");
  std::filesystem::remove_all("test_scene_ds_b");
}

TEST_CASE("scene audio is reproducible from its manifest entry") {
  const std::string dir = "test_scene_repro";
  Dataset ds = generate_dataset(tiny_config(888), dir);
  Dataset loaded = load_dataset(dir + "/manifest.jsonl");
  RirCache c1, c2;
  for (int idx : {0, 31, 40}) {
    SpatialScene s1 = ds.scenes[idx];
    SpatialScene s2 = loaded.scenes[idx];
    render_scene(s1, ds.rooms, c1);
    render_scene(s2, loaded.rooms, c2);
    REQUIRE(s1.audio.length() == s2.audio.length());
    CHECK(std::memcmp(s1.audio.left.data(), s2.audio.left.data(), s1.audio.length() * sizeof(double)) == 0);
    CHECK(std::memcmp(s1.audio.right.data(), s2.audio.right.data(), s1.audio.length() * sizeof(double)) == 0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("single-source doa classes are near-uniform over 1000 scenes") {
  DatasetConfig cfg = tiny_config(999);
  cfg.train_1src = 1000;
  const std::string dir = "test_scene_freq";
  Dataset ds = generate_dataset(cfg, dir);
  int counts[kNumDoaClasses] = {0};
  int total = 0;
  for (const SpatialScene& s : ds.scenes) {
    if (s.set_name != "train_1src") continue;
    counts[static_cast<int>(s.sources[0].doa)]++;
    ++total;
  }
  CHECK(total == 1000);
  for (int c = 0; c < kNumDoaClasses; ++c) {
    const double freq = static_cast<double>(counts[c]) / total;
    CHECK(freq >= 0.15);
    CHECK(freq <= 0.25);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("generated captions parse back to the recorded sources") {
  const std::string dir = "test_scene_parse";
  Dataset ds = generate_dataset(tiny_config(101), dir);
  for (const SpatialScene& s : ds.scenes) {
    auto parsed = parse_caption(s.caption);
    REQUIRE(parsed.size() == s.sources.size());
    for (std::size_t i = 0; i < parsed.size(); ++i) {
      CHECK(parsed[i].first == phrase_of(s.sources[i].event));
      CHECK(parsed[i].second == s.sources[s.permutation[i]].doa);
    }
  }
  // retrieval pools have unique captions
  for (const char* pool : {"test_fixed_rir", "test_1src_ret", "test_2src_ret"}) {
    std::set<std::string> captions;
    for (int idx : ds.pool(pool)) CHECK(captions.insert(ds.scenes[idx].caption).second);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("dataset rejects configs without rooms") {
  DatasetConfig cfg = tiny_config();
  cfg.rooms_val = 0;
  CHECK_THROWS_AS(generate_dataset(cfg, "never_written"), std::invalid_argument);
}
