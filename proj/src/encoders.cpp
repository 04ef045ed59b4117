#include "sclap/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "sclap/checkpoint.hpp"
#include "sclap/scene.hpp"

namespace sclap {

namespace {
constexpr double kPi = 3.14159265358979323846;
using ordered_json = nlohmann::ordered_json;

// feature compression: log(x + eps) / scale keeps planes roughly in [-3, 1]
double log_compress(double x) { return std::log(x + 1e-5) * 0.25; }
}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kMonaural: return "monaural";
    case Variant::kConventional: return "conventional";
    case Variant::kStructured: return "structured";
    case Variant::kOurs: return "ours";
  }
  throw std::logic_error("variant_name");
}

Variant variant_from_name(const std::string& name) {
  for (Variant v : {Variant::kMonaural, Variant::kConventional, Variant::kStructured, Variant::kOurs}) {
    if (name == variant_name(v)) return v;
  }
  throw std::invalid_argument("unknown variant: " + name);
}

const char* pretrain_name(SpatialPretrain p) {
  switch (p) {
    case SpatialPretrain::kSeld: return "seld";
    case SpatialPretrain::kDoaOnly: return "doa_only";
    case SpatialPretrain::kNone: return "none";
  }
  throw std::logic_error("pretrain_name");
}

SpatialPretrain pretrain_from_name(const std::string& name) {
  for (SpatialPretrain p : {SpatialPretrain::kSeld, SpatialPretrain::kDoaOnly, SpatialPretrain::kNone}) {
    if (name == pretrain_name(p)) return p;
  }
  throw std::invalid_argument("unknown spatial_pretrain: " + name);
}

void ModelConfig::validate() const {
  if (content_dim < 1 || spatial_dim < 1 || joint_dim < 1 || text_hidden < 1) {
    throw std::invalid_argument("model: dimensions must be positive");
  }
  if (variant == Variant::kStructured && joint_dim % 4 != 0) {
    throw std::invalid_argument("model: structured variant needs joint_dim divisible by 4");
  }
  if (variant == Variant::kConventional && spatial_pretrain != SpatialPretrain::kDoaOnly) {
    throw std::invalid_argument("model: conventional variant requires spatial_pretrain = doa_only");
  }
  if (freq_bands < 4 || freq_bands > stft_window / 2) {
    throw std::invalid_argument("model: freq_bands out of range");
  }
  if (temperature_init <= 0.0) throw std::invalid_argument("model: temperature_init must be positive");
}

std::string ModelConfig::to_json() const {
  ordered_json j;
  j["variant"] = variant_name(variant);
  j["use_scl"] = use_scl;
  j["spatial_pretrain"] = pretrain_name(spatial_pretrain);
  j["content_dim"] = content_dim;
  j["spatial_dim"] = spatial_dim;
  j["joint_dim"] = joint_dim;
  j["text_hidden"] = text_hidden;
  j["temperature_init"] = temperature_init;
  j["freq_bands"] = freq_bands;
  j["raw_phase"] = raw_phase;
  j["stft_window"] = stft_window;
  j["stft_hop"] = stft_hop;
  j["num_event_classes"] = num_event_classes;
  j["seed"] = seed;
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  ModelConfig c;
  c.variant = variant_from_name(j["variant"].get<std::string>());
  c.use_scl = j["use_scl"].get<bool>();
  c.spatial_pretrain = pretrain_from_name(j["spatial_pretrain"].get<std::string>());
  c.content_dim = j["content_dim"].get<int>();
  c.spatial_dim = j["spatial_dim"].get<int>();
  c.joint_dim = j["joint_dim"].get<int>();
  c.text_hidden = j["text_hidden"].get<int>();
  c.temperature_init = j["temperature_init"].get<double>();
  c.freq_bands = j["freq_bands"].get<int>();
  c.raw_phase = j["raw_phase"].get<bool>();
  c.stft_window = j["stft_window"].get<int>();
  c.stft_hop = j["stft_hop"].get<int>();
  c.num_event_classes = j["num_event_classes"].get<int>();
  c.seed = j["seed"].get<std::uint64_t>();
  c.validate();
  return c;
}

// --- features ---

FeatureMaps extract_features(const StereoClip& clip, const ModelConfig& config) {
  SpectrogramFeature spec = stft_features(clip, config.stft_window, config.stft_hop);
  StereoClip mono;
  mono.sample_rate = clip.sample_rate;
  mono.left.resize(clip.length());
  for (std::size_t i = 0; i < clip.length(); ++i) mono.left[i] = 0.5 * (clip.left[i] + clip.right[i]);
  mono.right = mono.left;
  SpectrogramFeature mspec = stft_features(mono, config.stft_window, config.stft_hop);

  const int t = spec.frames;
  const int nbins = spec.bins;
  const int nb = config.freq_bands;
  FeatureMaps feat;
  feat.frames = t;
  feat.bands = nb;
  feat.content.assign(static_cast<std::size_t>(t) * nb, 0.0);
  for (auto& plane : feat.spatial) plane.assign(static_cast<std::size_t>(t) * nb, 0.0);

  for (int f = 0; f < t; ++f) {
    for (int b = 0; b < nb; ++b) {
      const int lo = b * nbins / nb;
      const int hi = (b + 1) * nbins / nb;
      const double inv = 1.0 / (hi - lo);
      double ml = 0.0, mr = 0.0, mm = 0.0;
      double cx = 0.0, cy = 0.0;  // cross-spectrum accumulator for band IPD
      double pl_x = 0.0, pl_y = 0.0, pr_x = 0.0, pr_y = 0.0;
      for (int k = lo; k < hi; ++k) {
        const double al = spec.mag_l(f, k), ar = spec.mag_r(f, k);
        ml += al;
        mr += ar;
        mm += mspec.mag_l(f, k);
        const double dphi = spec.ph_l(f, k) - spec.ph_r(f, k);
        cx += al * ar * std::cos(dphi);
        cy += al * ar * std::sin(dphi);
        pl_x += al * std::cos(spec.ph_l(f, k));
        pl_y += al * std::sin(spec.ph_l(f, k));
        pr_x += ar * std::cos(spec.ph_r(f, k));
        pr_y += ar * std::sin(spec.ph_r(f, k));
      }
      ml *= inv;
      mr *= inv;
      mm *= inv;
      const std::size_t idx = static_cast<std::size_t>(f) * nb + b;
      feat.content[idx] = log_compress(mm);
      feat.spatial[0][idx] = log_compress(ml);
      feat.spatial[1][idx] = log_compress(mr);
      if (config.raw_phase) {
        feat.spatial[2][idx] = std::atan2(pl_y, pl_x) * 0.5;
        feat.spatial[3][idx] = std::atan2(pr_y, pr_x) * 0.5;
      } else {
        feat.spatial[2][idx] = std::atan2(cy, cx) * 0.5;                          // band IPD
        feat.spatial[3][idx] = std::log(ml + 1e-5) - std::log(mr + 1e-5);         // band ILD
      }
    }
  }
  return feat;
}

// --- model ---

namespace {

std::vector<std::string> build_vocabulary() {
  std::set<std::string> words;
  Rng rng(1);  // parameters are irrelevant; only phrase words matter
  for (const SoundEvent& e : enumerate_phrase_events(rng)) {
    std::istringstream is(phrase_of(e));
    std::string w;
    while (is >> w) words.insert(w);
  }
  words.insert("in");
  words.insert("the");
  words.insert("and");
  for (int c = 0; c < kNumDoaClasses; ++c) words.insert(doa_label(static_cast<DoaClass>(c)));
  std::vector<std::string> vocab;
  vocab.push_back("<oov>");
  vocab.insert(vocab.end(), words.begin(), words.end());
  return vocab;
}

Tensor xavier(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  return Tensor::uniform(std::move(shape), limit, rng, true);
}

// mean over rows of m[N, D] -> [1, D], via a constant 1/N row
Tensor mean_rows(const Tensor& m) {
  const int n = m.shape[0];
  Tensor w = Tensor::full({1, n}, 1.0 / n);
  return matmul(w, m);
}

}  // namespace

Tensor l2_normalize_row(const Tensor& row) {
  Tensor s = sum_all(mul(row, row));
  Tensor inv = exp_op(mul(log_op(s), Tensor::scalar(-0.5)));
  return mul(row, inv);
}

SpatialClapModel::SpatialClapModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  vocab_ = build_vocabulary();
  Rng rng(derive_seed(config_.seed, "model-init"));
  const int cd = config_.content_dim, sd = config_.spatial_dim, jd = config_.joint_dim;
  const int th = config_.text_hidden;
  const int bands4 = config_.freq_bands / 4;
  const int cfeat = 16 * bands4;  // channels x pooled bands per frame

  // content tower
  params_.add("content.c1.w", xavier({8, 1, 3, 3}, 9, 8 * 9, rng));
  params_.add("content.c1.b", Tensor::zeros({8}, true));
  params_.add("content.c2.w", xavier({16, 8, 3, 3}, 8 * 9, 16 * 9, rng));
  params_.add("content.c2.b", Tensor::zeros({16}, true));
  params_.add("content.lin.w", xavier({cfeat, cd}, cfeat, cd, rng));
  params_.add("content.lin.b", Tensor::zeros({cd}, true));

  if (config_.has_spatial()) {
    params_.add("spatial.c1.w", xavier({8, 4, 3, 3}, 4 * 9, 8 * 9, rng));
    params_.add("spatial.c1.b", Tensor::zeros({8}, true));
    params_.add("spatial.c2.w", xavier({16, 8, 3, 3}, 8 * 9, 16 * 9, rng));
    params_.add("spatial.c2.b", Tensor::zeros({16}, true));
    // single-gate recurrent cell
    params_.add("spatial.rnn.uxz", xavier({cfeat, sd}, cfeat, sd, rng));
    params_.add("spatial.rnn.uhz", xavier({sd, sd}, sd, sd, rng));
    params_.add("spatial.rnn.bz", Tensor::zeros({sd}, true));
    params_.add("spatial.rnn.wxh", xavier({cfeat, sd}, cfeat, sd, rng));
    params_.add("spatial.rnn.whh", xavier({sd, sd}, sd, sd, rng));
    params_.add("spatial.rnn.bh", Tensor::zeros({sd}, true));
    // SELD heads (pretraining mode)
    params_.add("spatial.act.w", xavier({sd, config_.num_event_classes}, sd, config_.num_event_classes, rng));
    params_.add("spatial.act.b", Tensor::zeros({config_.num_event_classes}, true));
    params_.add("spatial.doa.w", xavier({sd, 2}, sd, 2, rng));
    params_.add("spatial.doa.b", Tensor::zeros({2}, true));
  }

  // fusion
  if (config_.variant == Variant::kStructured) {
    const int sp_out = jd / 4, ct_out = jd - jd / 4;
    params_.add("fuse.sp.w1", xavier({sd, 2 * sp_out}, sd, 2 * sp_out, rng));
    params_.add("fuse.sp.b1", Tensor::zeros({2 * sp_out}, true));
    params_.add("fuse.sp.w2", xavier({2 * sp_out, sp_out}, 2 * sp_out, sp_out, rng));
    params_.add("fuse.sp.b2", Tensor::zeros({sp_out}, true));
    params_.add("fuse.ct.w1", xavier({cd, 2 * ct_out}, cd, 2 * ct_out, rng));
    params_.add("fuse.ct.b1", Tensor::zeros({2 * ct_out}, true));
    params_.add("fuse.ct.w2", xavier({2 * ct_out, ct_out}, 2 * ct_out, ct_out, rng));
    params_.add("fuse.ct.b2", Tensor::zeros({ct_out}, true));
  } else {
    const int in = config_.has_spatial() ? cd + sd : cd;
    params_.add("fuse.w1", xavier({in, 2 * jd}, in, 2 * jd, rng));
    params_.add("fuse.b1", Tensor::zeros({2 * jd}, true));
    params_.add("fuse.w2", xavier({2 * jd, jd}, 2 * jd, jd, rng));
    params_.add("fuse.b2", Tensor::zeros({jd}, true));
  }

  // text tower
  params_.add("text.emb", xavier({static_cast<int>(vocab_.size()), th}, 1, th, rng));
  params_.add("text.w1", xavier({th, th}, th, th, rng));
  params_.add("text.b1", Tensor::zeros({th}, true));
  params_.add("text.w2", xavier({th, jd}, th, jd, rng));
  params_.add("text.b2", Tensor::zeros({jd}, true));

  params_.add("temperature.log_inv", Tensor::scalar(std::log(1.0 / config_.temperature_init), true));
}

namespace {

const Tensor& pget(const ParamSet& view, const std::string& name) {
  const Tensor* t = view.find(name);
  if (!t) throw std::logic_error("missing parameter: " + name);
  return *t;
}

Tensor plane_tensor(const std::vector<double>& data, int c, int t, int b) {
  return Tensor::from(std::vector<double>(data), {c, t, b});
}

// two conv blocks with 2x2 average pooling
Tensor conv_backbone(const Tensor& input, const ParamSet& view, const std::string& prefix) {
  Tensor h1 = avgpool2d(relu(conv2d(input, pget(view, prefix + ".c1.w"), pget(view, prefix + ".c1.b"))));
  return avgpool2d(relu(conv2d(h1, pget(view, prefix + ".c2.w"), pget(view, prefix + ".c2.b"))));
}

}  // namespace

Tensor SpatialClapModel::content_feature(const FeatureMaps& feat, const ParamSet& view) const {
  Tensor input = Tensor::from(std::vector<double>(feat.content), {1, feat.frames, feat.bands});
  Tensor conv = conv_backbone(input, view, "content");
  Tensor frames = to_frames_matrix(conv);  // [T', 16 * bands/4]
  Tensor pooled = mean_rows(frames);       // temporal mean pooling
  return bias_add_rows(matmul(pooled, pget(view, "content.lin.w")), pget(view, "content.lin.b"));
}

Tensor SpatialClapModel::spatial_feature(const FeatureMaps& feat, const ParamSet& view) const {
  if (!config_.has_spatial()) throw std::logic_error("monaural variant has no spatial branch");
  std::vector<double> stacked;
  stacked.reserve(4 * feat.spatial[0].size());
  for (const auto& plane : feat.spatial) stacked.insert(stacked.end(), plane.begin(), plane.end());
  Tensor input = Tensor::from(std::move(stacked), {4, feat.frames, feat.bands});
  Tensor conv = conv_backbone(input, view, "spatial");
  Tensor frames = to_frames_matrix(conv);  // [T', cfeat]
  const int tp = frames.shape[0];

  Tensor xu = bias_add_rows(matmul(frames, pget(view, "spatial.rnn.uxz")), pget(view, "spatial.rnn.bz"));
  Tensor xw = bias_add_rows(matmul(frames, pget(view, "spatial.rnn.wxh")), pget(view, "spatial.rnn.bh"));
  Tensor h = Tensor::zeros({1, config_.spatial_dim});
  std::vector<Tensor> hidden;
  hidden.reserve(tp);
  for (int t = 0; t < tp; ++t) {
    Tensor z = sigmoid(add(row_slice(xu, t), matmul(h, pget(view, "spatial.rnn.uhz"))));
    Tensor cand = tanh_op(add(row_slice(xw, t), matmul(h, pget(view, "spatial.rnn.whh"))));
    Tensor keep = sub(Tensor::full({1, config_.spatial_dim}, 1.0), z);
    h = add(mul(keep, h), mul(z, cand));
    hidden.push_back(h);
  }
  return mean_rows(stack_rows(hidden));  // temporal average pooling of hidden states
}

SeldOutput SpatialClapModel::spatial_forward_seld(const FeatureMaps& feat, const ParamSet& view) const {
  if (!config_.has_spatial()) throw std::logic_error("monaural variant has no spatial branch");
  std::vector<double> stacked;
  stacked.reserve(4 * feat.spatial[0].size());
  for (const auto& plane : feat.spatial) stacked.insert(stacked.end(), plane.begin(), plane.end());
  Tensor input = Tensor::from(std::move(stacked), {4, feat.frames, feat.bands});
  Tensor conv = conv_backbone(input, view, "spatial");
  Tensor frames = to_frames_matrix(conv);
  const int tp = frames.shape[0];

  Tensor xu = bias_add_rows(matmul(frames, pget(view, "spatial.rnn.uxz")), pget(view, "spatial.rnn.bz"));
  Tensor xw = bias_add_rows(matmul(frames, pget(view, "spatial.rnn.wxh")), pget(view, "spatial.rnn.bh"));
  Tensor h = Tensor::zeros({1, config_.spatial_dim});
  std::vector<Tensor> hidden;
  hidden.reserve(tp);
  for (int t = 0; t < tp; ++t) {
    Tensor z = sigmoid(add(row_slice(xu, t), matmul(h, pget(view, "spatial.rnn.uhz"))));
    Tensor cand = tanh_op(add(row_slice(xw, t), matmul(h, pget(view, "spatial.rnn.whh"))));
    Tensor keep = sub(Tensor::full({1, config_.spatial_dim}, 1.0), z);
    h = add(mul(keep, h), mul(z, cand));
    hidden.push_back(h);
  }
  Tensor hmat = stack_rows(hidden);  // [T', spatial_dim]
  SeldOutput out;
  out.activity_logits = bias_add_rows(matmul(hmat, pget(view, "spatial.act.w")), pget(view, "spatial.act.b"));
  out.doa = bias_add_rows(matmul(hmat, pget(view, "spatial.doa.w")), pget(view, "spatial.doa.b"));
  return out;
}

namespace {

// shape-only view [1, numel]; shares storage and tape
Tensor as_row(const Tensor& t) {
  Tensor r = t;
  r.shape = {1, static_cast<int>(t.numel())};
  return r;
}

}  // namespace

Tensor SpatialClapModel::fuse_prenorm(const Tensor& content, const Tensor& spatial,
                                      const ParamSet& view) const {
  if (content.numel() != static_cast<std::size_t>(config_.content_dim)) {
    throw std::invalid_argument("fuse: content feature has " + std::to_string(content.numel()) +
                                " dims, expected " + std::to_string(config_.content_dim));
  }
  if (config_.has_spatial() && spatial.numel() != static_cast<std::size_t>(config_.spatial_dim)) {
    throw std::invalid_argument("fuse: spatial feature has " + std::to_string(spatial.numel()) +
                                " dims, expected " + std::to_string(config_.spatial_dim));
  }
  if (config_.variant == Variant::kStructured) {
    Tensor sp = relu(bias_add_rows(matmul(as_row(spatial), pget(view, "fuse.sp.w1")), pget(view, "fuse.sp.b1")));
    Tensor sp_out = bias_add_rows(matmul(sp, pget(view, "fuse.sp.w2")), pget(view, "fuse.sp.b2"));
    Tensor ct = relu(bias_add_rows(matmul(as_row(content), pget(view, "fuse.ct.w1")), pget(view, "fuse.ct.b1")));
    Tensor ct_out = bias_add_rows(matmul(ct, pget(view, "fuse.ct.w2")), pget(view, "fuse.ct.b2"));
    return as_row(concat_vec(sp_out, ct_out));
  }
  Tensor joint_in =
      config_.has_spatial() ? as_row(concat_vec(as_row(content), as_row(spatial))) : as_row(content);
  Tensor h = relu(bias_add_rows(matmul(joint_in, pget(view, "fuse.w1")), pget(view, "fuse.b1")));
  return bias_add_rows(matmul(h, pget(view, "fuse.w2")), pget(view, "fuse.b2"));
}

Tensor SpatialClapModel::fuse(const Tensor& content, const Tensor& spatial, const ParamSet& view) const {
  return l2_normalize_row(fuse_prenorm(content, spatial, view));
}

Tensor SpatialClapModel::audio_embed(const FeatureMaps& feat, const ParamSet& view) const {
  Tensor content = content_feature(feat, view);
  Tensor spatial;
  if (config_.has_spatial()) spatial = spatial_feature(feat, view);
  return fuse(content, spatial, view);
}

std::vector<int> SpatialClapModel::tokenize(const std::string& caption) const {
  std::vector<int> ids;
  std::string word;
  auto flush = [&]() {
    if (word.empty()) return;
    int id = 0;  // OOV
    for (std::size_t i = 1; i < vocab_.size(); ++i) {
      if (vocab_[i] == word) {
        id = static_cast<int>(i);
        break;
      }
    }
    ids.push_back(id);
    word.clear();
  };
  for (char ch : caption) {
    if (ch == ' ' || ch == ',') {
      flush();
    } else {
      word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  flush();
  return ids;
}

Tensor SpatialClapModel::text_embed(const std::string& caption, const ParamSet& view) const {
  const std::vector<int> ids = tokenize(caption);
  if (ids.empty()) throw std::invalid_argument("text_embed: empty caption");
  Tensor emb = embedding_lookup(pget(view, "text.emb"), ids);  // [n, th]
  // multiplicative sinusoidal position gating; a pure bag of words would make
  // swapped captions indistinguishable
  const int n = static_cast<int>(ids.size());
  const int d = config_.text_hidden;
  Tensor gate = Tensor::zeros({n, d});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      const double omega = std::pow(10000.0, -static_cast<double>(j) / d);
      gate.at(static_cast<std::size_t>(i) * d + j) = 1.0 + 0.5 * std::sin((i + 1) * omega);
    }
  Tensor gated = mul(emb, gate);
  Tensor pooled = mean_rows(gated);
  Tensor h = relu(bias_add_rows(matmul(pooled, pget(view, "text.w1")), pget(view, "text.b1")));
  Tensor out = bias_add_rows(matmul(h, pget(view, "text.w2")), pget(view, "text.b2"));
  return l2_normalize_row(out);
}

double SpatialClapModel::inverse_temperature() const {
  return std::exp(params_.find("temperature.log_inv")->scalar_value());
}

void SpatialClapModel::clamp_temperature() {
  Tensor& t = *params_.find("temperature.log_inv");
  double& v = (*t.data)[0];
  v = std::clamp(v, 0.0, std::log(100.0));
}

void save_model(const SpatialClapModel& model, const std::string& path) {
  save_checkpoint(model.params(), path);
  std::ofstream os(path + ".json");
  if (!os) throw std::runtime_error("model: cannot write " + path + ".json");
  os << model.config().to_json() << "\n";
}

SpatialClapModel load_model(const std::string& path) {
  std::ifstream is(path + ".json");
  if (!is) throw std::runtime_error("model: cannot open " + path + ".json");
  std::stringstream ss;
  ss << is.rdbuf();
  SpatialClapModel model(ModelConfig::from_json(ss.str()));
  load_checkpoint(path, &model.params());
  return model;
}

SeldTargets seld_targets_for(const SpatialScene& scene, int frames, int window, int hop, int num_classes) {
  SeldTargets tg;
  tg.frames = frames;
  tg.classes = num_classes;
  tg.activity.assign(static_cast<std::size_t>(frames) * num_classes, 0.0);
  tg.doa.assign(static_cast<std::size_t>(frames) * 2, 0.0);
  tg.doa_mask.assign(static_cast<std::size_t>(frames) * 2, 0.0);
  for (int f = 0; f < frames; ++f) {
    const double center = f * hop + window / 2.0;
    int active = 0;
    const SceneSource* solo = nullptr;
    for (const SceneSource& src : scene.sources) {
      const double start = src.onset;
      const double end = src.onset + src.event.duration_s * kDefaultSampleRate;
      if (center >= start && center < end) {
        tg.activity[static_cast<std::size_t>(f) * num_classes + static_cast<int>(src.event.event_class)] = 1.0;
        ++active;
        solo = &src;
      }
    }
    if (active == 1) {
      // the spatial target follows the assigned RIR slot
      int slot = 0;
      for (std::size_t i = 0; i < scene.sources.size(); ++i)
        if (&scene.sources[i] == solo) slot = scene.permutation[i];
      const double az = scene.sources[slot].folded_azimuth_deg * kPi / 180.0;
      tg.doa[static_cast<std::size_t>(f) * 2 + 0] = std::sin(az);
      tg.doa[static_cast<std::size_t>(f) * 2 + 1] = std::cos(az);
      tg.doa_mask[static_cast<std::size_t>(f) * 2 + 0] = 1.0;
      tg.doa_mask[static_cast<std::size_t>(f) * 2 + 1] = 1.0;
    }
  }
  return tg;
}

}  // namespace sclap
