#pragma once

#include <string>
#include <vector>

#include "sclap/dsp.hpp"
#include "sclap/tensor.hpp"

namespace sclap {

enum class Variant { kMonaural, kConventional, kStructured, kOurs };
enum class SpatialPretrain { kSeld, kDoaOnly, kNone };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);
const char* pretrain_name(SpatialPretrain p);
SpatialPretrain pretrain_from_name(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::kOurs;
  bool use_scl = true;
  SpatialPretrain spatial_pretrain = SpatialPretrain::kSeld;
  int content_dim = 64;
  int spatial_dim = 32;
  int joint_dim = 32;
  int text_hidden = 64;
  double temperature_init = 0.07;
  int freq_bands = 32;
  bool raw_phase = false;  // feed per-channel phase instead of IPD + ILD
  int stft_window = 512;
  int stft_hop = 256;
  int num_event_classes = 8;  // SELD activity head width
  std::uint64_t seed = 1;

  bool has_spatial() const { return variant != Variant::kMonaural; }
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Band-pooled log-spectral input planes shared by both audio branches.
struct FeatureMaps {
  int frames = 0;
  int bands = 0;
  std::vector<double> content;              // frames x bands, log-magnitude of the channel average
  std::array<std::vector<double>, 4> spatial;  // logmag L, logmag R, IPD (or phase L), ILD (or phase R)
};

FeatureMaps extract_features(const StereoClip& clip, const ModelConfig& config);

// Frame-level SELD targets aligned with FeatureMaps frames.
struct SeldTargets {
  int frames = 0;
  int classes = 0;
  std::vector<double> activity;   // frames x classes, 0/1
  std::vector<double> doa;        // frames x 2, unit vector (sin, cos) of folded azimuth
  std::vector<double> doa_mask;   // frames x 2, 1 where exactly one source is active
};

struct SeldOutput {
  Tensor activity_logits;  // [frames, classes]
  Tensor doa;              // [frames, 2]
};

class SpatialClapModel {
 public:
  SpatialClapModel() = default;
  explicit SpatialClapModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Forward passes run against an explicit parameter view so worker threads
  // can use grad clones of the shared parameters.
  Tensor audio_embed(const FeatureMaps& feat, const ParamSet& view) const;
  Tensor text_embed(const std::string& caption, const ParamSet& view) const;
  SeldOutput spatial_forward_seld(const FeatureMaps& feat, const ParamSet& view) const;

  Tensor content_feature(const FeatureMaps& feat, const ParamSet& view) const;  // [1, content_dim]
  Tensor spatial_feature(const FeatureMaps& feat, const ParamSet& view) const;  // [1, spatial_dim]

  // Fusion head; exposed for the variant contracts. Pre-norm variant returns
  // the vector before L2 normalization.
  Tensor fuse(const Tensor& content, const Tensor& spatial, const ParamSet& view) const;
  Tensor fuse_prenorm(const Tensor& content, const Tensor& spatial, const ParamSet& view) const;

  std::vector<int> tokenize(const std::string& caption) const;
  const std::vector<std::string>& vocabulary() const { return vocab_; }

  Tensor& temperature_param() { return *params_.find("temperature.log_inv"); }
  double inverse_temperature() const;
  // projects 1/temperature back into [1, 100]
  void clamp_temperature();

 private:
  ModelConfig config_;
  ParamSet params_;
  std::vector<std::string> vocab_;
};

// L2 normalization of a [1, d] row built from taped primitives.
Tensor l2_normalize_row(const Tensor& row);

// Checkpoint plus a JSON sidecar carrying the ModelConfig.
void save_model(const SpatialClapModel& model, const std::string& path);
SpatialClapModel load_model(const std::string& path);

SeldTargets seld_targets_for(const struct SpatialScene& scene, int frames, int window, int hop,
                             int num_classes);

}  // namespace sclap
