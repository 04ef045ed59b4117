#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sclap/rng.hpp"

namespace sclap {

struct Tensor;

// One node of the reverse-mode tape. The backprop closure captures the
// output's data/grad buffers by shared_ptr, so nodes never own their output
// tensor and the graph stays acyclic.
struct TapeNode {
  std::vector<Tensor> parents;
  std::function<void()> backprop;
  bool backward_done = false;
};

// Dense 64-bit float tensor, row-major, value semantics. Copies share the
// underlying buffers; ops never mutate inputs, they return fresh tensors.
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;  // allocated iff requires_grad
  bool requires_grad = false;
  std::shared_ptr<TapeNode> node;

  Tensor() = default;

  std::size_t numel() const { return data ? data->size() : 0; }
  bool is_scalar() const { return numel() == 1; }
  double scalar_value() const { return (*data)[0]; }

  double& at(std::size_t i) { return (*data)[i]; }
  double at(std::size_t i) const { return (*data)[i]; }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<double> values, std::vector<int> shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // i.i.d. U(-limit, limit); used for parameter init.
  static Tensor uniform(std::vector<int> shape, double limit, Rng& rng, bool requires_grad = true);

  // Same storage, fresh zeroed grad, no tape. Lets worker threads accumulate
  // gradients privately against shared parameter data.
  Tensor grad_clone() const;
  // Same storage, no grad, no tape; for inference-only forward passes.
  Tensor detached() const;

  void zero_grad();
  std::string shape_str() const;
};

std::string shape_to_string(const std::vector<int>& shape);

// --- elementwise ops (equal-shape or scalar broadcast) ---
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
// exp with input clamped to <= kExpClampMax; gradient is zero past the clamp.
Tensor exp_op(const Tensor& x);
// log with input clamped to >= kLogClampMin; rejects inputs below -1e-9.
Tensor log_op(const Tensor& x);
Tensor tanh_op(const Tensor& x);
// sigmoid composed as 0.5*(tanh(x/2)+1); convenience wrapper.
Tensor sigmoid(const Tensor& x);

inline constexpr double kExpClampMax = 60.0;
inline constexpr double kLogClampMin = 1e-12;

// --- linear algebra ---
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose2d(const Tensor& x);
// m[N,D] + b[D] broadcast over rows.
Tensor bias_add_rows(const Tensor& m, const Tensor& b);

// --- reductions / reshaping ---
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
// Stack k tensors of identical numel D (shape [D] or [1,D]) into [k,D].
Tensor stack_rows(const std::vector<Tensor>& rows);
Tensor concat_vec(const Tensor& a, const Tensor& b);
// Row i of m[N,D] as [1,D].
Tensor row_slice(const Tensor& m, int row);
// [C,T,B] -> [T, C*B]; frame-major layout for recurrent layers.
Tensor to_frames_matrix(const Tensor& x);

// --- structured ops ---
// x[Ci,H,W] (*) w[Co,Ci,kh,kw] + b[Co], stride 1, zero padding kh/2 x kw/2.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);
// 2x2 average pooling, stride 2, floor semantics.
Tensor avgpool2d(const Tensor& x);
// Rows of table[V,D] selected by ids; backward scatter-adds.
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

// --- losses ---
// Mean over rows of -log softmax(logits_row)[target], max-stabilized.
Tensor softmax_cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets);
// Mean over unmasked cells of binary cross-entropy with logits.
// targets/mask are constants of the same numel as logits; mask entries are 0/1.
Tensor bce_with_logits_mean(const Tensor& logits, const std::vector<double>& targets,
                            const std::vector<double>& mask);

// --- autodiff driver ---
void backward(Tensor& loss);
// Seed a (possibly non-scalar) root with an explicit output gradient.
void backward_seed(Tensor& root, const std::vector<double>& seed);

// --- optimizer ---
struct AdamState {
  long long step_count = 0;
  double learning_rate = 1e-5;  // paper value; run configs override
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// Named parameter registry; iteration order is insertion order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> params;

  Tensor& add(const std::string& name, Tensor t);
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  std::size_t total_size() const;
  void zero_grad();
  // Shared data, per-clone grads (for worker threads).
  ParamSet grad_clone() const;
  // Shared data, no grads, no tape participation.
  ParamSet detached() const;
  // Accumulate other's grads into ours (same layout required).
  void accumulate_grads(const ParamSet& other);
};

void adam_step(ParamSet& params, AdamState& state);

}  // namespace sclap
