#include "sclap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sclap {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in " + shape_to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void require_grad_buffers(const Tensor& t) {
  if (t.requires_grad && !t.grad) throw std::logic_error("tensor: requires_grad tensor without grad buffer");
}

Tensor make_output(std::vector<int> shape, bool requires_grad) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  return t;
}

bool any_grad(const Tensor& a) { return a.requires_grad; }
bool any_grad(const Tensor& a, const Tensor& b) { return a.requires_grad || b.requires_grad; }

void attach(Tensor& out, std::vector<Tensor> parents, std::function<void()> backprop) {
  if (!out.requires_grad) return;
  out.node = std::make_shared<TapeNode>();
  out.node->parents = std::move(parents);
  out.node->backprop = std::move(backprop);
}

}  // namespace

std::string shape_to_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  const std::size_t n = shape_numel(shape);
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(n, 0.0);
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<double>>(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

Tensor Tensor::from(std::vector<double> values, std::vector<int> shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (n != values.size()) {
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) + " values for shape " +
                                shape_to_string(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<double>>(n, 0.0);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({value}, {1}, requires_grad); }

Tensor Tensor::uniform(std::vector<int> shape, double limit, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : *t.data) v = rng.uniform(-limit, limit);
  return t;
}

Tensor Tensor::grad_clone() const {
  Tensor t;
  t.shape = shape;
  t.data = data;
  t.requires_grad = requires_grad;
  if (requires_grad) t.grad = std::make_shared<std::vector<double>>(numel(), 0.0);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape = shape;
  t.data = data;
  t.requires_grad = false;
  return t;
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

// --- elementwise ---

namespace {

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
  const bool a_scalar = a.is_scalar();
  const bool b_scalar = b.is_scalar();
  if (!a_scalar && !b_scalar && a.shape != b.shape) {
    throw std::invalid_argument(std::string(name) + ": incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
  }
  const Tensor& big = a_scalar ? b : a;
  const std::size_t n = big.numel();
  Tensor out = make_output(big.shape, any_grad(a, b));
  const double* pa = a.data->data();
  const double* pb = b.data->data();
  double* po = out.data->data();
  for (std::size_t i = 0; i < n; ++i) {
    const double av = a_scalar ? pa[0] : pa[i];
    const double bv = b_scalar ? pb[0] : pb[i];
    switch (kind) {
      case BinKind::Add: po[i] = av + bv; break;
      case BinKind::Sub: po[i] = av - bv; break;
      case BinKind::Mul: po[i] = av * bv; break;
    }
  }
  if (out.requires_grad) {
    auto og = out.grad;
    auto ag = a.grad, bg = b.grad;
    auto ad = a.data, bd = b.data;
    const bool arg = a.requires_grad, brg = b.requires_grad;
    attach(out, {a, b}, [=]() {
      const double* g = og->data();
      for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        if (arg) {
          const double da = (kind == BinKind::Mul) ? (b_scalar ? (*bd)[0] : (*bd)[i]) : 1.0;
          (*ag)[a_scalar ? 0 : i] += gi * da;
        }
        if (brg) {
          double db;
          switch (kind) {
            case BinKind::Add: db = 1.0; break;
            case BinKind::Sub: db = -1.0; break;
            case BinKind::Mul: db = a_scalar ? (*ad)[0] : (*ad)[i]; break;
          }
          (*bg)[b_scalar ? 0 : i] += gi * db;
        }
      }
    });
  }
  return out;
}

Tensor unary_op(const Tensor& x, const char* /*name*/, double (*fwd)(double), double (*dfdx)(double)) {
  const std::size_t n = x.numel();
  Tensor out = make_output(x.shape, any_grad(x));
  const double* px = x.data->data();
  double* po = out.data->data();
  for (std::size_t i = 0; i < n; ++i) po[i] = fwd(px[i]);
  if (out.requires_grad) {
    auto og = out.grad;
    auto xg = x.grad;
    auto xd = x.data;
    attach(out, {x}, [=]() {
      for (std::size_t i = 0; i < n; ++i) (*xg)[i] += (*og)[i] * dfdx((*xd)[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Add, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, BinKind::Mul, "mul"); }

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp_op(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(std::min(v, kExpClampMax)); },
      [](double v) { return v < kExpClampMax ? std::exp(v) : 0.0; });
}

Tensor log_op(const Tensor& x) {
  for (double v : *x.data) {
    if (v < -1e-9) throw std::domain_error("log: input " + std::to_string(v) + " below clamp tolerance");
  }
  return unary_op(
      x, "log", [](double v) { return std::log(std::max(v, kLogClampMin)); },
      [](double v) { return v > kLogClampMin ? 1.0 / v : 0.0; });
}

Tensor tanh_op(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

Tensor sigmoid(const Tensor& x) {
  Tensor half = Tensor::scalar(0.5);
  return add(mul(tanh_op(mul(x, half)), half), half);
}

// --- linear algebra ---

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
    throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
  }
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = make_output({m, n}, any_grad(a, b));
  const double* pa = a.data->data();
  const double* pb = b.data->data();
  double* po = out.data->data();
#pragma omp parallel for if (static_cast<long long>(m) * n * k > 65536)
  for (int i = 0; i < m; ++i) {
    double* orow = po + static_cast<std::size_t>(i) * n;
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = pb + static_cast<std::size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (out.requires_grad) {
    auto og = out.grad;
    auto ag = a.grad, bg = b.grad;
    auto ad = a.data, bd = b.data;
    const bool arg = a.requires_grad, brg = b.requires_grad;
    attach(out, {a, b}, [=]() {
      const double* g = og->data();
      if (arg) {
        // dA = G * B^T
        for (int i = 0; i < m; ++i)
          for (int kk = 0; kk < k; ++kk) {
            const double* grow = g + static_cast<std::size_t>(i) * n;
            const double* brow = bd->data() + static_cast<std::size_t>(kk) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
            (*ag)[static_cast<std::size_t>(i) * k + kk] += s;
          }
      }
      if (brg) {
        // dB = A^T * G
        for (int kk = 0; kk < k; ++kk)
          for (int i = 0; i < m; ++i) {
            const double av = (*ad)[static_cast<std::size_t>(i) * k + kk];
            const double* grow = g + static_cast<std::size_t>(i) * n;
            double* brow = bg->data() + static_cast<std::size_t>(kk) * n;
            for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
          }
      }
    });
  }
  return out;
}

Tensor transpose2d(const Tensor& x) {
  if (x.shape.size() != 2) throw std::invalid_argument("transpose2d: need rank 2, got " + x.shape_str());
  const int m = x.shape[0], n = x.shape[1];
  Tensor out = make_output({n, m}, any_grad(x));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      (*out.data)[static_cast<std::size_t>(j) * m + i] = (*x.data)[static_cast<std::size_t>(i) * n + j];
  if (out.requires_grad) {
    auto og = out.grad;
    auto xg = x.grad;
    attach(out, {x}, [=]() {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          (*xg)[static_cast<std::size_t>(i) * n + j] += (*og)[static_cast<std::size_t>(j) * m + i];
    });
  }
  return out;
}

Tensor bias_add_rows(const Tensor& m, const Tensor& b) {
  if (m.shape.size() != 2 || b.numel() != static_cast<std::size_t>(m.shape[1])) {
    throw std::invalid_argument("bias_add_rows: incompatible shapes " + m.shape_str() + " vs " + b.shape_str());
  }
  const int rows = m.shape[0], cols = m.shape[1];
  Tensor out = make_output(m.shape, any_grad(m, b));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      (*out.data)[static_cast<std::size_t>(i) * cols + j] =
          (*m.data)[static_cast<std::size_t>(i) * cols + j] + (*b.data)[j];
  if (out.requires_grad) {
    auto og = out.grad;
    auto mg = m.grad, bg = b.grad;
    const bool mrg = m.requires_grad, brg = b.requires_grad;
    attach(out, {m, b}, [=]() {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          const double g = (*og)[static_cast<std::size_t>(i) * cols + j];
          if (mrg) (*mg)[static_cast<std::size_t>(i) * cols + j] += g;
          if (brg) (*bg)[j] += g;
        }
    });
  }
  return out;
}

// --- reductions / reshaping ---

Tensor sum_all(const Tensor& x) {
  const std::size_t n = x.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (*x.data)[i];
  Tensor out = Tensor::from({s}, {1}, any_grad(x));
  if (out.requires_grad) {
    auto og = out.grad;
    auto xg = x.grad;
    attach(out, {x}, [=]() {
      const double g = (*og)[0];
      for (std::size_t i = 0; i < n; ++i) (*xg)[i] += g;
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  return mul(sum_all(x), Tensor::scalar(inv));
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  const std::size_t d = rows[0].numel();
  bool rg = false;
  for (const Tensor& r : rows) {
    if (r.numel() != d)
      throw std::invalid_argument("stack_rows: ragged rows " + rows[0].shape_str() + " vs " + r.shape_str());
    rg = rg || r.requires_grad;
  }
  const int n = static_cast<int>(rows.size());
  Tensor out = make_output({n, static_cast<int>(d)}, rg);
  for (int i = 0; i < n; ++i)
    std::copy(rows[i].data->begin(), rows[i].data->end(), out.data->begin() + static_cast<std::size_t>(i) * d);
  if (out.requires_grad) {
    auto og = out.grad;
    std::vector<std::shared_ptr<std::vector<double>>> grads;
    std::vector<bool> rgs;
    for (const Tensor& r : rows) {
      grads.push_back(r.grad);
      rgs.push_back(r.requires_grad);
    }
    attach(out, rows, [=]() {
      for (int i = 0; i < n; ++i) {
        if (!rgs[i]) continue;
        for (std::size_t j = 0; j < d; ++j) (*grads[i])[j] += (*og)[static_cast<std::size_t>(i) * d + j];
      }
    });
  }
  return out;
}

Tensor concat_vec(const Tensor& a, const Tensor& b) {
  const std::size_t na = a.numel(), nb = b.numel();
  Tensor out = make_output({static_cast<int>(na + nb)}, any_grad(a, b));
  std::copy(a.data->begin(), a.data->end(), out.data->begin());
  std::copy(b.data->begin(), b.data->end(), out.data->begin() + na);
  if (out.requires_grad) {
    auto og = out.grad;
    auto ag = a.grad, bg = b.grad;
    const bool arg = a.requires_grad, brg = b.requires_grad;
    attach(out, {a, b}, [=]() {
      if (arg)
        for (std::size_t i = 0; i < na; ++i) (*ag)[i] += (*og)[i];
      if (brg)
        for (std::size_t i = 0; i < nb; ++i) (*bg)[i] += (*og)[na + i];
    });
  }
  return out;
}

Tensor row_slice(const Tensor& m, int row) {
  if (m.shape.size() != 2 || row < 0 || row >= m.shape[0]) {
    throw std::invalid_argument("row_slice: row " + std::to_string(row) + " of " + m.shape_str());
  }
  const int cols = m.shape[1];
  Tensor out = make_output({1, cols}, any_grad(m));
  std::copy(m.data->begin() + static_cast<std::size_t>(row) * cols,
            m.data->begin() + static_cast<std::size_t>(row + 1) * cols, out.data->begin());
  if (out.requires_grad) {
    auto og = out.grad;
    auto mg = m.grad;
    attach(out, {m}, [=]() {
      for (int j = 0; j < cols; ++j) (*mg)[static_cast<std::size_t>(row) * cols + j] += (*og)[j];
    });
  }
  return out;
}

Tensor to_frames_matrix(const Tensor& x) {
  if (x.shape.size() != 3) throw std::invalid_argument("to_frames_matrix: need rank 3, got " + x.shape_str());
  const int c = x.shape[0], t = x.shape[1], b = x.shape[2];
  Tensor out = make_output({t, c * b}, any_grad(x));
  for (int ci = 0; ci < c; ++ci)
    for (int ti = 0; ti < t; ++ti)
      for (int bi = 0; bi < b; ++bi)
        (*out.data)[static_cast<std::size_t>(ti) * (c * b) + ci * b + bi] =
            (*x.data)[(static_cast<std::size_t>(ci) * t + ti) * b + bi];
  if (out.requires_grad) {
    auto og = out.grad;
    auto xg = x.grad;
    attach(out, {x}, [=]() {
      for (int ci = 0; ci < c; ++ci)
        for (int ti = 0; ti < t; ++ti)
          for (int bi = 0; bi < b; ++bi)
            (*xg)[(static_cast<std::size_t>(ci) * t + ti) * b + bi] +=
                (*og)[static_cast<std::size_t>(ti) * (c * b) + ci * b + bi];
    });
  }
  return out;
}

// --- structured ops ---

namespace {

// Zero-padded copy of x[C,H,W] with margin (ph, pw).
std::vector<double> pad_chw(const std::vector<double>& x, int c, int h, int w, int ph, int pw) {
  const int hp = h + 2 * ph, wp = w + 2 * pw;
  std::vector<double> out(static_cast<std::size_t>(c) * hp * wp, 0.0);
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y) {
      const double* src = x.data() + (static_cast<std::size_t>(ci) * h + y) * w;
      double* dst = out.data() + (static_cast<std::size_t>(ci) * hp + y + ph) * wp + pw;
      std::copy(src, src + w, dst);
    }
  return out;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.shape.size() != 3 || w.shape.size() != 4 || x.shape[0] != w.shape[1]) {
    throw std::invalid_argument("conv2d: incompatible shapes " + x.shape_str() + " vs " + w.shape_str());
  }
  const int ci = x.shape[0], h = x.shape[1], wd = x.shape[2];
  const int co = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  if (b.numel() != static_cast<std::size_t>(co)) {
    throw std::invalid_argument("conv2d: bias shape " + b.shape_str() + " for " + std::to_string(co) + " channels");
  }
  const int ph = kh / 2, pw = kw / 2;
  const int hp = h + 2 * ph, wp = wd + 2 * pw;
  auto xpad = std::make_shared<std::vector<double>>(pad_chw(*x.data, ci, h, wd, ph, pw));

  Tensor out = make_output({co, h, wd}, any_grad(x) || any_grad(w) || any_grad(b));
  double* po = out.data->data();
  const double* pw_ = w.data->data();
  const double* pb = b.data->data();
  const double* px = xpad->data();
#pragma omp parallel for collapse(2) if (static_cast<long long>(co) * h * wd * ci * kh * kw > 65536)
  for (int oc = 0; oc < co; ++oc) {
    for (int y = 0; y < h; ++y) {
      double* orow = po + (static_cast<std::size_t>(oc) * h + y) * wd;
      for (int xx = 0; xx < wd; ++xx) orow[xx] = pb[oc];
      for (int ic = 0; ic < ci; ++ic)
        for (int ky = 0; ky < kh; ++ky) {
          const double* xrow = px + (static_cast<std::size_t>(ic) * hp + y + ky) * wp;
          const double* wrow = pw_ + ((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw;
          for (int kx = 0; kx < kw; ++kx) {
            const double wv = wrow[kx];
            const double* xoff = xrow + kx;
            for (int xx = 0; xx < wd; ++xx) orow[xx] += wv * xoff[xx];
          }
        }
    }
  }
  if (out.requires_grad) {
    auto og = out.grad;
    auto xg = x.grad, wg = w.grad, bg = b.grad;
    const bool xrg = x.requires_grad, wrg = w.requires_grad, brg = b.requires_grad;
    auto wd_ = w.data;
    attach(out, {x, w, b}, [=]() {
      const double* g = og->data();
      if (brg) {
        for (int oc = 0; oc < co; ++oc) {
          double s = 0.0;
          const double* gplane = g + static_cast<std::size_t>(oc) * h * wd;
          for (int i = 0; i < h * wd; ++i) s += gplane[i];
          (*bg)[oc] += s;
        }
      }
      if (wrg) {
        for (int oc = 0; oc < co; ++oc)
          for (int ic = 0; ic < ci; ++ic)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                double s = 0.0;
                for (int y = 0; y < h; ++y) {
                  const double* grow = g + (static_cast<std::size_t>(oc) * h + y) * wd;
                  const double* xrow = xpad->data() + (static_cast<std::size_t>(ic) * hp + y + ky) * wp + kx;
                  for (int xx = 0; xx < wd; ++xx) s += grow[xx] * xrow[xx];
                }
                (*wg)[((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx] += s;
              }
      }
      if (xrg) {
        std::vector<double> gpad(static_cast<std::size_t>(ci) * hp * wp, 0.0);
        for (int oc = 0; oc < co; ++oc)
          for (int ic = 0; ic < ci; ++ic)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const double wv = (*wd_)[((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx];
                for (int y = 0; y < h; ++y) {
                  const double* grow = g + (static_cast<std::size_t>(oc) * h + y) * wd;
                  double* xrow = gpad.data() + (static_cast<std::size_t>(ic) * hp + y + ky) * wp + kx;
                  for (int xx = 0; xx < wd; ++xx) xrow[xx] += wv * grow[xx];
                }
              }
        for (int ic = 0; ic < ci; ++ic)
          for (int y = 0; y < h; ++y) {
            const double* src = gpad.data() + (static_cast<std::size_t>(ic) * hp + y + ph) * wp + pw;
            double* dst = xg->data() + (static_cast<std::size_t>(ic) * h + y) * wd;
            for (int xx = 0; xx < wd; ++xx) dst[xx] += src[xx];
          }
      }
    });
  }
  return out;
}

Tensor avgpool2d(const Tensor& x) {
  if (x.shape.size() != 3) throw std::invalid_argument("avgpool2d: need rank 3, got " + x.shape_str());
  const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
  const int ho = h / 2, wo = w / 2;
  if (ho == 0 || wo == 0) throw std::invalid_argument("avgpool2d: input too small " + x.shape_str());
  Tensor out = make_output({c, ho, wo}, any_grad(x));
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < ho; ++y)
      for (int xx = 0; xx < wo; ++xx) {
        const std::size_t base = (static_cast<std::size_t>(ci) * h + 2 * y) * w + 2 * xx;
        (*out.data)[(static_cast<std::size_t>(ci) * ho + y) * wo + xx] =
            0.25 * ((*x.data)[base] + (*x.data)[base + 1] + (*x.data)[base + w] + (*x.data)[base + w + 1]);
      }
  if (out.requires_grad) {
    auto og = out.grad;
    auto xg = x.grad;
    attach(out, {x}, [=]() {
      for (int ci = 0; ci < c; ++ci)
        for (int y = 0; y < ho; ++y)
          for (int xx = 0; xx < wo; ++xx) {
            const double g = 0.25 * (*og)[(static_cast<std::size_t>(ci) * ho + y) * wo + xx];
            const std::size_t base = (static_cast<std::size_t>(ci) * h + 2 * y) * w + 2 * xx;
            (*xg)[base] += g;
            (*xg)[base + 1] += g;
            (*xg)[base + w] += g;
            (*xg)[base + w + 1] += g;
          }
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  if (table.shape.size() != 2) throw std::invalid_argument("embedding_lookup: table must be rank 2");
  const int v = table.shape[0], d = table.shape[1];
  for (int id : ids) {
    if (id < 0 || id >= v) throw std::out_of_range("embedding_lookup: id " + std::to_string(id));
  }
  const int n = static_cast<int>(ids.size());
  Tensor out = make_output({n, d}, any_grad(table));
  for (int i = 0; i < n; ++i)
    std::copy(table.data->begin() + static_cast<std::size_t>(ids[i]) * d,
              table.data->begin() + static_cast<std::size_t>(ids[i] + 1) * d,
              out.data->begin() + static_cast<std::size_t>(i) * d);
  if (out.requires_grad) {
    auto og = out.grad;
    auto tg = table.grad;
    auto ids_copy = ids;
    attach(out, {table}, [=]() {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          (*tg)[static_cast<std::size_t>(ids_copy[i]) * d + j] += (*og)[static_cast<std::size_t>(i) * d + j];
    });
  }
  return out;
}

// --- losses ---

Tensor softmax_cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.shape.size() != 2) throw std::invalid_argument("softmax_ce: logits must be rank 2");
  const int n = logits.shape[0], m = logits.shape[1];
  if (static_cast<int>(targets.size()) != n) {
    throw std::invalid_argument("softmax_ce: " + std::to_string(targets.size()) + " targets for " +
                                std::to_string(n) + " rows");
  }
  for (int t : targets) {
    if (t < 0 || t >= m) throw std::out_of_range("softmax_ce: target index " + std::to_string(t));
  }
  // softmax probabilities are cached for the backward pass
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n) * m);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data->data() + static_cast<std::size_t>(i) * m;
    double mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const double logz = std::log(z) + mx;
    loss += logz - row[targets[i]];
    for (int j = 0; j < m; ++j) (*probs)[static_cast<std::size_t>(i) * m + j] = std::exp(row[j] - logz);
  }
  loss /= n;
  Tensor out = Tensor::from({loss}, {1}, any_grad(logits));
  if (out.requires_grad) {
    auto og = out.grad;
    auto lg = logits.grad;
    auto tgt = targets;
    attach(out, {logits}, [=]() {
      const double g = (*og)[0] / n;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
          double p = (*probs)[static_cast<std::size_t>(i) * m + j];
          if (j == tgt[i]) p -= 1.0;
          (*lg)[static_cast<std::size_t>(i) * m + j] += g * p;
        }
    });
  }
  return out;
}

Tensor bce_with_logits_mean(const Tensor& logits, const std::vector<double>& targets,
                            const std::vector<double>& mask) {
  const std::size_t n = logits.numel();
  if (targets.size() != n || mask.size() != n) {
    throw std::invalid_argument("bce: targets/mask size mismatch with logits " + logits.shape_str());
  }
  double count = 0.0;
  for (double mv : mask) count += mv;
  if (count <= 0.0) throw std::invalid_argument("bce: empty mask");
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] == 0.0) continue;
    const double z = (*logits.data)[i], y = targets[i];
    // stable: max(z,0) - z*y + log(1+exp(-|z|))
    loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  }
  loss /= count;
  Tensor out = Tensor::from({loss}, {1}, any_grad(logits));
  if (out.requires_grad) {
    auto og = out.grad;
    auto lg = logits.grad;
    auto ld = logits.data;
    auto tgt = targets;
    auto msk = mask;
    attach(out, {logits}, [=]() {
      const double g = (*og)[0] / count;
      for (std::size_t i = 0; i < n; ++i) {
        if (msk[i] == 0.0) continue;
        const double p = 1.0 / (1.0 + std::exp(-(*ld)[i]));
        (*lg)[i] += g * (p - tgt[i]);
      }
    });
  }
  return out;
}

// --- autodiff driver ---

namespace {

void topo_visit(const std::shared_ptr<TapeNode>& node, std::unordered_set<TapeNode*>& seen,
                std::vector<TapeNode*>& order) {
  if (!node || seen.count(node.get())) return;
  seen.insert(node.get());
  for (const Tensor& p : node->parents) topo_visit(p.node, seen, order);
  order.push_back(node.get());
}

}  // namespace

void backward_seed(Tensor& root, const std::vector<double>& seed) {
  if (!root.requires_grad) throw std::invalid_argument("backward: root does not require grad");
  if (seed.size() != root.numel()) throw std::invalid_argument("backward: seed size mismatch");
  if (!root.node) {
    // leaf root: gradient lands directly on it
    for (std::size_t i = 0; i < seed.size(); ++i) (*root.grad)[i] += seed[i];
    return;
  }
  if (root.node->backward_done) throw std::logic_error("backward: called twice on the same tape root");
  root.node->backward_done = true;
  require_grad_buffers(root);
  for (std::size_t i = 0; i < seed.size(); ++i) (*root.grad)[i] += seed[i];

  std::unordered_set<TapeNode*> seen;
  std::vector<TapeNode*> order;
  topo_visit(root.node, seen, order);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop();
  }
}

void backward(Tensor& loss) {
  if (!loss.is_scalar()) throw std::invalid_argument("backward: loss must be scalar, got " + loss.shape_str());
  if (!loss.node && !loss.requires_grad) throw std::invalid_argument("backward: loss is detached from any tape");
  backward_seed(loss, {1.0});
}

// --- optimizer ---

Tensor& ParamSet::add(const std::string& name, Tensor t) {
  for (const std::string& n : names) {
    if (n == name) throw std::invalid_argument("param set: duplicate name " + name);
  }
  names.push_back(name);
  params.push_back(std::move(t));
  return params.back();
}

Tensor* ParamSet::find(const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return &params[i];
  return nullptr;
}

const Tensor* ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return &params[i];
  return nullptr;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const Tensor& p : params) n += p.numel();
  return n;
}

void ParamSet::zero_grad() {
  for (Tensor& p : params) p.zero_grad();
}

ParamSet ParamSet::grad_clone() const {
  ParamSet out;
  out.names = names;
  for (const Tensor& p : params) out.params.push_back(p.grad_clone());
  return out;
}

ParamSet ParamSet::detached() const {
  ParamSet out;
  out.names = names;
  for (const Tensor& p : params) out.params.push_back(p.detached());
  return out;
}

void ParamSet::accumulate_grads(const ParamSet& other) {
  if (other.params.size() != params.size()) throw std::invalid_argument("param set: layout mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].grad || !other.params[i].grad) throw std::logic_error("param set: missing grad buffer");
    const std::size_t n = params[i].numel();
    for (std::size_t j = 0; j < n; ++j) (*params[i].grad)[j] += (*other.params[i].grad)[j];
  }
}

void adam_step(ParamSet& params, AdamState& state) {
  if (state.first_moment.empty()) {
    for (const Tensor& p : params.params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.params.size()) {
    throw std::invalid_argument("adam: state tracks " + std::to_string(state.first_moment.size()) +
                                " parameters, set has " + std::to_string(params.params.size()));
  }
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    Tensor& p = params.params[i];
    if (!p.requires_grad || !p.grad) throw std::invalid_argument("adam: missing gradient on " + params.names[i]);
    if (state.first_moment[i].size() != p.numel()) throw std::invalid_argument("adam: moment size mismatch");
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    Tensor& p = params.params[i];
    std::vector<double>& m = state.first_moment[i];
    std::vector<double>& v = state.second_moment[i];
    const std::size_t n = p.numel();
    for (std::size_t j = 0; j < n; ++j) {
      const double g = (*p.grad)[j];
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      (*p.data)[j] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
    p.zero_grad();
  }
}

}  // namespace sclap
