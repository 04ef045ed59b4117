#include "ref/reference.hpp"

#include <cmath>
#include <stdexcept>

namespace sclap::ref {

std::vector<double> naive_matmul(const std::vector<double>& a, int m, int k, const std::vector<double>& b, int n) {
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int kk = 0; kk < k; ++kk)
        s += a[static_cast<std::size_t>(i) * k + kk] * b[static_cast<std::size_t>(kk) * n + j];
      out[static_cast<std::size_t>(i) * n + j] = s;
    }
  return out;
}

std::vector<double> naive_convolve(const std::vector<double>& x, const std::vector<double>& h) {
  std::vector<double> out(x.size() + h.size() - 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < h.size(); ++j) out[i + j] += x[i] * h[j];
  return out;
}

std::vector<std::complex<double>> naive_dft(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<std::complex<double>> out(n);
  const double w = -2.0 * 3.14159265358979323846 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ph = w * static_cast<double>(k) * static_cast<double>(t);
      acc += frame[t] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    out[k] = acc;
  }
  return out;
}

std::vector<double> serial_conv2d(const std::vector<double>& x, int ci, int h, int w,
                                  const std::vector<double>& weight, int co, int kh, int kw,
                                  const std::vector<double>& bias) {
  const int ph = kh / 2, pw = kw / 2;
  std::vector<double> out(static_cast<std::size_t>(co) * h * w, 0.0);
  for (int oc = 0; oc < co; ++oc)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double s = bias[oc];
        for (int ic = 0; ic < ci; ++ic)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const int yy = y + ky - ph, xs = xx + kx - pw;
              if (yy < 0 || yy >= h || xs < 0 || xs >= w) continue;
              s += weight[((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx] *
                   x[(static_cast<std::size_t>(ic) * h + yy) * w + xs];
            }
        out[(static_cast<std::size_t>(oc) * h + y) * w + xx] = s;
      }
  return out;
}

double schroeder_rt60(const std::vector<double>& h, double sample_rate) {
  if (h.empty()) throw std::invalid_argument("schroeder_rt60: empty impulse response");
  // backward energy integral
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (std::size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  if (acc <= 0.0) throw std::invalid_argument("schroeder_rt60: zero-energy impulse response");
  const double e0 = edc[0];
  // decay curve in dB, then least-squares fit over the -5..-25 dB span
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < edc.size(); ++i) {
    const double db = 10.0 * std::log10(edc[i] / e0 + 1e-300);
    if (db > -5.0 || db < -25.0) continue;
    const double t = static_cast<double>(i) / sample_rate;
    sx += t;
    sy += db;
    sxx += t * t;
    sxy += t * db;
    ++count;
  }
  if (count < 8) throw std::invalid_argument("schroeder_rt60: decay range too short for a fit");
  const double n = static_cast<double>(count);
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);  // dB per second
  if (slope >= 0.0) throw std::invalid_argument("schroeder_rt60: non-decaying response");
  return -60.0 / slope;
}

}  // namespace sclap::ref
