#pragma once

#include <complex>
#include <vector>

// Serial reference implementations. These are deliberately naive; the test
// suites use them as independent oracles for the production kernels, and
// bench_kernels compares against them.
namespace sclap::ref {

// Triple-loop matrix product, a[m x k] * b[k x n].
std::vector<double> naive_matmul(const std::vector<double>& a, int m, int k, const std::vector<double>& b, int n);

// Full linear convolution, O(N*M) double loop.
std::vector<double> naive_convolve(const std::vector<double>& x, const std::vector<double>& h);

// O(N^2) DFT of a real frame; returns N complex bins.
std::vector<std::complex<double>> naive_dft(const std::vector<double>& frame);

// Serial mirror of sclap::conv2d forward (stride 1, zero pad kh/2 x kw/2).
std::vector<double> serial_conv2d(const std::vector<double>& x, int ci, int h, int w,
                                  const std::vector<double>& weight, int co, int kh, int kw,
                                  const std::vector<double>& bias);

// RT60 estimate by Schroeder backward integration: linear fit of the decay
// curve between -5 dB and -25 dB, extrapolated to -60 dB.
double schroeder_rt60(const std::vector<double>& h, double sample_rate);

}  // namespace sclap::ref
