// avsr/dsp.hpp

// Copyright 2026  avsr-lab authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fftw3.h>

#include <complex>
#include <memory>
#include <mutex>

#include "avsr/common.hpp"

namespace avsr {

using Complex = std::complex<double>;
using ComplexMat = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Hann window. The periodic form sums to a constant under 75% overlap,
/// the symmetric form is the usual analysis window for feature frames.
inline std::vector<double> hann_window(int n, bool periodic) {
  std::vector<double> w(n);
  const double denom = periodic ? n : std::max(1, n - 1);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / denom);
  return w;
}

namespace detail {
inline std::mutex &fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}
}  // namespace detail

/// Real FFT of fixed size with its own buffers. FFTW planning is not
/// thread-safe, so plan creation is serialized; execution is per instance.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    if (n <= 0) fail("FFT size must be positive");
    in_ = static_cast<double *>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex *>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    std::lock_guard<std::mutex> lk(detail::fftw_planner_mutex());
    fwd_ = fftw_plan_dft_r2c_1d(n, in_, out_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(n, out_, in_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft &) = delete;
  RealFft &operator=(const RealFft &) = delete;
  ~RealFft() {
    {
      std::lock_guard<std::mutex> lk(detail::fftw_planner_mutex());
      fftw_destroy_plan(fwd_);
      fftw_destroy_plan(inv_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }

  int size() const { return n_; }
  int num_bins() const { return n_ / 2 + 1; }

  /// Forward transform of `x` (zero-padded or truncated to size()).
  std::vector<Complex> forward(const double *x, int len) {
    for (int i = 0; i < n_; ++i) in_[i] = i < len ? x[i] : 0.0;
    fftw_execute(fwd_);
    std::vector<Complex> spec(num_bins());
    for (int k = 0; k < num_bins(); ++k) spec[k] = Complex(out_[k][0], out_[k][1]);
    return spec;
  }

  /// Inverse transform, normalized so inverse(forward(x)) == x.
  std::vector<double> inverse(const std::vector<Complex> &spec) {
    if (static_cast<int>(spec.size()) != num_bins()) fail("inverse FFT: expected ", num_bins(), " bins");
    for (int k = 0; k < num_bins(); ++k) {
      out_[k][0] = spec[k].real();
      out_[k][1] = spec[k].imag();
    }
    fftw_execute(inv_);
    std::vector<double> x(n_);
    for (int i = 0; i < n_; ++i) x[i] = in_[i] / n_;
    return x;
  }

 private:
  int n_;
  double *in_ = nullptr;
  fftw_complex *out_ = nullptr;
  fftw_plan fwd_ = nullptr;
  fftw_plan inv_ = nullptr;
};

/// STFT grid used by the separation front-end.
struct StftConfig {
  int window = 1024;  // = FFT size
  int hop = 256;      // 75% overlap
  int num_bins() const { return window / 2 + 1; }
};

/// Number of STFT frames for a signal of `num_samples`. The signal is padded
/// by window/2 on both sides so every sample is covered by full-weight frames.
inline int stft_num_frames(std::size_t num_samples, const StftConfig &cfg = {}) {
  const std::size_t padded = num_samples + static_cast<std::size_t>(cfg.window);
  if (padded <= static_cast<std::size_t>(cfg.window)) return 1;
  return 1 + static_cast<int>((padded - cfg.window + cfg.hop - 1) / cfg.hop);
}

inline ComplexMat stft(const Waveform &x, const StftConfig &cfg = {}) {
  const int frames = stft_num_frames(x.size(), cfg);
  const int half = cfg.window / 2;
  const auto win = hann_window(cfg.window, true);
  RealFft fft(cfg.window);
  ComplexMat out(frames, cfg.num_bins());
  std::vector<double> buf(cfg.window);
  for (int f = 0; f < frames; ++f) {
    const long start = static_cast<long>(f) * cfg.hop - half;
    for (int i = 0; i < cfg.window; ++i) {
      long n = start + i;
      double s = (n >= 0 && n < static_cast<long>(x.size())) ? x[n] : 0.0;
      buf[i] = s * win[i];
    }
    auto spec = fft.forward(buf.data(), cfg.window);
    for (int k = 0; k < cfg.num_bins(); ++k) out(f, k) = spec[k];
  }
  return out;
}

/// Weighted overlap-add inverse: sum(w * frame) / sum(w^2), trimmed to
/// `num_samples`. Exact inverse of stft() up to rounding.
inline Waveform istft(const ComplexMat &spec, std::size_t num_samples, const StftConfig &cfg = {}) {
  if (spec.cols() != cfg.num_bins()) fail("istft: expected ", cfg.num_bins(), " bins, got ", spec.cols());
  const int half = cfg.window / 2;
  const auto win = hann_window(cfg.window, true);
  RealFft fft(cfg.window);
  const std::size_t total = static_cast<std::size_t>(spec.rows() - 1) * cfg.hop + cfg.window;
  std::vector<double> acc(total, 0.0), norm(total, 0.0);
  std::vector<Complex> row(cfg.num_bins());
  for (int f = 0; f < spec.rows(); ++f) {
    for (int k = 0; k < cfg.num_bins(); ++k) row[k] = spec(f, k);
    auto frame = fft.inverse(row);
    const std::size_t off = static_cast<std::size_t>(f) * cfg.hop;
    for (int i = 0; i < cfg.window; ++i) {
      acc[off + i] += frame[i] * win[i];
      norm[off + i] += win[i] * win[i];
    }
  }
  Waveform out(num_samples, 0.0f);
  for (std::size_t n = 0; n < num_samples; ++n) {
    std::size_t p = n + half;
    if (p < total && norm[p] > 1e-12) out[n] = static_cast<float>(acc[p] / norm[p]);
  }
  return out;
}

inline MatF magnitude(const ComplexMat &spec) {
  MatF m(spec.rows(), spec.cols());
  for (Eigen::Index i = 0; i < spec.rows(); ++i)
    for (Eigen::Index j = 0; j < spec.cols(); ++j) m(i, j) = static_cast<float>(std::abs(spec(i, j)));
  return m;
}

}  // namespace avsr
