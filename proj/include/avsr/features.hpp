// avsr/features.hpp

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

#include "avsr/common.hpp"
#include "avsr/dsp.hpp"

namespace avsr {

struct FbankConfig {
  int frame_length = 640;  // 40 ms
  int frame_shift = 160;   // 10 ms
  int fft_size = 1024;
  int num_bins = 40;
  double low_freq = 20.0;
  double high_freq = 8000.0;
  double energy_floor = 1e-10;
};

inline double mel_scale(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }
inline double inverse_mel_scale(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

/// Number of acoustic frames for a waveform; 0 when shorter than one window.
inline int num_acoustic_frames(std::size_t num_samples, const FbankConfig &cfg = {}) {
  if (num_samples < static_cast<std::size_t>(cfg.frame_length)) return 0;
  return 1 + static_cast<int>((num_samples - cfg.frame_length) / cfg.frame_shift);
}

/// Triangular filters, equally spaced on the mel scale, evaluated per FFT bin.
class MelBanks {
 public:
  explicit MelBanks(const FbankConfig &cfg = {}) : cfg_(cfg) {
    const int bins = cfg.fft_size / 2 + 1;
    const double mel_lo = mel_scale(cfg.low_freq), mel_hi = mel_scale(cfg.high_freq);
    const double delta = (mel_hi - mel_lo) / (cfg.num_bins + 1);
    weights_.assign(cfg.num_bins, std::vector<double>(bins, 0.0));
    centers_.resize(cfg.num_bins);
    for (int m = 0; m < cfg.num_bins; ++m) {
      const double left = mel_lo + m * delta, center = left + delta, right = center + delta;
      centers_[m] = inverse_mel_scale(center);
      for (int k = 0; k < bins; ++k) {
        const double mel = mel_scale(k * static_cast<double>(kSampleRate) / cfg.fft_size);
        if (mel > left && mel < right)
          weights_[m][k] = mel <= center ? (mel - left) / (center - left) : (right - mel) / (right - center);
      }
    }
  }

  const std::vector<double> &center_frequencies() const { return centers_; }
  const std::vector<std::vector<double>> &weights() const { return weights_; }
  const FbankConfig &config() const { return cfg_; }

 private:
  FbankConfig cfg_;
  std::vector<std::vector<double>> weights_;
  std::vector<double> centers_;
};

/// 40-dim log-mel filterbank frames at 100 Hz.
inline MatF logmel(const Waveform &audio, const FbankConfig &cfg = {}) {
  const int frames = num_acoustic_frames(audio.size(), cfg);
  if (frames == 0)
    fail("logmel: audio has ", audio.size(), " samples; at least ", cfg.frame_length, " are required");
  static thread_local std::unique_ptr<MelBanks> banks;
  if (!banks || banks->config().fft_size != cfg.fft_size || banks->config().num_bins != cfg.num_bins ||
      banks->config().low_freq != cfg.low_freq || banks->config().high_freq != cfg.high_freq)
    banks = std::make_unique<MelBanks>(cfg);
  const auto win = hann_window(cfg.frame_length, false);
  RealFft fft(cfg.fft_size);
  MatF out(frames, cfg.num_bins);
  std::vector<double> buf(cfg.frame_length);
  const double log_floor = std::log(cfg.energy_floor);
  for (int t = 0; t < frames; ++t) {
    const float *x = audio.data() + static_cast<std::size_t>(t) * cfg.frame_shift;
    double dc = 0.0;
    for (int i = 0; i < cfg.frame_length; ++i) dc += x[i];
    dc /= cfg.frame_length;
    for (int i = 0; i < cfg.frame_length; ++i) buf[i] = (x[i] - dc) * win[i];
    auto spec = fft.forward(buf.data(), cfg.frame_length);
    for (int m = 0; m < cfg.num_bins; ++m) {
      const auto &w = banks->weights()[m];
      double e = 0.0;
      for (std::size_t k = 0; k < spec.size(); ++k)
        if (w[k] != 0.0) e += w[k] * std::norm(spec[k]);
      out(t, m) = static_cast<float>(e > cfg.energy_floor ? std::log(e) : log_floor);
    }
  }
  return out;
}

/// Linear interpolation of a 25 fps visual stream onto a frame grid with the
/// given period (10 ms by default). Frames past the last source frame repeat it.
inline MatF upsample_visual(const MatF &visual, int target_len, double frame_period_ms = 10.0,
                            double source_period_ms = 40.0) {
  if (target_len <= 0) fail("upsample_visual: target length must be positive");
  if (visual.rows() < 2) fail("upsample_visual: need at least 2 source frames, got ", visual.rows());
  const Eigen::Index last = visual.rows() - 1;
  MatF out(target_len, visual.cols());
  for (int t = 0; t < target_len; ++t) {
    const double pos = t * frame_period_ms / source_period_ms;
    const auto i = static_cast<Eigen::Index>(std::floor(pos));
    if (i >= last) {
      out.row(t) = visual.row(last);
      continue;
    }
    const float frac = static_cast<float>(pos - static_cast<double>(i));
    if (frac == 0.0f)
      out.row(t) = visual.row(i);
    else
      out.row(t) = (1.0f - frac) * visual.row(i) + frac * visual.row(i + 1);
  }
  return out;
}

/// Per-dimension mean/variance, accumulated in double over training frames.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> var;

  static constexpr double kMinVariance = 1e-8;

  std::size_t dim() const { return mean.size(); }

  static NormStats identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

  static NormStats compute(const std::vector<const MatF *> &mats) {
    if (mats.empty()) fail("NormStats: no frames to accumulate");
    const std::size_t dim = static_cast<std::size_t>(mats.front()->cols());
    std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
    double count = 0;
    for (const MatF *m : mats) {
      if (static_cast<std::size_t>(m->cols()) != dim) fail("NormStats: dimension mismatch");
      for (Eigen::Index t = 0; t < m->rows(); ++t)
        for (std::size_t d = 0; d < dim; ++d) {
          const double v = (*m)(t, static_cast<Eigen::Index>(d));
          sum[d] += v;
          sumsq[d] += v * v;
        }
      count += static_cast<double>(m->rows());
    }
    if (count == 0) fail("NormStats: no frames to accumulate");
    NormStats s;
    s.mean.resize(dim);
    s.var.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      s.mean[d] = sum[d] / count;
      s.var[d] = std::max(0.0, sumsq[d] / count - s.mean[d] * s.mean[d]);
    }
    s.clamp_variance();
    return s;
  }

  void clamp_variance() {
    for (std::size_t d = 0; d < var.size(); ++d)
      if (!(var[d] >= kMinVariance)) {
        warn("normalization: variance of dimension ", d, " is ", var[d], ", clamped to ", kMinVariance);
        var[d] = kMinVariance;
      }
  }
};

inline MatF normalize(const MatF &frames, const NormStats &stats) {
  if (static_cast<std::size_t>(frames.cols()) != stats.dim())
    fail("normalize: frames have ", frames.cols(), " dims, stats have ", stats.dim());
  MatF out(frames.rows(), frames.cols());
  for (Eigen::Index d = 0; d < frames.cols(); ++d) {
    double var = stats.var[d];
    if (!(var >= NormStats::kMinVariance)) {
      warn("normalize: variance of dimension ", d, " clamped to ", NormStats::kMinVariance);
      var = NormStats::kMinVariance;
    }
    const double inv_std = 1.0 / std::sqrt(var);
    for (Eigen::Index t = 0; t < frames.rows(); ++t)
      out(t, d) = static_cast<float>((frames(t, d) - stats.mean[d]) * inv_std);
  }
  return out;
}

inline MatF denormalize(const MatF &frames, const NormStats &stats) {
  if (static_cast<std::size_t>(frames.cols()) != stats.dim())
    fail("denormalize: frames have ", frames.cols(), " dims, stats have ", stats.dim());
  MatF out(frames.rows(), frames.cols());
  for (Eigen::Index d = 0; d < frames.cols(); ++d) {
    const double sd = std::sqrt(std::max(stats.var[d], NormStats::kMinVariance));
    for (Eigen::Index t = 0; t < frames.rows(); ++t)
      out(t, d) = static_cast<float>(frames(t, d) * sd + stats.mean[d]);
  }
  return out;
}

/// Pads by edge replication or truncates so `visual` has exactly `len` rows.
inline MatF match_length(const MatF &visual, int len) {
  if (visual.rows() == 0) fail("match_length: empty visual stream");
  MatF out(len, visual.cols());
  for (int t = 0; t < len; ++t) out.row(t) = visual.row(std::min<Eigen::Index>(t, visual.rows() - 1));
  return out;
}

}  // namespace avsr
