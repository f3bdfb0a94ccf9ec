// avsr/separation.hpp

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

// Time-frequency masking front-end: the oracle ideal ratio mask, a small
// visually conditioned mask estimator, mask application and SI-SNR.

#pragma once

#include "avsr/dsp.hpp"
#include "avsr/features.hpp"
#include "avsr/tdnn.hpp"

namespace avsr {

enum class MaskSource { kOracle, kLearned };

inline std::string mask_source_name(MaskSource s) { return s == MaskSource::kOracle ? "oracle" : "learned"; }

struct SeparatedUtterance {
  Waveform audio;
  MaskSource source = MaskSource::kOracle;
};

inline constexpr double kIrmEpsilon = 1e-10;
inline constexpr double kSiSnrCapDb = 60.0;

/// |S_t| / (|S_t| + |S_i| + eps) on the separation STFT grid.
inline MatF oracle_irm(const Waveform &target, const Waveform &interferer_scaled, const StftConfig &cfg = {}) {
  if (target.size() != interferer_scaled.size())
    fail("oracle_irm: target has ", target.size(), " samples but interferer has ", interferer_scaled.size());
  const ComplexMat st = stft(target, cfg), si = stft(interferer_scaled, cfg);
  MatF mask(st.rows(), st.cols());
  for (Eigen::Index t = 0; t < st.rows(); ++t)
    for (Eigen::Index k = 0; k < st.cols(); ++k) {
      const double a = std::abs(st(t, k)), b = std::abs(si(t, k));
      mask(t, k) = static_cast<float>(a / (a + b + kIrmEpsilon));
    }
  return mask;
}

/// Masks the mixture magnitude, keeps the mixture phase, resynthesizes.
inline Waveform apply_mask(const Waveform &mixture, const MatF &mask, const StftConfig &cfg = {}) {
  ComplexMat spec = stft(mixture, cfg);
  if (mask.rows() != spec.rows() || mask.cols() != spec.cols())
    fail("apply_mask: mask grid ", mask.rows(), "x", mask.cols(), " does not match mixture STFT grid ", spec.rows(),
         "x", spec.cols());
  for (Eigen::Index t = 0; t < spec.rows(); ++t)
    for (Eigen::Index k = 0; k < spec.cols(); ++k) {
      const float m = mask(t, k);
      if (!(m >= 0.0f && m <= 1.0f)) fail("apply_mask: mask value ", m, " at (", t, ", ", k, ") outside [0, 1]");
      spec(t, k) *= static_cast<double>(m);
    }
  return istft(spec, mixture.size(), cfg);
}

/// Scale-invariant SNR in dB, clamped to [-60, 60].
inline double si_snr(const Waveform &reference, const Waveform &estimate) {
  if (reference.size() != estimate.size())
    fail("si_snr: reference has ", reference.size(), " samples, estimate has ", estimate.size());
  const std::size_t n = reference.size();
  if (n == 0) fail("si_snr: empty signals");
  double mr = 0.0, me = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mr += reference[i];
    me += estimate[i];
  }
  mr /= static_cast<double>(n);
  me /= static_cast<double>(n);
  double dot = 0.0, rr = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = reference[i] - mr, e = estimate[i] - me;
    dot += r * e;
    rr += r * r;
    ee += e * e;
  }
  if (rr <= 0.0) fail("si_snr: zero reference signal");
  // ||a s||^2 = dot^2/rr and ||e - a s||^2 = ee - dot^2/rr. The ratio is
  // invariant to any nonzero scaling of the estimate.
  const double target = dot * dot / rr;
  const double noise = std::max(0.0, ee - target);
  double db;
  if (target <= 0.0) db = -kSiSnrCapDb;
  else if (noise <= target * 1e-12) db = kSiSnrCapDb;
  else db = 10.0 * std::log10(target / noise);
  return std::clamp(db, -kSiSnrCapDb, kSiSnrCapDb);
}

/// log(|X| + 1e-5) on the separation grid; the mask net's acoustic input.
inline MatF log_magnitude(const Waveform &audio, const StftConfig &cfg = {}) {
  MatF m = magnitude(stft(audio, cfg));
  return (m.array() + 1e-5f).log().matrix();
}

/// Duration of one STFT hop in milliseconds.
inline double stft_frame_period_ms(const StftConfig &cfg = {}) { return 1000.0 * cfg.hop / kSampleRate; }

struct MaskNetDims {
  int num_bins = 513;
  int visual_dim = 8;
  int hidden = 64;
  int bottleneck = 32;
  int frontend_layers = 2;
  int layers = 3;
  std::vector<int> offsets{-1, 0, 1};
};

/// VisualFrontend + 3 TDNN-F layers over [log|X|, VF(v)] + sigmoid output.
template <typename T>
struct MaskNet {
  MaskNetDims dims;
  SubNetwork<T> frontend;
  SubNetwork<T> body;
  Tensor<T> output_weight;  // num_bins x hidden
  Tensor<T> output_bias;

  std::vector<Tensor<T> *> parameters() {
    std::vector<Tensor<T> *> out;
    for (auto *net : {&frontend, &body})
      for (auto &layer : *net) layer.collect(out);
    out.push_back(&output_weight);
    out.push_back(&output_bias);
    return out;
  }
  std::vector<Tensor<T> *> constrained_factors() {
    std::vector<Tensor<T> *> out;
    for (auto *net : {&frontend, &body})
      for (auto &layer : *net) out.push_back(&layer.factor_in);
    return out;
  }
  void zero_grad() {
    for (auto *p : parameters()) p->zero_grad();
  }
};

template <typename T>
MaskNet<T> build_mask_net(const MaskNetDims &dims, std::uint64_t seed) {
  if (dims.num_bins <= 0 || dims.hidden <= 0 || dims.layers <= 0) fail("build_mask_net: invalid dimensions");
  NetworkDims nd;
  nd.hidden = dims.hidden;
  nd.bottleneck = dims.bottleneck;
  nd.offsets = dims.offsets;
  MaskNet<T> net;
  net.dims = dims;
  net.frontend = detail::make_subnet<T>("sep_frontend", dims.frontend_layers, dims.visual_dim, nd, false);
  net.body = detail::make_subnet<T>("sep_body", dims.layers, dims.num_bins + dims.hidden, nd, false);
  net.output_weight = Tensor<T>("sep_output.weight", {static_cast<std::size_t>(dims.num_bins),
                                                      static_cast<std::size_t>(dims.hidden)});
  net.output_bias = Tensor<T>("sep_output.bias", {static_cast<std::size_t>(dims.num_bins)});
  std::uint64_t k = 0;
  for (auto *sub : {&net.frontend, &net.body})
    for (auto &layer : *sub) {
      detail::glorot_uniform(layer.factor_in, derive_seed(seed, ++k));
      detail::glorot_uniform(layer.factor_out, derive_seed(seed, ++k));
    }
  return net;
}

/// Mask in [0, 1] for normalized log-magnitude frames and visual frames
/// already on the same grid.
template <typename T>
Var<T> mask_forward(MaskNet<T> &net, Var<T> logmag, Var<T> visual, bool train = false) {
  if (logmag.rows() != visual.rows())
    fail("mask_forward: ", logmag.rows(), " spectral frames but ", visual.rows(), " visual frames");
  Tape<T> &tp = *logmag.tape;
  Var<T> vf = subnet_forward(net.frontend, visual, train);
  Var<T> h = subnet_forward(net.body, ad::concat(logmag, vf), train);
  return ad::sigmoid(ad::affine(h, tp.param(net.output_weight), tp.param(net.output_bias)));
}

/// Network inputs for one mixture: normalized log-magnitude and the visual
/// stream on the STFT frame grid (zeroed for the audio-only variant).
struct MaskInputs {
  MatF logmag;
  MatF visual;
};

inline MaskInputs mask_inputs(const Waveform &mixture, const MatF &visual_25fps, const NormStats &stats,
                              bool use_visual, const StftConfig &cfg = {}) {
  MaskInputs in;
  in.logmag = normalize(log_magnitude(mixture, cfg), stats);
  const int frames = static_cast<int>(in.logmag.rows());
  if (use_visual) in.visual = upsample_visual(visual_25fps, frames, stft_frame_period_ms(cfg));
  else in.visual = MatF::Zero(frames, visual_25fps.cols());
  return in;
}

template <typename T>
MatF learned_mask(MaskNet<T> &net, const MaskInputs &in) {
  Tape<T> tp;
  Var<T> m = mask_forward(net, tp.constant(in.logmag.cast<T>()), tp.constant(in.visual.cast<T>()), false);
  return m.value().template cast<float>();
}

/// One parallel training example: mixture inputs and the oracle mask.
struct MaskExample {
  MaskInputs inputs;
  MatF target;
};

inline double mask_mse(const MatF &a, const MatF &b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) fail("mask_mse: shape mismatch");
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const double d = static_cast<double>(a(i, j)) - b(i, j);
      s += d * d;
    }
  return s / static_cast<double>(a.size());
}

struct MaskTrainConfig {
  int epochs = 8;
  int minibatch = 8;
  OptimizerConfig optimizer;
  int orthonormal_period = 4;
};

/// MSE training against the oracle mask. Examples are visited in a seeded
/// shuffled order; per-example gradients are summed in example order.
/// Returns the mean training MSE of each epoch.
template <typename T>
std::vector<double> train_mask_net(MaskNet<T> &net, const std::vector<MaskExample> &examples,
                                   const MaskTrainConfig &cfg, std::uint64_t seed, int workers = 1) {
  if (examples.empty()) fail("train_mask_net: no training examples");
  Optimizer<T> opt(net.parameters(), cfg.optimizer);
  std::vector<double> history;
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.minibatch) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.minibatch));
      net.zero_grad();
      for (std::size_t i = b; i < e; ++i) {
        const auto &ex = examples[order[i]];
        Tape<T> tp;
        Var<T> m = mask_forward(net, tp.constant(ex.inputs.logmag.cast<T>()), tp.constant(ex.inputs.visual.cast<T>()),
                                true);
        Var<T> loss = ad::mse(m, tp.constant(ex.target.cast<T>()));
        total += static_cast<double>(loss.value()(0, 0));
        tp.backward(loss);
      }
      opt.step();
      if (cfg.orthonormal_period > 0 && opt.steps() % cfg.orthonormal_period == 0)
        for (auto *f : net.constrained_factors()) semi_orthogonal_step(*f);
    }
    history.push_back(total / static_cast<double>(examples.size()));
  }
  return history;
}

}  // namespace avsr
