// avsr/tdnn.hpp

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

// Factored TDNN layers and the named sub-networks of the recognizer:
// VisualFrontend (lip encoder), AudioNet, VisualNet, FusionNet and RecogNet.

#pragma once

#include <map>
#include <optional>

#include "avsr/autodiff.hpp"

namespace avsr {

struct TdnnfConfig {
  int in_dim = 0;
  int out_dim = 0;
  int bottleneck = 32;
  std::vector<int> offsets{-1, 0, 1};
  bool relu = true;       // false for a layer whose output feeds a sigmoid gate
  bool batchnorm = false;
  double residual_scale = 0.66;  // used only when in_dim == out_dim

  double effective_residual() const { return in_dim == out_dim ? residual_scale : 0.0; }
  int spliced_dim() const { return in_dim * static_cast<int>(offsets.size()); }
};

/// splice -> factor_in (semi-orthogonal, no bias) -> factor_out + bias
/// -> [batchnorm] -> [relu], plus a scaled residual when shapes allow.
template <typename T>
struct TdnnfLayer {
  TdnnfConfig cfg;
  Tensor<T> factor_in;   // bottleneck x (in_dim * |offsets|)
  Tensor<T> factor_out;  // out_dim x bottleneck
  Tensor<T> bias;        // out_dim
  Tensor<T> bn_gamma;    // out_dim, present with batchnorm
  Tensor<T> bn_beta;
  ad::BatchNormStats bn_stats;

  TdnnfLayer() = default;
  TdnnfLayer(const std::string &name, const TdnnfConfig &c) : cfg(c) {
    if (c.in_dim <= 0 || c.out_dim <= 0 || c.bottleneck <= 0 || c.offsets.empty())
      fail("TDNN-F layer ", name, ": invalid dimensions");
    factor_in = Tensor<T>(name + ".factor_in", {static_cast<std::size_t>(c.bottleneck),
                                                static_cast<std::size_t>(c.spliced_dim())});
    factor_out = Tensor<T>(name + ".factor_out", {static_cast<std::size_t>(c.out_dim),
                                                  static_cast<std::size_t>(c.bottleneck)});
    bias = Tensor<T>(name + ".bias", {static_cast<std::size_t>(c.out_dim)});
    if (c.batchnorm) {
      bn_gamma = Tensor<T>(name + ".bn_gamma", {static_cast<std::size_t>(c.out_dim)});
      std::fill(bn_gamma.values.begin(), bn_gamma.values.end(), T(1));
      bn_beta = Tensor<T>(name + ".bn_beta", {static_cast<std::size_t>(c.out_dim)});
    }
  }

  void collect(std::vector<Tensor<T> *> &out) {
    out.push_back(&factor_in);
    out.push_back(&factor_out);
    out.push_back(&bias);
    if (cfg.batchnorm) {
      out.push_back(&bn_gamma);
      out.push_back(&bn_beta);
    }
  }
};

template <typename T>
Var<T> tdnnf_forward(TdnnfLayer<T> &layer, Var<T> input, bool train = false) {
  if (input.cols() != layer.cfg.in_dim)
    fail("tdnnf_forward: layer ", layer.factor_in.name, " expects ", layer.cfg.in_dim, " input dims, got ",
         input.cols());
  Tape<T> &tp = *input.tape;
  Var<T> spliced = ad::splice(input, layer.cfg.offsets);
  Var<T> bottleneck = ad::linear(spliced, tp.param(layer.factor_in));
  Var<T> out = ad::affine(bottleneck, tp.param(layer.factor_out), tp.param(layer.bias));
  if (layer.cfg.batchnorm)
    out = ad::batchnorm(out, tp.param(layer.bn_gamma), tp.param(layer.bn_beta), &layer.bn_stats, train);
  if (layer.cfg.relu) out = ad::relu(out);
  const double rho = layer.cfg.effective_residual();
  if (rho != 0.0) out = ad::add(out, ad::scale(input, static_cast<T>(rho)));
  return out;
}

/// Frobenius norm of M M^T - alpha^2 I with alpha^2 = tr(P P^T) / tr(P).
template <typename T>
double orthogonality_error(const Mat<T> &m) {
  MatD md = m.template cast<double>();
  if (md.rows() > md.cols()) md.transposeInPlace();
  MatD p = md * md.transpose();
  const double tr = p.trace();
  if (tr == 0.0) return 0.0;
  const double alpha2 = (p * p.transpose()).trace() / tr;
  p.diagonal().array() -= alpha2;
  return p.norm();
}

inline constexpr double kOrthonormalUpdateSpeed = 0.125;

/// One step towards M M^T = alpha^2 I (floating scale):
///   P = M M^T, alpha^2 = tr(P P^T)/tr(P), M <- M - (4 nu / alpha^2)(P - alpha^2 I) M.
/// Matrices with more rows than columns are constrained through their transpose.
/// Returns false (and warns) when tr(P) = 0.
template <typename T>
bool semi_orthogonal_step(Mat<T> &m, double update_speed = kOrthonormalUpdateSpeed) {
  const bool transposed = m.rows() > m.cols();
  MatD md = m.template cast<double>();
  if (transposed) md.transposeInPlace();
  MatD p = md * md.transpose();
  const double tr = p.trace();
  if (!(tr > 0.0)) {
    warn("semi_orthogonal_step: trace(M M^T) is ", tr, ", skipping constraint");
    return false;
  }
  const double alpha2 = (p * p.transpose()).trace() / tr;
  p.diagonal().array() -= alpha2;
  md -= (4.0 * update_speed / alpha2) * (p * md);
  if (transposed) md.transposeInPlace();
  m = md.template cast<T>();
  return true;
}

template <typename T>
bool semi_orthogonal_step(Tensor<T> &t, double update_speed = kOrthonormalUpdateSpeed) {
  Mat<T> m = t.mat();
  bool ok = semi_orthogonal_step(m, update_speed);
  t.mat() = m;
  return ok;
}

enum class FusionMode { kAudioOnly, kVisualOnly, kConcat, kVGate, kAVGate };

inline std::string fusion_name(FusionMode m) {
  switch (m) {
    case FusionMode::kAudioOnly: return "audio";
    case FusionMode::kVisualOnly: return "visual";
    case FusionMode::kConcat: return "concat";
    case FusionMode::kVGate: return "vgate";
    case FusionMode::kAVGate: return "avgate";
  }
  return "?";
}

inline FusionMode parse_fusion(const std::string &s) {
  for (auto m : {FusionMode::kAudioOnly, FusionMode::kVisualOnly, FusionMode::kConcat, FusionMode::kVGate,
                 FusionMode::kAVGate})
    if (fusion_name(m) == s) return m;
  fail("unknown fusion mode '", s, "' (expected audio, visual, concat, vgate or avgate)");
}

inline bool uses_audio(FusionMode m) { return m != FusionMode::kVisualOnly; }
inline bool uses_visual(FusionMode m) { return m != FusionMode::kAudioOnly; }
inline bool is_gated(FusionMode m) { return m == FusionMode::kVGate || m == FusionMode::kAVGate; }

struct Architecture {
  FusionMode mode = FusionMode::kAudioOnly;
  bool plus_concat = false;

  std::string label() const { return fusion_name(mode) + (plus_concat ? "+concat" : ""); }
  void validate() const {
    if (plus_concat && !is_gated(mode))
      fail("plus_concat is only defined for gated fusion (vgate, avgate), not ", fusion_name(mode));
  }
};

struct NetworkDims {
  int acoustic_dim = 40;
  int visual_dim = 8;
  int hidden = 128;
  int bottleneck = 32;
  int num_pdfs = 12;
  int frontend_layers = 2;
  int audio_layers = 6;
  int visual_layers = 6;
  int fusion_layers = 3;
  int recog_layers = 6;
  std::vector<int> offsets{-1, 0, 1};
  double residual_scale = 0.66;
  bool batchnorm = false;
};

template <typename T>
using SubNetwork = std::vector<TdnnfLayer<T>>;

template <typename T>
Var<T> subnet_forward(SubNetwork<T> &net, Var<T> x, bool train = false) {
  for (auto &layer : net) x = tdnnf_forward(layer, x, train);
  return x;
}

/// All trainable parameters of one recognizer. Sub-networks a given
/// architecture does not use are left empty.
template <typename T>
struct NetworkParams {
  Architecture arch;
  NetworkDims dims;
  SubNetwork<T> frontend;    // VisualFrontend: D_v -> H
  SubNetwork<T> audio_net;   // AudioNet: 40 -> H (gated modes)
  SubNetwork<T> visual_net;  // VisualNet: H -> H (gated modes)
  SubNetwork<T> fusion_net;  // FusionNet: 2H -> H (avgate)
  SubNetwork<T> recog_net;   // RecogNet: input -> H
  Tensor<T> output_weight;   // num_pdfs x H
  Tensor<T> output_bias;     // num_pdfs

  int recog_input_dim() const {
    switch (arch.mode) {
      case FusionMode::kAudioOnly: return dims.acoustic_dim;
      case FusionMode::kVisualOnly: return dims.hidden;
      case FusionMode::kConcat: return dims.acoustic_dim + dims.hidden;
      case FusionMode::kVGate:
      case FusionMode::kAVGate: return dims.hidden * (arch.plus_concat ? 2 : 1);
    }
    return 0;
  }

  std::vector<Tensor<T> *> parameters() {
    std::vector<Tensor<T> *> out;
    for (auto *net : {&frontend, &audio_net, &visual_net, &fusion_net, &recog_net})
      for (auto &layer : *net) layer.collect(out);
    out.push_back(&output_weight);
    out.push_back(&output_bias);
    return out;
  }

  std::size_t num_parameters() {
    std::size_t n = 0;
    for (auto *p : parameters()) n += p->numel();
    return n;
  }

  /// Every factor_in matrix, i.e. the semi-orthogonally constrained factors.
  std::vector<Tensor<T> *> constrained_factors() {
    std::vector<Tensor<T> *> out;
    for (auto *net : {&frontend, &audio_net, &visual_net, &fusion_net, &recog_net})
      for (auto &layer : *net) out.push_back(&layer.factor_in);
    return out;
  }

  void zero_grad() {
    for (auto *p : parameters()) p->zero_grad();
  }

  /// Copies values (not gradients) from another network of identical shape.
  template <typename U>
  void copy_values_from(NetworkParams<U> &other) {
    auto dst = parameters();
    auto src = other.parameters();
    if (dst.size() != src.size()) fail("copy_values_from: parameter lists differ");
    for (std::size_t i = 0; i < dst.size(); ++i) {
      if (dst[i]->values.size() != src[i]->values.size()) fail("copy_values_from: shape mismatch at ", dst[i]->name);
      for (std::size_t k = 0; k < dst[i]->values.size(); ++k) dst[i]->values[k] = static_cast<T>(src[i]->values[k]);
    }
    auto copy_stats = [](auto &d, auto &s) {
      for (std::size_t l = 0; l < d.size(); ++l) d[l].bn_stats = s[l].bn_stats;
    };
    copy_stats(frontend, other.frontend);
    copy_stats(audio_net, other.audio_net);
    copy_stats(visual_net, other.visual_net);
    copy_stats(fusion_net, other.fusion_net);
    copy_stats(recog_net, other.recog_net);
  }
};

namespace detail {
template <typename T>
SubNetwork<T> make_subnet(const std::string &prefix, int layers, int in_dim, const NetworkDims &d,
                          bool last_linear) {
  SubNetwork<T> net;
  for (int l = 0; l < layers; ++l) {
    TdnnfConfig c;
    c.in_dim = l == 0 ? in_dim : d.hidden;
    c.out_dim = d.hidden;
    c.bottleneck = d.bottleneck;
    c.offsets = d.offsets;
    c.residual_scale = d.residual_scale;
    c.batchnorm = d.batchnorm;
    c.relu = !(last_linear && l == layers - 1);
    if (!c.relu) c.batchnorm = false;
    net.emplace_back(str_cat(prefix, ".", l), c);
  }
  return net;
}

template <typename T>
void glorot_uniform(Tensor<T> &t, std::uint64_t seed) {
  const double fan_out = static_cast<double>(t.rows()), fan_in = static_cast<double>(t.cols());
  const double s = std::sqrt(6.0 / (fan_in + fan_out));
  Rng rng(seed);
  for (auto &v : t.values) v = static_cast<T>(uniform(rng, -s, s));
}
}  // namespace detail

/// Builds the recognizer for `arch`. Weight matrices are Glorot-uniform,
/// biases zero, and the output affine is all zeros so initial posteriors are
/// uniform. The layer feeding the sigmoid gate has no ReLU, so the gate
/// pre-activation can take either sign.
template <typename T>
NetworkParams<T> build_network(const Architecture &arch, const NetworkDims &dims, std::uint64_t seed) {
  arch.validate();
  if (dims.num_pdfs <= 0 || dims.hidden <= 0) fail("build_network: invalid dimensions");
  NetworkParams<T> net;
  net.arch = arch;
  net.dims = dims;
  const FusionMode m = arch.mode;
  if (uses_visual(m)) net.frontend = detail::make_subnet<T>("frontend", dims.frontend_layers, dims.visual_dim, dims, false);
  if (is_gated(m)) {
    net.audio_net = detail::make_subnet<T>("audio", dims.audio_layers, dims.acoustic_dim, dims, false);
    net.visual_net =
        detail::make_subnet<T>("visual", dims.visual_layers, dims.hidden, dims, m == FusionMode::kVGate);
  }
  if (m == FusionMode::kAVGate)
    net.fusion_net = detail::make_subnet<T>("fusion", dims.fusion_layers, 2 * dims.hidden, dims, true);
  net.recog_net = detail::make_subnet<T>("recog", dims.recog_layers, net.recog_input_dim(), dims, false);
  net.output_weight = Tensor<T>("output.weight", {static_cast<std::size_t>(dims.num_pdfs),
                                                  static_cast<std::size_t>(dims.hidden)});
  net.output_bias = Tensor<T>("output.bias", {static_cast<std::size_t>(dims.num_pdfs)});
  std::uint64_t k = 0;
  for (auto *net_ptr : {&net.frontend, &net.audio_net, &net.visual_net, &net.fusion_net, &net.recog_net})
    for (auto &layer : *net_ptr) {
      detail::glorot_uniform(layer.factor_in, derive_seed(seed, ++k));
      detail::glorot_uniform(layer.factor_out, derive_seed(seed, ++k));
    }
  return net;
}

}  // namespace avsr
