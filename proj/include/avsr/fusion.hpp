// avsr/fusion.hpp

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

// Modality fusion. Three ways of combining the acoustic frames x and the lip
// features v into per-frame pdf log-posteriors:
//
//   concat:  RecogNet([x, VisualFrontend(v)])
//   vgate:   m = VisualNet(VisualFrontend(v))
//            h = AudioNet(x) (.) sigmoid(m)
//   avgate:  m = FusionNet([VisualNet(VisualFrontend(v)), AudioNet(x)])
//            h = AudioNet(x) (.) sigmoid(m)
//
// and for the gated modes RecogNet(h), or RecogNet([h, VisualFrontend(v)])
// with plus_concat.

#pragma once

#include "avsr/tdnn.hpp"

namespace avsr {

/// Per-frame gate quantities: pre-activation m, sigmoid(m), and the gated
/// hidden h = AudioNet(x) (.) sigmoid(m).
template <typename T>
struct GateTrace {
  Mat<T> m;
  Mat<T> g;
  Mat<T> h;
  Mat<T> audio;  // AudioNet(x), the gated stream
};

template <typename T>
struct FusionOutput {
  Var<T> log_post;                 // T x num_pdfs
  std::optional<GateTrace<T>> trace;
  std::optional<Mat<T>> frontend;  // VisualFrontend(v)
  std::optional<Mat<T>> visual_net;  // VisualNet(VisualFrontend(v))
};

struct FusionOptions {
  bool train = false;
  /// Test hook: when set, the gate pre-activation m is replaced by this constant.
  std::optional<double> gate_override;
};

namespace detail {
template <typename T>
void check_lengths(const Var<T> &x, const Var<T> &v) {
  if (x.rows() != v.rows())
    fail("fusion: acoustic sequence has ", x.rows(), " frames but visual sequence has ", v.rows());
}

template <typename T>
Var<T> output_layer(NetworkParams<T> &p, Var<T> hidden) {
  Tape<T> &tp = *hidden.tape;
  return ad::log_softmax(ad::affine(hidden, tp.param(p.output_weight), tp.param(p.output_bias)));
}

template <typename T>
FusionOutput<T> gated(NetworkParams<T> &p, Var<T> x, Var<T> v, bool avgate, const FusionOptions &opt) {
  check_lengths(x, v);
  Tape<T> &tp = *x.tape;
  FusionOutput<T> out;
  Var<T> vf = subnet_forward(p.frontend, v, opt.train);
  Var<T> vn = subnet_forward(p.visual_net, vf, opt.train);
  Var<T> a = subnet_forward(p.audio_net, x, opt.train);
  Var<T> m = avgate ? subnet_forward(p.fusion_net, ad::concat(vn, a), opt.train) : vn;
  if (opt.gate_override) m = tp.constant(Mat<T>::Constant(m.rows(), m.cols(), static_cast<T>(*opt.gate_override)));
  Var<T> g = ad::sigmoid(m);
  Var<T> h = ad::hadamard(a, g);
  Var<T> recog_in = p.arch.plus_concat ? ad::concat(h, vf) : h;
  out.log_post = output_layer(p, subnet_forward(p.recog_net, recog_in, opt.train));
  out.trace = GateTrace<T>{m.value(), g.value(), h.value(), a.value()};
  out.frontend = vf.value();
  out.visual_net = vn.value();
  return out;
}
}  // namespace detail

template <typename T>
FusionOutput<T> forward_concat(NetworkParams<T> &p, Var<T> x, Var<T> v, const FusionOptions &opt = {}) {
  detail::check_lengths(x, v);
  if (p.arch.mode != FusionMode::kConcat) fail("forward_concat: network was built for ", p.arch.label());
  FusionOutput<T> out;
  Var<T> vf = subnet_forward(p.frontend, v, opt.train);
  out.log_post = detail::output_layer(p, subnet_forward(p.recog_net, ad::concat(x, vf), opt.train));
  out.frontend = vf.value();
  return out;
}

template <typename T>
FusionOutput<T> forward_vgate(NetworkParams<T> &p, Var<T> x, Var<T> v, const FusionOptions &opt = {}) {
  if (p.arch.mode != FusionMode::kVGate) fail("forward_vgate: network was built for ", p.arch.label());
  return detail::gated(p, x, v, false, opt);
}

template <typename T>
FusionOutput<T> forward_avgate(NetworkParams<T> &p, Var<T> x, Var<T> v, const FusionOptions &opt = {}) {
  if (p.arch.mode != FusionMode::kAVGate) fail("forward_avgate: network was built for ", p.arch.label());
  return detail::gated(p, x, v, true, opt);
}

/// Dispatches on the network's architecture. Single-modality systems ignore
/// the unused stream (which may then be an empty 0-column matrix).
template <typename T>
FusionOutput<T> forward(NetworkParams<T> &p, Var<T> x, Var<T> v, const FusionOptions &opt = {}) {
  switch (p.arch.mode) {
    case FusionMode::kAudioOnly: {
      FusionOutput<T> out;
      out.log_post = detail::output_layer(p, subnet_forward(p.recog_net, x, opt.train));
      return out;
    }
    case FusionMode::kVisualOnly: {
      FusionOutput<T> out;
      Var<T> vf = subnet_forward(p.frontend, v, opt.train);
      out.frontend = vf.value();
      out.log_post = detail::output_layer(p, subnet_forward(p.recog_net, vf, opt.train));
      return out;
    }
    case FusionMode::kConcat: return forward_concat(p, x, v, opt);
    case FusionMode::kVGate: return forward_vgate(p, x, v, opt);
    case FusionMode::kAVGate: return forward_avgate(p, x, v, opt);
  }
  fail("forward: unknown fusion mode");
}

}  // namespace avsr
