// avsr/gradcheck.hpp

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

// Finite-difference gradient checks. The error of a check is
//   ||g_analytic - g_numeric||_2 / max(||g_analytic||_2, ||g_numeric||_2)
// over the probed coordinates; numeric gradients are central differences
// computed in double precision.

#pragma once

#include "avsr/fusion.hpp"
#include "avsr/lfmmi.hpp"
#include "avsr/separation.hpp"

namespace avsr {

struct GradcheckResult {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

inline double relative_error(const std::vector<double> &a, const std::vector<double> &n) {
  double d = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
  return std::sqrt(d) / scale;
}

/// A random LF-MMI problem: bigram, alignment consistent with it, graphs.
struct LfmmiProblem {
  Bigram lm;
  HmmTopology topo;
  std::vector<int> labels;
  HmmGraph num;
  HmmGraph den;
};

inline LfmmiProblem random_lfmmi_problem(int frames, int symbols, std::uint64_t seed, int window = 1) {
  Rng rng(seed);
  LfmmiProblem p;
  p.lm = Bigram::random(symbols, derive_seed(seed, 1), 1.0);
  p.topo = {symbols, 0.5};
  int cur = static_cast<int>(uniform_index(rng, symbols));
  for (int t = 0; t < frames; ++t) {
    if (t > 0 && uniform01(rng) < 0.4) {
      int next = static_cast<int>(uniform_index(rng, symbols - 1));
      if (next >= cur) ++next;
      cur = next;
    }
    p.labels.push_back(cur);
  }
  p.num = build_numerator(p.labels, p.topo, window, &p.lm);
  p.den = build_denominator(p.lm, p.topo);
  return p;
}

/// dF/dscores of lfmmi_loss against central differences of F.
inline double check_lfmmi_scores(std::uint64_t seed, double lambda_ce, double leaky) {
  LfmmiProblem p = random_lfmmi_problem(5, 3, seed);
  Rng rng(derive_seed(seed, 9));
  MatD scores(5, 3);
  for (Eigen::Index i = 0; i < scores.size(); ++i) scores.data()[i] = 2.0 * gaussian(rng);
  const LfmmiLoss l = lfmmi_loss(scores, p.num, p.den, p.labels, lambda_ce, leaky);
  std::vector<double> a, n;
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    MatD plus = scores, minus = scores;
    plus.data()[i] += h;
    minus.data()[i] -= h;
    const double fp = lfmmi_loss(plus, p.num, p.den, p.labels, lambda_ce, leaky).objective;
    const double fm = lfmmi_loss(minus, p.num, p.den, p.labels, lambda_ce, leaky).objective;
    a.push_back(l.grad.data()[i]);
    n.push_back((fp - fm) / (2 * h));
  }
  return relative_error(a, n);
}

/// Small network dimensions used for network-level checks.
inline NetworkDims gradcheck_dims(int num_pdfs) {
  NetworkDims d;
  d.acoustic_dim = 6;
  d.visual_dim = 4;
  d.hidden = 8;
  d.bottleneck = 4;
  d.num_pdfs = num_pdfs;
  d.frontend_layers = 2;
  d.audio_layers = 2;
  d.visual_layers = 2;
  d.fusion_layers = 2;
  d.recog_layers = 2;
  return d;
}

namespace detail {
/// LF-MMI objective (lambda_ce = 0.1, leaky = 0.1) of a network on one
/// utterance; when `backprop` is set, d(-F)/dparams is left in the grads.
template <typename T>
double network_objective(NetworkParams<T> &net, const MatD &x, const MatD &v, const LfmmiProblem &p, bool backprop) {
  Tape<T> tp;
  auto fo = forward(net, tp.constant(x.cast<T>()), tp.constant(v.cast<T>()), {true, std::nullopt});
  const MatD lp = fo.log_post.value().template cast<double>();
  LfmmiLoss l = lfmmi_loss(lp, p.num, p.den, p.labels, 0.1, 0.1);
  if (backprop) {
    net.zero_grad();
    tp.backward(ad::external_loss(fo.log_post, -l.objective, Mat<T>((-l.grad).cast<T>())));
  }
  return l.objective;
}
}  // namespace detail

/// Gradient of the LF-MMI objective with respect to network parameters.
/// Returns {error of the 64-bit gradient, error of the 32-bit gradient},
/// both against 64-bit central differences, on `probes` random coordinates.
inline std::pair<double, double> check_network(const Architecture &arch, std::uint64_t seed, int probes = 48) {
  LfmmiProblem p = random_lfmmi_problem(5, 3, derive_seed(seed, 1));
  NetworkDims dims = gradcheck_dims(3);
  NetworkParams<double> net = build_network<double>(arch, dims, derive_seed(seed, 2));
  // Nonzero output layer so every path carries gradient.
  Rng rng(derive_seed(seed, 3));
  for (auto &w : net.output_weight.values) w = 0.5 * gaussian(rng);
  for (auto &w : net.output_bias.values) w = 0.1 * gaussian(rng);
  MatD x(5, dims.acoustic_dim), v(5, dims.visual_dim);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = gaussian(rng);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = gaussian(rng);

  NetworkParams<float> netf = build_network<float>(arch, dims, derive_seed(seed, 2));
  netf.copy_values_from(net);
  // Evaluate the 64-bit reference at exactly the 32-bit parameter values.
  net.copy_values_from(netf);

  detail::network_objective(net, x, v, p, true);
  detail::network_objective(netf, x, v, p, true);
  auto params = net.parameters();
  auto paramsf = netf.parameters();
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (auto *t : params) total += t->numel();
  for (int k = 0; k < probes; ++k) {
    std::size_t flat = uniform_index(rng, total), pi = 0;
    while (flat >= params[pi]->numel()) flat -= params[pi++]->numel();
    coords.emplace_back(pi, flat);
  }
  std::vector<double> a64, a32, num;
  const double h = 1e-5;
  for (auto [pi, i] : coords) {
    double &w = params[pi]->values[i];
    const double orig = w;
    w = orig + h;
    const double fp = detail::network_objective(net, x, v, p, false);
    w = orig - h;
    const double fm = detail::network_objective(net, x, v, p, false);
    w = orig;
    num.push_back(-(fp - fm) / (2 * h));
    a64.push_back(params[pi]->grad[i]);
    a32.push_back(paramsf[pi]->grad[i]);
  }
  return {relative_error(a64, num), relative_error(a32, num)};
}

/// Mask-network MSE gradient (64-bit) against central differences.
inline double check_mask_net(std::uint64_t seed, int probes = 32) {
  MaskNetDims d;
  d.num_bins = 9;
  d.visual_dim = 4;
  d.hidden = 6;
  d.bottleneck = 3;
  MaskNet<double> net = build_mask_net<double>(d, seed);
  Rng rng(derive_seed(seed, 1));
  for (auto &w : net.output_weight.values) w = 0.3 * gaussian(rng);
  MatD mag(6, d.num_bins), vis(6, d.visual_dim), target(6, d.num_bins);
  for (Eigen::Index i = 0; i < mag.size(); ++i) mag.data()[i] = gaussian(rng);
  for (Eigen::Index i = 0; i < vis.size(); ++i) vis.data()[i] = gaussian(rng);
  for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = uniform01(rng);
  auto loss = [&](bool backprop) {
    Tape<double> tp;
    auto m = mask_forward(net, tp.constant(mag), tp.constant(vis), false);
    auto l = ad::mse(m, tp.constant(target));
    if (backprop) {
      net.zero_grad();
      tp.backward(l);
    }
    return l.value()(0, 0);
  };
  loss(true);
  auto params = net.parameters();
  std::size_t total = 0;
  for (auto *t : params) total += t->numel();
  std::vector<double> a, n;
  const double h = 1e-5;
  for (int k = 0; k < probes; ++k) {
    std::size_t flat = uniform_index(rng, total), pi = 0;
    while (flat >= params[pi]->numel()) flat -= params[pi++]->numel();
    double &w = params[pi]->values[flat];
    const double orig = w;
    w = orig + h;
    const double fp = loss(false);
    w = orig - h;
    const double fm = loss(false);
    w = orig;
    n.push_back((fp - fm) / (2 * h));
    a.push_back(params[pi]->grad[flat]);
  }
  return relative_error(a, n);
}

inline constexpr double kGradTol64 = 1e-6;
inline constexpr double kGradTol32 = 1e-3;

inline std::vector<Architecture> gradcheck_architectures() {
  return {{FusionMode::kAudioOnly, false}, {FusionMode::kVisualOnly, false}, {FusionMode::kConcat, false},
          {FusionMode::kVGate, false},     {FusionMode::kVGate, true},        {FusionMode::kAVGate, false},
          {FusionMode::kAVGate, true}};
}

/// The full suite: score-level LF-MMI gradients, every architecture in 64-
/// and 32-bit mode, and the mask network; `instances` seeds each.
inline std::vector<GradcheckResult> run_gradcheck_suite(std::uint64_t seed, int instances = 20) {
  std::vector<GradcheckResult> out;
  auto record = [&](const std::string &name, double err, double tol) {
    out.push_back({name, err, tol, std::isfinite(err) && err < tol});
  };
  double worst = 0.0;
  for (int i = 0; i < instances; ++i) worst = std::max(worst, check_lfmmi_scores(derive_seed(seed, 100 + i), 0.1, 0.1));
  record("lfmmi_scores", worst, kGradTol64);
  worst = 0.0;
  for (int i = 0; i < instances; ++i) worst = std::max(worst, check_lfmmi_scores(derive_seed(seed, 200 + i), 0.0, 0.0));
  record("mmi_scores_no_leak", worst, kGradTol64);
  for (const auto &arch : gradcheck_architectures()) {
    double w64 = 0.0, w32 = 0.0;
    for (int i = 0; i < instances; ++i) {
      auto [e64, e32] = check_network(arch, derive_seed(seed, 300 + i));
      w64 = std::max(w64, e64);
      w32 = std::max(w32, e32);
    }
    record("network_" + arch.label() + "_f64", w64, kGradTol64);
    record("network_" + arch.label() + "_f32", w32, kGradTol32);
  }
  worst = 0.0;
  for (int i = 0; i < std::max(1, instances / 4); ++i) worst = std::max(worst, check_mask_net(derive_seed(seed, 400 + i)));
  record("mask_net_mse", worst, kGradTol64);
  return out;
}

}  // namespace avsr
