// avsr/lfmmi.hpp

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

#include "avsr/hmm_graph.hpp"

namespace avsr {

/// Lattice-free MMI objective for one utterance (to be maximized):
///   F = log p_num - log p_den + lambda_ce * sum_t log_softmax(scores)(t, y_t)
/// and its exact gradient with respect to the frame scores:
///   dF/dscores = gamma_num - gamma_den + lambda_ce * (onehot(y) - softmax(scores)).
struct LfmmiLoss {
  double objective = 0.0;
  double log_num = 0.0;
  double log_den = 0.0;
  double ce = 0.0;  // sum_t log_softmax(scores)(t, y_t)
  MatD grad;
  MatD gamma_num;
  MatD gamma_den;
};

/// Frame cross-entropy term: value sum_t log_softmax(scores)(t, y_t) and its
/// gradient onehot(y) - softmax(scores).
inline std::pair<double, MatD> frame_log_likelihood(const MatD &scores, const std::vector<int> &labels) {
  if (static_cast<Eigen::Index>(labels.size()) != scores.rows())
    fail("frame cross-entropy: ", labels.size(), " labels for ", scores.rows(), " frames");
  MatD grad(scores.rows(), scores.cols());
  double total = 0.0;
  for (Eigen::Index t = 0; t < scores.rows(); ++t) {
    const double lse = log_sum_exp(std::vector<double>(scores.row(t).begin(), scores.row(t).end()));
    const int y = labels[t];
    if (y < 0 || y >= scores.cols()) fail("frame cross-entropy: label ", y, " out of range at frame ", t);
    total += scores(t, y) - lse;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) grad(t, c) = -std::exp(scores(t, c) - lse);
    grad(t, y) += 1.0;
  }
  return {total, std::move(grad)};
}

/// The leaky-HMM modification is applied to the denominator only; the
/// numerator follows the (windowed) reference alignment exactly.
inline LfmmiLoss lfmmi_loss(const MatD &scores, const HmmGraph &num_graph, const HmmGraph &den_graph,
                            const std::vector<int> &labels, double lambda_ce, double leaky) {
  if (!(lambda_ce >= 0.0)) fail("lfmmi_loss: lambda_ce must be >= 0");
  if (num_graph.num_pdfs != den_graph.num_pdfs) fail("lfmmi_loss: numerator and denominator disagree on pdf count");
  LfmmiLoss out;
  auto num = forward_backward(num_graph, scores, 0.0);
  auto den = forward_backward(den_graph, scores, leaky);
  out.log_num = num.log_total;
  out.log_den = den.log_total;
  out.gamma_num = std::move(num.posteriors);
  out.gamma_den = std::move(den.posteriors);
  out.grad = MatD::Zero(scores.rows(), scores.cols());
  out.grad.leftCols(num_graph.num_pdfs) = out.gamma_num - out.gamma_den;
  out.objective = out.log_num - out.log_den;
  if (lambda_ce > 0.0) {
    auto [ce, ce_grad] = frame_log_likelihood(scores, labels);
    out.ce = ce;
    out.objective += lambda_ce * ce;
    out.grad += lambda_ce * ce_grad;
  } else if (!labels.empty()) {
    out.ce = frame_log_likelihood(scores, labels).first;
  }
  return out;
}

}  // namespace avsr
