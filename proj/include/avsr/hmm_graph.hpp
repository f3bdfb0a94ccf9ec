// avsr/hmm_graph.hpp

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

// Weighted HMM graphs for sequence training and decoding, and the log-domain
// forward-backward recursion with the "leaky HMM" modification.
//
// Graphs are arc-emitting: a path of T frames is a sequence of T arcs leaving
// the start state; the arc taken at frame t emits pdf_id and contributes
// log_weight + score(t, pdf_id). A path's score also includes the final
// weight of the state it ends in.

#pragma once

#include <map>

#include "avsr/common.hpp"
#include "avsr/synthdata.hpp"

namespace avsr {

/// One emitting state per symbol with a self-loop; pdf id == symbol index.
struct HmmTopology {
  int num_pdfs = 12;
  double self_loop_prob = 0.75;

  double log_self() const { return std::log(self_loop_prob); }
  double log_forward() const { return std::log(1.0 - self_loop_prob); }
  void validate() const {
    if (num_pdfs <= 0) fail("HMM topology: need at least one pdf");
    if (!(self_loop_prob >= 0.0 && self_loop_prob < 1.0)) fail("HMM topology: self-loop probability must be in [0, 1)");
  }
};

struct HmmArc {
  int src;
  int dst;
  int pdf;
  double log_weight;
};

struct HmmGraph {
  int num_states = 0;
  int start = 0;
  int num_pdfs = 0;
  std::vector<HmmArc> arcs;
  std::vector<double> final_weights;  // log; kLogZero for non-final states
  std::vector<double> occupancy;      // stationary occupancy used by the leaky HMM

  int add_state() {
    final_weights.push_back(kLogZero);
    return num_states++;
  }
  void add_arc(int src, int dst, int pdf, double log_weight) {
    if (log_weight == kLogZero) return;
    arcs.push_back({src, dst, pdf, log_weight});
  }

  void validate() const {
    if (num_states <= 0 || start < 0 || start >= num_states) fail("HMM graph: bad start state");
    if (static_cast<int>(final_weights.size()) != num_states) fail("HMM graph: final weights do not cover all states");
    for (const auto &a : arcs) {
      if (a.src < 0 || a.src >= num_states || a.dst < 0 || a.dst >= num_states)
        fail("HMM graph: arc references a missing state");
      if (a.pdf < 0 || a.pdf >= num_pdfs) fail("HMM graph: arc pdf ", a.pdf, " out of range [0, ", num_pdfs, ")");
      if (!std::isfinite(a.log_weight)) fail("HMM graph: non-finite arc weight");
    }
  }
};

/// Stationary distribution of the Markov chain defined by the arc weights
/// (rows renormalized; states without arcs restart at the start state).
/// Power iteration on the lazy chain (I + P)/2, which has the same fixed
/// point and always converges.
inline std::vector<double> stationary_occupancy(const HmmGraph &g, double tol = 1e-10, int max_iters = 10000) {
  const int n = g.num_states;
  std::vector<double> row_mass(n, 0.0);
  for (const auto &a : g.arcs) row_mass[a.src] += std::exp(a.log_weight);
  std::vector<double> x(n, 0.0), y(n);
  x[g.start] = 1.0;
  for (int it = 0; it < max_iters; ++it) {
    std::fill(y.begin(), y.end(), 0.0);
    for (int q = 0; q < n; ++q)
      if (row_mass[q] == 0.0) y[g.start] += x[q];
    for (const auto &a : g.arcs) y[a.dst] += x[a.src] * std::exp(a.log_weight) / row_mass[a.src];
    double diff = 0.0;
    for (int q = 0; q < n; ++q) {
      y[q] = 0.5 * (x[q] + y[q]);
      diff += std::abs(y[q] - x[q]);
    }
    x.swap(y);
    if (diff < tol) break;
  }
  double s = std::accumulate(x.begin(), x.end(), 0.0);
  for (auto &v : x) v /= s;
  return x;
}

/// Decoding / denominator graph: the bigram composed with the topology.
/// States 0..S-1 are "last symbol" contexts; state S is the sentence start.
/// From context a the next frame either stays in a (self-loop, merged with
/// an a->a bigram transition) or moves to b with (1-p) P(b|a).
inline HmmGraph build_denominator(const Bigram &lm, const HmmTopology &topo) {
  topo.validate();
  lm.validate();
  if (lm.size() != topo.num_pdfs)
    fail("build_denominator: bigram has ", lm.size(), " symbols but topology has ", topo.num_pdfs, " pdfs");
  const int s = topo.num_pdfs;
  HmmGraph g;
  g.num_pdfs = s;
  for (int i = 0; i <= s; ++i) g.add_state();
  g.start = s;
  const double p = topo.self_loop_prob;
  for (int b = 0; b < s; ++b)
    if (lm.start[b] > 0.0) g.add_arc(s, b, b, std::log(lm.start[b]));
  for (int a = 0; a < s; ++a) {
    for (int b = 0; b < s; ++b) {
      const double prob = a == b ? p + (1.0 - p) * lm.trans[a][a] : (1.0 - p) * lm.trans[a][b];
      if (prob > 0.0) g.add_arc(a, b, b, std::log(prob));
    }
    g.final_weights[a] = 0.0;
  }
  g.validate();
  g.occupancy = stationary_occupancy(g);
  return g;
}

/// Time-expanded numerator graph for a frame-level alignment. Node (k, j)
/// means "k frames emitted, the last one by segment j". Each segment
/// boundary may move by up to `window` frames. With an LM, transition
/// weights equal the denominator's for the same symbol sequence, so the
/// numerator paths are a weighted subset of the denominator paths.
inline HmmGraph build_numerator(const std::vector<int> &alignment, const HmmTopology &topo, int window = 2,
                                const Bigram *lm = nullptr) {
  topo.validate();
  if (alignment.empty()) fail("build_numerator: empty alignment");
  if (window < 0) fail("build_numerator: tolerance window must be >= 0");
  for (std::size_t t = 0; t < alignment.size(); ++t)
    if (alignment[t] < 0 || alignment[t] >= topo.num_pdfs)
      fail("build_numerator: label ", alignment[t], " at frame ", t, " out of range");
  if (lm && lm->size() != topo.num_pdfs) fail("build_numerator: bigram size does not match topology");

  struct Segment {
    int pdf, begin, end;
  };
  std::vector<Segment> segs;
  for (int t = 0; t < static_cast<int>(alignment.size()); ++t) {
    if (segs.empty() || segs.back().pdf != alignment[t]) segs.push_back({alignment[t], t, t + 1});
    else segs.back().end = t + 1;
  }
  const int frames = static_cast<int>(alignment.size());
  const int nseg = static_cast<int>(segs.size());
  auto allowed = [&](int frame, int j) { return frame >= segs[j].begin - window && frame < segs[j].end + window; };

  const double p = topo.self_loop_prob;
  auto stay_weight = [&](int j) {
    const int a = segs[j].pdf;
    const double prob = lm ? p + (1.0 - p) * lm->trans[a][a] : p;
    return prob > 0.0 ? std::log(prob) : kLogZero;
  };
  auto advance_weight = [&](int j) {
    const double prob = (1.0 - p) * (lm ? lm->trans[segs[j].pdf][segs[j + 1].pdf] : 1.0);
    return prob > 0.0 ? std::log(prob) : kLogZero;
  };
  const double first_weight = lm ? (lm->start[segs[0].pdf] > 0 ? std::log(lm->start[segs[0].pdf]) : kLogZero) : 0.0;

  // Forward reachability over (k, j), then co-reachability from (T, J-1).
  std::vector<std::vector<char>> fwd(frames + 1, std::vector<char>(nseg, 0)), bwd = fwd;
  if (allowed(0, 0) && first_weight != kLogZero) fwd[1][0] = 1;
  for (int k = 1; k < frames; ++k)
    for (int j = 0; j < nseg; ++j) {
      if (!fwd[k][j]) continue;
      if (allowed(k, j) && stay_weight(j) != kLogZero) fwd[k + 1][j] = 1;
      if (j + 1 < nseg && allowed(k, j + 1) && advance_weight(j) != kLogZero) fwd[k + 1][j + 1] = 1;
    }
  if (!fwd[frames][nseg - 1]) fail("build_numerator: alignment is inconsistent with any legal path");
  bwd[frames][nseg - 1] = 1;
  for (int k = frames - 1; k >= 1; --k)
    for (int j = 0; j < nseg; ++j) {
      if (!fwd[k][j]) continue;
      bool ok = false;
      if (allowed(k, j) && stay_weight(j) != kLogZero && bwd[k + 1][j]) ok = true;
      if (j + 1 < nseg && allowed(k, j + 1) && advance_weight(j) != kLogZero && bwd[k + 1][j + 1]) ok = true;
      bwd[k][j] = ok;
    }

  HmmGraph g;
  g.num_pdfs = topo.num_pdfs;
  g.start = g.add_state();
  std::vector<std::vector<int>> id(frames + 1, std::vector<int>(nseg, -1));
  for (int k = 1; k <= frames; ++k)
    for (int j = 0; j < nseg; ++j)
      if (fwd[k][j] && bwd[k][j]) id[k][j] = g.add_state();
  g.add_arc(g.start, id[1][0], segs[0].pdf, first_weight);
  for (int k = 1; k < frames; ++k)
    for (int j = 0; j < nseg; ++j) {
      if (id[k][j] < 0) continue;
      if (allowed(k, j) && id[k + 1][j] >= 0) g.add_arc(id[k][j], id[k + 1][j], segs[j].pdf, stay_weight(j));
      if (j + 1 < nseg && allowed(k, j + 1) && id[k + 1][j + 1] >= 0)
        g.add_arc(id[k][j], id[k + 1][j + 1], segs[j + 1].pdf, advance_weight(j));
    }
  g.final_weights[id[frames][nseg - 1]] = 0.0;
  g.validate();
  return g;
}

struct ForwardBackwardResult {
  double log_total = kLogZero;           // from the forward pass
  double log_total_backward = kLogZero;  // the same quantity from the backward pass
  MatD posteriors;                       // T x num_pdfs, rows sum to 1
};

/// Log-semiring forward-backward. With leaky > 0, between consecutive frames
/// every state additionally receives leaky * occupancy(state) * (total mass
/// at that point); posteriors are then derivatives of the leaky total.
inline ForwardBackwardResult forward_backward(const HmmGraph &g, const MatD &scores, double leaky = 0.0) {
  if (!(leaky >= 0.0 && leaky < 1.0)) fail("forward_backward: leaky coefficient must be in [0, 1)");
  const int frames = static_cast<int>(scores.rows());
  if (frames == 0) fail("forward_backward: no frames");
  if (scores.cols() < g.num_pdfs) fail("forward_backward: scores have ", scores.cols(), " columns, graph needs ", g.num_pdfs);
  for (int t = 0; t < frames; ++t)
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      if (!std::isfinite(scores(t, c))) fail("forward_backward: non-finite score at frame ", t);

  const int n = g.num_states;
  std::vector<double> occ_storage;
  const std::vector<double> *occ = &g.occupancy;
  if (leaky > 0.0 && static_cast<int>(g.occupancy.size()) != n) {
    occ_storage = stationary_occupancy(g);
    occ = &occ_storage;
  }
  std::vector<double> log_occ(n, kLogZero);
  if (leaky > 0.0)
    for (int q = 0; q < n; ++q) log_occ[q] = (*occ)[q] > 0.0 ? std::log((*occ)[q]) : kLogZero;
  const double log_leaky = leaky > 0.0 ? std::log(leaky) : kLogZero;
  auto leaks_at = [&](int k) { return leaky > 0.0 && k >= 1 && k <= frames - 1; };

  // alpha[k] holds the leak-augmented forward values after k frames.
  std::vector<std::vector<double>> alpha(frames + 1, std::vector<double>(n, kLogZero));
  alpha[0][g.start] = 0.0;
  std::vector<double> next(n);
  for (int k = 0; k < frames; ++k) {
    std::fill(next.begin(), next.end(), kLogZero);
    for (const auto &a : g.arcs) {
      const double src = alpha[k][a.src];
      if (src == kLogZero) continue;
      next[a.dst] = log_add(next[a.dst], src + a.log_weight + scores(k, a.pdf));
    }
    if (leaks_at(k + 1)) {
      const double total = log_sum_exp(next);
      for (int q = 0; q < n; ++q) next[q] = log_add(next[q], log_leaky + log_occ[q] + total);
    }
    alpha[k + 1] = next;
  }
  ForwardBackwardResult r;
  double total = kLogZero;
  for (int q = 0; q < n; ++q)
    if (g.final_weights[q] != kLogZero) total = log_add(total, alpha[frames][q] + g.final_weights[q]);
  if (total == kLogZero) fail("forward_backward: no path through the graph for ", frames, " frames");
  r.log_total = total;

  // beta[k](q) = d total / d alpha_k(q) before the leak, in log space.
  std::vector<double> beta(g.final_weights), prev(n);
  r.posteriors = MatD::Zero(frames, g.num_pdfs);
  for (int k = frames - 1; k >= 0; --k) {
    std::fill(prev.begin(), prev.end(), kLogZero);
    for (const auto &a : g.arcs) {
      const double dst = beta[a.dst];
      if (dst == kLogZero) continue;
      const double w = a.log_weight + scores(k, a.pdf);
      prev[a.src] = log_add(prev[a.src], w + dst);
      const double src = alpha[k][a.src];
      if (src != kLogZero) r.posteriors(k, a.pdf) += std::exp(src + w + dst - total);
    }
    if (leaks_at(k)) {
      std::vector<double> terms(n);
      for (int q = 0; q < n; ++q) terms[q] = log_occ[q] + prev[q];
      const double leak_back = log_leaky + log_sum_exp(terms);
      for (int q = 0; q < n; ++q) prev[q] = log_add(prev[q], leak_back);
    }
    beta.swap(prev);
  }
  r.log_total_backward = beta[g.start];
  return r;
}

}  // namespace avsr
