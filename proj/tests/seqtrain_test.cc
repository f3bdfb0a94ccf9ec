// tests/seqtrain_test.cc

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

#include "avsr/gradcheck.hpp"
#include "avsr/lfmmi.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace avsr {
namespace {

bool has_path(const HmmGraph &g, int frames) {
  bool any = false;
  oracle::for_each_path(g, MatD::Zero(frames, g.num_pdfs), 1.0, [&](double, const std::vector<int> &) { any = true; });
  return any;
}

TEST(ForwardBackward, MatchesEnumeration) {
  Rng rng(11);
  int checked = 0;
  while (checked < 100) {
    HmmGraph g = oracle::random_graph(rng, 4, 3);
    const int frames = 1 + static_cast<int>(uniform_index(rng, 6));
    if (!has_path(g, frames)) {
      EXPECT_THROW(forward_backward(g, MatD::Zero(frames, 3)), Error);
      continue;
    }
    const MatD s = oracle::random_scores(rng, frames, 3);
    const auto fb = forward_backward(g, s, 0.0);
    EXPECT_NEAR(fb.log_total, oracle::log_total(g, s), 1e-9);
    EXPECT_NEAR(fb.log_total_backward, fb.log_total, 1e-9);
    EXPECT_LT((fb.posteriors - oracle::posteriors(g, s)).cwiseAbs().maxCoeff(), 1e-9);
    ++checked;
  }
}

TEST(ForwardBackward, LeakyMatchesDenseRecursion) {
  Rng rng(12);
  int checked = 0;
  while (checked < 50) {
    HmmGraph g = oracle::random_graph(rng, 4, 3);
    const int frames = 1 + static_cast<int>(uniform_index(rng, 6));
    if (!has_path(g, frames)) continue;
    g.occupancy = stationary_occupancy(g);
    const MatD s = oracle::random_scores(rng, frames, 3);
    const auto fb = forward_backward(g, s, 0.1);
    EXPECT_NEAR(fb.log_total, oracle::leaky_log_total(g, s, 0.1, g.occupancy), 1e-9);
    EXPECT_NEAR(fb.log_total_backward, fb.log_total, 1e-9);
    ++checked;
  }
}

TEST(ForwardBackward, LeakyPosteriorsAreDerivatives) {
  Rng rng(13);
  int checked = 0;
  while (checked < 20) {
    HmmGraph g = oracle::random_graph(rng, 4, 3);
    const int frames = 2 + static_cast<int>(uniform_index(rng, 4));
    if (!has_path(g, frames)) continue;
    const MatD s = oracle::random_scores(rng, frames, 3);
    const auto fb = forward_backward(g, s, 0.2);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      MatD p = s, m = s;
      p.data()[i] += h;
      m.data()[i] -= h;
      const double d = (forward_backward(g, p, 0.2).log_total - forward_backward(g, m, 0.2).log_total) / (2 * h);
      EXPECT_NEAR(fb.posteriors.data()[i], d, 1e-6);
    }
    for (int t = 0; t < frames; ++t) EXPECT_NEAR(fb.posteriors.row(t).sum(), 1.0, 1e-9);
    ++checked;
  }
}

TEST(ForwardBackward, InputValidation) {
  HmmGraph g = build_denominator(Bigram::uniform(3), {3, 0.5});
  EXPECT_THROW(forward_backward(g, MatD::Zero(0, 3)), Error);
  EXPECT_THROW(forward_backward(g, MatD::Zero(2, 2)), Error);
  EXPECT_THROW(forward_backward(g, MatD::Zero(2, 3), 1.0), Error);
  MatD bad = MatD::Zero(2, 3);
  bad(1, 1) = std::nan("");
  EXPECT_THROW(forward_backward(g, bad), Error);
}

TEST(Graphs, StationaryOccupancyIsFixedPoint) {
  const Bigram lm = Bigram::random(4, 3, 1.0);
  const HmmGraph g = build_denominator(lm, {4, 0.75});
  ASSERT_EQ(g.num_states, 5);
  EXPECT_EQ(g.start, 4);
  std::vector<double> mass(g.num_states, 0.0), next(g.num_states, 0.0);
  for (const auto &a : g.arcs) mass[a.src] += std::exp(a.log_weight);
  for (int q = 0; q < 4; ++q) EXPECT_NEAR(mass[q], 1.0, 1e-12);
  for (const auto &a : g.arcs) next[a.dst] += g.occupancy[a.src] * std::exp(a.log_weight) / mass[a.src];
  for (int q = 0; q < g.num_states; ++q) EXPECT_NEAR(next[q], g.occupancy[q], 1e-8);
  EXPECT_NEAR(g.occupancy[4], 0.0, 1e-8);  // the start state is transient
}

TEST(Graphs, DenominatorScoresSequenceLikeBigram) {
  const Bigram lm = Bigram::random(3, 5, 1.0);
  const HmmTopology topo{3, 0.6};
  const HmmGraph g = build_denominator(lm, topo);
  // Path 0,0,2: start(0) * stay(0) * (1-p) P(2|0).
  MatD s = MatD::Constant(3, 3, -1e3);
  s(0, 0) = s(1, 0) = s(2, 2) = 0.0;
  const double expect = std::log(lm.start[0]) + std::log(0.6) + std::log(0.4 * lm.trans[0][2]);
  EXPECT_NEAR(oracle::log_total(g, s), expect, 1e-9);
  EXPECT_THROW(build_denominator(lm, {4, 0.6}), Error);
}

TEST(Graphs, NumeratorWindowZeroIsSinglePath) {
  const std::vector<int> ali{1, 1, 0, 0, 0, 2};
  const HmmGraph g = build_numerator(ali, {3, 0.5}, 0);
  int paths = 0;
  std::vector<int> seen;
  oracle::for_each_path(g, MatD::Zero(6, 3), 1.0, [&](double, const std::vector<int> &p) {
    ++paths;
    seen = p;
  });
  EXPECT_EQ(paths, 1);
  EXPECT_EQ(seen, ali);
  const auto fb = forward_backward(g, MatD::Zero(6, 3));
  for (int t = 0; t < 6; ++t) EXPECT_NEAR(fb.posteriors(t, ali[t]), 1.0, 1e-12);
}

TEST(Graphs, NumeratorWindowAllowsBoundaryShifts) {
  const std::vector<int> ali{1, 1, 1, 0, 0, 0};
  const HmmGraph g = build_numerator(ali, {3, 0.5}, 2);
  std::set<std::vector<int>> seqs;
  oracle::for_each_path(g, MatD::Zero(6, 3), 1.0, [&](double, const std::vector<int> &p) { seqs.insert(p); });
  // The single boundary may sit at frames 1..5.
  EXPECT_EQ(seqs.size(), 5u);
  for (const auto &p : seqs) EXPECT_EQ(collapse_repeats(p), (std::vector<int>{1, 0}));
  EXPECT_THROW(build_numerator({}, {3, 0.5}), Error);
  EXPECT_THROW(build_numerator({0, 5}, {3, 0.5}), Error);
  EXPECT_THROW(build_numerator({0, 1}, {3, 0.5}, -1), Error);
}

TEST(Graphs, NumeratorPathsAreWeightedSubsetOfDenominator) {
  Rng rng(14);
  for (int k = 0; k < 10; ++k) {
    LfmmiProblem p = random_lfmmi_problem(6, 3, 100 + k, 2);
    std::map<std::vector<int>, double> den;
    oracle::for_each_path(p.den, MatD::Zero(6, 3), 1.0, [&](double s, const std::vector<int> &q) { den[q] = s; });
    oracle::for_each_path(p.num, MatD::Zero(6, 3), 1.0, [&](double s, const std::vector<int> &q) {
      ASSERT_TRUE(den.count(q));
      EXPECT_NEAR(s, den[q], 1e-12);
    });
    const MatD s = oracle::random_scores(rng, 6, 3);
    const auto l = lfmmi_loss(s, p.num, p.den, p.labels, 0.0, 0.0);
    EXPECT_LE(l.objective, 1e-12);
  }
}

TEST(Lfmmi, ObjectiveDecomposes) {
  LfmmiProblem p = random_lfmmi_problem(5, 3, 7);
  Rng rng(15);
  const MatD s = oracle::random_scores(rng, 5, 3);
  const auto l = lfmmi_loss(s, p.num, p.den, p.labels, 0.1, 0.0);
  EXPECT_NEAR(l.log_num, oracle::log_total(p.num, s), 1e-9);
  EXPECT_NEAR(l.log_den, oracle::log_total(p.den, s), 1e-9);
  double ce = 0.0;
  for (int t = 0; t < 5; ++t) ce += s(t, p.labels[t]) - std::log(s.row(t).array().exp().sum());
  EXPECT_NEAR(l.ce, ce, 1e-12);
  EXPECT_NEAR(l.objective, l.log_num - l.log_den + 0.1 * ce, 1e-12);
}

TEST(Lfmmi, PosteriorAndGradientNormalization) {
  for (int k = 0; k < 20; ++k) {
    LfmmiProblem p = random_lfmmi_problem(8, 4, 200 + k, 2);
    Rng rng(k);
    const MatD s = oracle::random_scores(rng, 8, 4);
    const auto l = lfmmi_loss(s, p.num, p.den, p.labels, 0.1, 0.1);
    for (int t = 0; t < 8; ++t) {
      EXPECT_NEAR(l.gamma_num.row(t).sum(), 1.0, 1e-6);
      EXPECT_NEAR(l.gamma_den.row(t).sum(), 1.0, 1e-6);
      EXPECT_NEAR(l.grad.row(t).sum(), 0.0, 1e-5);
    }
  }
}

TEST(Lfmmi, GradientMatchesFiniteDifferences) {
  for (int k = 0; k < 5; ++k) {
    EXPECT_LT(check_lfmmi_scores(300 + k, 0.1, 0.1), 1e-6);
    EXPECT_LT(check_lfmmi_scores(400 + k, 0.0, 0.0), 1e-6);
    EXPECT_LT(check_lfmmi_scores(500 + k, 0.5, 0.3), 1e-6);
  }
}

TEST(Lfmmi, Errors) {
  LfmmiProblem p = random_lfmmi_problem(5, 3, 1);
  EXPECT_THROW(lfmmi_loss(MatD::Zero(5, 3), p.num, p.den, p.labels, -0.1, 0.1), Error);
  EXPECT_THROW(lfmmi_loss(MatD::Zero(5, 3), p.num, p.den, {0, 1}, 0.1, 0.1), Error);
  EXPECT_THROW(frame_log_likelihood(MatD::Zero(2, 3), {0, 3}), Error);
}

}  // namespace
}  // namespace avsr
