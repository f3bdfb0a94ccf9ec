// tests/decoder_test.cc

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

#include "avsr/decoder.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace avsr {
namespace {

TEST(Viterbi, MatchesBruteForceOnDenominatorGraphs) {
  Rng rng(21);
  for (int k = 0; k < 100; ++k) {
    const int syms = 2 + static_cast<int>(uniform_index(rng, 2));
    const int frames = 1 + static_cast<int>(uniform_index(rng, 5));
    const HmmGraph g = build_denominator(Bigram::random(syms, k, 1.0), {syms, uniform(rng, 0.1, 0.9)});
    const MatD s = oracle::random_scores(rng, frames, syms);
    const double scale = k % 2 ? 1.0 : 0.5;
    const auto r = viterbi(s, g, scale);
    EXPECT_NEAR(r.score, oracle::brute_viterbi(g, s, scale), 1e-8);
    // The reported path re-scores to the reported score.
    double rescored = 0.0;
    int state = g.start;
    for (int t = 0; t < frames; ++t) {
      double w = kLogZero;
      for (const auto &a : g.arcs)
        if (a.src == state && a.dst == r.backtrace[t] && a.pdf == r.pdfs[t]) w = std::max(w, a.log_weight);
      ASSERT_NE(w, kLogZero);
      rescored += scale * w + s(t, r.pdfs[t]);
      state = r.backtrace[t];
    }
    EXPECT_NEAR(rescored + scale * g.final_weights[state], r.score, 1e-9);
    EXPECT_EQ(r.symbols, collapse_repeats(r.pdfs));
  }
}

TEST(Viterbi, MatchesBruteForceOnRandomGraphs) {
  Rng rng(22);
  int checked = 0;
  while (checked < 100) {
    const HmmGraph g = oracle::random_graph(rng, 4, 3);
    const int frames = 1 + static_cast<int>(uniform_index(rng, 5));
    const MatD s = oracle::random_scores(rng, frames, 3);
    const double brute = oracle::brute_viterbi(g, s, 1.0);
    if (brute == kLogZero) {
      EXPECT_THROW(viterbi(s, g), Error);
      continue;
    }
    EXPECT_NEAR(viterbi(s, g).score, brute, 1e-8);
    ++checked;
  }
}

TEST(Viterbi, TiesGoToLowerState) {
  const HmmGraph g = build_denominator(Bigram::uniform(3), {3, 0.5});
  const auto r = viterbi(MatD::Zero(1, 3), g);
  EXPECT_EQ(r.pdfs, (std::vector<int>{0}));
}

TEST(Viterbi, RecoversObviousSequence) {
  const HmmGraph g = build_denominator(Bigram::uniform(3, false), {3, 0.75});
  const std::vector<int> truth{2, 2, 2, 0, 0, 1, 1, 1};
  MatD s = MatD::Constant(8, 3, -5.0);
  for (int t = 0; t < 8; ++t) s(t, truth[t]) = 0.0;
  const auto r = viterbi(s, g);
  EXPECT_EQ(r.pdfs, truth);
  EXPECT_EQ(r.symbols, (std::vector<int>{2, 0, 1}));
  EXPECT_THROW(viterbi(MatD::Zero(0, 3), g), Error);
  EXPECT_THROW(viterbi(s, g, 0.0), Error);
  EXPECT_THROW(viterbi(MatD::Zero(3, 2), g), Error);
}

TEST(Wer, KnownExamples) {
  using V = std::vector<std::string>;
  auto r = score_wer(V{"a", "b", "c"}, V{"a", "x", "c"});
  EXPECT_EQ(r.substitutions, 1);
  EXPECT_EQ(r.errors(), 1);
  r = score_wer(V{"a", "b", "c"}, V{"a", "c"});
  EXPECT_EQ(r.deletions, 1);
  r = score_wer(V{"a", "b"}, V{"a", "b", "b", "d"});
  EXPECT_EQ(r.insertions, 2);
  EXPECT_DOUBLE_EQ(r.wer(), 1.0);
  r = score_wer(V{"a", "b"}, V{});
  EXPECT_EQ(r.deletions, 2);
  // Equal-cost alignments resolve to a substitution.
  r = score_wer(V{"a"}, V{"b"});
  EXPECT_EQ(r.substitutions, 1);
  EXPECT_EQ(r.insertions + r.deletions, 0);
  EXPECT_THROW(score_wer(V{}, V{"a"}), Error);
}

TEST(Wer, MatchesIndependentOracle) {
  Rng rng(23);
  for (int k = 0; k < 1000; ++k) {
    std::vector<int> a(1 + uniform_index(rng, 8)), b(uniform_index(rng, 9));
    for (auto &x : a) x = static_cast<int>(uniform_index(rng, 4));
    for (auto &x : b) x = static_cast<int>(uniform_index(rng, 4));
    const WerReport r = score_wer(a, b);
    EXPECT_EQ(r.errors(), oracle::edit_distance(a, b));
    EXPECT_EQ(r.ref_length, static_cast<long>(a.size()));
    EXPECT_EQ(static_cast<long>(b.size()), r.ref_length - r.deletions + r.insertions);
  }
}

std::vector<UttScore> sample_scores() {
  auto rep = [](long s, long d, long i, long n) {
    WerReport r;
    r.substitutions = s;
    r.deletions = d;
    r.insertions = i;
    r.ref_length = n;
    return r;
  };
  return {{"u1", std::nullopt, rep(1, 0, 0, 10)},
          {"u2", -5.0, rep(2, 1, 1, 8)},
          {"u3", 10.0, rep(0, 0, 1, 10)},
          {"u4", -5.0, rep(0, 0, 0, 12)},
          {"u5", 0.0, rep(3, 0, 0, 10)}};
}

TEST(Wer, AggregateOrderAndAverages) {
  const auto rows = aggregate_wer(sample_scores(), "sys", "vgate", "mult*");
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].snr, "clean");
  EXPECT_DOUBLE_EQ(rows[0].wer, 10.0);
  EXPECT_EQ(rows[1].snr, "10");
  EXPECT_EQ(rows[2].snr, "0");
  EXPECT_EQ(rows[3].snr, "-5");
  EXPECT_DOUBLE_EQ(rows[3].wer, 100.0 * 4 / 20);
  EXPECT_EQ(rows[4].snr, "AVE");
  EXPECT_DOUBLE_EQ(rows[4].wer, (10.0 + 30.0 + 20.0) / 3);
  EXPECT_EQ(rows[5].snr, "POOLED");
  EXPECT_DOUBLE_EQ(rows[5].wer, 100.0 * 8 / 40);
  EXPECT_EQ(rows[5].counts.ref_length, 40);
  EXPECT_EQ(rows[1].system, "sys");
  EXPECT_EQ(rows[1].data_condition, "mult*");
  // Clean-only slices have no averages.
  EXPECT_EQ(aggregate_wer({sample_scores()[0]}, "s", "f", "d").size(), 1u);
}

TEST(Wer, TsvRoundTrip) {
  const auto rows = aggregate_wer(sample_scores(), "sys", "vgate", "mult*");
  const std::string text = encode_wer_rows(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kWerHeader);
  EXPECT_NE(text.find("sys\tvgate\tmult*\tAVE\t20.0000\t5\t1\t2\t40\n"), std::string::npos);
  const auto back = decode_wer_rows(text);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].snr, rows[i].snr);
    EXPECT_NEAR(back[i].wer, rows[i].wer, 5e-5);
    EXPECT_EQ(back[i].counts.errors(), rows[i].counts.errors());
  }
  EXPECT_THROW(decode_wer_rows("a\tb\n"), Error);
  EXPECT_EQ(format_wer(12.345678), "12.3457");
}

TEST(Wer, TableLayout) {
  auto rows = aggregate_wer(sample_scores(), "audio", "audio", "mult*");
  const auto more = aggregate_wer(sample_scores(), "vgate", "vgate", "mult*");
  rows.insert(rows.end(), more.begin(), more.end());
  const std::string t = format_wer_table(rows);
  std::istringstream is(t);
  std::string header, l1, l2, extra;
  std::getline(is, header);
  std::getline(is, l1);
  std::getline(is, l2);
  EXPECT_FALSE(std::getline(is, extra));
  EXPECT_NE(header.find("clean"), std::string::npos);
  EXPECT_NE(header.find("POOLED"), std::string::npos);
  EXPECT_EQ(l1.rfind("audio", 0), 0u);
  EXPECT_NE(l2.find("20.00"), std::string::npos);
}

}  // namespace
}  // namespace avsr
