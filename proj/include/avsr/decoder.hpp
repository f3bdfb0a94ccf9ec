// avsr/decoder.hpp

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

// Exact Viterbi decoding over a (small) HMM graph and WER scoring.

#pragma once

#include <cstdio>
#include <iomanip>
#include <map>

#include "avsr/hmm_graph.hpp"

namespace avsr {

struct DecodeResult {
  std::vector<int> symbols;    // collapsed pdf sequence along the best path
  double score = kLogZero;     // lm_scale * graph weights + acoustic scores
  std::vector<int> backtrace;  // state reached after each frame
  std::vector<int> pdfs;       // pdf emitted at each frame
};

/// Max-product dynamic program. Ties are broken toward the lower state index
/// (for both predecessors and the final state).
inline DecodeResult viterbi(const MatD &scores, const HmmGraph &g, double lm_scale = 1.0) {
  if (scores.rows() == 0) fail("viterbi: empty score matrix");
  if (!(lm_scale > 0.0)) fail("viterbi: lm_scale must be > 0");
  if (scores.cols() < g.num_pdfs) fail("viterbi: scores have ", scores.cols(), " columns, graph needs ", g.num_pdfs);
  const int frames = static_cast<int>(scores.rows());
  const int n = g.num_states;

  // Arcs sorted by (dst, src) so the first maximizer seen has the lowest src.
  std::vector<int> order(g.arcs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const auto &x = g.arcs[a], &y = g.arcs[b];
    return x.dst != y.dst ? x.dst < y.dst : x.src < y.src;
  });

  std::vector<double> delta(n, kLogZero), next(n);
  delta[g.start] = 0.0;
  std::vector<std::vector<int>> back(frames, std::vector<int>(n, -1));
  for (int t = 0; t < frames; ++t) {
    std::fill(next.begin(), next.end(), kLogZero);
    for (int ai : order) {
      const auto &a = g.arcs[ai];
      if (delta[a.src] == kLogZero) continue;
      const double s = delta[a.src] + lm_scale * a.log_weight + scores(t, a.pdf);
      if (s > next[a.dst]) {
        next[a.dst] = s;
        back[t][a.dst] = ai;
      }
    }
    delta.swap(next);
  }
  int best = -1;
  double best_score = kLogZero;
  for (int q = 0; q < n; ++q) {
    if (g.final_weights[q] == kLogZero || delta[q] == kLogZero) continue;
    const double s = delta[q] + lm_scale * g.final_weights[q];
    if (s > best_score) {
      best_score = s;
      best = q;
    }
  }
  if (best < 0) fail("viterbi: no complete path through the graph for ", frames, " frames");

  DecodeResult r;
  r.score = best_score;
  r.backtrace.assign(frames, -1);
  r.pdfs.assign(frames, -1);
  int q = best;
  for (int t = frames - 1; t >= 0; --t) {
    const auto &a = g.arcs[back[t][q]];
    r.backtrace[t] = q;
    r.pdfs[t] = a.pdf;
    q = a.src;
  }
  r.symbols = collapse_repeats(r.pdfs);
  return r;
}

struct WerReport {
  long substitutions = 0;
  long deletions = 0;
  long insertions = 0;
  long ref_length = 0;

  long errors() const { return substitutions + deletions + insertions; }
  double wer() const { return ref_length == 0 ? 0.0 : static_cast<double>(errors()) / ref_length; }
  WerReport &operator+=(const WerReport &o) {
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    ref_length += o.ref_length;
    return *this;
  }
};

/// Unit-cost Levenshtein alignment. When several alignments have equal
/// cost the backtrace prefers a substitution (or match), then a deletion,
/// then an insertion.
template <typename Sym>
WerReport score_wer(const std::vector<Sym> &ref, const std::vector<Sym> &hyp) {
  if (ref.empty()) fail("score_wer: empty reference");
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::vector<int>> d(n + 1, std::vector<int>(m + 1, 0));
  for (std::size_t i = 0; i <= n; ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1), d[i - 1][j] + 1, d[i][j - 1] + 1});
  WerReport r;
  r.ref_length = static_cast<long>(n);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const int sub = ref[i - 1] == hyp[j - 1] ? 0 : 1;
      if (d[i][j] == d[i - 1][j - 1] + sub) {
        r.substitutions += sub;
        --i, --j;
        continue;
      }
    }
    if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  return r;
}

/// One scored utterance of an evaluation slice.
struct UttScore {
  std::string id;
  SnrDb snr;
  WerReport report;
};

/// One line of the WER report. `snr` is a dB value, "clean", "AVE" (the
/// unweighted mean of the overlapped-condition WERs) or "POOLED" (total
/// errors over total reference tokens across those conditions).
struct WerRow {
  std::string system;
  std::string fusion;
  std::string data_condition;
  std::string snr;
  double wer = 0.0;  // percent
  WerReport counts;
};

inline constexpr const char *kAverageLabel = "AVE";
inline constexpr const char *kPooledLabel = "POOLED";

/// Groups utterance scores by SNR condition (descending SNR, clean first)
/// and appends AVE / POOLED rows over the overlapped conditions.
inline std::vector<WerRow> aggregate_wer(const std::vector<UttScore> &utts, const std::string &system,
                                         const std::string &fusion, const std::string &data_condition) {
  std::map<double, WerReport, std::greater<double>> by_snr;
  std::optional<WerReport> clean;
  for (const auto &u : utts) {
    if (!u.snr) {
      if (!clean) clean = WerReport{};
      *clean += u.report;
    } else {
      by_snr[*u.snr] += u.report;
    }
  }
  std::vector<WerRow> rows;
  auto make = [&](const std::string &snr, double wer, const WerReport &c) {
    rows.push_back({system, fusion, data_condition, snr, wer, c});
  };
  if (clean) make(format_snr(std::nullopt), 100.0 * clean->wer(), *clean);
  WerReport pooled;
  double mean = 0.0;
  for (const auto &[snr, rep] : by_snr) {
    make(format_snr(snr), 100.0 * rep.wer(), rep);
    pooled += rep;
    mean += 100.0 * rep.wer();
  }
  if (!by_snr.empty()) {
    make(kAverageLabel, mean / static_cast<double>(by_snr.size()), pooled);
    make(kPooledLabel, 100.0 * pooled.wer(), pooled);
  }
  return rows;
}

inline std::string format_wer(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", percent);
  return buf;
}

inline constexpr const char *kWerHeader = "system\tfusion\tdata_condition\tsnr\twer\tS\tD\tI\tN";

inline std::string encode_wer_rows(const std::vector<WerRow> &rows, bool header = true) {
  std::ostringstream os;
  if (header) os << kWerHeader << '\n';
  for (const auto &r : rows)
    os << r.system << '\t' << r.fusion << '\t' << r.data_condition << '\t' << r.snr << '\t' << format_wer(r.wer)
       << '\t' << r.counts.substitutions << '\t' << r.counts.deletions << '\t' << r.counts.insertions << '\t'
       << r.counts.ref_length << '\n';
  return os.str();
}

inline std::vector<WerRow> decode_wer_rows(const std::string &text) {
  std::vector<WerRow> rows;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == kWerHeader) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (;;) {
      auto tab = line.find('\t', pos);
      f.push_back(line.substr(pos, tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (f.size() != 9) fail("WER report line ", lineno, ": expected 9 fields, got ", f.size());
    WerRow r{f[0], f[1], f[2], f[3], std::stod(f[4]), {}};
    r.counts.substitutions = std::stol(f[5]);
    r.counts.deletions = std::stol(f[6]);
    r.counts.insertions = std::stol(f[7]);
    r.counts.ref_length = std::stol(f[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Human-readable table: one line per (system, data_condition), one column
/// per SNR label in order of first appearance.
inline std::string format_wer_table(const std::vector<WerRow> &rows) {
  std::vector<std::string> cols;
  std::vector<std::pair<std::string, std::string>> keys;
  std::map<std::pair<std::string, std::string>, std::map<std::string, double>> cells;
  for (const auto &r : rows) {
    if (std::find(cols.begin(), cols.end(), r.snr) == cols.end()) cols.push_back(r.snr);
    auto key = std::make_pair(r.system, r.data_condition);
    if (!cells.count(key)) keys.push_back(key);
    cells[key][r.snr] = r.wer;
  }
  std::size_t w0 = 6, w1 = 9;
  for (const auto &k : keys) {
    w0 = std::max(w0, k.first.size());
    w1 = std::max(w1, k.second.size());
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w0 + 2)) << "system" << std::setw(static_cast<int>(w1 + 2))
     << "condition";
  for (const auto &c : cols) os << std::right << std::setw(9) << c;
  os << '\n';
  for (const auto &k : keys) {
    os << std::left << std::setw(static_cast<int>(w0 + 2)) << k.first << std::setw(static_cast<int>(w1 + 2))
       << k.second;
    for (const auto &c : cols) {
      auto it = cells[k].find(c);
      if (it == cells[k].end()) {
        os << std::right << std::setw(9) << "-";
      } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.2f", it->second);
        os << std::right << std::setw(9) << buf;
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace avsr
