// avsr/experiment.hpp

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

// Separation front-end persistence and the experiment grid that produces the
// pipelined-vs-integrated WER tables. Each grid cell lives in its own
// directory and is skipped on rerun when its stored hash still matches.

#pragma once

#include "avsr/trainer.hpp"

namespace avsr {

// ---------------------------------------------------------------------------
// Separator

struct Separator {
  RunConfig config;
  MaskNet<float> net;
  NormStats stats;
  bool use_visual = true;
};

inline Separator make_separator(const RunConfig &cfg, bool use_visual, std::uint64_t seed) {
  Separator s;
  s.config = cfg;
  s.config.sync_dims();
  s.net = build_mask_net<float>(s.config.separation.dims, seed);
  s.stats = NormStats::identity(s.config.separation.dims.num_bins);
  s.use_visual = use_visual;
  return s;
}

inline void save_separator(const fs::path &path, const Separator &s) {
  Checkpoint c;
  c.kind = "separator";
  c.config = encode_config(s.config);
  c.vectors["logmag_mean"] = s.stats.mean;
  c.vectors["logmag_var"] = s.stats.var;
  c.vectors["use_visual"] = {s.use_visual ? 1.0 : 0.0};
  store_tensors(c, const_cast<MaskNet<float> &>(s.net).parameters());
  write_checkpoint(path, c);
}

inline Separator load_separator(const fs::path &path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.kind != "separator") fail(path.string(), ": checkpoint holds a ", c.kind, ", not a separator");
  Separator s;
  s.config = decode_config(c.config, path.string() + " (embedded config)");
  s.net = build_mask_net<float>(s.config.separation.dims, 0);
  load_tensors(c, s.net.parameters());
  s.stats = {c.vector("logmag_mean"), c.vector("logmag_var")};
  s.use_visual = c.vector("use_visual").at(0) != 0.0;
  return s;
}

inline MatF separator_mask(Separator &s, const Waveform &mixture, const MatF &visual) {
  s.net.zero_grad();
  return learned_mask(s.net, mask_inputs(mixture, visual, s.stats, s.use_visual));
}

/// Mask for one record: the oracle mask from its sources, or the learned one.
inline MatF record_mask(const Corpus &corpus, const ManifestRecord &r, MaskSource source, Separator *sep) {
  if (source == MaskSource::kOracle) {
    auto [target, interferer] = corpus.sources(r);
    return oracle_irm(target, interferer);
  }
  if (!sep) fail("learned front-end requested without a separator model");
  return separator_mask(*sep, corpus.audio(r), corpus.visual(r));
}

inline Waveform enhance_record(const Corpus &corpus, const ManifestRecord &r, MaskSource source, Separator *sep) {
  return apply_mask(corpus.audio(r), record_mask(corpus, r, source, sep));
}

inline std::vector<MaskExample> mask_examples(const Corpus &corpus, const std::vector<const ManifestRecord *> &recs,
                                              const NormStats &stats, bool use_visual, int workers) {
  std::vector<MaskExample> out(recs.size());
  parallel_for(recs.size(), workers, [&](std::size_t i) {
    const auto &r = *recs[i];
    auto [target, interferer] = corpus.sources(r);
    out[i].inputs = mask_inputs(corpus.audio(r), corpus.visual(r), stats, use_visual);
    out[i].target = oracle_irm(target, interferer);
  });
  return out;
}

struct SeparatorReport {
  double mse_untrained = 0.0;
  double mse_trained = 0.0;
  double si_snr_mixture = 0.0;
  double si_snr_enhanced = 0.0;
  double si_snr_oracle = 0.0;
  std::size_t num_dev = 0;
  std::vector<double> train_history;
};

/// Trains a mask estimator on the overlapped training mixtures and scores it
/// on the overlapped dev mixtures.
inline SeparatorReport train_separator(Separator &s, const Corpus &corpus, std::uint64_t seed, int workers) {
  const auto train_recs = corpus.select("train", false, true);
  const auto dev_recs = corpus.select("dev", false, true);
  if (train_recs.empty()) fail("separator training: the corpus has no overlapped training mixtures");
  {
    std::vector<MatF> mags(train_recs.size());
    parallel_for(train_recs.size(), workers, [&](std::size_t i) { mags[i] = log_magnitude(corpus.audio(*train_recs[i])); });
    std::vector<const MatF *> ptrs;
    for (const auto &m : mags) ptrs.push_back(&m);
    s.stats = NormStats::compute(ptrs);
  }
  const auto train = mask_examples(corpus, train_recs, s.stats, s.use_visual, workers);
  const auto dev = mask_examples(corpus, dev_recs, s.stats, s.use_visual, workers);
  SeparatorReport rep;
  rep.num_dev = dev.size();
  auto dev_mse = [&] {
    s.net.zero_grad();
    std::vector<double> e(dev.size());
    parallel_for(dev.size(), workers, [&](std::size_t i) { e[i] = mask_mse(learned_mask(s.net, dev[i].inputs), dev[i].target); });
    double sum = 0.0;
    for (double v : e) sum += v;
    return dev.empty() ? 0.0 : sum / static_cast<double>(dev.size());
  };
  rep.mse_untrained = dev_mse();
  MaskTrainConfig tc = s.config.separation.train;
  rep.train_history = train_mask_net(s.net, train, tc, seed, workers);
  rep.mse_trained = dev_mse();
  std::vector<double> mix(dev.size()), enh(dev.size()), orc(dev.size());
  parallel_for(dev_recs.size(), workers, [&](std::size_t i) {
    const auto &r = *dev_recs[i];
    auto [target, interferer] = corpus.sources(r);
    const Waveform mixture = corpus.audio(r);
    mix[i] = si_snr(target, mixture);
    enh[i] = si_snr(target, apply_mask(mixture, learned_mask(s.net, dev[i].inputs)));
    orc[i] = si_snr(target, apply_mask(mixture, dev[i].target));
  });
  for (std::size_t i = 0; i < dev.size(); ++i) {
    rep.si_snr_mixture += mix[i] / dev.size();
    rep.si_snr_enhanced += enh[i] / dev.size();
    rep.si_snr_oracle += orc[i] / dev.size();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Experiment grid

/// Front-end applied to every training/test signal of a pipelined system.
enum class FrontEnd { kNone, kOracle, kLearnedAV, kLearnedA };

inline std::string front_end_name(FrontEnd f) {
  switch (f) {
    case FrontEnd::kNone: return "none";
    case FrontEnd::kOracle: return "oracle";
    case FrontEnd::kLearnedAV: return "learned-av";
    case FrontEnd::kLearnedA: return "learned-a";
  }
  return "?";
}

struct GridCell {
  std::string name;    // directory name, unique
  std::string system;  // report label
  Architecture arch;
  Criterion criterion = Criterion::kLfmmi;
  DataCondition data = DataCondition::kClean;
  FrontEnd front_end = FrontEnd::kNone;
  int seed_index = 0;
  std::string reuse;  // evaluate the recognizer trained by this cell instead of training
};

inline std::string cell_dir_name(const std::string &system, DataCondition d, int seed_index) {
  std::string cond = d == DataCondition::kClean ? "clean" : d == DataCondition::kMultOverlap ? "multstar" : "mult";
  std::string sys = system;
  for (auto &ch : sys)
    if (ch == '+') ch = '_';
  return str_cat(sys, "__", cond, "__s", seed_index);
}

/// Grid "tables": every row family of the pipelined and integrated tables,
/// with the overlapped-trained integrated systems repeated over seeds.
/// Grid "baseline": the first three cells of "tables" (audio LF-MMI, audio
/// CE, visual), all clean-trained; cells are shared with "tables".
/// Grid "smoke": a three-cell grid for quick end-to-end checks.
inline std::vector<GridCell> make_grid(const std::string &grid, int num_seeds) {
  std::vector<GridCell> cells;
  auto add = [&](const std::string &system, FusionMode mode, bool plus, DataCondition data, int seed,
                 Criterion crit = Criterion::kLfmmi, FrontEnd fe = FrontEnd::kNone, std::string reuse = {}) {
    GridCell c;
    c.system = seed == 0 ? system : str_cat(system, "@s", seed);
    c.name = cell_dir_name(system, data, seed);
    c.arch = {mode, plus};
    c.criterion = crit;
    c.data = data;
    c.front_end = fe;
    c.seed_index = seed;
    c.reuse = std::move(reuse);
    cells.push_back(std::move(c));
  };
  using FM = FusionMode;
  const auto clean = DataCondition::kClean, mstar = DataCondition::kMultOverlap, msep = DataCondition::kMultSeparated;
  if (grid == "smoke") {
    add("audio", FM::kAudioOnly, false, clean, 0);
    add("vgate", FM::kVGate, false, mstar, 0);
    add("pipelined-oracle", FM::kAudioOnly, false, clean, 0, Criterion::kLfmmi, FrontEnd::kOracle,
        cell_dir_name("audio", clean, 0));
    return cells;
  }
  if (grid != "tables" && grid != "baseline") fail("unknown experiment grid '", grid, "' (expected tables, baseline or smoke)");
  add("audio", FM::kAudioOnly, false, clean, 0);
  add("audio-ce", FM::kAudioOnly, false, clean, 0, Criterion::kCe);
  add("visual", FM::kVisualOnly, false, clean, 0);
  if (grid == "baseline") return cells;
  add("concat", FM::kConcat, false, clean, 0);
  add("vgate", FM::kVGate, false, clean, 0);
  add("vgate+concat", FM::kVGate, true, clean, 0);
  add("avgate", FM::kAVGate, false, clean, 0);
  add("avgate+concat", FM::kAVGate, true, clean, 0);
  for (int s = 0; s < num_seeds; ++s) {
    add("audio", FM::kAudioOnly, false, mstar, s);
    if (s == 0) add("visual", FM::kVisualOnly, false, mstar, s);
    add("concat", FM::kConcat, false, mstar, s);
    add("vgate", FM::kVGate, false, mstar, s);
    add("vgate+concat", FM::kVGate, true, mstar, s);
    add("avgate", FM::kAVGate, false, mstar, s);
    add("avgate+concat", FM::kAVGate, true, mstar, s);
  }
  const std::string audio_clean = cell_dir_name("audio", clean, 0);
  add("pipelined-oracle", FM::kAudioOnly, false, clean, 0, Criterion::kLfmmi, FrontEnd::kOracle, audio_clean);
  add("pipelined-learned-av", FM::kAudioOnly, false, clean, 0, Criterion::kLfmmi, FrontEnd::kLearnedAV, audio_clean);
  add("pipelined-learned-a", FM::kAudioOnly, false, clean, 0, Criterion::kLfmmi, FrontEnd::kLearnedA, audio_clean);
  add("pipelined-oracle", FM::kAudioOnly, false, msep, 0, Criterion::kLfmmi, FrontEnd::kOracle);
  add("pipelined-learned-av", FM::kAudioOnly, false, msep, 0, Criterion::kLfmmi, FrontEnd::kLearnedAV);
  return cells;
}

struct ExperimentOptions {
  fs::path out_dir;
  bool force = false;
  int workers = 1;
  std::ostream *progress = nullptr;
};

struct ExperimentResult {
  fs::path report;
  std::vector<WerRow> rows;
  std::size_t cells_run = 0;
  std::size_t cells_skipped = 0;
};

namespace detail {
inline std::optional<std::string> read_if_exists(const fs::path &p) {
  if (!fs::exists(p)) return std::nullopt;
  return read_file(p);
}

inline std::string cell_descriptor(const GridCell &c) {
  return str_cat("name=", c.name, "\nsystem=", c.system, "\nfront_end=", front_end_name(c.front_end),
                 "\nseed_index=", c.seed_index, "\nreuse=", c.reuse, "\n");
}
}  // namespace detail

/// Runs (or resumes) the grid described by `base.experiment.grid`.
inline ExperimentResult run_experiment(const RunConfig &base_in, const ExperimentOptions &opt) {
  RunConfig base = base_in;
  base.sync_dims();
  base.validate();
  std::ostream *log = opt.progress;
  const fs::path out = opt.out_dir;
  if (opt.force && fs::exists(out)) fs::remove_all(out);
  fs::create_directories(out);
  ExperimentResult res;

  // Corpus, keyed by the corpus section of the config and the root seed.
  const std::string corpus_key =
      str_cat(encode_config(base).substr(0, encode_config(base).find("[model]")), "grid-independent\n");
  const std::string corpus_hash = hex64(config_hash(corpus_key));
  const fs::path corpus_dir = out / "corpus";
  if (detail::read_if_exists(out / "corpus.hash") != corpus_hash + "\n") {
    if (log) *log << "[experiment] synthesizing corpus" << std::endl;
    build_corpus(base.corpus, base.seed, corpus_dir, true, opt.workers);
    atomic_write(out / "corpus.hash", corpus_hash + "\n");
  }
  const Corpus corpus = Corpus::open(corpus_dir);

  const auto cells = make_grid(base.experiment.grid, base.experiment.num_seeds);

  // Separation front-ends, trained once and shared by the pipelined cells.
  std::map<FrontEnd, Separator> separators;
  std::string sep_hash = "none";
  {
    bool need_av = false, need_a = false;
    for (const auto &c : cells) {
      need_av |= c.front_end == FrontEnd::kLearnedAV;
      need_a |= c.front_end == FrontEnd::kLearnedA;
    }
    const std::string key = str_cat(corpus_hash, encode_config(base).substr(encode_config(base).find("[separation]")));
    sep_hash = hex64(config_hash(key));
    std::string sep_report = "separator\tnum_dev\tmask_mse_untrained\tmask_mse_trained\tsi_snr_mixture\tsi_snr_enhanced\tsi_snr_oracle\n";
    for (auto [fe, use_visual, fname] : {std::tuple{FrontEnd::kLearnedAV, true, "separator_av.ckpt"},
                                         std::tuple{FrontEnd::kLearnedA, false, "separator_a.ckpt"}}) {
      if (!(use_visual ? need_av : need_a)) continue;
      const fs::path ck = out / fname;
      const fs::path hk = out / (std::string(fname) + ".hash");
      const fs::path rk = out / (std::string(fname) + ".tsv");
      if (detail::read_if_exists(hk) == sep_hash + "\n" && fs::exists(ck) && fs::exists(rk)) {
        separators.emplace(fe, load_separator(ck));
        sep_report += read_file(rk);
        continue;
      }
      if (log) *log << "[experiment] training separator " << front_end_name(fe) << std::endl;
      Separator s = make_separator(base, use_visual, derive_seed(base.seed, use_visual ? 0x5E9A : 0x5E9B));
      SeparatorReport rep = train_separator(s, corpus, derive_seed(base.seed, use_visual ? 0x5E9C : 0x5E9D), opt.workers);
      save_separator(ck, s);
      const std::string line = str_cat(front_end_name(fe), '\t', rep.num_dev, '\t', detail::fmt_g(rep.mse_untrained), '\t',
                                       detail::fmt_g(rep.mse_trained), '\t', format_wer(rep.si_snr_mixture), '\t',
                                       format_wer(rep.si_snr_enhanced), '\t', format_wer(rep.si_snr_oracle), '\n');
      atomic_write(rk, line);
      atomic_write(hk, sep_hash + "\n");
      sep_report += line;
      separators.emplace(fe, std::move(s));
    }
    if (need_av || need_a) atomic_write(out / "separation.tsv", sep_report);
  }

  auto front_end_fn = [&](FrontEnd fe) -> std::function<Waveform(const ManifestRecord &)> {
    if (fe == FrontEnd::kNone) return {};
    return [&, fe](const ManifestRecord &r) {
      if (fe == FrontEnd::kOracle) return enhance_record(corpus, r, MaskSource::kOracle, nullptr);
      // Each call gets its own copy of the (small) mask network.
      Separator s = separators.at(fe);
      return enhance_record(corpus, r, MaskSource::kLearned, &s);
    };
  };

  std::vector<SnrDb> test_filter = base.corpus.test_snrs;
  if (std::find(test_filter.begin(), test_filter.end(), SnrDb{}) == test_filter.end()) test_filter.push_back(std::nullopt);

  std::string report = std::string(kWerHeader) + "\n";
  for (const auto &cell : cells) {
    const fs::path dir = out / "cells" / cell.name;
    RunConfig cfg = base;
    cfg.arch = cell.arch;
    cfg.train.criterion = cell.criterion;
    cfg.train.data = cell.data;
    cfg.experiment = {};  // cells are shared between grids
    const std::string canonical = encode_config(cfg);
    std::string hash_key = str_cat(corpus_hash, '\n', canonical, detail::cell_descriptor(cell));
    if (cell.front_end == FrontEnd::kLearnedAV || cell.front_end == FrontEnd::kLearnedA) hash_key += sep_hash;
    if (!cell.reuse.empty()) {
      const auto dep = detail::read_if_exists(out / "cells" / cell.reuse / "hash");
      if (!dep) fail("experiment: cell ", cell.name, " depends on ", cell.reuse, ", which has not been run");
      hash_key += *dep;
    }
    const std::string hash = hex64(config_hash(hash_key));
    const fs::path rows_path = dir / "rows.tsv";
    if (detail::read_if_exists(dir / "hash") == hash + "\n" && fs::exists(rows_path)) {
      report += read_file(rows_path);
      ++res.cells_skipped;
      if (log) *log << "[experiment] " << cell.system << " / " << data_condition_name(cell.data) << ": up to date"
                    << std::endl;
      continue;
    }
    if (log) *log << "[experiment] " << cell.system << " / " << data_condition_name(cell.data) << std::endl;
    fs::create_directories(dir);
    Recognizer rec;
    if (!cell.reuse.empty()) {
      rec = load_recognizer(out / "cells" / cell.reuse / "best.ckpt");
    } else {
      atomic_write(dir / "config.ini", canonical);
      const std::uint64_t seed = derive_seed(base.seed, 0x1000 + static_cast<std::uint64_t>(cell.seed_index));
      rec = make_recognizer(cfg, corpus.lm(), derive_seed(seed, 1));
      const bool overlapped = cell.data != DataCondition::kClean;
      auto fe_train = cell.data == DataCondition::kMultSeparated ? front_end_fn(cell.front_end)
                                                                  : std::function<Waveform(const ManifestRecord &)>{};
      std::vector<Example> train = load_examples(corpus, corpus.select("train", true, false), cfg.fbank, opt.workers);
      std::vector<Example> dev = load_examples(corpus, corpus.select("dev", true, false), cfg.fbank, opt.workers);
      if (overlapped) {
        auto extra = load_examples(corpus, corpus.select("train", false, true), cfg.fbank, opt.workers, fe_train);
        auto extra_dev = load_examples(corpus, corpus.select("dev", false, true), cfg.fbank, opt.workers, fe_train);
        train.insert(train.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
        dev.insert(dev.end(), std::make_move_iterator(extra_dev.begin()), std::make_move_iterator(extra_dev.end()));
      }
      train_recognizer(rec, train, dev, dir, derive_seed(seed, 2), opt.workers);
      ++res.cells_run;
    }
    auto test = load_examples(corpus, corpus.select("test", true, true, test_filter), base.fbank, opt.workers,
                              front_end_fn(cell.front_end));
    auto hyps = decode_examples(rec, test, opt.workers);
    auto rows = aggregate_wer(utt_scores(hyps), cell.system, cell.arch.label(), data_condition_name(cell.data));
    const std::string text = encode_wer_rows(rows, false);
    atomic_write(rows_path, text);
    atomic_write(dir / "hash", hash + "\n");
    report += text;
  }
  res.report = out / "report.tsv";
  atomic_write(res.report, report);
  res.rows = decode_wer_rows(report);
  atomic_write(out / "report.txt", format_wer_table(res.rows));
  return res;
}

}  // namespace avsr
