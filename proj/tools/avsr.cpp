// tools/avsr.cpp

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

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "avsr/experiment.hpp"
#include "avsr/gradcheck.hpp"

namespace {

using namespace avsr;

// Exit codes.
constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

void add_common(CLI::App *app, Common &c) {
  app->add_option("--config", c.config, "INI config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "root random seed (overrides run.seed)");
  app->add_flag("--force", c.force, "overwrite existing outputs");
}

RunConfig load_run_config(const Common &c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  cfg.sync_dims();
  cfg.validate();
  return cfg;
}

/// Creates `dir`, refusing to reuse a non-empty one unless forced.
void prepare_out_dir(const fs::path &dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) fail("output directory ", dir.string(), " already exists (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

std::string join_symbols(const SymbolTable &table, const std::vector<int> &seq) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) out += (i ? " " : "") + table.names.at(seq[i]);
  return out;
}

/// Transcript files: "<id>\t<sym> <sym> ..." per line.
std::vector<std::pair<std::string, std::vector<std::string>>> read_transcripts(const fs::path &path) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::istringstream is(read_file(path));
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(path.string(), ":", lineno, ": expected '<id><TAB><symbols>'");
    std::vector<std::string> toks;
    std::istringstream ts(line.substr(tab + 1));
    for (std::string t; ts >> t;) toks.push_back(t);
    out.emplace_back(line.substr(0, tab), std::move(toks));
  }
  return out;
}

std::function<Waveform(const ManifestRecord &)> front_end(const Corpus &corpus, const std::string &kind,
                                                         const std::optional<Separator> &sep) {
  if (kind == "none") return {};
  if (kind == "oracle")
    return [&corpus](const ManifestRecord &r) { return enhance_record(corpus, r, MaskSource::kOracle, nullptr); };
  if (!sep) fail("a learned front-end needs --separator CKPT");
  return [&corpus, &sep](const ManifestRecord &r) {
    Separator s = *sep;
    return enhance_record(corpus, r, MaskSource::kLearned, &s);
  };
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common &c, const std::string &out) {
  RunConfig cfg = load_run_config(c);
  CorpusSummary s = build_corpus(cfg.corpus, cfg.seed, out, c.force, num_workers());
  std::cout << "wrote " << s.num_utterances << " utterances and " << s.num_mixtures << " mixtures; manifest "
            << s.manifest.string() << "\n";
  return kOk;
}

int cmd_mix(const Common &c, const std::string &target, const std::string &interferer, const std::string &visual,
            const std::string &snr_list, const std::string &out) {
  const auto snrs = parse_snr_list(snr_list);
  if (snrs.empty()) fail("--snr: empty SNR list");
  prepare_out_dir(out, c.force);
  const Waveform t = read_wav(target), i = read_wav(interferer);
  std::cout << "snr\tgain\tmeasured_snr\tsamples\tfile\n";
  for (const auto &snr : snrs) {
    MixResult m = mix_at_snr(t, i, snr);
    const std::string base = "mix_" + format_snr(snr);
    write_wav(fs::path(out) / (base + ".wav"), m.mixed);
    if (!visual.empty()) fs::copy_file(visual, fs::path(out) / (base + ".avsv"), fs::copy_options::overwrite_existing);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", m.gain);
    std::cout << format_snr(snr) << '\t' << buf << '\t'
              << (snr ? str_cat(measured_snr_db(Waveform(t.begin(), t.begin() + m.mixed.size()), m.scaled_interferer))
                      : std::string("clean"))
              << '\t' << m.mixed.size() << '\t' << base << ".wav\n";
  }
  return kOk;
}

int cmd_features(const Common &c, const std::vector<std::string> &inputs, const std::string &out, int frames) {
  RunConfig cfg = load_run_config(c);
  fs::create_directories(out);
  for (const auto &in : inputs) {
    const fs::path p(in);
    const bool is_visual = p.extension() == ".avsv";
    const fs::path dst = fs::path(out) / (p.stem().string() + (is_visual ? ".visual.avsf" : ".avsf"));
    if (fs::exists(dst) && !c.force) fail("output ", dst.string(), " already exists (use --force to overwrite)");
    MatF m;
    if (p.extension() == ".wav") {
      m = logmel(read_wav(p), cfg.fbank);
    } else if (is_visual) {
      const MatF v = read_raw_matrix(p, magic::kVisual);
      m = upsample_visual(v, frames > 0 ? frames : static_cast<int>(v.rows()) * 4);
    } else {
      fail(in, ": expected a .wav or .avsv input");
    }
    write_raw_matrix(dst, magic::kFeature, m);
    std::cout << dst.string() << '\t' << m.rows() << 'x' << m.cols() << '\n';
  }
  return kOk;
}

struct TrainArgs {
  std::string corpus, out, fusion, criterion, data, front, separator;
  bool plus_concat = false;
  int epochs = 0;
};

int cmd_train(const Common &c, const TrainArgs &a) {
  RunConfig cfg = load_run_config(c);
  if (!a.fusion.empty()) cfg.arch.mode = parse_fusion(a.fusion);
  if (a.plus_concat) cfg.arch.plus_concat = true;
  if (!a.criterion.empty()) cfg.train.criterion = parse_criterion(a.criterion);
  if (!a.data.empty()) cfg.train.data = parse_data_condition(a.data);
  if (a.epochs > 0) cfg.train.epochs = a.epochs;
  cfg.validate();
  const Corpus corpus = Corpus::open(a.corpus);
  if (corpus.lm().size() != cfg.corpus.num_symbols)
    fail("corpus has ", corpus.lm().size(), " symbols but the config expects ", cfg.corpus.num_symbols);
  prepare_out_dir(a.out, c.force);
  const int workers = num_workers();
  std::optional<Separator> sep;
  if (!a.separator.empty()) sep = load_separator(a.separator);
  const std::string fe_kind = a.front.empty() ? (sep ? "learned" : cfg.separation.mask) : a.front;
  auto fe = cfg.train.data == DataCondition::kMultSeparated ? front_end(corpus, fe_kind, sep)
                                                            : std::function<Waveform(const ManifestRecord &)>{};
  auto train = load_examples(corpus, corpus.select("train", true, false), cfg.fbank, workers);
  auto dev = load_examples(corpus, corpus.select("dev", true, false), cfg.fbank, workers);
  if (cfg.train.data != DataCondition::kClean) {
    auto xt = load_examples(corpus, corpus.select("train", false, true), cfg.fbank, workers, fe);
    auto xd = load_examples(corpus, corpus.select("dev", false, true), cfg.fbank, workers, fe);
    train.insert(train.end(), xt.begin(), xt.end());
    dev.insert(dev.end(), xd.begin(), xd.end());
  }
  atomic_write(fs::path(a.out) / "config.ini", encode_config(cfg));
  Recognizer r = make_recognizer(cfg, corpus.lm(), derive_seed(cfg.seed, 1));
  TrainResult res = train_recognizer(r, train, dev, a.out, derive_seed(cfg.seed, 2), workers, &std::cerr);
  std::cout << "best epoch " << res.best_epoch << ", dev WER " << format_wer(res.best_dev_wer) << "; checkpoint "
            << res.best_checkpoint.string() << '\n';
  return kOk;
}

struct DecodeArgs {
  std::string checkpoint, corpus, split = "test", snr, out, dump_gates, front = "none", separator, system;
};

int cmd_decode(const Common &c, const DecodeArgs &a) {
  Recognizer r = load_recognizer(a.checkpoint);
  const Corpus corpus = Corpus::open(a.corpus);
  if (corpus.lm().size() != r.config.dims.num_pdfs)
    fail("checkpoint expects ", r.config.dims.num_pdfs, " symbols but the corpus has ", corpus.lm().size());
  if (!a.dump_gates.empty() && !is_gated(r.config.arch.mode))
    fail("--dump-gates: the ", r.config.arch.label(), " system has no gates");
  std::optional<std::vector<SnrDb>> filter;
  if (!a.snr.empty()) filter = parse_snr_list(a.snr);
  const auto recs = corpus.select(a.split, true, true, filter);
  if (recs.empty()) {
    std::cerr << "no records in split '" << a.split << "' match the SNR filter\n";
    if (!a.out.empty()) {
      prepare_out_dir(a.out, c.force);
      atomic_write(fs::path(a.out) / "wer.tsv", encode_wer_rows({}));
    }
    std::cout << format_wer_table({});
    return kOk;
  }
  std::optional<Separator> sep;
  if (!a.separator.empty()) sep = load_separator(a.separator);
  const int workers = num_workers();
  auto examples = load_examples(corpus, recs, r.config.fbank, workers, front_end(corpus, a.front, sep));
  auto hyps = decode_examples(r, examples, workers, !a.dump_gates.empty());
  const std::string system = a.system.empty() ? r.config.arch.label() : a.system;
  auto rows =
      aggregate_wer(utt_scores(hyps), system, r.config.arch.label(), data_condition_name(r.config.train.data));
  if (!a.out.empty()) {
    prepare_out_dir(a.out, c.force);
    std::string hyp, ref;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
      hyp += hyps[i].id + '\t' + join_symbols(corpus.symbols(), hyps[i].symbols) + '\n';
      ref += hyps[i].id + '\t' + join_symbols(corpus.symbols(), examples[i].transcript) + '\n';
    }
    atomic_write(fs::path(a.out) / "hyp.txt", hyp);
    atomic_write(fs::path(a.out) / "ref.txt", ref);
    atomic_write(fs::path(a.out) / "wer.tsv", encode_wer_rows(rows));
  }
  if (!a.dump_gates.empty()) {
    fs::create_directories(a.dump_gates);
    for (const auto &h : hyps)
      write_raw_matrix(fs::path(a.dump_gates) / (h.id + ".avsg"), magic::kGate, h.gates->g);
  }
  std::cout << format_wer_table(rows);
  return kOk;
}

int cmd_score(const Common &, const std::string &ref_path, const std::string &hyp_path, const std::string &corpus_dir,
              const std::string &system, const std::string &out) {
  const auto refs = read_transcripts(ref_path);
  const auto hyps = read_transcripts(hyp_path);
  std::map<std::string, const std::vector<std::string> *> hyp_by_id;
  for (const auto &[id, toks] : hyps) hyp_by_id[id] = &toks;
  std::optional<Corpus> corpus;
  if (!corpus_dir.empty()) corpus = Corpus::open(corpus_dir);
  std::vector<UttScore> utts;
  for (const auto &[id, toks] : refs) {
    auto it = hyp_by_id.find(id);
    if (it == hyp_by_id.end()) fail(hyp_path, ": no hypothesis for utterance '", id, "'");
    if (toks.empty()) fail(ref_path, ": utterance '", id, "' has an empty reference");
    SnrDb snr;
    if (corpus) {
      const ManifestRecord &r = corpus->find(id);
      if (r.type == RecordType::kMix) snr = r.snr_db;
    }
    utts.push_back({id, snr, score_wer(toks, *it->second)});
  }
  if (refs.size() != hyps.size())
    fail(hyp_path, " has ", hyps.size(), " utterances but ", ref_path, " has ", refs.size());
  const auto rows = aggregate_wer(utts, system, "-", "-");
  if (!out.empty()) atomic_write(out, encode_wer_rows(rows));
  std::cout << encode_wer_rows(rows);
  return kOk;
}

struct SeparateArgs {
  std::string corpus, out, checkpoint, split = "test";
  std::vector<std::string> records;
  bool train = false, audio_only = false, oracle = false;
};

int cmd_separate(const Common &c, const SeparateArgs &a) {
  RunConfig cfg = load_run_config(c);
  const Corpus corpus = Corpus::open(a.corpus);
  const int workers = num_workers();
  if (a.train) {
    if (fs::exists(a.out) && !c.force) fail("output ", a.out, " already exists (use --force to overwrite)");
    Separator s = make_separator(cfg, !a.audio_only, derive_seed(cfg.seed, a.audio_only ? 0x5E9B : 0x5E9A));
    SeparatorReport rep = train_separator(s, corpus, derive_seed(cfg.seed, a.audio_only ? 0x5E9D : 0x5E9C), workers);
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    save_separator(a.out, s);
    std::cout << "dev mixtures\t" << rep.num_dev << "\nmask_mse_untrained\t" << detail::fmt_g(rep.mse_untrained)
              << "\nmask_mse_trained\t" << detail::fmt_g(rep.mse_trained) << "\nsi_snr_mixture\t"
              << format_wer(rep.si_snr_mixture) << "\nsi_snr_enhanced\t" << format_wer(rep.si_snr_enhanced)
              << "\nsi_snr_oracle\t" << format_wer(rep.si_snr_oracle) << '\n';
    return kOk;
  }
  if (a.oracle == !a.checkpoint.empty()) fail("separate: give exactly one of --oracle or --checkpoint CKPT");
  std::optional<Separator> sep;
  if (!a.checkpoint.empty()) sep = load_separator(a.checkpoint);
  std::vector<const ManifestRecord *> recs;
  if (a.records.empty()) {
    recs = corpus.select(a.split, false, true);
  } else {
    for (const auto &id : a.records) recs.push_back(&corpus.find(id));
  }
  if (recs.empty()) fail("separate: no overlapped mixtures selected");
  prepare_out_dir(a.out, c.force);
  std::vector<std::string> lines(recs.size());
  parallel_for(recs.size(), workers, [&](std::size_t i) {
    const ManifestRecord &r = *recs[i];
    std::optional<Separator> local = sep;
    const MatF mask = record_mask(corpus, r, a.oracle ? MaskSource::kOracle : MaskSource::kLearned,
                                  local ? &*local : nullptr);
    const Waveform mixture = corpus.audio(r);
    const Waveform enhanced = apply_mask(mixture, mask);
    write_wav(fs::path(a.out) / (r.id + ".wav"), enhanced);
    write_raw_matrix(fs::path(a.out) / (r.id + ".avsm"), magic::kMask, mask);
    const Waveform target = corpus.sources(r).first;
    lines[i] = str_cat(r.id, '\t', format_snr(r.type == RecordType::kMix ? r.snr_db : SnrDb{}), '\t',
                       format_wer(si_snr(target, mixture)), '\t', format_wer(si_snr(target, enhanced)), '\n');
  });
  std::string table = "id\tsnr\tsi_snr_mixture\tsi_snr_enhanced\n";
  for (const auto &l : lines) table += l;
  atomic_write(fs::path(a.out) / "si_snr.tsv", table);
  std::cout << table;
  return kOk;
}

int cmd_gradcheck(const Common &c, int instances) {
  const std::uint64_t seed = c.seed.value_or(1);
  bool ok = true;
  std::printf("%-28s %-12s %-9s %s\n", "check", "rel_error", "tolerance", "result");
  for (const auto &r : run_gradcheck_suite(seed, instances)) {
    std::printf("%-28s %-12.3e %-9.0e %s\n", r.name.c_str(), r.error, r.tolerance, r.pass ? "PASS" : "FAIL");
    ok = ok && r.pass;
  }
  std::fflush(stdout);
  return ok ? kOk : kFailed;
}

struct ExperimentArgs {
  std::string grid, out;
  int seeds = 0, epochs = 0;
};

int cmd_experiment(const Common &c, const ExperimentArgs &a) {
  RunConfig cfg = load_run_config(c);
  if (!a.grid.empty()) cfg.experiment.grid = a.grid;
  if (a.seeds > 0) cfg.experiment.num_seeds = a.seeds;
  if (a.epochs > 0) cfg.train.epochs = a.epochs;
  cfg.validate();
  // "--out report.tsv" names the report; its working files go next to it.
  fs::path out(a.out), report_copy;
  if (out.extension() == ".tsv") {
    report_copy = out;
    out = out.parent_path() / (out.stem().string() + ".work");
  }
  ExperimentOptions opt;
  opt.out_dir = out;
  opt.force = c.force;
  opt.workers = num_workers();
  opt.progress = &std::cerr;
  ExperimentResult res = run_experiment(cfg, opt);
  if (!report_copy.empty()) atomic_write(report_copy, read_file(res.report));
  std::cout << read_file(out / "report.txt");
  std::cerr << "cells trained " << res.cells_run << ", up to date " << res.cells_skipped << "; report "
            << (report_copy.empty() ? res.report : report_copy).string() << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Audio-visual speech recognition toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;

  std::string synth_out;
  auto *synth = app.add_subcommand("synth", "synthesize a corpus");
  add_common(synth, common);
  synth->add_option("--out", synth_out, "corpus directory")->required();

  std::string mix_target, mix_interf, mix_visual, mix_snr, mix_out;
  auto *mix = app.add_subcommand("mix", "mix two utterances at a list of SNRs");
  add_common(mix, common);
  mix->add_option("--target", mix_target, "target WAV")->required()->check(CLI::ExistingFile);
  mix->add_option("--interferer", mix_interf, "interfering WAV")->required()->check(CLI::ExistingFile);
  mix->add_option("--visual", mix_visual, "target visual stream (.avsv), copied unchanged")->check(CLI::ExistingFile);
  mix->add_option("--snr", mix_snr, "comma-separated SNRs in dB, or 'clean'")->required();
  mix->add_option("--out", mix_out, "output directory")->required();

  std::vector<std::string> feat_in;
  std::string feat_out;
  int feat_frames = 0;
  auto *features = app.add_subcommand("features", "log-mel features (.wav -> NAME.avsf) or 100 Hz visual frames (.avsv -> NAME.visual.avsf)");
  add_common(features, common);
  features->add_option("inputs", feat_in, "input files")->required()->check(CLI::ExistingFile);
  features->add_option("--out", feat_out, "output directory")->required();
  features->add_option("--frames", feat_frames, "target length for visual upsampling (default 4 x input)");

  TrainArgs ta;
  auto *train = app.add_subcommand("train", "train a recognizer");
  add_common(train, common);
  train->add_option("--corpus", ta.corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", ta.out, "output directory")->required();
  train->add_option("--fusion", ta.fusion, "fusion mode")
      ->check(CLI::IsMember({"audio", "visual", "concat", "vgate", "avgate"}));
  train->add_flag("--plus-concat", ta.plus_concat, "append visual features to the gated output");
  train->add_option("--criterion", ta.criterion, "training criterion")->check(CLI::IsMember({"lfmmi", "ce"}));
  train->add_option("--data", ta.data, "training data condition")->check(CLI::IsMember({"clean", "mult*", "mult"}));
  train->add_option("--front-end", ta.front, "separation front-end for 'mult' data")
      ->check(CLI::IsMember({"oracle", "learned"}));
  train->add_option("--separator", ta.separator, "separator checkpoint")->check(CLI::ExistingFile);
  train->add_option("--epochs", ta.epochs, "override train.epochs")->check(CLI::PositiveNumber);

  DecodeArgs da;
  auto *decode = app.add_subcommand("decode", "decode a corpus split and report WER");
  add_common(decode, common);
  decode->add_option("--checkpoint", da.checkpoint, "recognizer checkpoint")->required()->check(CLI::ExistingFile);
  decode->add_option("--corpus", da.corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  decode->add_option("--split", da.split, "corpus split")->check(CLI::IsMember({"train", "dev", "test"}));
  decode->add_option("--snr", da.snr, "SNR filter, e.g. 10,5,0,-5,clean");
  decode->add_option("--out", da.out, "directory for hyp.txt, ref.txt and wer.tsv");
  decode->add_option("--dump-gates", da.dump_gates, "directory for per-utterance gate activations (.avsg)");
  decode->add_option("--front-end", da.front, "separation front-end")
      ->check(CLI::IsMember({"none", "oracle", "learned"}));
  decode->add_option("--separator", da.separator, "separator checkpoint")->check(CLI::ExistingFile);
  decode->add_option("--system", da.system, "system label for the report");

  std::string sc_ref, sc_hyp, sc_corpus, sc_system = "system", sc_out;
  auto *score = app.add_subcommand("score", "score hypothesis transcripts against references");
  add_common(score, common);
  score->add_option("ref", sc_ref, "reference transcripts")->required()->check(CLI::ExistingFile);
  score->add_option("hyp", sc_hyp, "hypothesis transcripts")->required()->check(CLI::ExistingFile);
  score->add_option("--corpus", sc_corpus, "corpus directory (for per-SNR rows)")->check(CLI::ExistingDirectory);
  score->add_option("--system", sc_system, "system label");
  score->add_option("--out", sc_out, "WER TSV output");

  SeparateArgs sa;
  auto *separate = app.add_subcommand("separate", "train a mask estimator, or enhance mixtures");
  add_common(separate, common);
  separate->add_option("--corpus", sa.corpus, "corpus directory")->required()->check(CLI::ExistingDirectory);
  separate->add_option("--out", sa.out, "checkpoint (with --train) or output directory")->required();
  separate->add_flag("--train", sa.train, "train a separator");
  separate->add_flag("--audio-only", sa.audio_only, "train without the visual input");
  separate->add_flag("--oracle", sa.oracle, "use the oracle ideal ratio mask");
  separate->add_option("--checkpoint", sa.checkpoint, "separator checkpoint")->check(CLI::ExistingFile);
  separate->add_option("--split", sa.split, "split to enhance")->check(CLI::IsMember({"train", "dev", "test"}));
  separate->add_option("--record", sa.records, "record id (repeatable)");

  int gc_instances = 20;
  auto *gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  add_common(gradcheck, common);
  gradcheck->add_option("--instances", gc_instances, "random instances per check")->check(CLI::PositiveNumber);

  ExperimentArgs ea;
  auto *experiment = app.add_subcommand("experiment", "run the comparison grid and write the WER report");
  add_common(experiment, common);
  experiment->add_option("--grid", ea.grid, "grid name")->check(CLI::IsMember({"tables", "baseline", "smoke"}));
  experiment->add_option("--out", ea.out, "output directory, or report path ending in .tsv")->required();
  experiment->add_option("--seeds", ea.seeds, "override experiment.num_seeds")->check(CLI::PositiveNumber);
  experiment->add_option("--epochs", ea.epochs, "override train.epochs")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }
  if (const char *env = std::getenv("AVSR_NUM_WORKERS")) {
    char *end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*env == '\0' || *end != '\0' || n <= 0) {
      std::cerr << "error: AVSR_NUM_WORKERS must be a positive integer, got '" << env << "'\n";
      return kUsage;
    }
  }

  try {
    if (*synth) return cmd_synth(common, synth_out);
    if (*mix) return cmd_mix(common, mix_target, mix_interf, mix_visual, mix_snr, mix_out);
    if (*features) return cmd_features(common, feat_in, feat_out, feat_frames);
    if (*train) return cmd_train(common, ta);
    if (*decode) return cmd_decode(common, da);
    if (*score) return cmd_score(common, sc_ref, sc_hyp, sc_corpus, sc_system, sc_out);
    if (*separate) return cmd_separate(common, sa);
    if (*gradcheck) return cmd_gradcheck(common, gc_instances);
    if (*experiment) return cmd_experiment(common, ea);
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kUsage;
}
