// avsr/trainer.hpp

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

// Corpus access, recognizer training (LF-MMI or frame CE) and evaluation.
//
// Every minibatch member is evaluated on its own replica of the network, and
// the replicas' gradients are summed in minibatch order, so results do not
// depend on the number of workers.

#pragma once

#include <chrono>
#include <fstream>
#include <map>

#include "avsr/checkpoint.hpp"
#include "avsr/config.hpp"
#include "avsr/decoder.hpp"
#include "avsr/fusion.hpp"
#include "avsr/lfmmi.hpp"

namespace avsr {

// ---------------------------------------------------------------------------
// Corpus access

class Corpus {
 public:
  static Corpus open(const fs::path &root) {
    Corpus c;
    c.root_ = root;
    const fs::path manifest = root / kManifestName;
    if (!fs::exists(manifest)) fail("corpus: no manifest at ", manifest.string());
    c.records_ = decode_manifest(read_file(manifest));
    c.lm_ = Bigram::from_text(read_file(root / kLmName));
    c.symbols_ = decode_symbol_table(read_file(root / kSymbolsName));
    if (c.lm_.size() != c.symbols_.size())
      fail("corpus: LM has ", c.lm_.size(), " symbols but the symbol table has ", c.symbols_.size());
    for (std::size_t i = 0; i < c.records_.size(); ++i) c.by_id_[c.records_[i].id] = i;
    return c;
  }

  const fs::path &root() const { return root_; }
  const Bigram &lm() const { return lm_; }
  const SymbolTable &symbols() const { return symbols_; }
  const std::vector<ManifestRecord> &records() const { return records_; }

  const ManifestRecord &find(const std::string &id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) fail("corpus: no record with id '", id, "'");
    return records_[it->second];
  }

  /// Clean utterances and/or overlapped mixtures of one split. An SNR filter
  /// keeps only mixtures whose SNR is listed (clean utterances pass when the
  /// filter lists "clean").
  std::vector<const ManifestRecord *> select(const std::string &split, bool clean, bool overlapped,
                                             const std::optional<std::vector<SnrDb>> &snr_filter = {}) const {
    std::vector<const ManifestRecord *> out;
    auto keep = [&](const SnrDb &snr) {
      if (!snr_filter) return true;
      return std::find(snr_filter->begin(), snr_filter->end(), snr) != snr_filter->end();
    };
    for (const auto &r : records_) {
      if (r.split != split) continue;
      if (r.type == RecordType::kUtt && clean && keep(std::nullopt)) out.push_back(&r);
      if (r.type == RecordType::kMix && r.snr_db && overlapped && keep(r.snr_db)) out.push_back(&r);
    }
    return out;
  }

  std::vector<int> transcript(const ManifestRecord &r) const {
    std::vector<int> out;
    for (const auto &s : r.transcript) out.push_back(symbols_.index_of(s));
    return out;
  }

  Waveform audio(const ManifestRecord &r) const { return read_wav(root_ / r.audio_path); }
  MatF visual(const ManifestRecord &r) const { return read_raw_matrix(root_ / r.visual_path, magic::kVisual); }
  std::vector<int> alignment(const ManifestRecord &r) const { return read_alignment(root_ / r.alignment_path); }

  /// Target and gain-scaled interferer of a record, truncated to the
  /// mixture length (the interferer is silent for clean records).
  std::pair<Waveform, Waveform> sources(const ManifestRecord &r) const {
    if (r.type == RecordType::kUtt || !r.snr_db) {
      const Waveform t = read_wav(root_ / (r.type == RecordType::kUtt ? r.audio_path : find(r.target_id).audio_path));
      return {t, Waveform(t.size(), 0.0f)};
    }
    const Waveform t = read_wav(root_ / find(r.target_id).audio_path);
    const Waveform i = read_wav(root_ / find(r.interferer_id).audio_path);
    MixResult m = mix_at_snr(t, i, r.snr_db);
    Waveform tt(t.begin(), t.begin() + static_cast<long>(m.mixed.size()));
    return {tt, m.scaled_interferer};
  }

 private:
  fs::path root_;
  std::vector<ManifestRecord> records_;
  std::map<std::string, std::size_t> by_id_;
  Bigram lm_;
  SymbolTable symbols_;
};

/// One recognizer input: 100 Hz acoustic and visual frames plus supervision.
struct Example {
  std::string id;
  SnrDb snr;
  MatF feats;
  MatF visual;
  std::vector<int> labels;
  std::vector<int> transcript;
};

/// Loads a record, optionally replacing its audio (e.g. by a separated signal).
inline Example load_example(const Corpus &corpus, const ManifestRecord &r, const FbankConfig &fbank,
                            const Waveform *audio_override = nullptr) {
  Example ex;
  ex.id = r.id;
  ex.snr = r.type == RecordType::kMix ? r.snr_db : std::nullopt;
  const Waveform audio = audio_override ? *audio_override : corpus.audio(r);
  ex.feats = logmel(audio, fbank);
  const int frames = static_cast<int>(ex.feats.rows());
  if (frames == 0) fail("record ", r.id, ": audio shorter than one analysis window");
  ex.visual = upsample_visual(corpus.visual(r), frames);
  std::vector<int> ali = corpus.alignment(r);
  const std::size_t labels = std::max<std::size_t>(1, audio.size() / kLabelShift);
  if (ali.size() > labels) ali.resize(labels);
  ex.labels = frame_labels(ali, frames, fbank);
  ex.transcript = corpus.transcript(r);
  return ex;
}

inline std::vector<Example> load_examples(const Corpus &corpus, const std::vector<const ManifestRecord *> &records,
                                          const FbankConfig &fbank, int workers,
                                          const std::function<Waveform(const ManifestRecord &)> &audio_fn = {}) {
  std::vector<Example> out(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    if (audio_fn) {
      Waveform a = audio_fn(*records[i]);
      out[i] = load_example(corpus, *records[i], fbank, &a);
    } else {
      out[i] = load_example(corpus, *records[i], fbank);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Recognizer: network + normalization + decoding graph

struct Recognizer {
  RunConfig config;
  NetworkParams<float> net;
  NormStats acoustic;
  NormStats visual;
  std::vector<double> log_prior;
  Bigram lm;
  HmmGraph graph;

  HmmTopology topology() const { return {config.dims.num_pdfs, config.train.self_loop_prob}; }
  void build_graph() { graph = build_denominator(lm, topology()); }
};

inline Recognizer make_recognizer(const RunConfig &cfg, const Bigram &lm, std::uint64_t seed) {
  Recognizer r;
  r.config = cfg;
  r.config.sync_dims();
  r.config.validate();
  r.net = build_network<float>(r.config.arch, r.config.dims, seed);
  r.lm = lm;
  r.build_graph();
  r.acoustic = NormStats::identity(r.config.dims.acoustic_dim);
  r.visual = NormStats::identity(r.config.dims.visual_dim);
  r.log_prior.assign(r.config.dims.num_pdfs, -std::log(static_cast<double>(r.config.dims.num_pdfs)));
  return r;
}

inline Checkpoint recognizer_checkpoint(const Recognizer &r) {
  Checkpoint c;
  c.kind = "recognizer";
  c.config = encode_config(r.config);
  c.vectors["acoustic_mean"] = r.acoustic.mean;
  c.vectors["acoustic_var"] = r.acoustic.var;
  c.vectors["visual_mean"] = r.visual.mean;
  c.vectors["visual_var"] = r.visual.var;
  c.vectors["log_prior"] = r.log_prior;
  c.vectors["lm_start"] = r.lm.start;
  std::vector<double> flat;
  for (const auto &row : r.lm.trans) flat.insert(flat.end(), row.begin(), row.end());
  c.vectors["lm_trans"] = flat;
  store_tensors(c, const_cast<NetworkParams<float> &>(r.net).parameters());
  return c;
}

inline void save_recognizer(const fs::path &path, const Recognizer &r) { write_checkpoint(path, recognizer_checkpoint(r)); }

inline Recognizer load_recognizer(const fs::path &path) {
  const Checkpoint c = read_checkpoint(path);
  if (c.kind != "recognizer") fail(path.string(), ": checkpoint holds a ", c.kind, ", not a recognizer");
  Recognizer r;
  r.config = decode_config(c.config, path.string() + " (embedded config)");
  r.net = build_network<float>(r.config.arch, r.config.dims, 0);
  load_tensors(c, r.net.parameters());
  r.acoustic = {c.vector("acoustic_mean"), c.vector("acoustic_var")};
  r.visual = {c.vector("visual_mean"), c.vector("visual_var")};
  r.log_prior = c.vector("log_prior");
  r.lm.start = c.vector("lm_start");
  const auto &flat = c.vector("lm_trans");
  const std::size_t n = r.lm.start.size();
  if (flat.size() != n * n) fail(path.string(), ": LM transition block has the wrong size");
  r.lm.trans.assign(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) r.lm.trans[i][j] = flat[i * n + j];
  r.build_graph();
  return r;
}

/// Network inputs after normalization with the recognizer's statistics.
struct NetInput {
  MatF feats;
  MatF visual;
};

inline NetInput prepare_input(const Recognizer &r, const Example &ex) {
  return {normalize(ex.feats, r.acoustic), normalize(ex.visual, r.visual)};
}

/// Frame log-posteriors (T x num_pdfs) and, for gated systems, the gate trace.
inline FusionOutput<float> run_network(NetworkParams<float> &net, const NetInput &in, Tape<float> &tp,
                                       const FusionOptions &opt = {}) {
  return forward(net, tp.constant(in.feats), tp.constant(in.visual), opt);
}

/// Decoding scores: log-posteriors, minus scaled log-priors for CE models.
inline MatD decode_scores(const Recognizer &r, const MatF &log_post) {
  MatD s = log_post.cast<double>();
  if (r.config.train.criterion == Criterion::kCe && r.config.train.prior_scale != 0.0)
    for (Eigen::Index t = 0; t < s.rows(); ++t)
      for (Eigen::Index k = 0; k < s.cols(); ++k) s(t, k) -= r.config.train.prior_scale * r.log_prior[k];
  return s;
}

struct Hypothesis {
  std::string id;
  SnrDb snr;
  std::vector<int> symbols;
  WerReport report;
  std::optional<GateTrace<float>> gates;
};

/// Decodes examples in parallel (results in input order).
inline std::vector<Hypothesis> decode_examples(Recognizer &r, const std::vector<Example> &examples, int workers,
                                               bool keep_gates = false) {
  r.net.zero_grad();  // allocate gradient buffers up front; decoding never writes them
  std::vector<Hypothesis> out(examples.size());
  parallel_for(examples.size(), workers, [&](std::size_t i) {
    const Example &ex = examples[i];
    Tape<float> tp;
    auto fo = run_network(r.net, prepare_input(r, ex), tp);
    DecodeResult d = viterbi(decode_scores(r, fo.log_post.value()), r.graph, r.config.train.lm_scale);
    Hypothesis h;
    h.id = ex.id;
    h.snr = ex.snr;
    h.symbols = d.symbols;
    h.report = score_wer(ex.transcript, d.symbols);
    if (keep_gates) h.gates = fo.trace;
    out[i] = std::move(h);
  });
  return out;
}

inline std::vector<UttScore> utt_scores(const std::vector<Hypothesis> &hyps) {
  std::vector<UttScore> out;
  for (const auto &h : hyps) out.push_back({h.id, h.snr, h.report});
  return out;
}

inline double pooled_wer_percent(const std::vector<Hypothesis> &hyps) {
  WerReport total;
  for (const auto &h : hyps) total += h.report;
  return 100.0 * total.wer();
}

// ---------------------------------------------------------------------------
// Training

struct TrainResult {
  fs::path best_checkpoint;
  fs::path last_checkpoint;
  int best_epoch = 0;
  double best_dev_wer = std::numeric_limits<double>::infinity();
  std::vector<double> epoch_loss;
  std::vector<double> dev_wer;
  double final_loss = 0.0;
  std::string step0_checksum;
};

inline constexpr const char *kTrainLogHeader = "epoch\tstep\tloss\tgrad_norm\tdev_wer";

/// Per-frame label log-priors with add-one smoothing.
inline std::vector<double> label_log_priors(const std::vector<Example> &examples, int num_pdfs) {
  std::vector<double> counts(num_pdfs, 1.0);
  double total = num_pdfs;
  for (const auto &ex : examples)
    for (int l : ex.labels) {
      counts[l] += 1.0;
      total += 1.0;
    }
  for (auto &c : counts) c = std::log(c / total);
  return counts;
}

namespace detail {
inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

/// Objective F of one utterance and dF/d(log-posteriors).
inline std::pair<double, MatD> utterance_objective(const MatD &log_post, const Example &ex, const HmmGraph *num,
                                                   const HmmGraph &den, const TrainConfig &tc) {
  if (tc.criterion == Criterion::kCe) return frame_log_likelihood(log_post, ex.labels);
  LfmmiLoss l = lfmmi_loss(log_post, *num, den, ex.labels, tc.lambda_ce, tc.leaky);
  return {l.objective, std::move(l.grad)};
}

inline double matrix_checksum(const MatF &m) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) s += static_cast<double>(m.data()[i]) * (1.0 + 1e-3 * (i % 97));
  return s;
}
}  // namespace detail

/// One frame-labelled visual sequence for front-end pretraining.
struct VisualFrames {
  const MatF *visual = nullptr;
  const std::vector<int> *labels = nullptr;
};

struct PretrainReport {
  std::vector<double> epoch_loss;
  double accuracy_before = 0.0;  // held-out frame accuracy of the fresh classifier
  double accuracy_after = 0.0;
};

/// Frame-level cross-entropy pretraining of the visual front-end through a
/// temporary linear classifier over `num_pdfs` labels; the classifier is
/// discarded. 0 epochs leaves the front-end untouched.
template <typename T>
PretrainReport pretrain_visual(SubNetwork<T> &frontend, int out_dim, int num_pdfs, const std::vector<VisualFrames> &train,
                               const std::vector<VisualFrames> &held_out, int epochs, const OptimizerConfig &oc,
                               int minibatch, std::uint64_t seed) {
  if (epochs < 0) fail("pretrain_visual: epochs must be >= 0");
  if (frontend.empty()) fail("pretrain_visual: the network has no visual front-end");
  PretrainReport rep;
  if (epochs == 0) return rep;
  if (train.empty()) fail("pretrain_visual: no training data");
  Tensor<T> w("pretrain.weight", {static_cast<std::size_t>(num_pdfs), static_cast<std::size_t>(out_dim)});
  Tensor<T> b("pretrain.bias", {static_cast<std::size_t>(num_pdfs)});
  detail::glorot_uniform(w, derive_seed(seed, 1));
  auto logits = [&](Tape<T> &tp, const MatF &v, bool train_mode) {
    Var<T> h = subnet_forward(frontend, tp.constant(v.cast<T>()), train_mode);
    return ad::log_softmax(ad::affine(h, tp.param(w), tp.param(b)));
  };
  auto accuracy = [&]() {
    double hit = 0.0, total = 0.0;
    for (const auto &f : held_out) {
      Tape<T> tp;
      const Mat<T> lp = logits(tp, *f.visual, false).value();
      for (Eigen::Index t = 0; t < lp.rows(); ++t) {
        Eigen::Index k;
        lp.row(t).maxCoeff(&k);
        hit += k == (*f.labels)[t];
        total += 1.0;
      }
    }
    return total > 0 ? hit / total : 0.0;
  };
  rep.accuracy_before = accuracy();
  std::vector<Tensor<T> *> params;
  for (auto &layer : frontend) layer.collect(params);
  params.push_back(&w);
  params.push_back(&b);
  Optimizer<T> opt(params, oc);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t mb = static_cast<std::size_t>(std::max(1, minibatch));
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Rng rng(derive_seed(seed, 0x9E7Aull + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double obj = 0.0, frames_total = 0.0;
    for (std::size_t s = 0; s < order.size(); s += mb) {
      const std::size_t e = std::min(order.size(), s + mb);
      double frames = 0.0;
      for (std::size_t i = s; i < e; ++i) frames += static_cast<double>(train[order[i]].visual->rows());
      for (auto *p : params) p->zero_grad();
      for (std::size_t i = s; i < e; ++i) {
        const VisualFrames &f = train[order[i]];
        Tape<T> tp;
        Var<T> lp = logits(tp, *f.visual, true);
        auto [ll, g] = frame_log_likelihood(lp.value().template cast<double>(), *f.labels);
        obj += ll;
        tp.backward(ad::external_loss(lp, -ll / frames, Mat<T>((-g / frames).template cast<T>())));
      }
      opt.step();
      frames_total += frames;
    }
    rep.epoch_loss.push_back(-obj / frames_total);
  }
  rep.accuracy_after = accuracy();
  return rep;
}

/// Trains `r` in place on `train`, selects the epoch with the lowest dev WER
/// (earliest on ties) and leaves that model in `r`. Writes train.log,
/// last.ckpt and best.ckpt under out_dir.
inline TrainResult train_recognizer(Recognizer &r, const std::vector<Example> &train, const std::vector<Example> &dev,
                                    const fs::path &out_dir, std::uint64_t seed, int workers,
                                    std::ostream *progress = nullptr) {
  if (train.empty()) fail("train: no training examples");
  const TrainConfig &tc = r.config.train;
  fs::create_directories(out_dir);

  // Global mean/variance normalization from the training material.
  {
    std::vector<const MatF *> a, v;
    for (const auto &ex : train) {
      a.push_back(&ex.feats);
      v.push_back(&ex.visual);
    }
    r.acoustic = NormStats::compute(a);
    r.visual = NormStats::compute(v);
  }
  r.log_prior = label_log_priors(train, r.config.dims.num_pdfs);
  std::vector<NetInput> inputs(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) inputs[i] = prepare_input(r, train[i]);

  const HmmTopology topo = r.topology();
  std::vector<HmmGraph> nums;
  if (tc.criterion == Criterion::kLfmmi) {
    nums.resize(train.size());
    parallel_for(train.size(), workers, [&](std::size_t i) {
      nums[i] = build_numerator(train[i].labels, topo, tc.num_window, &r.lm);
    });
  }

  TrainResult res;
  res.best_checkpoint = out_dir / "best.ckpt";
  res.last_checkpoint = out_dir / "last.ckpt";
  {
    Tape<float> tp;
    r.net.zero_grad();
    auto fo = run_network(r.net, inputs[0], tp);
    res.step0_checksum = detail::fmt_g(detail::matrix_checksum(fo.log_post.value()));
    write_raw_matrix(out_dir / "step0_scores.avsf", magic::kFeature, fo.log_post.value());
  }

  std::string log = std::string(kTrainLogHeader) + "\n";
  auto flush_log = [&] { atomic_write(out_dir / "train.log", log); };

  std::string pretrain_info;
  if (tc.visual_pretrain_epochs > 0 && uses_visual(r.config.arch.mode)) {
    std::vector<NetInput> dev_inputs(dev.size());
    for (std::size_t i = 0; i < dev.size(); ++i) dev_inputs[i] = prepare_input(r, dev[i]);
    std::vector<VisualFrames> tr, ho;
    for (std::size_t i = 0; i < train.size(); ++i) tr.push_back({&inputs[i].visual, &train[i].labels});
    for (std::size_t i = 0; i < dev.size(); ++i) ho.push_back({&dev_inputs[i].visual, &dev[i].labels});
    PretrainReport pr = pretrain_visual(r.net.frontend, r.config.dims.hidden, r.config.dims.num_pdfs, tr, ho,
                                        tc.visual_pretrain_epochs, tc.optimizer, tc.minibatch, derive_seed(seed, 0x9E7));
    pretrain_info = str_cat("visual_pretrain_accuracy_before\t", detail::fmt_g(pr.accuracy_before),
                            "\nvisual_pretrain_accuracy_after\t", detail::fmt_g(pr.accuracy_after), "\n");
    if (progress) *progress << "visual pretraining: held-out frame accuracy " << detail::fmt_g(pr.accuracy_before)
                            << " -> " << detail::fmt_g(pr.accuracy_after) << std::endl;
  }
  const bool frozen = tc.freeze_frontend && !r.net.frontend.empty();
  auto trainable = [&](const Tensor<float> *t) { return !(frozen && t->name.rfind("frontend.", 0) == 0); };

  OptimizerConfig oc = tc.optimizer;
  std::vector<Tensor<float> *> opt_params;
  for (auto *t : r.net.parameters())
    if (trainable(t)) opt_params.push_back(t);
  Optimizer<float> opt(opt_params, oc);
  const std::size_t mb = static_cast<std::size_t>(tc.minibatch);
  std::vector<NetworkParams<float>> replicas(std::min(mb, train.size()), r.net);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  auto params = r.net.parameters();
  std::vector<std::vector<Tensor<float> *>> rparams;
  for (auto &rep : replicas) rparams.push_back(rep.parameters());
  NetworkParams<float> best_net = r.net;
  bool have_best = false;
  long step = 0;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const double frac = tc.epochs > 1 ? static_cast<double>(epoch - 1) / (tc.epochs - 1) : 0.0;
    opt.set_learning_rate(oc.learning_rate * std::pow(tc.final_learning_rate / oc.learning_rate, frac));
    Rng rng(derive_seed(seed, 0xE90C00ull + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double epoch_obj = 0.0, epoch_frames = 0.0, epoch_norm = 0.0;
    long epoch_steps = 0;
    for (std::size_t b = 0; b < order.size(); b += mb) {
      const std::size_t e = std::min(order.size(), b + mb);
      const std::size_t n = e - b;
      double frames = 0.0;
      for (std::size_t i = b; i < e; ++i) frames += static_cast<double>(train[order[i]].feats.rows());
      std::vector<double> obj(n, 0.0);
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t p = 0; p < params.size(); ++p) rparams[k][p]->values = params[p]->values;
        replicas[k].zero_grad();
      }
      parallel_for(n, workers, [&](std::size_t k) {
        const std::size_t u = order[b + k];
        Tape<float> tp;
        auto fo = run_network(replicas[k], inputs[u], tp, {true, std::nullopt});
        const MatD lp = fo.log_post.value().cast<double>();
        auto [f, g] = detail::utterance_objective(lp, train[u], nums.empty() ? nullptr : &nums[u], r.graph, tc);
        obj[k] = f;
        if (!std::isfinite(f)) return;
        Mat<float> grad = (-g / frames).cast<float>();
        tp.backward(ad::external_loss(fo.log_post, -f / frames, std::move(grad)));
      });
      double batch_obj = 0.0;
      for (std::size_t k = 0; k < n; ++k) batch_obj += obj[k];
      ++step;
      if (!std::isfinite(batch_obj))
        fail("training diverged at epoch ", epoch, ", step ", step, " (non-finite loss); last good checkpoint: ",
             fs::exists(res.last_checkpoint) ? res.last_checkpoint.string() : std::string("none"));
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto &dst = params[p]->grad;
        dst.assign(params[p]->values.size(), 0.0f);
        for (std::size_t k = 0; k < n; ++k) {
          const auto &src = rparams[k][p]->grad;
          for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
      }
      double norm;
      try {
        norm = opt.step();
      } catch (const Error &err) {
        fail("training diverged at epoch ", epoch, ", step ", step, " (", err.what(), "); last good checkpoint: ",
             fs::exists(res.last_checkpoint) ? res.last_checkpoint.string() : std::string("none"));
      }
      if (tc.orthonormal_period > 0 && step % tc.orthonormal_period == 0)
        for (auto *f : r.net.constrained_factors())
          if (trainable(f)) semi_orthogonal_step(*f);
      const double loss = -batch_obj / frames;
      log += str_cat(epoch, '\t', step, '\t', detail::fmt_g(loss), '\t', detail::fmt_g(norm), "\t-\n");
      epoch_obj += batch_obj;
      epoch_frames += frames;
      epoch_norm += norm;
      ++epoch_steps;
    }
    const double epoch_loss = -epoch_obj / epoch_frames;
    res.epoch_loss.push_back(epoch_loss);
    double dev_wer = std::numeric_limits<double>::quiet_NaN();
    if (!dev.empty()) dev_wer = pooled_wer_percent(decode_examples(r, dev, workers));
    res.dev_wer.push_back(dev_wer);
    log += str_cat(epoch, '\t', step, '\t', detail::fmt_g(epoch_loss), '\t',
                   detail::fmt_g(epoch_norm / std::max<long>(1, epoch_steps)), '\t',
                   dev.empty() ? std::string("-") : format_wer(dev_wer), '\n');
    save_recognizer(res.last_checkpoint, r);
    const bool better = dev.empty() ? true : dev_wer < res.best_dev_wer;
    if (better || !have_best) {
      res.best_dev_wer = dev.empty() ? res.best_dev_wer : dev_wer;
      res.best_epoch = epoch;
      best_net.copy_values_from(r.net);
      have_best = true;
      save_recognizer(res.best_checkpoint, r);
    }
    flush_log();
    if (progress)
      *progress << "epoch " << epoch << " loss " << detail::fmt_g(epoch_loss) << " dev_wer "
                << (dev.empty() ? std::string("-") : format_wer(dev_wer)) << std::endl;
  }
  res.final_loss = res.epoch_loss.back();
  r.net.copy_values_from(best_net);
  atomic_write(out_dir / "train_info.txt",
               str_cat("criterion\t", criterion_name(tc.criterion), "\nnum_parameters\t", r.net.num_parameters(),
                       "\nstep0_checksum\t", res.step0_checksum, "\nbest_epoch\t", res.best_epoch, "\nbest_dev_wer\t",
                       format_wer(res.best_dev_wer), "\nfinal_loss\t", detail::fmt_g(res.final_loss), "\n",
                       pretrain_info));
  return res;
}

}  // namespace avsr
