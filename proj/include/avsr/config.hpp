// avsr/config.hpp

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

// Run configuration: one INI file with sections. encode_config() is the
// canonical form (fixed key order, round-trip exact numbers); its hash keys
// resumable experiment cells.

#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdio>
#include <set>

#include "avsr/autodiff.hpp"
#include "avsr/hmm_graph.hpp"
#include "avsr/separation.hpp"
#include "avsr/synthdata.hpp"
#include "avsr/tdnn.hpp"

namespace avsr {

enum class Criterion { kLfmmi, kCe };

inline std::string criterion_name(Criterion c) { return c == Criterion::kLfmmi ? "lfmmi" : "ce"; }
inline Criterion parse_criterion(const std::string &s) {
  if (s == "lfmmi") return Criterion::kLfmmi;
  if (s == "ce") return Criterion::kCe;
  fail("unknown criterion '", s, "' (expected lfmmi or ce)");
}

/// Which training material a recognizer sees.
///   clean:     clean utterances only
///   mult*:     clean utterances + overlapped training mixtures
///   mult:      clean utterances + separated training mixtures (pipelined)
enum class DataCondition { kClean, kMultOverlap, kMultSeparated };

inline std::string data_condition_name(DataCondition d) {
  switch (d) {
    case DataCondition::kClean: return "clean";
    case DataCondition::kMultOverlap: return "mult*";
    case DataCondition::kMultSeparated: return "mult";
  }
  return "?";
}
inline DataCondition parse_data_condition(const std::string &s) {
  if (s == "clean") return DataCondition::kClean;
  if (s == "mult*" || s == "mult_overlap") return DataCondition::kMultOverlap;
  if (s == "mult" || s == "mult_separated") return DataCondition::kMultSeparated;
  fail("unknown data condition '", s, "' (expected clean, mult* or mult)");
}

struct TrainConfig {
  Criterion criterion = Criterion::kLfmmi;
  double lambda_ce = 0.1;
  double leaky = 0.1;
  int num_window = 2;
  double self_loop_prob = 0.75;
  int epochs = 12;
  int minibatch = 8;
  OptimizerConfig optimizer;
  double final_learning_rate = 2e-4;
  int orthonormal_period = 4;
  DataCondition data = DataCondition::kClean;
  double lm_scale = 1.0;
  double prior_scale = 1.0;  // log-prior subtraction at decode time, CE models only
  int visual_pretrain_epochs = 0;  // frame-CE pretraining of the visual front-end
  bool freeze_frontend = false;    // keep the pretrained front-end fixed afterwards
};

struct SeparationConfig {
  MaskNetDims dims;
  MaskTrainConfig train;
  std::string mask = "oracle";  // mask used for separated ("mult") training data: oracle | learned
};

struct ExperimentConfig {
  std::string grid = "tables";
  int num_seeds = 3;
};

struct RunConfig {
  std::uint64_t seed = 1;
  CorpusConfig corpus;
  FbankConfig fbank;
  Architecture arch;
  NetworkDims dims;
  TrainConfig train;
  SeparationConfig separation;
  ExperimentConfig experiment;

  RunConfig() {
    dims.hidden = 48;
    dims.bottleneck = 24;
    separation.dims.hidden = 48;
    separation.dims.bottleneck = 24;
  }

  /// Derives the dimensions that follow from the corpus and features.
  void sync_dims() {
    dims.acoustic_dim = fbank.num_bins;
    dims.visual_dim = corpus.visual_dim;
    dims.num_pdfs = corpus.num_symbols;
    separation.dims.visual_dim = corpus.visual_dim;
    separation.dims.num_bins = StftConfig{}.num_bins();
  }

  void validate() const {
    arch.validate();
    if (dims.hidden <= 0 || dims.bottleneck <= 0) fail("config: model dimensions must be positive");
    if (train.epochs <= 0 || train.minibatch <= 0) fail("config: epochs and minibatch must be positive");
    if (!(train.leaky >= 0.0 && train.leaky < 1.0)) fail("config: leaky must be in [0, 1)");
    if (!(train.lambda_ce >= 0.0)) fail("config: lambda_ce must be >= 0");
    if (train.num_window < 0) fail("config: num_window must be >= 0");
    if (!(train.lm_scale > 0.0)) fail("config: lm_scale must be > 0");
    if (train.visual_pretrain_epochs < 0) fail("config: visual_pretrain_epochs must be >= 0");
    if (separation.mask != "oracle" && separation.mask != "learned")
      fail("config: separation.mask must be oracle or learned");
    if (experiment.num_seeds <= 0) fail("config: experiment.num_seeds must be positive");
  }
};

namespace detail {
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string fmt_ints(const std::vector<int> &v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}
inline std::vector<int> parse_ints(const std::string &s) {
  std::vector<int> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  return out;
}
}  // namespace detail

/// Canonical INI text for a config.
inline std::string encode_config(const RunConfig &c) {
  using detail::fmt_double;
  std::ostringstream os;
  os << "[run]\n"
     << "seed = " << c.seed << "\n\n";
  os << "[corpus]\n"
     << "num_train = " << c.corpus.num_train << "\n"
     << "num_dev = " << c.corpus.num_dev << "\n"
     << "num_test = " << c.corpus.num_test << "\n"
     << "train_snrs = " << format_snr_list(c.corpus.train_snrs) << "\n"
     << "dev_snrs = " << format_snr_list(c.corpus.dev_snrs) << "\n"
     << "test_snrs = " << format_snr_list(c.corpus.test_snrs) << "\n"
     << "mixtures_per_condition = " << c.corpus.mixtures_per_condition << "\n"
     << "min_transcript_len = " << c.corpus.min_transcript_len << "\n"
     << "max_transcript_len = " << c.corpus.max_transcript_len << "\n"
     << "noise_level = " << fmt_double(c.corpus.noise_level) << "\n"
     << "num_symbols = " << c.corpus.num_symbols << "\n"
     << "num_visemes = " << c.corpus.num_visemes << "\n"
     << "visual_dim = " << c.corpus.visual_dim << "\n"
     << "lm_sharpness = " << fmt_double(c.corpus.lm_sharpness) << "\n\n";
  os << "[features]\n"
     << "frame_length = " << c.fbank.frame_length << "\n"
     << "frame_shift = " << c.fbank.frame_shift << "\n"
     << "fft_size = " << c.fbank.fft_size << "\n"
     << "num_bins = " << c.fbank.num_bins << "\n"
     << "low_freq = " << fmt_double(c.fbank.low_freq) << "\n"
     << "high_freq = " << fmt_double(c.fbank.high_freq) << "\n\n";
  os << "[model]\n"
     << "fusion = " << fusion_name(c.arch.mode) << "\n"
     << "plus_concat = " << (c.arch.plus_concat ? "true" : "false") << "\n"
     << "hidden = " << c.dims.hidden << "\n"
     << "bottleneck = " << c.dims.bottleneck << "\n"
     << "frontend_layers = " << c.dims.frontend_layers << "\n"
     << "audio_layers = " << c.dims.audio_layers << "\n"
     << "visual_layers = " << c.dims.visual_layers << "\n"
     << "fusion_layers = " << c.dims.fusion_layers << "\n"
     << "recog_layers = " << c.dims.recog_layers << "\n"
     << "offsets = " << detail::fmt_ints(c.dims.offsets) << "\n"
     << "residual_scale = " << fmt_double(c.dims.residual_scale) << "\n\n";
  const auto &t = c.train;
  os << "[train]\n"
     << "criterion = " << criterion_name(t.criterion) << "\n"
     << "lambda_ce = " << fmt_double(t.lambda_ce) << "\n"
     << "leaky = " << fmt_double(t.leaky) << "\n"
     << "num_window = " << t.num_window << "\n"
     << "self_loop_prob = " << fmt_double(t.self_loop_prob) << "\n"
     << "epochs = " << t.epochs << "\n"
     << "minibatch = " << t.minibatch << "\n"
     << "optimizer = " << optimizer_name(t.optimizer.kind) << "\n"
     << "learning_rate = " << fmt_double(t.optimizer.learning_rate) << "\n"
     << "final_learning_rate = " << fmt_double(t.final_learning_rate) << "\n"
     << "momentum = " << fmt_double(t.optimizer.momentum) << "\n"
     << "l2 = " << fmt_double(t.optimizer.l2) << "\n"
     << "clip = " << fmt_double(t.optimizer.clip) << "\n"
     << "orthonormal_period = " << t.orthonormal_period << "\n"
     << "data = " << data_condition_name(t.data) << "\n"
     << "lm_scale = " << fmt_double(t.lm_scale) << "\n"
     << "prior_scale = " << fmt_double(t.prior_scale) << "\n"
     << "visual_pretrain_epochs = " << t.visual_pretrain_epochs << "\n"
     << "freeze_frontend = " << (t.freeze_frontend ? "true" : "false") << "\n\n";
  const auto &s = c.separation;
  os << "[separation]\n"
     << "hidden = " << s.dims.hidden << "\n"
     << "bottleneck = " << s.dims.bottleneck << "\n"
     << "layers = " << s.dims.layers << "\n"
     << "epochs = " << s.train.epochs << "\n"
     << "minibatch = " << s.train.minibatch << "\n"
     << "learning_rate = " << fmt_double(s.train.optimizer.learning_rate) << "\n"
     << "mask = " << s.mask << "\n\n";
  os << "[experiment]\n"
     << "grid = " << c.experiment.grid << "\n"
     << "num_seeds = " << c.experiment.num_seeds << "\n";
  return os.str();
}

/// Parses INI text on top of the defaults. Unknown sections or keys are errors.
inline RunConfig decode_config(const std::string &text, const std::string &name = "config") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error &e) {
    fail(name, ": ", e.message(), " at line ", e.line());
  }
  RunConfig c;
  std::set<std::string> used;
  auto get = [&](const std::string &key) -> std::optional<std::string> {
    auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    used.insert(key);
    return *v;
  };
  auto num = [&](const std::string &key, auto &dst) {
    auto v = get(key);
    if (!v) return;
    using D = std::decay_t<decltype(dst)>;
    try {
      std::size_t pos = 0;
      if constexpr (std::is_same_v<D, double>) dst = std::stod(*v, &pos);
      else if constexpr (std::is_same_v<D, std::uint64_t>) dst = std::stoull(*v, &pos);
      else dst = static_cast<D>(std::stol(*v, &pos));
      if (pos != v->size()) throw std::invalid_argument(*v);
    } catch (const std::exception &) {
      fail(name, ": bad value '", *v, "' for ", key);
    }
  };
  auto boolean = [&](const std::string &key, bool &dst) {
    auto v = get(key);
    if (!v) return;
    if (*v == "true" || *v == "1") dst = true;
    else if (*v == "false" || *v == "0") dst = false;
    else fail(name, ": bad boolean '", *v, "' for ", key);
  };
  auto str = [&](const std::string &key, auto &&apply) {
    if (auto v = get(key)) apply(*v);
  };

  num("run.seed", c.seed);
  num("corpus.num_train", c.corpus.num_train);
  num("corpus.num_dev", c.corpus.num_dev);
  num("corpus.num_test", c.corpus.num_test);
  str("corpus.train_snrs", [&](const std::string &v) { c.corpus.train_snrs = parse_snr_list(v); });
  str("corpus.dev_snrs", [&](const std::string &v) { c.corpus.dev_snrs = parse_snr_list(v); });
  str("corpus.test_snrs", [&](const std::string &v) { c.corpus.test_snrs = parse_snr_list(v); });
  num("corpus.mixtures_per_condition", c.corpus.mixtures_per_condition);
  num("corpus.min_transcript_len", c.corpus.min_transcript_len);
  num("corpus.max_transcript_len", c.corpus.max_transcript_len);
  num("corpus.noise_level", c.corpus.noise_level);
  num("corpus.num_symbols", c.corpus.num_symbols);
  num("corpus.num_visemes", c.corpus.num_visemes);
  num("corpus.visual_dim", c.corpus.visual_dim);
  num("corpus.lm_sharpness", c.corpus.lm_sharpness);
  num("features.frame_length", c.fbank.frame_length);
  num("features.frame_shift", c.fbank.frame_shift);
  num("features.fft_size", c.fbank.fft_size);
  num("features.num_bins", c.fbank.num_bins);
  num("features.low_freq", c.fbank.low_freq);
  num("features.high_freq", c.fbank.high_freq);
  str("model.fusion", [&](const std::string &v) { c.arch.mode = parse_fusion(v); });
  boolean("model.plus_concat", c.arch.plus_concat);
  num("model.hidden", c.dims.hidden);
  num("model.bottleneck", c.dims.bottleneck);
  num("model.frontend_layers", c.dims.frontend_layers);
  num("model.audio_layers", c.dims.audio_layers);
  num("model.visual_layers", c.dims.visual_layers);
  num("model.fusion_layers", c.dims.fusion_layers);
  num("model.recog_layers", c.dims.recog_layers);
  str("model.offsets", [&](const std::string &v) { c.dims.offsets = detail::parse_ints(v); });
  num("model.residual_scale", c.dims.residual_scale);
  auto &t = c.train;
  str("train.criterion", [&](const std::string &v) { t.criterion = parse_criterion(v); });
  num("train.lambda_ce", t.lambda_ce);
  num("train.leaky", t.leaky);
  num("train.num_window", t.num_window);
  num("train.self_loop_prob", t.self_loop_prob);
  num("train.epochs", t.epochs);
  num("train.minibatch", t.minibatch);
  str("train.optimizer", [&](const std::string &v) { t.optimizer.kind = parse_optimizer(v); });
  num("train.learning_rate", t.optimizer.learning_rate);
  num("train.final_learning_rate", t.final_learning_rate);
  num("train.momentum", t.optimizer.momentum);
  num("train.l2", t.optimizer.l2);
  num("train.clip", t.optimizer.clip);
  num("train.orthonormal_period", t.orthonormal_period);
  str("train.data", [&](const std::string &v) { t.data = parse_data_condition(v); });
  num("train.lm_scale", t.lm_scale);
  num("train.prior_scale", t.prior_scale);
  num("train.visual_pretrain_epochs", t.visual_pretrain_epochs);
  boolean("train.freeze_frontend", t.freeze_frontend);
  auto &s = c.separation;
  num("separation.hidden", s.dims.hidden);
  num("separation.bottleneck", s.dims.bottleneck);
  num("separation.layers", s.dims.layers);
  num("separation.epochs", s.train.epochs);
  num("separation.minibatch", s.train.minibatch);
  num("separation.learning_rate", s.train.optimizer.learning_rate);
  str("separation.mask", [&](const std::string &v) { s.mask = v; });
  str("experiment.grid", [&](const std::string &v) { c.experiment.grid = v; });
  num("experiment.num_seeds", c.experiment.num_seeds);

  for (const auto &[section, body] : tree) {
    if (body.empty() && !body.data().empty()) fail(name, ": key '", section, "' outside a section");
    for (const auto &[key, value] : body) {
      const std::string full = section + "." + key;
      if (!used.count(full)) fail(name, ": unknown key '", full, "'");
    }
  }
  c.sync_dims();
  c.validate();
  return c;
}

inline RunConfig load_config(const fs::path &path) { return decode_config(read_file(path), path.string()); }

/// FNV-1a over the canonical config text.
inline std::uint64_t config_hash(const std::string &canonical) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace avsr
