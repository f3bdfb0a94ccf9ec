// avsr/synthdata.hpp

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

// Synthetic audio-visual corpus. Each symbol is a short burst of sinusoids;
// its lip stream is the mean vector of the symbol's viseme class plus jitter.
// Several symbols share a viseme class, so the visual stream alone cannot
// tell them apart. Two-speaker mixtures are simulated at a requested SNR.

#pragma once

#include <map>
#include <optional>
#include <set>

#include "avsr/common.hpp"
#include "avsr/features.hpp"
#include "avsr/io.hpp"

namespace avsr {

inline constexpr int kVisualFps = 25;
inline constexpr int kLabelShift = 160;  // samples per 10 ms label

struct SineComponent {
  double freq_hz;
  double amplitude;
};

struct SymbolSet {
  std::vector<std::string> symbols;
  std::vector<int> viseme_map;
  std::vector<std::vector<SineComponent>> audio_signature;
  std::vector<std::vector<float>> viseme_means;  // one vector per viseme class
  int min_duration_ms = 120;
  int max_duration_ms = 280;

  int size() const { return static_cast<int>(symbols.size()); }
  int num_visemes() const { return static_cast<int>(viseme_means.size()); }
  int visual_dim() const { return viseme_means.empty() ? 0 : static_cast<int>(viseme_means.front().size()); }

  int index_of(const std::string &sym) const {
    for (int i = 0; i < size(); ++i)
      if (symbols[i] == sym) return i;
    fail("unknown symbol '", sym, "'");
  }

  void validate() const {
    const int n = size();
    if (n == 0) fail("symbol set is empty");
    if (static_cast<int>(viseme_map.size()) != n || static_cast<int>(audio_signature.size()) != n)
      fail("symbol set: viseme map and audio signatures must cover every symbol");
    std::set<std::string> seen;
    for (int i = 0; i < n; ++i) {
      if (!seen.insert(symbols[i]).second) fail("symbol set: duplicate symbol '", symbols[i], "'");
      if (viseme_map[i] < 0 || viseme_map[i] >= num_visemes())
        fail("symbol set: symbol '", symbols[i], "' maps to unknown viseme class ", viseme_map[i]);
      if (audio_signature[i].empty()) fail("symbol set: symbol '", symbols[i], "' has no sinusoid components");
      for (const auto &c : audio_signature[i])
        if (!(c.freq_hz > 0.0 && c.freq_hz < 8000.0))
          fail("symbol set: symbol '", symbols[i], "' has component at ", c.freq_hz, " Hz outside (0, 8000)");
    }
    std::vector<int> per_class(num_visemes(), 0);
    for (int v : viseme_map) ++per_class[v];
    if (*std::max_element(per_class.begin(), per_class.end()) < 2)
      fail("symbol set: at least two symbols must share a viseme class");
    if (min_duration_ms < 10 || max_duration_ms < min_duration_ms)
      fail("symbol set: bad duration range");
  }

  /// Default inventory: viseme class c owns a frequency band; the symbols of a
  /// class sit at different positions inside that band.
  static SymbolSet make_default(int num_symbols = 12, int num_visemes = 6, int visual_dim = 8,
                                std::uint64_t seed = 17) {
    if (num_symbols < 2 || num_visemes < 1 || num_visemes >= num_symbols)
      fail("default symbol set needs 2+ symbols and fewer viseme classes than symbols");
    SymbolSet s;
    const int per_class = (num_symbols + num_visemes - 1) / num_visemes;
    for (int i = 0; i < num_symbols; ++i) {
      s.symbols.push_back(num_symbols <= 26 ? std::string(1, static_cast<char>('a' + i)) : str_cat("s", i));
      const int cls = i % num_visemes;
      const int slot = i / num_visemes;
      s.viseme_map.push_back(cls);
      const double base = 350.0 * std::pow(1.55, cls);
      const double f = base * (1.0 + 0.3 * slot / std::max(1, per_class - 1) - 0.15);
      std::vector<SineComponent> comps{{f, 0.2}};
      if (2.3 * f < 7800.0) comps.push_back({2.3 * f, 0.1});
      s.audio_signature.push_back(std::move(comps));
    }
    Rng rng(derive_seed(seed, 0x51u));
    for (int c = 0; c < num_visemes; ++c) {
      std::vector<float> mean(visual_dim);
      for (auto &m : mean) m = static_cast<float>(gaussian(rng) * 0.7);
      s.viseme_means.push_back(std::move(mean));
    }
    s.validate();
    return s;
  }
};

/// Symbol bigram with a sentence-start distribution.
struct Bigram {
  std::vector<double> start;
  std::vector<std::vector<double>> trans;

  int size() const { return static_cast<int>(start.size()); }

  void validate(double tol = 1e-6) const {
    const int n = size();
    if (n == 0) fail("bigram is empty");
    if (static_cast<int>(trans.size()) != n) fail("bigram: transition matrix has ", trans.size(), " rows, expected ", n);
    auto check = [&](const std::vector<double> &row, const std::string &name) {
      if (static_cast<int>(row.size()) != n) fail("bigram row ", name, " has ", row.size(), " entries, expected ", n);
      double s = 0.0;
      for (double p : row) {
        if (!(p >= 0.0)) fail("bigram row ", name, " has a negative or non-finite entry");
        s += p;
      }
      if (std::abs(s - 1.0) > tol) fail("bigram row ", name, " is not normalized (sums to ", s, ")");
    };
    check(start, "<s>");
    for (int i = 0; i < n; ++i) check(trans[i], std::to_string(i));
  }

  static Bigram uniform(int n, bool allow_repeat = true) {
    Bigram b;
    b.start.assign(n, 1.0 / n);
    b.trans.assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (!allow_repeat && i == j) continue;
        b.trans[i][j] = allow_repeat || n == 1 ? 1.0 / n : 1.0 / (n - 1);
      }
    if (n == 1) b.trans[0][0] = 1.0;
    return b;
  }

  /// Random peaked bigram without immediate repeats (a repeat would be
  /// indistinguishable from a longer single symbol at frame level).
  static Bigram random(int n, std::uint64_t seed, double sharpness = 2.0) {
    if (n < 2) fail("random bigram needs at least 2 symbols");
    Rng rng(derive_seed(seed, 0xB16u));
    Bigram b;
    b.start.assign(n, 1.0 / n);
    b.trans.assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        b.trans[i][j] = std::exp(sharpness * gaussian(rng));
        s += b.trans[i][j];
      }
      for (int j = 0; j < n; ++j) b.trans[i][j] /= s;
    }
    return b;
  }

  std::vector<int> sample(Rng &rng, int length) const {
    std::vector<int> out;
    out.reserve(length);
    for (int k = 0; k < length; ++k) out.push_back(static_cast<int>(sample_discrete(rng, k == 0 ? start : trans[out.back()])));
    return out;
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "bigram " << size() << "\n";
    for (double p : start) os << p << ' ';
    os << "\n";
    for (const auto &row : trans) {
      for (double p : row) os << p << ' ';
      os << "\n";
    }
    return os.str();
  }

  static Bigram from_text(const std::string &text) {
    std::istringstream is(text);
    std::string tag;
    int n = 0;
    if (!(is >> tag >> n) || tag != "bigram" || n <= 0) fail("bigram file: bad header");
    Bigram b;
    b.start.resize(n);
    b.trans.assign(n, std::vector<double>(n));
    for (auto &p : b.start)
      if (!(is >> p)) fail("bigram file: truncated start row");
    for (auto &row : b.trans)
      for (auto &p : row)
        if (!(is >> p)) fail("bigram file: truncated transition rows");
    b.validate();
    return b;
  }
};

struct Utterance {
  std::string id;
  Waveform audio;
  MatF visual;                    // T_v x D_v at 25 fps
  std::vector<int> transcript;    // symbol indices
  std::vector<int> alignment;     // one symbol label per 10 ms of audio
};

inline std::vector<int> collapse_repeats(const std::vector<int> &labels) {
  std::vector<int> out;
  for (int l : labels)
    if (out.empty() || out.back() != l) out.push_back(l);
  return out;
}

/// Labels for acoustic frame t are taken at the window centre (t*10 ms + 20 ms).
inline std::vector<int> frame_labels(const std::vector<int> &alignment, int num_frames,
                                     const FbankConfig &cfg = {}) {
  std::vector<int> out(num_frames);
  const int centre = cfg.frame_length / 2;
  for (int t = 0; t < num_frames; ++t) {
    std::size_t k = static_cast<std::size_t>(t * cfg.frame_shift + centre) / kLabelShift;
    if (alignment.empty()) fail("frame_labels: empty alignment");
    out[t] = alignment[std::min(k, alignment.size() - 1)];
  }
  return out;
}

/// Renders a symbol sequence: sinusoid bursts with 10 ms raised-cosine
/// ramps plus white noise, the matching lip stream and an exact alignment.
inline Utterance synthesize_utterance(const std::vector<std::string> &symbols, const SymbolSet &set,
                                      double noise_level, std::uint64_t seed, std::string id = {}) {
  if (symbols.empty()) fail("synthesize_utterance: empty symbol sequence");
  if (!(noise_level >= 0.0)) fail("synthesize_utterance: noise level must be >= 0");
  std::vector<int> idx;
  for (const auto &s : symbols) idx.push_back(set.index_of(s));

  Rng rng(seed);
  Utterance u;
  u.id = std::move(id);
  u.transcript = idx;
  std::vector<int> dur_labels;
  const int lo = (set.min_duration_ms + 9) / 10, hi = set.max_duration_ms / 10;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    int d = lo + static_cast<int>(uniform_index(rng, static_cast<std::size_t>(hi - lo + 1)));
    dur_labels.push_back(d);
  }

  const int ramp = kSampleRate / 100;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const int n = dur_labels[k] * kLabelShift;
    const auto &sig = set.audio_signature[idx[k]];
    std::vector<double> phase(sig.size());
    for (auto &p : phase) p = uniform(rng, 0.0, 2.0 * M_PI);
    for (int i = 0; i < n; ++i) {
      double env = 1.0;
      if (i < ramp) env = 0.5 - 0.5 * std::cos(M_PI * i / ramp);
      else if (i >= n - ramp) env = 0.5 - 0.5 * std::cos(M_PI * (n - 1 - i) / ramp);
      double s = 0.0;
      for (std::size_t c = 0; c < sig.size(); ++c)
        s += sig[c].amplitude * std::sin(2.0 * M_PI * sig[c].freq_hz * i / kSampleRate + phase[c]);
      u.audio.push_back(static_cast<float>(env * s));
    }
    u.alignment.insert(u.alignment.end(), dur_labels[k], idx[k]);
  }
  if (noise_level > 0.0)
    for (auto &x : u.audio) x = static_cast<float>(x + noise_level * gaussian(rng));

  const double seconds = static_cast<double>(u.audio.size()) / kSampleRate;
  const int tv = static_cast<int>(std::lround(seconds * kVisualFps));
  const int dv = set.visual_dim();
  u.visual.resize(std::max(tv, 1), dv);
  for (int f = 0; f < u.visual.rows(); ++f) {
    const std::size_t k = std::min(u.alignment.size() - 1, static_cast<std::size_t>(f) * 4);
    const auto &mean = set.viseme_means[set.viseme_map[u.alignment[k]]];
    for (int d = 0; d < dv; ++d) u.visual(f, d) = static_cast<float>(mean[d] + 0.1 * gaussian(rng));
  }
  return u;
}

inline double mean_square(const Waveform &w, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += static_cast<double>(w[i]) * w[i];
  return n == 0 ? 0.0 : s / static_cast<double>(n);
}

/// SNR in dB of `signal` against `noise` over their common length.
inline double measured_snr_db(const Waveform &signal, const Waveform &noise) {
  const std::size_t n = std::min(signal.size(), noise.size());
  return 10.0 * std::log10(mean_square(signal, n) / mean_square(noise, n));
}

/// `std::nullopt` stands for the CLEAN condition.
using SnrDb = std::optional<double>;

inline std::string format_snr(const SnrDb &snr) {
  if (!snr) return "clean";
  std::ostringstream os;
  os << *snr;
  return os.str();
}

inline SnrDb parse_snr(const std::string &text) {
  if (text == "clean" || text == "CLEAN") return std::nullopt;
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size() || !std::isfinite(v)) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception &) {
    fail("bad SNR value '", text, "' (expected a number or 'clean')");
  }
}

inline std::vector<SnrDb> parse_snr_list(const std::string &text) {
  std::vector<SnrDb> out;
  std::istringstream is(text);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (!tok.empty()) out.push_back(parse_snr(tok));
  }
  return out;
}

inline std::string format_snr_list(const std::vector<SnrDb> &snrs) {
  std::string out;
  for (std::size_t i = 0; i < snrs.size(); ++i) out += (i ? "," : "") + format_snr(snrs[i]);
  return out;
}

struct MixResult {
  Waveform mixed;
  double gain = 0.0;
  Waveform scaled_interferer;  // gain * interferer over the truncated region
};

/// Truncates both signals to the shorter one, scales the interferer so the
/// mean-square ratio equals `snr_db`, and adds. CLEAN returns the target.
inline MixResult mix_at_snr(const Waveform &target, const Waveform &interferer, const SnrDb &snr_db) {
  if (target.empty()) fail("mix_at_snr: empty target");
  MixResult r;
  if (!snr_db) {
    r.mixed = target;
    r.gain = 0.0;
    r.scaled_interferer.assign(target.size(), 0.0f);
    return r;
  }
  if (interferer.empty()) fail("mix_at_snr: empty interferer");
  const std::size_t n = std::min(target.size(), interferer.size());
  const double pt = mean_square(target, n), pi = mean_square(interferer, n);
  if (pt <= 0.0) fail("mix_at_snr: target has zero energy");
  if (pi <= 0.0) fail("mix_at_snr: interferer has zero energy, cannot mix at ", *snr_db, " dB");
  r.gain = std::sqrt(pt / (pi * std::pow(10.0, *snr_db / 10.0)));
  r.mixed.resize(n);
  r.scaled_interferer.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.scaled_interferer[i] = static_cast<float>(r.gain * interferer[i]);
    r.mixed[i] = static_cast<float>(target[i] + r.gain * static_cast<double>(interferer[i]));
  }
  return r;
}

struct MixtureSpec {
  std::string target_id;
  std::string interferer_id;
  SnrDb snr_db;
  std::uint64_t seed = 0;
};

struct Mixture {
  MixtureSpec spec;
  Waveform audio;
  Utterance target;  // transcript/alignment truncated to the mixture length
};

/// Builds a mixture record; the target's supervision is cut to the mixed
/// length, the visual stream is carried over untouched.
inline Mixture make_mixture(const MixtureSpec &spec, const Utterance &target, const Utterance *interferer) {
  Mixture m;
  m.spec = spec;
  static const Waveform kEmpty;
  auto mix = mix_at_snr(target.audio, interferer ? interferer->audio : kEmpty, spec.snr_db);
  m.audio = std::move(mix.mixed);
  m.target = target;
  const std::size_t labels = m.audio.size() / kLabelShift;
  if (labels < m.target.alignment.size()) {
    m.target.alignment.resize(std::max<std::size_t>(labels, 1));
    m.target.transcript = collapse_repeats(m.target.alignment);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Corpus manifest

enum class RecordType { kUtt, kMix };

struct ManifestRecord {
  RecordType type = RecordType::kUtt;
  std::string split;
  std::string id;
  std::string audio_path;
  std::string visual_path;
  std::vector<std::string> transcript;
  std::string alignment_path;
  std::string target_id;      // MIX only
  std::string interferer_id;  // MIX only
  SnrDb snr_db;               // MIX only
};

inline const std::vector<std::string> &corpus_splits() {
  static const std::vector<std::string> kSplits{"train", "dev", "test"};
  return kSplits;
}

/// One "# split <name>" comment opens each section; records are tab-separated.
inline std::string encode_manifest(const std::vector<ManifestRecord> &records) {
  std::string out;
  for (const auto &split : corpus_splits()) {
    out += "# split " + split + "\n";
    for (const auto &r : records) {
      if (r.split != split) continue;
      std::string tr;
      for (std::size_t i = 0; i < r.transcript.size(); ++i) tr += (i ? " " : "") + r.transcript[i];
      out += (r.type == RecordType::kUtt ? "UTT" : "MIX");
      out += "\t" + r.id + "\t" + r.audio_path + "\t" + r.visual_path + "\t" + tr + "\t" + r.alignment_path;
      if (r.type == RecordType::kMix)
        out += "\t" + r.target_id + "\t" + r.interferer_id + "\t" + format_snr(r.snr_db);
      out += "\n";
    }
  }
  return out;
}

inline std::vector<ManifestRecord> decode_manifest(const std::string &text) {
  std::vector<ManifestRecord> out;
  std::istringstream is(text);
  std::string line, split = "train";
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string key, name;
      if (hs >> key >> name && key == "split") split = name;
      continue;
    }
    std::vector<std::string> f;
    std::size_t start = 0;
    for (;;) {
      std::size_t tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    ManifestRecord r;
    r.split = split;
    if (f[0] == "UTT" && f.size() == 6) {
      r.type = RecordType::kUtt;
    } else if (f[0] == "MIX" && f.size() == 9) {
      r.type = RecordType::kMix;
      r.target_id = f[6];
      r.interferer_id = f[7];
      r.snr_db = parse_snr(f[8]);
    } else {
      fail("manifest line ", lineno, ": malformed record");
    }
    r.id = f[1];
    r.audio_path = f[2];
    r.visual_path = f[3];
    std::istringstream ts(f[4]);
    std::string sym;
    while (ts >> sym) r.transcript.push_back(sym);
    r.alignment_path = f[5];
    out.push_back(std::move(r));
  }
  return out;
}

struct CorpusConfig {
  int num_train = 100;
  int num_dev = 20;
  int num_test = 20;
  std::vector<SnrDb> train_snrs{15.0, 10.0, 5.0, 0.0, -5.0, std::nullopt};
  std::vector<SnrDb> dev_snrs{10.0, 5.0, 0.0, -5.0, std::nullopt};
  std::vector<SnrDb> test_snrs{10.0, 5.0, 0.0, -5.0, std::nullopt};
  int mixtures_per_condition = 1;
  int min_transcript_len = 3;
  int max_transcript_len = 8;
  double noise_level = 0.005;
  int num_symbols = 12;
  int num_visemes = 6;
  int visual_dim = 8;
  double lm_sharpness = 1.0;

  int count(const std::string &split) const {
    return split == "train" ? num_train : split == "dev" ? num_dev : num_test;
  }
  const std::vector<SnrDb> &snrs(const std::string &split) const {
    return split == "train" ? train_snrs : split == "dev" ? dev_snrs : test_snrs;
  }
};

/// The symbol inventory and bigram are pure functions of (config, seed).
inline SymbolSet corpus_symbol_set(const CorpusConfig &cfg, std::uint64_t seed) {
  return SymbolSet::make_default(cfg.num_symbols, cfg.num_visemes, cfg.visual_dim, derive_seed(seed, 1));
}
inline Bigram corpus_bigram(const CorpusConfig &cfg, std::uint64_t seed) {
  return Bigram::random(cfg.num_symbols, derive_seed(seed, 2), cfg.lm_sharpness);
}

inline constexpr const char *kManifestName = "manifest.tsv";
inline constexpr const char *kLmName = "lm.txt";
inline constexpr const char *kSymbolsName = "symbols.txt";

/// "name<TAB>viseme" per line, in pdf-id order.
inline std::string encode_symbol_table(const SymbolSet &set) {
  std::string out;
  for (int i = 0; i < set.size(); ++i) out += set.symbols[i] + "\t" + std::to_string(set.viseme_map[i]) + "\n";
  return out;
}

struct SymbolTable {
  std::vector<std::string> names;
  std::vector<int> viseme;

  int size() const { return static_cast<int>(names.size()); }
  int num_visemes() const { return viseme.empty() ? 0 : *std::max_element(viseme.begin(), viseme.end()) + 1; }
  int index_of(const std::string &sym) const {
    for (int i = 0; i < size(); ++i)
      if (names[i] == sym) return i;
    fail("unknown symbol '", sym, "'");
  }
};

inline SymbolTable decode_symbol_table(const std::string &text) {
  SymbolTable t;
  std::istringstream is(text);
  std::string name;
  int v;
  while (is >> name >> v) {
    t.names.push_back(name);
    t.viseme.push_back(v);
  }
  if (t.names.empty()) fail("symbol table is empty");
  return t;
}

struct CorpusSummary {
  fs::path manifest;
  std::size_t num_utterances = 0;
  std::size_t num_mixtures = 0;
};

/// Writes every utterance and mixture plus the manifest under `out_dir`.
/// Mixture pairs are drawn within a split only.
inline CorpusSummary build_corpus(const CorpusConfig &cfg, std::uint64_t seed, const fs::path &out_dir,
                                  bool force = false, int workers = 1) {
  if (fs::exists(out_dir)) {
    if (!force) fail("output directory ", out_dir.string(), " already exists (use --force to overwrite)");
    fs::remove_all(out_dir);
  }
  if (cfg.min_transcript_len < 1 || cfg.max_transcript_len < cfg.min_transcript_len)
    fail("corpus config: bad transcript length range");
  fs::create_directories(out_dir);
  const SymbolSet set = corpus_symbol_set(cfg, seed);
  const Bigram lm = corpus_bigram(cfg, seed);
  atomic_write(out_dir / kLmName, lm.to_text());
  atomic_write(out_dir / kSymbolsName, encode_symbol_table(set));

  std::vector<ManifestRecord> records;
  CorpusSummary summary;
  std::uint64_t split_no = 0;
  for (const auto &split : corpus_splits()) {
    ++split_no;
    const int n = cfg.count(split);
    if (n < 0) fail("corpus config: negative utterance count for ", split);
    std::vector<Utterance> utts(n);
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
      const std::uint64_t useed = derive_seed(seed, split_no * 1000003ull + i);
      Rng rng(derive_seed(useed, 0));
      const int len = cfg.min_transcript_len +
                      static_cast<int>(uniform_index(rng, cfg.max_transcript_len - cfg.min_transcript_len + 1));
      std::vector<std::string> syms;
      for (int s : lm.sample(rng, len)) syms.push_back(set.symbols[s]);
      char idbuf[64];
      std::snprintf(idbuf, sizeof idbuf, "%s-u%05zu", split.c_str(), i);
      Utterance u = synthesize_utterance(syms, set, cfg.noise_level, derive_seed(useed, 1), idbuf);
      u.audio = quantize_pcm16(u.audio);
      const fs::path base = fs::path(split) / "utt" / u.id;
      write_wav(out_dir / (base.string() + ".wav"), u.audio);
      write_raw_matrix(out_dir / (base.string() + ".avsv"), magic::kVisual, u.visual);
      write_alignment(out_dir / (base.string() + ".ali"), u.alignment);
      utts[i] = std::move(u);
    });
    auto transcript_names = [&](const std::vector<int> &tr) {
      std::vector<std::string> out;
      for (int s : tr) out.push_back(set.symbols[s]);
      return out;
    };
    for (const auto &u : utts) {
      ManifestRecord r;
      r.type = RecordType::kUtt;
      r.split = split;
      r.id = u.id;
      const std::string base = (fs::path(split) / "utt" / u.id).string();
      r.audio_path = base + ".wav";
      r.visual_path = base + ".avsv";
      r.alignment_path = base + ".ali";
      r.transcript = transcript_names(u.transcript);
      records.push_back(std::move(r));
    }
    summary.num_utterances += utts.size();

    // Mixture specs are drawn sequentially so the pairing is independent of
    // the worker count; the audio is then rendered in parallel.
    std::vector<MixtureSpec> specs;
    if (n >= 1) {
      Rng rng(derive_seed(seed, 0xA11ull + split_no));
      for (int i = 0; i < n; ++i)
        for (const auto &snr : cfg.snrs(split))
          for (int rep = 0; rep < cfg.mixtures_per_condition; ++rep) {
            MixtureSpec spec;
            spec.target_id = utts[i].id;
            spec.snr_db = snr;
            spec.seed = rng();
            if (snr) {
              if (n < 2) fail("split ", split, " needs at least 2 utterances to simulate overlapped mixtures");
              // Prefer an interferer at least as long as the target so the
              // target supervision is rarely truncated.
              std::size_t best = static_cast<std::size_t>(i);
              for (int attempt = 0; attempt < 16; ++attempt) {
                std::size_t j = uniform_index(rng, static_cast<std::size_t>(n - 1));
                if (j >= static_cast<std::size_t>(i)) ++j;
                if (best == static_cast<std::size_t>(i) || utts[j].audio.size() > utts[best].audio.size()) best = j;
                if (utts[j].audio.size() >= utts[i].audio.size()) {
                  best = j;
                  break;
                }
              }
              spec.interferer_id = utts[best].id;
            }
            specs.push_back(spec);
          }
    }
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < utts.size(); ++i) by_id[utts[i].id] = i;
    std::vector<ManifestRecord> mix_records(specs.size());
    parallel_for(specs.size(), workers, [&](std::size_t k) {
      const auto &spec = specs[k];
      const Utterance &target = utts[by_id.at(spec.target_id)];
      const Utterance *interf = spec.snr_db ? &utts[by_id.at(spec.interferer_id)] : nullptr;
      Mixture mix = make_mixture(spec, target, interf);
      char idbuf[96];
      std::snprintf(idbuf, sizeof idbuf, "%s-m%06zu-%s", split.c_str(), k, format_snr(spec.snr_db).c_str());
      ManifestRecord r;
      r.type = RecordType::kMix;
      r.split = split;
      r.id = idbuf;
      r.audio_path = (fs::path(split) / "mix" / (r.id + ".wav")).string();
      const std::string tbase = (fs::path(split) / "utt" / target.id).string();
      r.visual_path = tbase + ".avsv";
      r.alignment_path = tbase + ".ali";
      r.transcript = transcript_names(mix.target.transcript);
      r.target_id = spec.target_id;
      r.interferer_id = spec.snr_db ? spec.interferer_id : "-";
      r.snr_db = spec.snr_db;
      write_wav(out_dir / r.audio_path, mix.audio);
      mix_records[k] = std::move(r);
    });
    summary.num_mixtures += mix_records.size();
    for (auto &r : mix_records) records.push_back(std::move(r));
  }
  summary.manifest = out_dir / kManifestName;
  atomic_write(summary.manifest, encode_manifest(records));
  return summary;
}

}  // namespace avsr
