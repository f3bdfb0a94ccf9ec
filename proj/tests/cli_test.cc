// tests/cli_test.cc

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

#include <sys/wait.h>

#include <cstdio>

#include "avsr/experiment.hpp"
#include "test_util.hpp"

namespace avsr {
namespace {

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run(const std::string &args, const std::string &env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + AVSR_CLI_PATH + " " + args + " 2>/dev/null";
  CliResult r;
  FILE *p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
  const int st = ::pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::vector<std::string> split(const std::string &s, char sep) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string f; std::getline(is, f, sep);) out.push_back(f);
  return out;
}

constexpr const char *kTinyConfig =
    "[run]\nseed = 4\n"
    "[corpus]\nnum_train = 8\nnum_dev = 3\nnum_test = 3\ntrain_snrs = 0,clean\ndev_snrs = 0,clean\n"
    "test_snrs = 5,0,clean\nmax_transcript_len = 4\n"
    "[model]\nhidden = 12\nbottleneck = 6\naudio_layers = 2\nvisual_layers = 2\nfusion_layers = 1\nrecog_layers = 2\n"
    "[train]\nepochs = 1\nminibatch = 4\n"
    "[separation]\nhidden = 8\nbottleneck = 4\nlayers = 1\nepochs = 1\n";

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / ("avsr-cli-test-" + std::to_string(::getpid()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    atomic_write(cfg(), kTinyConfig);
    synth_ = run("synth --config " + cfg() + " --out " + corpus());
    train_ = run("train --config " + cfg() + " --corpus " + corpus() + " --fusion vgate --out " + model());
  }
  static void TearDownTestSuite() { fs::remove_all(root_); }

  static std::string cfg() { return (root_ / "tiny.ini").string(); }
  static std::string corpus() { return (root_ / "corpus").string(); }
  static std::string model() { return (root_ / "model").string(); }
  static std::string ckpt() { return (root_ / "model/best.ckpt").string(); }
  static std::string dir(const std::string &name) { return (root_ / name).string(); }

  static inline fs::path root_;
  static inline CliResult synth_, train_;
};

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("synth").code, 2);
  EXPECT_EQ(run("synth --out x --seed notanumber").code, 2);
  EXPECT_EQ(run("train --corpus " + corpus() + " --out " + dir("u1") + " --fusion gated").code, 2);
  EXPECT_EQ(run("train --corpus " + corpus() + " --out " + dir("u2") + " --criterion mpe").code, 2);
  EXPECT_EQ(run("synth --config /nonexistent.ini --out " + dir("u3")).code, 2);
  EXPECT_EQ(run("gradcheck --instances 1", "AVSR_NUM_WORKERS=zero").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(CliTest, SynthWritesCorpusAndRefusesOverwrite) {
  ASSERT_EQ(synth_.code, 0);
  const Corpus c = Corpus::open(corpus());
  EXPECT_EQ(c.select("train", true, false).size(), 8u);
  EXPECT_EQ(c.select("test", false, true).size(), 6u);
  EXPECT_EQ(run("synth --config " + cfg() + " --out " + corpus()).code, 1);
  // Seed override and worker count: identical bytes for the same seed.
  ASSERT_EQ(run("synth --config " + cfg() + " --seed 4 --out " + dir("s1"), "AVSR_NUM_WORKERS=1").code, 0);
  ASSERT_EQ(run("synth --config " + cfg() + " --seed 4 --out " + dir("s3"), "AVSR_NUM_WORKERS=3").code, 0);
  EXPECT_EQ(read_file(dir("s1") + "/manifest.tsv"), read_file(corpus() + "/manifest.tsv"));
  EXPECT_EQ(read_file(dir("s1") + "/manifest.tsv"), read_file(dir("s3") + "/manifest.tsv"));
  const ManifestRecord *r = c.select("test", false, true).front();
  EXPECT_EQ(read_file(fs::path(dir("s1")) / r->audio_path), read_file(fs::path(dir("s3")) / r->audio_path));
  ASSERT_EQ(run("synth --config " + cfg() + " --seed 5 --force --out " + dir("s3")).code, 0);
  EXPECT_NE(read_file(dir("s1") + "/manifest.tsv"), read_file(dir("s3") + "/manifest.tsv"));
}

TEST_F(CliTest, MixReportsRequestedSnrs) {
  const Corpus c = Corpus::open(corpus());
  const auto recs = c.select("train", true, false);
  const std::string t = (fs::path(corpus()) / recs[0]->audio_path).string();
  const std::string i = (fs::path(corpus()) / recs[1]->audio_path).string();
  const std::string v = (fs::path(corpus()) / recs[0]->visual_path).string();
  const CliResult r = run("mix --target " + t + " --interferer " + i + " --visual " + v + " --snr 10,-5,clean --out " +
                    dir("mix"));
  ASSERT_EQ(r.code, 0);
  std::istringstream is(r.out);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "snr\tgain\tmeasured_snr\tsamples\tfile");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) rows.push_back(split(line, '\t'));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_NEAR(std::stod(rows[0][2]), 10.0, 1e-6);
  EXPECT_NEAR(std::stod(rows[1][2]), -5.0, 1e-6);
  EXPECT_EQ(rows[2][2], "clean");
  EXPECT_EQ(read_wav(dir("mix") + "/mix_clean.wav"), read_wav(t));
  EXPECT_EQ(read_file(dir("mix") + "/mix_-5.avsv"), read_file(v));
  EXPECT_EQ(run("mix --target " + t + " --interferer " + i + " --snr 0 --out " + dir("mix")).code, 1);
  EXPECT_EQ(run("mix --target " + t + " --interferer " + i + " --snr loud --out " + dir("mix2")).code, 1);
}

TEST_F(CliTest, FeaturesMatchLibrary) {
  const Corpus c = Corpus::open(corpus());
  const auto *r = c.select("dev", true, false).front();
  const fs::path wav = fs::path(corpus()) / r->audio_path, vis = fs::path(corpus()) / r->visual_path;
  ASSERT_EQ(run("features " + wav.string() + " " + vis.string() + " --out " + dir("feat")).code, 0);
  const MatF a = read_raw_matrix(fs::path(dir("feat")) / (wav.stem().string() + ".avsf"), magic::kFeature);
  EXPECT_EQ(a, logmel(read_wav(wav), FbankConfig{}));
  const MatF v = read_raw_matrix(fs::path(dir("feat")) / (vis.stem().string() + ".visual.avsf"), magic::kFeature);
  const MatF raw = read_raw_matrix(vis, magic::kVisual);
  EXPECT_EQ(v.rows(), 4 * raw.rows());
  EXPECT_EQ(run("features " + wav.string() + " --out " + dir("feat")).code, 1);
  EXPECT_EQ(run("features " + cfg() + " --out " + dir("feat2")).code, 1);
}

TEST_F(CliTest, TrainWritesArtifacts) {
  ASSERT_EQ(train_.code, 0);
  for (const char *f : {"best.ckpt", "last.ckpt", "train.log", "config.ini", "train_info.txt"})
    EXPECT_TRUE(fs::exists(fs::path(model()) / f)) << f;
  EXPECT_EQ(read_file(model() + "/train.log").substr(0, std::string(kTrainLogHeader).size()), kTrainLogHeader);
  const Recognizer r = load_recognizer(ckpt());
  EXPECT_EQ(r.config.arch.mode, FusionMode::kVGate);
  EXPECT_EQ(r.config.dims.hidden, 12);
  EXPECT_EQ(run("train --config " + cfg() + " --corpus " + corpus() + " --out " + model()).code, 1);
  EXPECT_EQ(run("train --corpus " + corpus() + " --out " + dir("t2") + " --fusion concat --plus-concat").code, 1);
}

TEST_F(CliTest, DecodeScoreAndGates) {
  ASSERT_EQ(train_.code, 0);
  const CliResult d = run("decode --checkpoint " + ckpt() + " --corpus " + corpus() + " --out " + dir("dec") +
                    " --dump-gates " + dir("gates"));
  ASSERT_EQ(d.code, 0);
  const auto rows = decode_wer_rows(read_file(dir("dec") + "/wer.tsv"));
  // clean, 5, 0, AVE, POOLED.
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].system, "vgate");
  EXPECT_EQ(rows[0].snr, "clean");
  EXPECT_EQ(rows[3].snr, "AVE");
  EXPECT_NEAR(rows[3].wer, (rows[1].wer + rows[2].wer) / 2, 1e-4);
  EXPECT_EQ(rows[4].counts.ref_length, rows[1].counts.ref_length + rows[2].counts.ref_length);
  // Gates: one file per utterance, rows = frames, values in (0,1).
  const Corpus c = Corpus::open(corpus());
  int files = 0;
  for (const auto &e : fs::directory_iterator(dir("gates"))) {
    const MatF g = read_raw_matrix(e.path(), magic::kGate);
    const MatF f = logmel(c.audio(c.find(e.path().stem().string())), FbankConfig{});
    EXPECT_EQ(g.rows(), f.rows());
    EXPECT_GT(g.minCoeff(), 0.0f);
    EXPECT_LT(g.maxCoeff(), 1.0f);
    ++files;
  }
  EXPECT_EQ(files, 9);
  // Rescoring the written transcripts reproduces the decode report.
  const CliResult s = run("score " + dir("dec") + "/ref.txt " + dir("dec") + "/hyp.txt --corpus " + corpus() +
                    " --system vgate --out " + dir("score.tsv"));
  ASSERT_EQ(s.code, 0);
  const auto srows = decode_wer_rows(read_file(dir("score.tsv")));
  ASSERT_EQ(srows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(srows[i].snr, rows[i].snr);
    EXPECT_EQ(srows[i].counts.errors(), rows[i].counts.errors());
  }
  // Identical hypothesis gives zero errors.
  const CliResult z = run("score " + dir("dec") + "/ref.txt " + dir("dec") + "/ref.txt");
  ASSERT_EQ(z.code, 0);
  EXPECT_NE(z.out.find("\t0.0000\t"), std::string::npos);
  EXPECT_EQ(run("score " + dir("dec") + "/ref.txt " + cfg()).code, 1);
}

TEST_F(CliTest, DecodeEdgeCases) {
  ASSERT_EQ(train_.code, 0);
  // An SNR with no records is not an error; the report is empty.
  const CliResult e = run("decode --checkpoint " + ckpt() + " --corpus " + corpus() + " --snr 20 --out " + dir("empty"));
  EXPECT_EQ(e.code, 0);
  EXPECT_TRUE(decode_wer_rows(read_file(dir("empty") + "/wer.tsv")).empty());
  EXPECT_EQ(run("decode --checkpoint " + cfg() + " --corpus " + corpus()).code, 1);
  EXPECT_EQ(run("decode --checkpoint " + ckpt() + " --corpus " + corpus() + " --front-end learned").code, 1);
  const CliResult w1 = run("decode --checkpoint " + ckpt() + " --corpus " + corpus() + " --split dev", "AVSR_NUM_WORKERS=1");
  const CliResult w4 = run("decode --checkpoint " + ckpt() + " --corpus " + corpus() + " --split dev", "AVSR_NUM_WORKERS=4");
  EXPECT_EQ(w1.code, 0);
  EXPECT_EQ(w1.out, w4.out);
}

TEST_F(CliTest, SeparateOracleAndLearned) {
  const CliResult o = run("separate --corpus " + corpus() + " --oracle --out " + dir("sep_oracle"));
  ASSERT_EQ(o.code, 0);
  const auto lines = split(read_file(dir("sep_oracle") + "/si_snr.tsv"), '\n');
  EXPECT_EQ(lines[0], "id\tsnr\tsi_snr_mixture\tsi_snr_enhanced");
  double gain = 0;
  int n = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split(lines[i], '\t');
    gain += std::stod(f[3]) - std::stod(f[2]);
    ++n;
  }
  EXPECT_EQ(n, 6);
  EXPECT_GT(gain / n, 3.0);
  ASSERT_EQ(run("separate --config " + cfg() + " --corpus " + corpus() + " --train --out " + dir("sep.ckpt")).code, 0);
  const CliResult l = run("separate --corpus " + corpus() + " --checkpoint " + dir("sep.ckpt") + " --split dev --out " +
                    dir("sep_learned"));
  EXPECT_EQ(l.code, 0);
  EXPECT_EQ(run("separate --corpus " + corpus() + " --out " + dir("sep_none")).code, 1);
  EXPECT_EQ(run("separate --corpus " + corpus() + " --oracle --record nope --out " + dir("sep_bad")).code, 1);
}

TEST_F(CliTest, GradcheckPasses) {
  const CliResult g = run("gradcheck --instances 2");
  EXPECT_EQ(g.code, 0);
  EXPECT_EQ(g.out.find("FAIL"), std::string::npos);
  EXPECT_NE(g.out.find("network_avgate+concat_f32"), std::string::npos);
}

}  // namespace
}  // namespace avsr
