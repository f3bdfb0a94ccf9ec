// tests/io_test.cc

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

#include <cstring>

#include "avsr/io.hpp"
#include "test_util.hpp"

namespace avsr {
namespace {

using testing::TempDir;

template <typename U>
U read_at(const std::string &b, std::size_t pos) {
  U v;
  std::memcpy(&v, b.data() + pos, sizeof(U));
  return v;
}

TEST(Wav, HeaderLayout) {
  const std::string b = encode_wav(Waveform{0.0f, 0.5f, -0.5f});
  ASSERT_EQ(b.size(), 44u + 6u);
  EXPECT_EQ(b.substr(0, 4), "RIFF");
  EXPECT_EQ(read_at<std::uint32_t>(b, 4), 36u + 6u);
  EXPECT_EQ(b.substr(8, 4), "WAVE");
  EXPECT_EQ(b.substr(12, 4), "fmt ");
  EXPECT_EQ(read_at<std::uint16_t>(b, 20), 1);
  EXPECT_EQ(read_at<std::uint16_t>(b, 22), 1);
  EXPECT_EQ(read_at<std::uint32_t>(b, 24), 16000u);
  EXPECT_EQ(read_at<std::uint32_t>(b, 28), 32000u);
  EXPECT_EQ(read_at<std::uint16_t>(b, 34), 16);
  EXPECT_EQ(b.substr(36, 4), "data");
  EXPECT_EQ(read_at<std::uint32_t>(b, 40), 6u);
  EXPECT_EQ(read_at<std::int16_t>(b, 46), 16384);  // lround(0.5 * 32767)
  EXPECT_EQ(read_at<std::int16_t>(b, 48), -16384);
}

TEST(Wav, RoundTripEqualsQuantize) {
  Rng rng(7);
  Waveform w = testing::random_waveform(1000, rng);
  w.push_back(3.0f);
  w.push_back(-3.0f);
  const Waveform back = decode_wav(encode_wav(w));
  const Waveform q = quantize_pcm16(w);
  ASSERT_EQ(back.size(), w.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(back[i], q[i]) << i;
  EXPECT_EQ(back[1000], 1.0f);
  EXPECT_EQ(back[1001], -1.0f);
  // Quantization is idempotent.
  EXPECT_EQ(quantize_pcm16(q), q);
}

TEST(Wav, Clipping) {
  EXPECT_EQ(float_to_pcm16(2.0f), 32767);
  EXPECT_EQ(float_to_pcm16(-2.0f), -32767);
  EXPECT_EQ(float_to_pcm16(0.0f), 0);
}

TEST(Wav, RejectsUnsupportedFormats) {
  std::string b = encode_wav(Waveform(4, 0.1f));
  std::string stereo = b;
  stereo[22] = 2;
  EXPECT_THROW(decode_wav(stereo), Error);
  EXPECT_THROW(decode_wav(encode_wav(Waveform(4, 0.1f), 8000)), Error);
  std::string bits = b;
  bits[34] = 8;
  EXPECT_THROW(decode_wav(bits), Error);
  EXPECT_THROW(decode_wav(b.substr(0, b.size() - 2)), Error);
  EXPECT_THROW(decode_wav("RIFX"), Error);
  EXPECT_THROW(decode_wav(b.substr(0, 36)), Error);
}

TEST(Wav, SkipsUnknownChunks) {
  std::string b = encode_wav(Waveform{0.25f, -0.25f});
  std::string extra = "LIST";
  const std::uint32_t n = 3;
  extra.append(reinterpret_cast<const char *>(&n), 4);
  extra += std::string("abc") + '\0';  // odd size is padded
  b.insert(36, extra);
  const Waveform w = decode_wav(b);
  ASSERT_EQ(w.size(), 2u);
  EXPECT_EQ(w[0], pcm16_to_float(float_to_pcm16(0.25f)));
}

TEST(RawMatrix, HeaderAndRoundTrip) {
  MatF m(3, 2);
  m << 1, 2, 3, 4, 5, 6;
  const std::string b = encode_raw_matrix(magic::kGate, m);
  ASSERT_EQ(b.size(), 16u + 6u * 4u);
  EXPECT_EQ(b.substr(0, 4), "AVSG");
  EXPECT_EQ(read_at<std::uint32_t>(b, 4), 1u);
  EXPECT_EQ(read_at<std::uint32_t>(b, 8), 3u);
  EXPECT_EQ(read_at<std::uint32_t>(b, 12), 2u);
  EXPECT_EQ(read_at<float>(b, 16 + 4), 2.0f);  // row-major
  EXPECT_EQ(read_at<float>(b, 16 + 8), 3.0f);
  const MatF back = decode_raw_matrix(b, magic::kGate);
  EXPECT_EQ(back, m);
}

TEST(RawMatrix, EmptyMatrix) {
  MatF m(0, 5);
  const MatF back = decode_raw_matrix(encode_raw_matrix(magic::kFeature, m), magic::kFeature);
  EXPECT_EQ(back.rows(), 0);
  EXPECT_EQ(back.cols(), 5);
}

TEST(RawMatrix, Errors) {
  MatF m = MatF::Ones(2, 2);
  const std::string b = encode_raw_matrix(magic::kVisual, m);
  EXPECT_THROW(decode_raw_matrix(b, magic::kMask), Error);
  std::string v = b;
  v[4] = 2;
  EXPECT_THROW(decode_raw_matrix(v, magic::kVisual), Error);
  EXPECT_THROW(decode_raw_matrix(b.substr(0, b.size() - 1), magic::kVisual), Error);
  EXPECT_THROW(decode_raw_matrix(b + "x", magic::kVisual), Error);
  EXPECT_THROW(decode_raw_matrix("AVS", magic::kVisual), Error);
  EXPECT_THROW(encode_raw_matrix("AV", m), Error);
}

TEST(Alignment, RoundTripAndErrors) {
  const std::vector<int> a{0, 3, 3, 11, 2};
  EXPECT_EQ(encode_alignment(a), "0\n3\n3\n11\n2\n");
  EXPECT_EQ(decode_alignment(encode_alignment(a)), a);
  EXPECT_EQ(decode_alignment("1\n\n2\n"), (std::vector<int>{1, 2}));
  EXPECT_THROW(decode_alignment("1\nx\n"), Error);
  EXPECT_THROW(decode_alignment("1 2\n"), Error);
}

TEST(Files, AtomicWriteLeavesNoTemp) {
  TempDir dir;
  const fs::path p = dir / "sub/a.avsf";
  write_raw_matrix(p, magic::kFeature, MatF::Constant(2, 3, 0.5f));
  EXPECT_TRUE(fs::exists(p));
  EXPECT_FALSE(fs::exists(fs::path(p.string() + ".tmp")));
  EXPECT_EQ(read_raw_matrix(p, magic::kFeature), MatF::Constant(2, 3, 0.5f));
  write_wav(dir / "x.wav", Waveform{0.1f});
  EXPECT_EQ(read_wav(dir / "x.wav").size(), 1u);
  EXPECT_THROW(read_file(dir / "missing"), Error);
}

}  // namespace
}  // namespace avsr
