// avsr/io.hpp

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

// On-disk formats: 16-bit PCM WAV, the "raw matrix" container used for visual
// streams, feature caches, gate dumps and masks, and plain-text alignments.
// All binary integers and floats are little-endian.

#pragma once

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "avsr/common.hpp"

namespace avsr {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with host byte order, which must be little-endian");

namespace fs = std::filesystem;

/// Magic tags of the raw-matrix container.
namespace magic {
inline constexpr std::string_view kVisual = "AVSV";
inline constexpr std::string_view kFeature = "AVSF";
inline constexpr std::string_view kGate = "AVSG";
inline constexpr std::string_view kMask = "AVSM";
}  // namespace magic

inline constexpr std::uint32_t kRawMatrixVersion = 1;

/// Writes `bytes` to `path` through a sibling temp file and a rename, so a
/// reader never observes a half-written file.
inline void atomic_write(const fs::path &path, const std::string &bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail("cannot open for writing: ", tmp.string());
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) fail("write failed: ", tmp.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open for reading: ", path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

namespace detail {
template <typename U>
void put(std::string &out, U v) {
  char buf[sizeof(U)];
  std::memcpy(buf, &v, sizeof(U));
  out.append(buf, sizeof(U));
}
template <typename U>
U get(const std::string &in, std::size_t &pos, const std::string &what) {
  if (pos + sizeof(U) > in.size()) fail("truncated ", what);
  U v;
  std::memcpy(&v, in.data() + pos, sizeof(U));
  pos += sizeof(U);
  return v;
}
}  // namespace detail

inline std::int16_t float_to_pcm16(float x) {
  double v = std::clamp(static_cast<double>(x), -1.0, 1.0) * 32767.0;
  return static_cast<std::int16_t>(std::lround(v));
}
inline float pcm16_to_float(std::int16_t s) { return static_cast<float>(s) / 32767.0f; }

/// Rounds every sample to the value it will have after a WAV round trip.
inline Waveform quantize_pcm16(const Waveform &w) {
  Waveform out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = pcm16_to_float(float_to_pcm16(w[i]));
  return out;
}

inline std::string encode_wav(const Waveform &samples, int sample_rate = kSampleRate) {
  std::string out;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.append("RIFF");
  detail::put<std::uint32_t>(out, 36 + data_bytes);
  out.append("WAVE");
  out.append("fmt ");
  detail::put<std::uint32_t>(out, 16);
  detail::put<std::uint16_t>(out, 1);  // PCM
  detail::put<std::uint16_t>(out, 1);  // mono
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate * 2));
  detail::put<std::uint16_t>(out, 2);
  detail::put<std::uint16_t>(out, 16);
  out.append("data");
  detail::put<std::uint32_t>(out, data_bytes);
  for (float x : samples) detail::put<std::int16_t>(out, float_to_pcm16(x));
  return out;
}

inline Waveform decode_wav(const std::string &bytes, const std::string &name = "wav") {
  std::size_t pos = 0;
  auto tag = [&](const char *expect) {
    if (pos + 4 > bytes.size() || bytes.compare(pos, 4, expect) != 0)
      fail(name, ": expected chunk '", expect, "'");
    pos += 4;
  };
  tag("RIFF");
  detail::get<std::uint32_t>(bytes, pos, name);
  tag("WAVE");
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    std::string id = bytes.substr(pos, 4);
    pos += 4;
    std::uint32_t size = detail::get<std::uint32_t>(bytes, pos, name);
    if (id == "fmt ") {
      std::size_t p = pos;
      auto format = detail::get<std::uint16_t>(bytes, p, name);
      auto channels = detail::get<std::uint16_t>(bytes, p, name);
      auto rate = detail::get<std::uint32_t>(bytes, p, name);
      p += 6;
      auto bits = detail::get<std::uint16_t>(bytes, p, name);
      if (format != 1 || channels != 1 || bits != 16 || rate != static_cast<std::uint32_t>(kSampleRate))
        fail(name, ": only 16 kHz mono 16-bit PCM is supported");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) fail(name, ": data chunk before fmt chunk");
      if (pos + size > bytes.size()) fail(name, ": truncated data chunk");
      Waveform out(size / 2);
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = pcm16_to_float(detail::get<std::int16_t>(bytes, pos, name));
      return out;
    }
    pos += size + (size & 1u);
  }
  fail(name, ": no data chunk");
}

inline void write_wav(const fs::path &path, const Waveform &w) { atomic_write(path, encode_wav(w)); }
inline Waveform read_wav(const fs::path &path) { return decode_wav(read_file(path), path.string()); }

/// Raw-matrix container: 4-byte magic, u32 version, u32 rows, u32 cols, then
/// rows*cols float32 values in row-major order.
inline std::string encode_raw_matrix(std::string_view tag, const MatF &m) {
  if (tag.size() != 4) fail("raw-matrix magic must be 4 bytes");
  std::string out(tag);
  detail::put<std::uint32_t>(out, kRawMatrixVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  out.append(reinterpret_cast<const char *>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
  return out;
}

inline MatF decode_raw_matrix(const std::string &bytes, std::string_view tag, const std::string &name = "matrix") {
  if (bytes.size() < 16 || std::string_view(bytes.data(), 4) != tag)
    fail(name, ": bad magic, expected ", tag);
  std::size_t pos = 4;
  auto version = detail::get<std::uint32_t>(bytes, pos, name);
  if (version != kRawMatrixVersion) fail(name, ": unsupported version ", version);
  auto rows = detail::get<std::uint32_t>(bytes, pos, name);
  auto cols = detail::get<std::uint32_t>(bytes, pos, name);
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != 16 + n * sizeof(float)) fail(name, ": payload size does not match header");
  MatF m(rows, cols);
  std::memcpy(m.data(), bytes.data() + 16, n * sizeof(float));
  return m;
}

inline void write_raw_matrix(const fs::path &path, std::string_view tag, const MatF &m) {
  atomic_write(path, encode_raw_matrix(tag, m));
}
inline MatF read_raw_matrix(const fs::path &path, std::string_view tag) {
  return decode_raw_matrix(read_file(path), tag, path.string());
}

inline std::string encode_alignment(const std::vector<int> &labels) {
  std::string out;
  for (int l : labels) out += std::to_string(l) + "\n";
  return out;
}

inline std::vector<int> decode_alignment(const std::string &text, const std::string &name = "alignment") {
  std::vector<int> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      int v = std::stoi(line, &used);
      if (used != line.size()) throw std::invalid_argument(line);
      out.push_back(v);
    } catch (const std::exception &) {
      fail(name, ": bad label line '", line, "'");
    }
  }
  return out;
}

inline void write_alignment(const fs::path &path, const std::vector<int> &labels) {
  atomic_write(path, encode_alignment(labels));
}
inline std::vector<int> read_alignment(const fs::path &path) {
  return decode_alignment(read_file(path), path.string());
}

}  // namespace avsr
