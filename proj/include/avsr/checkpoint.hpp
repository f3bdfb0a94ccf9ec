// avsr/checkpoint.hpp

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

// Checkpoint layout:
//
//   AVSR-CHECKPOINT <version>
//   kind <recognizer|separator>
//   config <nbytes>
//   <canonical config text, nbytes>
//   vector <name> <n> <v0> ... <vn-1>        (normalization stats, priors)
//   tensor <name> <rows> <cols> <offset>     (offset in floats into the payload)
//   payload <nfloats>
//   <nfloats little-endian float32>
//
// Vectors are printed with 17 significant digits, so they round-trip exactly.

#pragma once

#include <cstring>
#include <map>

#include "avsr/autodiff.hpp"
#include "avsr/io.hpp"

namespace avsr {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char *kCheckpointMagic = "AVSR-CHECKPOINT";

struct NamedTensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
};

struct Checkpoint {
  std::string kind;
  std::string config;
  std::map<std::string, std::vector<double>> vectors;
  std::vector<NamedTensor> tensors;

  const std::vector<double> &vector(const std::string &name) const {
    auto it = vectors.find(name);
    if (it == vectors.end()) fail("checkpoint: missing vector '", name, "'");
    return it->second;
  }
};

inline std::string encode_checkpoint(const Checkpoint &c) {
  std::ostringstream os;
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "kind " << c.kind << '\n';
  os << "config " << c.config.size() << '\n' << c.config;
  if (!c.config.empty() && c.config.back() != '\n') os << '\n';
  char buf[40];
  for (const auto &[name, vals] : c.vectors) {
    os << "vector " << name << ' ' << vals.size();
    for (double v : vals) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      os << ' ' << buf;
    }
    os << '\n';
  }
  std::size_t offset = 0;
  for (const auto &t : c.tensors) {
    if (t.values.size() != t.rows * t.cols) fail("checkpoint: tensor ", t.name, " has inconsistent shape");
    os << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << ' ' << offset << '\n';
    offset += t.values.size();
  }
  os << "payload " << offset << '\n';
  std::string out = os.str();
  const std::size_t head = out.size();
  out.resize(head + offset * 4);
  char *p = out.data() + head;
  for (const auto &t : c.tensors) {
    std::memcpy(p, t.values.data(), t.values.size() * 4);
    p += t.values.size() * 4;
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string &bytes, const std::string &name = "checkpoint") {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= bytes.size()) fail(name, ": truncated header");
    std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) fail(name, ": truncated header");
    std::string line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };
  Checkpoint c;
  {
    std::istringstream is(next_line());
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != kCheckpointMagic) fail(name, ": not a checkpoint file");
    if (version != kCheckpointVersion)
      fail(name, ": checkpoint format version ", version, " is not supported (expected ", kCheckpointVersion, ")");
  }
  {
    std::istringstream is(next_line());
    std::string key;
    if (!(is >> key >> c.kind) || key != "kind") fail(name, ": missing kind line");
  }
  {
    std::istringstream is(next_line());
    std::string key;
    std::size_t n = 0;
    if (!(is >> key >> n) || key != "config") fail(name, ": missing config line");
    if (pos + n > bytes.size()) fail(name, ": truncated config block");
    c.config = bytes.substr(pos, n);
    pos += n;
    if (n > 0 && c.config.back() != '\n') ++pos;
  }
  std::vector<std::size_t> offsets;
  for (;;) {
    std::istringstream is(next_line());
    std::string key;
    is >> key;
    if (key == "vector") {
      std::string vname;
      std::size_t n = 0;
      if (!(is >> vname >> n)) fail(name, ": bad vector line");
      std::vector<double> vals(n);
      for (auto &v : vals)
        if (!(is >> v)) fail(name, ": truncated vector ", vname);
      c.vectors[vname] = std::move(vals);
    } else if (key == "tensor") {
      NamedTensor t;
      std::size_t off = 0;
      if (!(is >> t.name >> t.rows >> t.cols >> off)) fail(name, ": bad tensor line");
      offsets.push_back(off);
      c.tensors.push_back(std::move(t));
    } else if (key == "payload") {
      std::size_t n = 0;
      if (!(is >> n)) fail(name, ": bad payload line");
      if (bytes.size() - pos != n * 4)
        fail(name, ": payload has ", bytes.size() - pos, " bytes, expected ", n * 4);
      for (std::size_t i = 0; i < c.tensors.size(); ++i) {
        auto &t = c.tensors[i];
        const std::size_t count = t.rows * t.cols;
        if (offsets[i] + count > n) fail(name, ": tensor ", t.name, " exceeds the payload");
        t.values.resize(count);
        std::memcpy(t.values.data(), bytes.data() + pos + offsets[i] * 4, count * 4);
      }
      return c;
    } else {
      fail(name, ": unexpected header line starting with '", key, "'");
    }
  }
}

inline void write_checkpoint(const fs::path &path, const Checkpoint &c) { atomic_write(path, encode_checkpoint(c)); }
inline Checkpoint read_checkpoint(const fs::path &path) { return decode_checkpoint(read_file(path), path.string()); }

template <typename T>
void store_tensors(Checkpoint &c, const std::vector<Tensor<T> *> &params) {
  for (const auto *p : params) {
    NamedTensor t;
    t.name = p->name;
    t.rows = static_cast<std::size_t>(p->rows());
    t.cols = static_cast<std::size_t>(p->cols());
    t.values.assign(p->values.begin(), p->values.end());
    c.tensors.push_back(std::move(t));
  }
}

/// Fills `params` by name; every parameter must be present with its shape.
template <typename T>
void load_tensors(const Checkpoint &c, const std::vector<Tensor<T> *> &params) {
  std::map<std::string, const NamedTensor *> by_name;
  for (const auto &t : c.tensors) by_name[t.name] = &t;
  for (auto *p : params) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) fail("checkpoint: missing parameter '", p->name, "'");
    const NamedTensor &t = *it->second;
    if (t.rows != static_cast<std::size_t>(p->rows()) || t.cols != static_cast<std::size_t>(p->cols()))
      fail("checkpoint: parameter '", p->name, "' has shape ", t.rows, "x", t.cols, ", expected ", p->rows(), "x",
           p->cols());
    for (std::size_t i = 0; i < t.values.size(); ++i) p->values[i] = static_cast<T>(t.values[i]);
  }
  if (by_name.size() != params.size())
    fail("checkpoint: holds ", by_name.size(), " tensors but the model has ", params.size());
}

}  // namespace avsr
