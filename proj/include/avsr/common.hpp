// avsr/common.hpp

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

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace avsr {

/// Row-major dense matrix; frames are rows, feature dimensions are columns.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatF = Mat<float>;
using MatD = Mat<double>;

/// Mono 16 kHz audio, samples nominally in [-1, 1].
using Waveform = std::vector<float>;

inline constexpr int kSampleRate = 16000;
inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename... Args>
std::string str_cat(const Args &...args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args &...args) {
  throw Error(str_cat(args...));
}

namespace detail {
inline std::atomic<long> &warning_counter() {
  static std::atomic<long> n{0};
  return n;
}
inline std::atomic<bool> &warnings_quiet() {
  static std::atomic<bool> q{false};
  return q;
}
}  // namespace detail

/// Warnings go to stderr and are counted so tests can observe them.
template <typename... Args>
void warn(const Args &...args) {
  ++detail::warning_counter();
  if (!detail::warnings_quiet()) std::cerr << "WARNING: " << str_cat(args...) << '\n';
}
inline long warning_count() { return detail::warning_counter().load(); }
inline void set_quiet_warnings(bool q) { detail::warnings_quiet() = q; }

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

template <typename Range>
double log_sum_exp(const Range &xs) {
  double mx = kLogZero;
  for (double x : xs) mx = std::max(mx, x);
  if (mx == kLogZero) return kLogZero;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

/// Derives an independent child seed; all randomness in a run hangs off one root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

// The standard distributions are implementation-defined, so the few draws we
// need are written out to keep corpora byte-identical across toolchains.
inline double uniform01(Rng &rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}
inline double uniform(Rng &rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
inline std::size_t uniform_index(Rng &rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}
inline double gaussian(Rng &rng) {
  // Box-Muller, one draw per call.
  double u1 = uniform01(rng);
  double u2 = uniform01(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}
inline std::size_t sample_discrete(Rng &rng, const std::vector<double> &probs) {
  double r = uniform01(rng), acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (r < acc) return i;
  }
  for (std::size_t i = probs.size(); i-- > 0;)
    if (probs[i] > 0) return i;
  return 0;
}

/// Worker count: AVSR_NUM_WORKERS if set, otherwise hardware concurrency.
inline int num_workers() {
  if (const char *env = std::getenv("AVSR_NUM_WORKERS")) {
    int n = std::atoi(env);
    if (n > 0) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Each index is
/// handled by exactly one worker; callers write results into per-index slots.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)> &fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  auto body = [&] {
    for (;;) {
      std::size_t i = next++;
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  int k = static_cast<int>(std::min<std::size_t>(n, static_cast<std::size_t>(workers)));
  for (int w = 0; w < k; ++w) pool.emplace_back(body);
  for (auto &t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace avsr
