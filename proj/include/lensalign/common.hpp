// Copyright (c) 2026 The lensalign authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace lensalign {

// ---------------------------------------------------------------------------
// Error hierarchy. All failures surface as one of these; the CLI maps them to
// one-line diagnostics and a nonzero exit status.

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error {
  using Error::Error;
};

struct InvalidConfigError : Error {
  using Error::Error;
};

/// Persistence-layer failures, kept distinct so callers can tell a malformed
/// manifest from a missing file from corrupted content.
struct SchemaError : Error {
  using Error::Error;
};

struct MissingFileError : Error {
  using Error::Error;
};

struct ChecksumError : Error {
  using Error::Error;
};

/// A pipeline stage was invoked before the artifacts it consumes exist.
struct DependencyError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic seeding and random number generation.
//
// All stochastic behaviour in the library flows through Rng seeded via
// stable_seed(). mt19937_64 is fully specified by the standard; the
// distributions below are hand-rolled because the std:: distribution objects
// are implementation-defined and would break cross-toolchain reproducibility.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t stable_seed(std::uint64_t a) { return splitmix64(a); }

/// Order-sensitive mix of any number of integral parts. Used everywhere a
/// sub-seed is derived, e.g. seed = stable_seed(dataset_seed, lens_id, i).
template <class... Rest>
std::uint64_t stable_seed(std::uint64_t a, std::uint64_t b, Rest... rest) {
  return stable_seed(splitmix64(a) ^ (b + 0x9e3779b97f4a7c15ULL),
                     static_cast<std::uint64_t>(rest)...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second deviate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  int below(int n) {
    if (n <= 0) throw InvalidInputError("Rng::below: n must be positive");
    const auto nn = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % nn;
    std::uint64_t x = 0;
    do {
      x = next_u64();
    } while (x >= limit);
    return static_cast<int>(x % nn);
  }

  int between(int lo, int hi) { return lo + below(hi - lo + 1); }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Content hashing (FNV-1a 64) used for config and dataset content hashes.

class Hasher {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  void update(std::uint64_t v) {
    unsigned char b[8];
    std::memcpy(b, &v, 8);
    update(b, 8);
  }

  std::uint64_t value() const { return h_; }

  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = h_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = digits[v & 0xf];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string fnv1a_hex(const std::string& bytes) {
  Hasher h;
  h.update(bytes);
  return h.hex();
}

// ---------------------------------------------------------------------------
// Deterministic data parallelism. Work item i always computes the same value
// regardless of worker count; workers only partition the index space. With
// workers <= 1 this degenerates to a plain loop.

inline void parallel_for(std::int64_t n, int workers,
                         const std::function<void(std::int64_t)>& fn) {
  if (n <= 0) return;
  if (workers <= 1 || n == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int w = static_cast<int>(std::min<std::int64_t>(workers, n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(w));
  for (int t = 0; t < w; ++t) {
    const std::int64_t lo = n * t / w;
    const std::int64_t hi = n * (t + 1) / w;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline int default_workers() {
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

}  // namespace lensalign
