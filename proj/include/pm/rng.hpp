// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace pm {

// mt19937_64 with hand-rolled draw helpers. The standard pins the engine's
// output sequence but not the distributions, so we never use
// std::uniform_*_distribution: every draw below is fully specified and
// therefore reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling, unbiased.
  std::uint64_t below(std::uint64_t n);

  // Fisher-Yates, one draw per element from the back.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

// Component seed derived from the master seed: FNV-1a over the component
// name, mixed with the master seed through splitmix64. Every stochastic
// stage owns its own stream and can be re-run in isolation.
std::uint64_t seed_for(std::uint64_t master_seed, std::string_view component);

}  // namespace pm
