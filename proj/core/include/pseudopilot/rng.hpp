#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pseudopilot {

// Deterministic random source. Wraps std::mt19937_64 but applies its own
// uniform/normal transforms so a given seed produces the same stream on
// every platform (std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Standard normal via Box-Muller; caches the second deviate.
  double normal();

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent child stream (e.g. per run phase).
  Rng fork() { return Rng(next_u64() ^ 0x9e3779b97f4a7c15ull); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pseudopilot
