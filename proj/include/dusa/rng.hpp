#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dusa/core.hpp"

namespace dusa {

/// Seeded random stream. Children obtained from split() are seeded from a
/// hash of (seed, split counter) and never touch the parent's draw sequence.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  Rng split();

  double uniform();  // [0, 1)
  double normal();
  int uniform_int(int lo, int hi);  // inclusive
  std::uint64_t next_u64() { return engine_(); }

  Mat normal(Index rows, Index cols);
  Vec dirichlet(Index k, double alpha);
  /// Index drawn with probability proportional to `weights`.
  int categorical(const std::vector<double>& weights);
  std::vector<int> permutation(int n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t splits_ = 0;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dusa
