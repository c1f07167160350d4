#pragma once

#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "mavae/matrix.hpp"

namespace mavae {

// Seeded pseudo-random source. Identical seed and call sequence give an
// identical stream; split() derives independent child streams by key.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  // Child generator whose seed is a hash of (seed, key). Does not advance *this.
  Rng split(std::uint64_t key) const;

  double normal();
  double uniform();                            // [0, 1)
  double uniform(double lo, double hi);        // [lo, hi)
  std::size_t uniform_index(std::size_t n);    // [0, n)
  bool bernoulli(double p);

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, engine_);
  }

  // k distinct values from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Matrix of independent N(0, 1) draws.
Matrix gaussian_sample(Rng& rng, std::size_t rows, std::size_t cols);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key);

}  // namespace mavae
