#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "mmrkit/numerics.hpp"

namespace mmr {

/// Stateless key derivation: hashes (seed, k1, k2, ...) with splitmix64 so
/// that every simulation cell (scenario, replication, purpose, group) owns its own
/// stream regardless of execution order.
std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

class Rng {
 public:
  explicit Rng(std::uint64_t key) : eng_(key) {}
  Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) : eng_(stream_key(seed, path)) {}

  double normal() { return normal_(eng_); }
  double uniform() { return uniform_(eng_); }
  bool bernoulli(double p) { return uniform() < p; }
  Vector normal_vector(Eigen::Index p);
  /// Uniform draw from the unit sphere in R^p.
  Vector unit_direction(Eigen::Index p);

  std::mt19937_64& engine() noexcept { return eng_; }

 private:
  std::mt19937_64 eng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mmr
