#include "mmrkit/rng.hpp"

namespace mmr {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : path) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

Vector Rng::normal_vector(Eigen::Index p) {
  Vector v(p);
  for (Eigen::Index j = 0; j < p; ++j) v[j] = normal();
  return v;
}

Vector Rng::unit_direction(Eigen::Index p) {
  for (;;) {
    Vector v = normal_vector(p);
    const double n = v.norm();
    if (n > 1e-300) return v / n;
  }
}

}  // namespace mmr
