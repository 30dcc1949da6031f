#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace causal_bsts {

// Seeded random stream. Wraps a 64-bit Mersenne Twister together with the
// standard distributions the samplers need; every draw goes through this
// object so a seed fully determines a run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return std_normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * std_normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  // Gamma with the given shape and *rate* (expectation shape / rate).
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> std_normal_{0.0, 1.0};
};

// Independent substream seed for replicate `index` of a master seed
// (splitmix64 finalizer over the pair).
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace causal_bsts
