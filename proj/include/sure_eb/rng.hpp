#pragma once
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "sure_eb/types.hpp"

namespace sure_eb {

// splitmix64: counter-based 64-bit generator (Steele, Lea, Flood 2014).
// Every random quantity in the project comes from a substream keyed by
// (seed, replicate, stream id), so replicates and purposes never share a
// stream and results do not depend on evaluation order.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t x = (state += 0x9e3779b97f4a7c15ULL);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
  dgp = 1,         // sigma2 / mu / noise draws of a simulated replicate
  noise = 2,       // fresh noise redraws (compound setting, Stein checks)
  fission = 3,     // fission epsilon draws
  folds = 4,       // fold-assignment shuffles
  mlp_init = 5,    // network weight initialization
  misc = 6,
};

class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t replicate, Stream stream) {
    std::uint64_t s = seed;
    state_ = splitmix64_next(s) ^ (0xd1342543de82ef95ULL * (replicate + 1));
    std::uint64_t t = state_;
    state_ = splitmix64_next(t) ^
             (0xaf251af3b0f025b5ULL * (static_cast<std::uint64_t>(stream) + 1));
    splitmix64_next(state_);  // burn one step to decorrelate nearby keys
  }

  std::uint64_t next_u64() { return splitmix64_next(state_); }

  double uniform01() {  // [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01(), u2 = uniform01();
    while (u1 <= 0) u1 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential() { return -std::log1p(-uniform01()); }

  // chi^2 with even df, as 2 * Gamma(df/2, 1) built from exponentials.
  double chi2_even_df(int df) {
    double g = 0;
    for (int k = 0; k < df / 2; ++k) g += exponential();
    return 2.0 * g;
  }

  // Knuth's product method; fine for the small lambdas used here.
  int poisson(double lambda) {
    const double limit = std::exp(-lambda);
    double prod = uniform01();
    int k = 0;
    while (prod > limit) {
      ++k;
      prod *= uniform01();
    }
    return k;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Unbiased integer in [0, n) via 128-bit multiply-shift.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_ = 0;
  double spare_ = 0;
  bool have_spare_ = false;
};

inline void shuffle_indices(std::vector<Index>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace sure_eb
