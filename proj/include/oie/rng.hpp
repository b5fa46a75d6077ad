#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace oie {

// Deterministic PRNG with a fixed algorithm so runs reproduce bit-exactly
// across platforms and standard libraries:
//   - state seeded from a single u64 via splitmix64
//   - stream generated by xoshiro256** (Blackman/Vigna)
//   - uniforms take the top 53 bits, gaussians use Box-Muller
// <random> distributions are implementation-defined and unusable here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

  void reseed(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);

  // Standard normal via Box-Muller; one fresh pair per two calls.
  double gaussian();

  double gaussian(double mean, double stddev) {
    return mean + stddev * gaussian();
  }

  // Fisher-Yates permutation of 0..n-1.
  std::vector<int> permutation(int n);

  // State round-trips for resumable training.
  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace oie
