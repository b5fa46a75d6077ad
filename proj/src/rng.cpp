#include "oie/rng.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace oie {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

void Rng::reseed(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
  have_spare_ = false;
  spare_ = 0.0;
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t limit = ~0ULL - (~0ULL % n);
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v > limit);
  return v % n;
}

double Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  double u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
  spare_ = radius * std::sin(angle);
  have_spare_ = true;
  return radius * std::cos(angle);
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

std::string Rng::serialize() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%llu %llu %llu %llu %d %.17g",
                static_cast<unsigned long long>(s_[0]),
                static_cast<unsigned long long>(s_[1]),
                static_cast<unsigned long long>(s_[2]),
                static_cast<unsigned long long>(s_[3]),
                have_spare_ ? 1 : 0, spare_);
  return buf;
}

Rng Rng::deserialize(const std::string& text) {
  Rng r;
  unsigned long long a = 0, b = 0, c = 0, d = 0;
  int spare_flag = 0;
  double spare = 0.0;
  if (std::sscanf(text.c_str(), "%llu %llu %llu %llu %d %lg", &a, &b, &c, &d,
                  &spare_flag, &spare) != 6) {
    throw std::runtime_error("Rng::deserialize: malformed state string");
  }
  r.s_[0] = a;
  r.s_[1] = b;
  r.s_[2] = c;
  r.s_[3] = d;
  r.have_spare_ = spare_flag != 0;
  r.spare_ = spare;
  return r;
}

}  // namespace oie
