#ifndef PIID_RNG_HPP
#define PIID_RNG_HPP

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace piid {

// Hierarchical stream address for one random draw site. Identical
// (seed, stream) always reproduces the same bit stream: sub-streams are
// derived by hashing, never by splitting a shared generator.
struct RngSeed {
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> stream;

  RngSeed() = default;
  explicit RngSeed(std::uint64_t s) : seed(s) {}
  RngSeed(std::uint64_t s, std::initializer_list<std::uint64_t> path)
      : seed(s), stream(path) {}

  // Child stream, e.g. per layer or per trial.
  [[nodiscard]] RngSeed child(std::uint64_t idx) const {
    RngSeed r = *this;
    r.stream.push_back(idx);
    return r;
  }

  [[nodiscard]] std::uint64_t mix() const {
    std::uint64_t h = splitmix(seed ^ 0x9e3779b97f4a7c15ULL);
    for (std::uint64_t s : stream) h = splitmix(h ^ splitmix(s + 0x632be59bd9b4e019ULL));
    return h;
  }

  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }
};

// mt19937_64 with distribution code owned here: the standard library's
// distributions are not bit-stable across implementations, the raw engine is.
class Rng {
 public:
  explicit Rng(const RngSeed& s) : engine_(s.mix()) {}
  explicit Rng(std::uint64_t raw) : engine_(raw) {}

  std::uint64_t bits() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  // Marsaglia polar method; only sqrt/log from libm.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  // Ratio of independent normals is standard Cauchy.
  double cauchy() {
    double d;
    do d = normal(); while (d == 0.0);
    return normal() / d;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n * (UINT64_MAX / n);
    std::uint64_t x;
    do x = bits(); while (x >= limit);
    return x % n;
  }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace piid

#endif
