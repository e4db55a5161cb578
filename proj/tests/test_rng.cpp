#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "piid/parallel.hpp"
#include "piid/rng.hpp"

using namespace piid;

TEST_CASE("identical seed and stream reproduce the bit stream") {
  Rng a(RngSeed(42, {1, 2}));
  Rng b(RngSeed(42, {1, 2}));
  for (int i = 0; i < 100; ++i) CHECK(a.bits() == b.bits());
}

TEST_CASE("sibling streams differ") {
  const RngSeed root(42);
  Rng a(root.child(0));
  Rng b(root.child(1));
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.bits() == b.bits();
  CHECK(same == 0);
}

TEST_CASE("stream path is order sensitive") {
  CHECK(RngSeed(7, {1, 2}).mix() != RngSeed(7, {2, 1}).mix());
  CHECK(RngSeed(7, {1}).mix() != RngSeed(7, {1, 0}).mix());
}

TEST_CASE("normal moments") {
  Rng rng(RngSeed(3));
  const int n = 200000;
  double sum = 0.0, sq = 0.0, quart = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
    quart += x * x * x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.01));
  CHECK(quart / n == doctest::Approx(3.0).epsilon(0.03));
}

TEST_CASE("uniform range and mean") {
  Rng rng(RngSeed(4));
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(lo >= 0.0);
  CHECK(hi < 1.0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("cauchy median is zero and quartiles are +-1") {
  Rng rng(RngSeed(5));
  const int n = 100001;
  std::vector<double> xs(n);
  for (auto& x : xs) x = rng.cauchy();
  std::sort(xs.begin(), xs.end());
  CHECK(std::abs(xs[n / 2]) < 0.02);
  CHECK(xs[n / 4] == doctest::Approx(-1.0).epsilon(0.05));
  CHECK(xs[3 * n / 4] == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("parallel_reduce is independent of the thread count") {
  auto run = [](int threads) {
    set_max_threads(threads);
    return parallel_reduce<double>(
        10000, 64, [] { return 0.0; },
        [](double& acc, std::int64_t i) { acc += std::sin(static_cast<double>(i)) * 1e-3; },
        [](double& acc, const double& o) { acc += o; });
  };
  const double one = run(1);
  const double four = run(4);
  set_max_threads(0);
  CHECK(one == four);  // bitwise: fixed block partition
}
