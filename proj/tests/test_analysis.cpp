#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/LU>

#include <cmath>

#include "piid/analysis.hpp"
#include "piid/kernel.hpp"

using namespace piid;

TEST_CASE("variance map closed cases and the frozen tanh oracle") {
  CHECK(analysis::variance_map(0.7, 0.0, 1.3, Activation::identity()) ==
        doctest::Approx(1.3 * 0.7).epsilon(1e-12));
  CHECK(analysis::variance_map(0.7, 0.0, 2.0, Activation::relu()) ==
        doctest::Approx(0.7).epsilon(1e-12));
  // 1e7-sample oracle (seed 778): 4 * E[tanh(u)^2] at q=1 is 1.5771703
  CHECK(std::abs(analysis::variance_map(1.0, 0.0, 4.0, Activation::tanh()) - 1.5771703) <
        1e-3);
  CHECK_THROWS_AS(analysis::variance_map(-1.0, 0.0, 1.0, Activation::tanh()),
                  std::invalid_argument);
}

TEST_CASE("fixed point: identity maps return q0 immediately") {
  const auto id = analysis::fixed_point(0.0, 1.0, Activation::identity());
  CHECK(id.converged);
  CHECK(id.q_star == 1.0);
  CHECK(id.iterations == 1);

  const auto relu = analysis::fixed_point(0.0, 2.0, Activation::relu());
  CHECK(relu.converged);
  CHECK(relu.q_star == 1.0);
}

TEST_CASE("fixed point: tanh converges and is stable under restarts") {
  const auto a = analysis::fixed_point(0.01, 4.0, Activation::tanh(), 1e-10, 200000, 0.1);
  const auto b = analysis::fixed_point(0.01, 4.0, Activation::tanh(), 1e-10, 200000, 10.0);
  CHECK(a.converged);
  CHECK(b.converged);
  CHECK(a.q_star > 0.0);
  CHECK(a.q_star == doctest::Approx(b.q_star).epsilon(1e-6));
  // post-hoc: the returned value is a fixed point
  CHECK(std::abs(analysis::variance_map(a.q_star, 0.01, 4.0, Activation::tanh()) - a.q_star) <
        1e-8);
}

TEST_CASE("fixed point: chaotic growth is reported as divergence") {
  const auto r = analysis::fixed_point(0.0, 4.0, Activation::identity(), 1e-9, 100000);
  CHECK(r.diverged);
}

TEST_CASE("chi1 closed forms and limits") {
  CHECK(analysis::chi1(0.5, 1.7, Activation::identity()) == doctest::Approx(1.7));
  CHECK(analysis::chi1(0.5, 3.0, Activation::relu()) == doctest::Approx(1.5));
  CHECK(analysis::chi1(0.0, 2.5, Activation::tanh()) == doctest::Approx(2.5));
  // htanh: phi'(u)^2 is the indicator of |u| < 1
  const double q = 0.8;
  const double inside = std::erf(1.0 / std::sqrt(2.0 * q));
  CHECK(analysis::chi1(q, 1.0, Activation::htanh()) == doctest::Approx(inside).epsilon(1e-8));
  Activation no_deriv = Activation::custom([](double x) { return x; }, 0.0, 1.0);
  CHECK_THROWS_AS(analysis::chi1(1.0, 1.0, no_deriv), std::invalid_argument);
}

TEST_CASE("criticality: tanh at zero bias sits at sigma_w2 = 1") {
  const auto pts = analysis::eoc_solve(Activation::tanh(), {0.0});
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].sigma_w2 == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(std::abs(pts[0].chi1 - 1.0) < 1e-5);
}

TEST_CASE("criticality: relu at zero bias sits at sigma_w2 = 2") {
  const auto pts = analysis::eoc_solve(Activation::relu(), {0.0});
  REQUIRE(pts.size() == 1);
  CHECK(pts[0].sigma_w2 == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(std::abs(pts[0].chi1 - 1.0) < 1e-5);
}

TEST_CASE("criticality: identity sits at sigma_w2 = 1 and a grid works") {
  const auto pts = analysis::eoc_solve(Activation::identity(), {0.0});
  CHECK(pts[0].sigma_w2 == doctest::Approx(1.0).epsilon(1e-4));

  const auto grid = analysis::eoc_solve(Activation::tanh(), {0.0, 0.05, 0.1});
  REQUIRE(grid.size() == 3);
  for (const auto& p : grid) {
    CHECK(std::abs(p.chi1 - 1.0) < 1e-5);
    CHECK(p.q_star >= 0.0);
  }
  // bias injects variance: criticality needs larger weights as sigma_b2 grows
  CHECK(grid[1].sigma_w2 > grid[0].sigma_w2);
  CHECK(grid[2].sigma_w2 > grid[1].sigma_w2);
}

TEST_CASE("effective variance bookkeeping") {
  const auto dense = analysis::effective_variance(2.0, analysis::RescaleFamily::Dense);
  CHECK(dense.effective_sigma_w2 == 2.0);
  CHECK(dense.unnormalized_sigma_w2 == 2.0);

  const auto sparse = analysis::effective_variance(2.0, analysis::RescaleFamily::Sparse, 0.2);
  CHECK(sparse.effective_sigma_w2 == 2.0);
  CHECK(sparse.unnormalized_sigma_w2 == doctest::Approx(10.0));

  const auto lr = analysis::effective_variance(2.0, analysis::RescaleFamily::LowRank, 0.5);
  CHECK(lr.unnormalized_sigma_w2 == doctest::Approx(4.0));

  CHECK_THROWS_AS(analysis::effective_variance(2.0, analysis::RescaleFamily::Sparse, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(analysis::effective_variance(2.0, analysis::RescaleFamily::Sparse, 1.5),
                  std::invalid_argument);
}

namespace {

std::vector<Vector> toy_inputs(int count, double lo, double hi) {
  std::vector<Vector> xs;
  for (int i = 0; i < count; ++i)
    xs.push_back(Vector::Constant(
        1, lo + (hi - lo) * i / static_cast<double>(std::max(1, count - 1))));
  return xs;
}

}  // namespace

TEST_CASE("posterior: noiseless interpolation at the training points") {
  const auto xs = toy_inputs(20, -2.0, 2.0);
  Vector y(20);
  for (int i = 0; i < 20; ++i) y(i) = std::sin(2.0 * xs[static_cast<std::size_t>(i)](0));
  const auto res = analysis::nngp_regress(xs, y, xs, 3, 0.1, 2.0, Activation::relu(), 0.0);
  CHECK((res.mean - y).cwiseAbs().maxCoeff() < 1e-6);
  CHECK(res.variance.minCoeff() >= 0.0);
}

TEST_CASE("posterior: zero targets give a zero mean and shrunk variance") {
  const auto xs = toy_inputs(10, -1.0, 1.0);
  const auto test = toy_inputs(7, -1.5, 1.5);
  const auto res = analysis::nngp_regress(xs, Vector::Zero(10), test, 2, 0.1, 1.5,
                                          Activation::tanh(), 1e-4);
  CHECK(res.mean.cwiseAbs().maxCoeff() == 0.0);
  const auto tables =
      kernel::kernel_fcn(test, 2, 0.1, 1.5, Activation::tanh());
  for (Eigen::Index i = 0; i < res.variance.size(); ++i) {
    CHECK(res.variance(i) >= 0.0);
    CHECK(res.variance(i) <= tables.back().values(i, i) + 1e-8);
  }
}

TEST_CASE("posterior mean matches an independent dense-solve oracle") {
  const auto xs = toy_inputs(20, -2.0, 2.0);
  Vector y(20);
  for (int i = 0; i < 20; ++i) y(i) = std::sin(2.0 * xs[static_cast<std::size_t>(i)](0));
  const auto test = toy_inputs(9, -2.5, 2.5);
  const double noise = 1e-4;
  const auto res = analysis::nngp_regress(xs, y, test, 3, 0.1, 2.0, Activation::relu(), noise);

  // oracle: full-pivot LU on the same kernel, no Cholesky in the path
  std::vector<Vector> all = xs;
  all.insert(all.end(), test.begin(), test.end());
  const auto tables = kernel::kernel_fcn(all, 3, 0.1, 2.0, Activation::relu());
  const Matrix k = tables.back().values;
  const Matrix k_train = k.topLeftCorner(20, 20) +
                         (noise + res.jitter) * Matrix::Identity(20, 20);
  const Matrix k_cross = k.topRightCorner(20, 9);
  const Vector oracle = k_cross.transpose() * Eigen::FullPivLU<Matrix>(k_train).solve(y);
  CHECK((res.mean - oracle).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("posterior input validation") {
  const auto xs = toy_inputs(5, -1.0, 1.0);
  CHECK_THROWS_AS(analysis::nngp_regress(xs, Vector::Zero(4), xs, 2, 0.0, 1.0,
                                         Activation::tanh(), 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(analysis::nngp_regress(xs, Vector::Zero(5), xs, 2, 0.0, 1.0,
                                         Activation::tanh(), -1.0),
                  std::invalid_argument);
}

TEST_CASE("cnn posterior readout runs end to end") {
  std::vector<Image> train;
  for (int i = 0; i < 4; ++i) {
    Image im(1, 3, 3);
    for (int p = 0; p < 9; ++p) im.data(0, p) = std::cos(i + p * 0.7);
    train.push_back(im);
  }
  Vector y(4);
  y << 1.0, -1.0, 0.5, 0.0;
  const auto res = analysis::nngp_regress_cnn(train, y, {train[0]}, 2, 0.05, 1.5, 3,
                                              Activation::tanh(), 1, 1, 0.0);
  CHECK(res.mean.size() == 1);
  CHECK(std::abs(res.mean(0) - 1.0) < 1e-5);  // interpolates the duplicated image
}
