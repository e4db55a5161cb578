#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "piid/kernel.hpp"
#include "piid/quadrature.hpp"
#include "piid/rng.hpp"

using namespace piid;

TEST_CASE("quadrature rules integrate exactly on polynomials") {
  const auto& gh = quad::gauss_hermite(40);
  double m0 = 0.0, m2 = 0.0;
  for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
    m0 += gh.weights(i);
    m2 += gh.weights(i) * gh.nodes(i) * gh.nodes(i);
  }
  CHECK(m0 == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));
  CHECK(m2 == doctest::Approx(0.5 * std::sqrt(M_PI)).epsilon(1e-12));

  const auto& gl = quad::gauss_legendre(16);
  double s0 = 0.0, s2 = 0.0;
  for (Eigen::Index i = 0; i < gl.nodes.size(); ++i) {
    s0 += gl.weights(i);
    s2 += gl.weights(i) * gl.nodes(i) * gl.nodes(i);
  }
  CHECK(s0 == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(s2 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  CHECK(quad::gauss_expect([](double x) { return x * x; }, 2.5, 40) ==
        doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("pair expectation closed forms") {
  const Activation id = Activation::identity();
  CHECK(kernel::pair_expectation(1.0, 0.37, 2.0, id) == 0.37);
  CHECK(kernel::pair_expectation(4.0, -1.0, 1.0, id) == -1.0);

  const Activation relu = Activation::relu();
  CHECK(kernel::pair_expectation(3.0, 3.0, 3.0, relu) == doctest::Approx(1.5).epsilon(1e-12));
  // rho = 0 decouples: E[relu]^2 = q/(2 pi)
  CHECK(kernel::pair_expectation(1.0, 0.0, 1.0, relu) ==
        doctest::Approx(1.0 / (2.0 * M_PI)).epsilon(1e-12));
}

TEST_CASE("tanh quadrature matches the frozen Monte-Carlo oracle") {
  // 1e7-sample oracle (polar-normal sampler, seed 777): 0.1860430410
  const double mc = 0.1860430410;
  const double quad_val = kernel::pair_expectation(1.0, 0.5, 1.0, Activation::tanh());
  CHECK(std::abs(quad_val - mc) < 1e-3);
}

TEST_CASE("closed form vs quadrature on the (q, rho) grid") {
  const std::vector<double> qs{0.25, 1.0, 4.0};
  const std::vector<double> rhos{-0.9, 0.0, 0.5, 0.99};
  for (const Activation& act : {Activation::relu(), Activation::erf()}) {
    double worst = 0.0;
    for (double quu : qs)
      for (double qvv : qs)
        for (double rho : rhos) {
          const double quv = rho * std::sqrt(quu * qvv);
          const double closed = kernel::pair_expectation(quu, quv, qvv, act);
          const double numeric = kernel::pair_expectation_quadrature(quu, quv, qvv, act);
          worst = std::max(worst, std::abs(closed - numeric));
        }
    CAPTURE(act.name);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("kinked activations against a live MC oracle") {
  Rng rng(RngSeed(91));
  for (const Activation& act : {Activation::htanh(), Activation::relu()}) {
    const double quu = 1.5, qvv = 0.8, rho = -0.6;
    const double quv = rho * std::sqrt(quu * qvv);
    const long n = 2000000;
    double sum = 0.0, ss = 0.0;
    for (long i = 0; i < n; ++i) {
      const double z1 = rng.normal(), z2 = rng.normal();
      const double u = std::sqrt(quu) * z1;
      const double v = std::sqrt(qvv) * (rho * z1 + std::sqrt(1 - rho * rho) * z2);
      const double p = act(u) * act(v);
      sum += p;
      ss += p * p;
    }
    const double mean = sum / n;
    const double se = std::sqrt((ss / n - mean * mean) / n);
    const double numeric = kernel::pair_expectation_quadrature(quu, quv, qvv, act);
    CAPTURE(act.name);
    CHECK(std::abs(numeric - mean) < 3.0 * se);
  }
}

TEST_CASE("degenerate correlation and zero variance") {
  const Activation th = Activation::tanh();
  // |rho| = 1 reduces to one dimension
  const double perfect = kernel::pair_expectation(1.0, 1.0, 1.0, th);
  const double direct = quad::gauss_expect(
      [](double u) { return std::tanh(u) * std::tanh(u); }, 1.0, 64);
  CHECK(perfect == doctest::Approx(direct).epsilon(1e-10));
  // anti-correlated: odd symmetry flips the sign
  CHECK(kernel::pair_expectation(1.0, -1.0, 1.0, th) ==
        doctest::Approx(-perfect).epsilon(1e-10));
  // zero variance pins phi(0) = 0
  CHECK(kernel::pair_expectation(0.0, 0.0, 1.0, th) == 0.0);
  CHECK(kernel::pair_expectation(0.0, 0.0, 0.0, th) == 0.0);
}

TEST_CASE("non-PSD input is rejected, roundoff excess is clipped") {
  const Activation id = Activation::identity();
  CHECK_THROWS_AS(kernel::pair_expectation(1.0, 1.5, 1.0, id), std::invalid_argument);
  CHECK_THROWS_AS(kernel::pair_expectation(-1.0, 0.0, 1.0, id), std::invalid_argument);
  CHECK(kernel::pair_expectation(1.0, 1.0 + 1e-13, 1.0, id) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(kernel::pair_expectation(1.0, 0.0, 1.0, id, 0), std::invalid_argument);
}

TEST_CASE("first-layer table and the linear telescope") {
  Vector x = Vector::Ones(9) / 3.0;  // unit norm in R^9
  const auto tables = kernel::kernel_fcn({x}, 3, 0.0, 1.0, Activation::tanh());
  CHECK(tables.size() == 4);
  CHECK(tables.front().values(0, 0) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));

  Vector y(3);
  y << 1.0, -2.0, 0.5;
  Vector z(3);
  z << 0.3, 0.0, -1.0;
  const double sw2 = 1.7;
  const auto lin = kernel::kernel_fcn({y, z}, 4, 0.0, sw2, Activation::identity());
  for (const auto& t : lin) {
    const double factor = std::pow(sw2, t.layer) / 3.0;
    CHECK(t.values(0, 1) == doctest::Approx(factor * y.dot(z)).epsilon(1e-12));
  }
}

TEST_CASE("kernel tables are symmetric PSD and satisfy Cauchy-Schwarz") {
  Rng rng(RngSeed(92));
  std::vector<Vector> xs;
  for (int i = 0; i < 4; ++i) {
    Vector x(6);
    for (int d = 0; d < 6; ++d) x(d) = rng.normal();
    xs.push_back(x);
  }
  const auto tables = kernel::kernel_fcn(xs, 6, 0.1, 2.0, Activation::tanh());
  for (const auto& t : tables) {
    CHECK((t.values - t.values.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(t.values);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8 * t.values.trace());
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        CHECK(std::abs(t.values(a, b)) <=
              std::sqrt(t.values(a, a) * t.values(b, b)) + 1e-10);
  }
}

TEST_CASE("psd projection clips roundoff and rejects real violations") {
  Matrix ok(2, 2);
  ok << 1.0, 1.0 + 1e-12, 1.0 + 1e-12, 1.0;
  const Matrix fixed = kernel::project_psd(ok);
  Eigen::SelfAdjointEigenSolver<Matrix> es(fixed);
  CHECK(es.eigenvalues().minCoeff() >= 0.0);

  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(kernel::project_psd(bad), std::runtime_error);
}

TEST_CASE("patch geometry") {
  CHECK_THROWS_AS(kernel::patch(0, 0, 2, 5, 5), std::invalid_argument);
  const auto single = kernel::patch(2, 3, 1, 5, 5);
  REQUIRE(single.size() == 1);
  CHECK(single[0].row == 2);
  CHECK(single[0].col == 3);
  CHECK(single[0].in_range);

  const auto interior = kernel::patch(2, 2, 3, 5, 5);
  CHECK(interior.size() == 9);
  CHECK(std::all_of(interior.begin(), interior.end(),
                    [](const kernel::PatchIndex& p) { return p.in_range; }));

  const auto corner = kernel::patch(0, 0, 3, 5, 5);
  const auto in_range =
      std::count_if(corner.begin(), corner.end(),
                    [](const kernel::PatchIndex& p) { return p.in_range; });
  CHECK(in_range == 4);
  CHECK(corner.size() - static_cast<std::size_t>(in_range) == 5);
}

TEST_CASE("cnn base case") {
  Image im(1, 1, 1);
  im.at(0, 0, 0) = 2.0;
  const auto tables = kernel::kernel_cnn({im}, 1, 0.0, 1.0, 1, Activation::identity());
  CHECK(tables.front().at(0, 0)(0, 0) == doctest::Approx(4.0));
}

TEST_CASE("k=1 cnn equals the pixelwise fcn recursion") {
  Rng rng(RngSeed(93));
  const int channels = 2, rows = 3, cols = 3, depth = 4;
  const double sb2 = 0.3, sw2 = 1.7;
  std::vector<Image> images;
  for (int i = 0; i < 3; ++i) {
    Image im(channels, rows, cols);
    for (Eigen::Index j = 0; j < im.data.cols(); ++j)
      for (Eigen::Index c = 0; c < channels; ++c) im.data(c, j) = rng.normal();
    images.push_back(im);
  }
  const auto cnn = kernel::kernel_cnn(images, depth, sb2, sw2, 1, Activation::tanh());

  double worst = 0.0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      std::vector<Vector> pixel_inputs;
      for (const auto& im : images) pixel_inputs.push_back(im.data.col(r * cols + c));
      const auto fcn = kernel::kernel_fcn(pixel_inputs, depth, sb2, sw2, Activation::tanh());
      for (std::size_t l = 0; l < fcn.size(); ++l)
        for (int a = 0; a < 3; ++a)
          for (int b = 0; b < 3; ++b)
            worst = std::max(worst, std::abs(cnn[l].assembled(a, b, r, c, r, c) -
                                             fcn[l].values(a, b)));
      // non-overlapping pixels share no patch: covariance is the bias term
      if (r * cols + c != 0)
        for (std::size_t l = 0; l < fcn.size(); ++l)
          CHECK(cnn[l].assembled(0, 0, r, c, 0, 0) == doctest::Approx(sb2));
    }
  CHECK(worst < 1e-12);
}

TEST_CASE("assembled covariance sums the patch intersection") {
  // identity activation, one image, k=3: layer-1 assembled covariance between
  // neighboring pixels is sigma_w2 * sum over the shared 3x2 window
  Image im(1, 4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) im.at(0, r, c) = 1.0 + r + 4 * c;
  const double sw2 = 2.0;
  const auto tables = kernel::kernel_cnn({im}, 1, 0.0, sw2, 3, Activation::identity());
  const auto& t1 = tables.front();
  double manual = 0.0;
  for (int r = 0; r <= 2; ++r)
    for (int c = 1; c <= 2; ++c) manual += t1.at(r, c)(0, 0);
  CHECK(t1.assembled(0, 0, 1, 1, 1, 2) == doctest::Approx(sw2 * manual).epsilon(1e-12));
}
