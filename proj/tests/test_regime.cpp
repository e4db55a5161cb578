#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "piid/regime.hpp"
#include "piid/weights.hpp"

using namespace piid;

namespace {

// Reduced budget keeps the suite quick; the acceptance binary runs full scale.
regime::Budget small_budget() {
  regime::Budget b;
  b.n_list = {16, 32, 64};
  b.trials = 3000;
  return b;
}

}  // namespace

TEST_CASE("second moments: gaussian variance and orthogonal cross-correlation") {
  const auto src = regime::source_from_spec(SamplerSpec::iid_gaussian(2.0));
  const auto rep = regime::estimate_second_moments(src, 100, 2000, RngSeed(1));
  CHECK(std::abs(rep.variance - 0.02) < 3.0 * rep.variance_se);
  CHECK(std::abs(rep.mean_normalized) < 3.0 * rep.mean_se + 0.01);
  CHECK_FALSE(rep.heavy_tailed);

  const auto orth = regime::source_from_spec(SamplerSpec::haar_orthogonal(2.0));
  const auto orep = regime::estimate_second_moments(orth, 100, 2000, RngSeed(2));
  CHECK(std::abs(orep.max_cross_correlation) < 3.0 * orep.cross_se + 0.01);
  CHECK(orep.variance_normalized == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(regime::estimate_second_moments(src, 100, 50, RngSeed(3)),
                  std::invalid_argument);
}

TEST_CASE("second moments: deterministic all-ones matrix fails centering") {
  regime::MatrixSource src{"all_ones", 1.0, [](int n, const RngSeed&) {
                             return Matrix::Constant(n, n, 1.0 / std::sqrt(double(n)));
                           }};
  const auto rep = regime::estimate_second_moments(src, 64, 200, RngSeed(4));
  // normalized mean is sqrt(n)/sigma times 1/sqrt(n) = 1
  CHECK(rep.mean_normalized == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(rep.mean_normalized) > 3.0 * rep.mean_se + 0.01);
}

TEST_CASE("cauchy triggers the heavy-tail detector") {
  const auto src = regime::source_from_spec(SamplerSpec::iid_cauchy());
  const auto rep = regime::estimate_second_moments(src, 64, 2000, RngSeed(5));
  CHECK(rep.heavy_tailed);
}

TEST_CASE("condition (iii): gaussian curve is flat at 105 sigma_w^8") {
  const auto curve = regime::condition_iii_curve(SamplerSpec::iid_gaussian(2.0),
                                                 regime::ProjectionFamily::ones(),
                                                 {32, 64, 128, 256}, 8000, RngSeed(6));
  const double target = 105.0 * std::pow(2.0, 4);  // 105 sigma_w2^4 = 1680
  for (const auto& p : curve.points) {
    CAPTURE(p.n);
    CHECK(std::abs(p.estimate - target) < 3.0 * p.std_error);
  }
  // slope of the normalized curve is statistically zero
  const double diff = curve.points.back().estimate - curve.points.front().estimate;
  const double se = std::hypot(curve.points.back().std_error, curve.points.front().std_error);
  CHECK(std::abs(diff) < 2.0 * se);
}

TEST_CASE("condition (iii): identical-coordinates and autoregressive controls explode") {
  const auto ident = regime::condition_iii_curve(regime::identical_coordinates_control(),
                                                 regime::ProjectionFamily::ones(),
                                                 {32, 64, 128, 256}, 4000, RngSeed(7));
  // E|sum|^8 = 105 n^8: each doubling multiplies by 256
  CHECK(ident.points.back().estimate > 10.0 * ident.points.front().estimate);
  for (std::size_t i = 1; i < ident.points.size(); ++i)
    CHECK(ident.points[i].estimate > ident.points[i - 1].estimate);
  CHECK(ident.points.front().estimate ==
        doctest::Approx(105.0 * std::pow(32.0, 8)).epsilon(0.5));

  const auto ar = regime::condition_iii_curve(regime::autoregressive_control(),
                                              regime::ProjectionFamily::ones(),
                                              {32, 64, 128, 256}, 4000, RngSeed(8));
  CHECK(ar.points.back().estimate > 10.0 * ar.points.front().estimate);
}

TEST_CASE("condition (iii) input validation") {
  CHECK_THROWS_AS(regime::condition_iii_curve(SamplerSpec::iid_gaussian(1.0),
                                              regime::ProjectionFamily::ones(), {32, 32}, 500,
                                              RngSeed(9)),
                  std::invalid_argument);
}

TEST_CASE("condition (iv): iid gaussian patterns hit their Kronecker targets") {
  const auto src = regime::source_from_spec(SamplerSpec::iid_gaussian(2.0));
  const auto table = regime::condition_iv_estimate(src, {64}, 4000, RngSeed(10));
  for (const auto& e : table) {
    CAPTURE(e.pattern.name);
    CHECK(std::abs(e.estimate - e.pattern.target) < 3.5 * e.std_error + 1e-3);
  }
}

TEST_CASE("condition (iv): orthogonal all-equal estimates approach one from n(n+1)/((n-1)(n+2))") {
  const auto src = regime::source_from_spec(SamplerSpec::haar_orthogonal(1.0));
  const auto table = regime::condition_iv_estimate(src, {10, 50}, 20000, RngSeed(11),
                                                   {{"pairwise_equal", 0, 0, 1, 1, 1.0}});
  for (const auto& e : table) {
    const double n = e.n;
    const double finite_n = n * (n + 1.0) / ((n - 1.0) * (n + 2.0));
    CAPTURE(e.n);
    CHECK(std::abs(e.estimate - finite_n) < 3.0 * e.std_error);
  }
  CHECK(std::abs(table[0].estimate - 1.0) > std::abs(table[1].estimate - 1.0) - 0.01);
}

TEST_CASE("exchangeability: samplers pass, a pinned-row control fails") {
  const auto src = regime::source_from_spec(SamplerSpec::block_sparse(2.0, 0.2));
  const auto rep = regime::exchangeability_test(src, 24, 2000, RngSeed(12));
  CHECK(rep.pass);

  regime::MatrixSource pinned{"zero_first_row", 1.0, [](int n, const RngSeed& s) {
                                Matrix w =
                                    weights::sample_iid(n, n, SamplerSpec::iid_gaussian(1.0), s)
                                        .entries;
                                w.row(0).setZero();
                                return w;
                              }};
  const auto bad = regime::exchangeability_test(pinned, 24, 2000, RngSeed(13));
  CHECK_FALSE(bad.pass);
  bool row_stat_failed = false;
  for (const auto& s : bad.stats)
    if (s.name == "row0_norm") row_stat_failed = !s.pass;
  CHECK(row_stat_failed);

  CHECK_THROWS_AS(regime::exchangeability_test(src, 24, 500, RngSeed(14)),
                  std::invalid_argument);
}

TEST_CASE("classify: orthogonal passes all four conditions") {
  const auto rep = regime::classify(SamplerSpec::haar_orthogonal(2.0), small_budget(),
                                    RngSeed(15));
  CHECK(rep.verdict_i == "pass");
  CHECK(rep.verdict_ii == "pass");
  CHECK(rep.verdict_iii == "pass");
  CHECK(rep.verdict_iv == "pass");
  CHECK(rep.pass);
  CHECK(rep.constant_k_estimate > 0.0);
}

TEST_CASE("classify: cauchy fails condition (ii)") {
  const auto rep = regime::classify(SamplerSpec::iid_cauchy(), small_budget(), RngSeed(16));
  CHECK(rep.verdict_ii == "fail");
  CHECK_FALSE(rep.pass);
}

TEST_CASE("classify: permuted block-sparse passes") {
  const auto rep = regime::classify(SamplerSpec::block_sparse(2.0, 0.2), small_budget(),
                                    RngSeed(17));
  CHECK(rep.pass);
}

TEST_CASE("report serializes to json") {
  const auto rep = regime::classify(SamplerSpec::iid_gaussian(1.0), small_budget(),
                                    RngSeed(18));
  const std::string j = rep.to_json();
  CHECK(j.find("\"family\": \"iid_gaussian\"") != std::string::npos);
  CHECK(j.find("constant_k_estimate") != std::string::npos);
  CHECK(rep.pass);
}

TEST_CASE("standard error shrinks like 1/sqrt(trials)") {
  const auto src = regime::source_from_spec(SamplerSpec::iid_gaussian(2.0));
  const auto one = regime::estimate_second_moments(src, 32, 2000, RngSeed(19));
  const auto two = regime::estimate_second_moments(src, 32, 4000, RngSeed(19));
  const double ratio = two.variance_se / one.variance_se;
  CHECK(ratio > 1.0 / std::sqrt(2.0) - 0.1);
  CHECK(ratio < 1.0 / std::sqrt(2.0) + 0.1);
}

TEST_CASE("classify_conv: orthogonal filters pass with the tensor targets") {
  regime::Budget b;
  b.n_list = {2, 4};
  b.trials = 3000;
  const auto rep = regime::classify_conv(SamplerSpec::orthogonal_conv(0.0), 3, b, RngSeed(20));
  CHECK(rep.pass);
  // implied scale of the tall construction is 1/k^4
  CHECK(rep.sigma_w2 == doctest::Approx(1.0 / 81.0));
}

TEST_CASE("classify_conv: iid gaussian filters pass") {
  regime::Budget b;
  b.n_list = {4, 8};
  b.trials = 3000;
  const auto rep = regime::classify_conv(SamplerSpec::iid_gaussian(2.0), 3, b, RngSeed(21));
  CHECK(rep.pass);
}

TEST_CASE("classify_conv: filters shared across input channels fail") {
  regime::ConvSource src;
  src.name = "shared_across_j";
  src.k = 3;
  src.sigma_w2 = 2.0;
  src.draw = [](int c_in, const RngSeed& s) {
    // one filter per output channel copied to every input channel
    ConvFilterBank bank =
        weights::sample_conv(c_in, c_in, 3, SamplerSpec::iid_gaussian(2.0), s);
    for (int j = 1; j < c_in; ++j)
      bank.matricized.middleCols(9 * j, 9) = bank.matricized.leftCols(9);
    return bank;
  };
  regime::Budget b;
  b.n_list = {4, 8};
  b.trials = 3000;
  const auto rep = regime::classify_conv(src, b, RngSeed(22));
  CHECK(rep.verdict_iv == "fail");
  CHECK_FALSE(rep.pass);
}
