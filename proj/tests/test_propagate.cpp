#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "piid/io.hpp"
#include "piid/kernel.hpp"
#include "piid/propagate.hpp"
#include "piid/stats.hpp"

using namespace piid;
using propagate::Arch;
using propagate::NetworkConfig;
using propagate::Probe;

namespace {

NetworkConfig small_fcn(const std::vector<int>& widths, const Activation& act,
                        double sigma_b2 = 0.0, double sigma_w2 = 1.0) {
  return NetworkConfig::fcn(widths, act, sigma_b2, SamplerSpec::iid_gaussian(sigma_w2));
}

std::vector<propagate::FcnLayerDraw> manual_layers(const std::vector<Matrix>& ws) {
  std::vector<propagate::FcnLayerDraw> layers;
  for (const auto& w : ws)
    layers.push_back({WeightMatrix{w, SamplerSpec::iid_gaussian(1.0), RngSeed(0)},
                      Vector::Zero(w.rows())});
  return layers;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_THROWS_AS(small_fcn({4, 4}, Activation::tanh()), std::invalid_argument);
  CHECK_THROWS_AS(small_fcn({4, 0, 4}, Activation::tanh()), std::invalid_argument);
  NetworkConfig bad = small_fcn({4, 4, 4}, Activation::tanh());
  bad.layer_specs.front() = SamplerSpec::haar_orthogonal(1.0);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("identity network passes the input through") {
  const NetworkConfig cfg = small_fcn({3, 3, 3, 3}, Activation::identity());
  Vector x(3);
  x << 0.5, -1.0, 2.0;
  const auto h = propagate::forward_fcn(
      cfg, manual_layers({Matrix::Identity(3, 3), Matrix::Identity(3, 3),
                          Matrix::Identity(3, 3)}),
      x);
  REQUIRE(h.size() == 3);
  for (const auto& layer : h) CHECK((layer - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero input with zero bias stays zero") {
  const NetworkConfig cfg = small_fcn({3, 3, 3}, Activation::tanh());
  const auto layers = propagate::draw_fcn_layers(cfg, RngSeed(42), 2);
  const auto h = propagate::forward_fcn(cfg, layers, Vector::Zero(3));
  for (const auto& layer : h) CHECK(layer.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hand-fixed two-layer tanh network") {
  const NetworkConfig cfg = small_fcn({2, 2, 1}, Activation::tanh());
  Matrix w1 = Matrix::Identity(2, 2);
  Matrix w2(1, 2);
  w2 << 1.0, 1.0;
  Vector x(2);
  x << 1.0, 0.0;
  const auto h = propagate::forward_fcn(cfg, manual_layers({w1, w2}), x);
  CHECK(h.back()(0) == doctest::Approx(std::tanh(1.0)).epsilon(1e-12));
}

TEST_CASE("shape mismatch and non-finite reporting") {
  const NetworkConfig cfg = small_fcn({3, 3, 3}, Activation::tanh());
  const auto layers = propagate::draw_fcn_layers(cfg, RngSeed(1), 2);
  CHECK_THROWS_AS(propagate::forward_fcn(cfg, layers, Vector::Zero(4)),
                  std::invalid_argument);

  auto poisoned = manual_layers({Matrix::Identity(3, 3), Matrix::Identity(3, 3)});
  poisoned[1].weights.entries(0, 0) = std::numeric_limits<double>::infinity();
  Vector x = Vector::Ones(3);
  try {
    propagate::forward_fcn(cfg, poisoned, x);
    FAIL("expected a non-finite report");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("layer 2") != std::string::npos);
  }
}

TEST_CASE("1x1 conv is pixelwise scaling and the delta filter is identity") {
  const NetworkConfig cfg = NetworkConfig::cnn({1, 1, 1}, 1, 2, 2, Activation::identity(),
                                               0.0, SamplerSpec::iid_gaussian(1.0));
  Image x(1, 2, 2);
  x.at(0, 0, 0) = 1.0;
  x.at(0, 0, 1) = -2.0;
  x.at(0, 1, 0) = 0.5;
  x.at(0, 1, 1) = 3.0;

  ConvFilterBank scale;
  scale.c_out = scale.c_in = 1;
  scale.k = 1;
  scale.matricized = Matrix::Constant(1, 1, 0.7);
  std::vector<propagate::CnnLayerDraw> layers;
  layers.push_back({scale, Vector::Constant(1, 0.1)});
  const auto h = propagate::forward_cnn(cfg, layers, x);
  for (int p = 0; p < 4; ++p)
    CHECK(h.front()(0, p) == doctest::Approx(0.1 + 0.7 * x.data(0, p)).epsilon(1e-14));

  const NetworkConfig cfg3 = NetworkConfig::cnn({1, 1, 1}, 3, 3, 3, Activation::identity(),
                                                0.0, SamplerSpec::iid_gaussian(1.0));
  Image y(1, 3, 3);
  for (int p = 0; p < 9; ++p) y.data(0, p) = p - 4.0;
  ConvFilterBank delta;
  delta.c_out = delta.c_in = 1;
  delta.k = 3;
  delta.matricized = Matrix::Zero(1, 9);
  delta.matricized(0, 4) = 1.0;  // center tap
  std::vector<propagate::CnnLayerDraw> dlayers;
  dlayers.push_back({delta, Vector::Zero(1)});
  const auto hd = propagate::forward_cnn(cfg3, dlayers, y);
  CHECK((hd.front() - y.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("all-ones 3x3 filter on a constant image sums the patch") {
  const int c_in = 2;
  const double value = 0.75, bias = 0.2;
  const NetworkConfig cfg = NetworkConfig::cnn({c_in, 1, 1}, 3, 5, 5, Activation::identity(),
                                               0.0, SamplerSpec::iid_gaussian(1.0));
  Image x(c_in, 5, 5);
  x.data.setConstant(value);
  ConvFilterBank ones;
  ones.c_out = 1;
  ones.c_in = c_in;
  ones.k = 3;
  ones.matricized = Matrix::Ones(1, 9 * c_in);
  std::vector<propagate::CnnLayerDraw> layers;
  layers.push_back({ones, Vector::Constant(1, bias)});
  const auto h = propagate::forward_cnn(cfg, layers, x);
  // interior pixel: bias + 9 * value summed over channels
  CHECK(h.front()(0, 2 * 5 + 2) == doctest::Approx(bias + 9.0 * value * c_in).epsilon(1e-13));
  // corner pixel only overlaps 4 taps per channel
  CHECK(h.front()(0, 0) == doctest::Approx(bias + 4.0 * value * c_in).epsilon(1e-13));
}

TEST_CASE("ensembles are deterministic and probes address trials by index") {
  const NetworkConfig cfg = small_fcn({4, 8, 8, 8}, Activation::tanh(), 0.01, 2.0);
  std::vector<Vector> inputs{Vector::Ones(4) / 2.0};
  std::vector<Probe> probes{{3, 0, 0, 0, 0}, {3, 1, 0, 0, 0}};
  const auto a = propagate::run_ensemble(cfg, inputs, probes, 64, RngSeed(5));
  const auto b = propagate::run_ensemble(cfg, inputs, probes, 64, RngSeed(5));
  CHECK(a.samples == b.samples);
  CHECK(a.config_digest == b.config_digest);

  const auto single = propagate::run_ensemble(cfg, inputs, probes, 1, RngSeed(5));
  CHECK(single.samples.row(0) == a.samples.row(0));
}

TEST_CASE("probe validation") {
  const NetworkConfig cfg = small_fcn({4, 8, 8}, Activation::tanh());
  std::vector<Vector> inputs{Vector::Ones(4)};
  CHECK_THROWS_AS(propagate::run_ensemble(cfg, inputs, {{5, 0, 0, 0, 0}}, 4, RngSeed(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(propagate::run_ensemble(cfg, inputs, {{2, 9, 0, 0, 0}}, 4, RngSeed(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(propagate::run_ensemble(cfg, inputs, {{2, 0, 0, 0, 1}}, 4, RngSeed(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(propagate::run_ensemble(cfg, inputs, {}, 4, RngSeed(1)),
                  std::invalid_argument);
}

TEST_CASE("probe exchangeability: two neurons share a distribution") {
  const NetworkConfig cfg = small_fcn({4, 30, 30, 30}, Activation::tanh(), 0.0, 2.0);
  std::vector<Vector> inputs{Vector::Ones(4) / 2.0};
  std::vector<Probe> probes{{3, 0, 0, 0, 0}, {3, 17, 0, 0, 0}};
  const auto table = propagate::run_ensemble(cfg, inputs, probes, 3000, RngSeed(6));
  const double ks = stats::ks_two_sample(table.samples.col(0), table.samples.col(1));
  CHECK(ks < stats::ks_two_sample_critical(3000, 3000, 0.01));
}

TEST_CASE("finite-width variance approaches the limiting kernel") {
  // tanh, sigma_w2 = 4, unit-norm input: compare the empirical variance of a
  // layer-3 preactivation at width 128 against the limiting table.
  const double sw2 = 4.0;
  Vector x = Vector::Ones(8) / std::sqrt(8.0);
  const auto tables = kernel::kernel_fcn({x}, 3, 0.0, sw2, Activation::tanh());
  const double limit = tables[2].values(0, 0);

  const NetworkConfig cfg = NetworkConfig::fcn({8, 128, 128, 128}, Activation::tanh(), 0.0,
                                               SamplerSpec::iid_gaussian(sw2));
  const auto table = propagate::run_ensemble(cfg, {x}, {{3, 0, 0, 0, 0}}, 6000, RngSeed(7));
  const Vector samples = table.samples.col(0);
  const double var = samples.squaredNorm() / samples.size();
  CHECK(var == doctest::Approx(limit).epsilon(0.10));
}

TEST_CASE("cnn ensemble matches the direct forward pass") {
  const NetworkConfig cfg = NetworkConfig::cnn({1, 6, 6}, 3, 4, 4, Activation::tanh(), 0.0,
                                               SamplerSpec::iid_gaussian(2.0));
  Image x(1, 4, 4);
  for (int p = 0; p < 16; ++p) x.data(0, p) = std::sin(p + 1.0);
  std::vector<Probe> probes{{2, 1, 2, 3, 0}};
  const auto table = propagate::run_ensemble(cfg, {x}, probes, 3, RngSeed(8));

  const auto layers = propagate::draw_cnn_layers(cfg, RngSeed(8).child(1), 2);
  const auto h = propagate::forward_cnn(cfg, layers, x);
  CHECK(table.samples(1, 0) == h[1](1, 2 * 4 + 3));
}

TEST_CASE("ensemble export writes csv and sidecar") {
  namespace fsys = std::filesystem;
  const fsys::path dir = fsys::temp_directory_path() / "piid_prop_test";
  fsys::create_directories(dir);
  const NetworkConfig cfg = small_fcn({3, 5, 5}, Activation::tanh());
  const auto table = propagate::run_ensemble(cfg, {Vector::Ones(3)}, {{2, 0, 0, 0, 0}}, 5,
                                             RngSeed(9));
  propagate::export_ensemble(table, (dir / "e.csv").string(), (dir / "e.json").string());
  const auto rows = io::read_csv((dir / "e.csv").string());
  CHECK(rows.size() == 6);  // header + 5 trials
  CHECK(rows[1][1] == "l2_n0_x0");
  fsys::remove_all(dir);
}
