#ifndef PIID_REGIME_HPP
#define PIID_REGIME_HPP

#include <functional>
#include <string>
#include <vector>

#include "piid/types.hpp"

namespace piid::regime {

// Monte-Carlo verdicts on the four defining conditions of the weight class:
// (i) row/column exchangeability, (ii) centered, uncorrelated entries with
// variance sigma_w2/n, (iii) bounded normalized eighth projected moment,
// (iv) Kronecker-factorized four-cross moments. Estimates are reported in
// normalized units (variance scaled by n/sigma_w2 and so on) so one tolerance
// rule applies at every size.
struct ConditionRecord {
  std::string condition;  // "i".."iv"
  std::string statistic;
  int n = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  std::string verdict;  // pass | fail | inconclusive
};

struct RegimeReport {
  std::string family;
  double sigma_w2 = 0.0;
  std::vector<int> dims;
  int trials = 0;
  double constant_k_estimate = 0.0;  // condition (iii) constant at the largest n
  std::vector<ConditionRecord> records;
  std::string verdict_i, verdict_ii, verdict_iii, verdict_iv;
  bool pass = false;

  [[nodiscard]] std::string to_json() const;
};

struct MomentCurvePoint {
  int n = 0;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct MomentCurve {
  std::string source;
  std::string projection;
  std::vector<MomentCurvePoint> points;  // n strictly increasing
};

void export_curve(const MomentCurve& curve, const std::string& path);

// Square-matrix draw for one trial (n x n).
struct MatrixSource {
  std::string name;
  double sigma_w2 = 1.0;
  std::function<Matrix(int n, const RngSeed&)> draw;
};
MatrixSource source_from_spec(const SamplerSpec& spec);

// Weight-row draws for the projected-moment curve; each call returns a matrix
// whose rows are (exchangeable) samples of one weight row.
struct RowSource {
  std::string name;
  std::function<Matrix(int n, const RngSeed&)> draw;
};
RowSource rows_from_spec(const SamplerSpec& spec);
// Negative controls: a row of n copies of one standard normal, and the
// cumulative-sum (autoregressive) row X_i = X_{i-1} + eps_i.
RowSource identical_coordinates_control();
RowSource autoregressive_control();

struct ProjectionFamily {
  std::string name;
  std::function<Vector(int)> at;
  static ProjectionFamily ones();
  static ProjectionFamily first_basis();
};

struct SecondMomentReport {
  int n = 0;
  int trials = 0;
  double mean_normalized = 0.0;  // entry mean / (sigma_w/sqrt(n))
  double mean_se = 0.0;
  double variance = 0.0;  // raw E[W_ij^2] estimate
  double variance_se = 0.0;
  double variance_normalized = 0.0;  // times n/sigma_w2, target 1
  double variance_normalized_se = 0.0;
  double max_cross_correlation = 0.0;  // max over index patterns, in sigma_w2/n units
  double cross_se = 0.0;
  bool heavy_tailed = false;  // median-of-means disagreement (Cauchy detector)
};

SecondMomentReport estimate_second_moments(const MatrixSource& src, int n, int trials,
                                           const RngSeed& seed);

// Normalized eighth projected moment n^4 E|<a, W_row>|^8 / ||a||^8 per n;
// with the all-ones projection this is exactly E|sum_j W_1j|^8.
MomentCurve condition_iii_curve(const RowSource& rows, const ProjectionFamily& a,
                                const std::vector<int>& n_list, int trials,
                                const RngSeed& seed);
MomentCurve condition_iii_curve(const SamplerSpec& spec, const ProjectionFamily& a,
                                const std::vector<int>& n_list, int trials,
                                const RngSeed& seed);

struct FourCrossPattern {
  std::string name;
  int ia = 0, ib = 0, ic = 0, id = 0;  // row offsets; columns are fixed j=0, j'=1
  double target = 0.0;
};
std::vector<FourCrossPattern> default_patterns();

struct FourCrossEstimate {
  FourCrossPattern pattern;
  int n = 0;
  double estimate = 0.0;  // n^2/sigma^4 E[W W W W]
  double std_error = 0.0;
};

std::vector<FourCrossEstimate> condition_iv_estimate(const MatrixSource& src,
                                                     const std::vector<int>& n_list,
                                                     int trials, const RngSeed& seed,
                                                     const std::vector<FourCrossPattern>&
                                                         patterns = default_patterns());

struct ExchangeabilityReport {
  struct StatResult {
    std::string name;
    double ks = 0.0;
    double critical = 0.0;
    bool pass = false;
  };
  int n = 0;
  int trials = 0;
  std::vector<StatResult> stats;
  bool pass = false;
};

// Two-sample KS (1% level) between probe statistics of fresh draws and fresh
// draws with a uniform row+column permutation applied after sampling.
ExchangeabilityReport exchangeability_test(const MatrixSource& src, int n, int trials,
                                           const RngSeed& seed);

struct Budget {
  std::vector<int> n_list = {32, 64, 128, 256};
  int trials = 20000;
};

RegimeReport classify(const SamplerSpec& spec, const Budget& budget, const RngSeed& seed);

// Conv-filter draw for one trial at input-channel count n.
struct ConvSource {
  std::string name;
  double sigma_w2 = 1.0;  // 0 = take the bank's implied value
  int k = 3;
  std::function<ConvFilterBank(int c_in, const RngSeed&)> draw;
};
ConvSource conv_source_from_spec(const SamplerSpec& spec, int k);

RegimeReport classify_conv(const SamplerSpec& spec, int k, const Budget& budget,
                           const RngSeed& seed);
RegimeReport classify_conv(const ConvSource& src, const Budget& budget, const RngSeed& seed);

}  // namespace piid::regime

#endif
