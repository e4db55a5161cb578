#ifndef PIID_STATS_HPP
#define PIID_STATS_HPP

#include <string>
#include <utility>
#include <vector>

#include "piid/types.hpp"

namespace piid::stats {

double normal_cdf(double x);
double normal_quantile(double p);

// Goodness of fit of a sample against the fully specified Gaussian limit
// (variance from the kernel engine, never estimated from the sample).
struct GaussFitReport {
  std::int64_t sample_count = 0;
  double target_variance = 0.0;
  Matrix target_cov;     // 2x2 for joint fits, empty otherwise
  double ks = 0.0;       // worst KS across the inspected statistics
  double ks_critical_5 = 0.0;
  double ks_critical_1 = 0.0;
  double wasserstein1 = 0.0;
  Matrix empirical_cov;  // 1x1 or 2x2
  double cov_rel_error = 0.0;            // Frobenius, joint fits only
  std::vector<double> component_ks;      // marginals then sum/difference projections
  double level = 0.01;
  bool pass = false;
};

// One-sample KS against N(0, target_variance); critical values 1.36/sqrt(T)
// at 5% and 1.63/sqrt(T) at 1%. Requires >= 50 samples.
GaussFitReport ks_to_gaussian(const Vector& samples, double target_variance,
                              double level = 0.01);

// Exact order-statistics W1 distance to N(0, target_variance).
double wasserstein1_to_gaussian(const Vector& samples, double target_variance);

// Empirical 2x2 covariance against a target (Frobenius relative error, default
// tolerance 5%) plus marginal KS and KS on the variance-normalized sum and
// difference projections. Requires equal lengths >= 100.
GaussFitReport joint_gauss_fit(const Vector& a, const Vector& b, const Matrix& target_cov,
                               double level = 0.01, double cov_tol = 0.05);

struct IndependenceReport {
  double correlation = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

// Pass iff |corr| < 3/sqrt(T) + slack (slack covers O(1/width) finite-size bias).
IndependenceReport independence_check(const Vector& a, const Vector& b, double slack = 0.05);

// (theoretical, empirical) quantile pairs at plotting positions (i-0.5)/T.
std::vector<std::pair<double, double>> qq_points(const Vector& samples,
                                                 double target_variance);

double ks_two_sample(const Vector& a, const Vector& b);
double ks_two_sample_critical(std::int64_t n, std::int64_t m, double level);

void export_histogram(const Vector& samples, int bins, const std::string& path);
void export_qq(const std::vector<std::pair<double, double>>& points,
               const std::string& path);

}  // namespace piid::stats

#endif
