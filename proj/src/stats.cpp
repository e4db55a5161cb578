#include "piid/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "piid/io.hpp"

namespace piid::stats {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;
constexpr double kSqrt2Pi = 2.5066282746310002;

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

Vector sorted(const Vector& v) {
  Vector s = v;
  std::sort(s.data(), s.data() + s.size());
  return s;
}

double pearson(const Vector& a, const Vector& b) {
  const double ma = a.mean(), mb = b.mean();
  const Vector ca = a.array() - ma, cb = b.array() - mb;
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  if (denom == 0.0) return 0.0;
  return ca.dot(cb) / denom;
}

double ks_statistic(const Vector& samples, double sigma) {
  const Vector z = sorted(samples);
  const auto t = static_cast<double>(z.size());
  double d = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double cdf = normal_cdf(z(i) / sigma);
    d = std::max(d, (static_cast<double>(i) + 1.0) / t - cdf);
    d = std::max(d, cdf - static_cast<double>(i) / t);
  }
  return d;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Acklam's rational approximation, polished by one Halley step.
double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("quantile needs p in (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

GaussFitReport ks_to_gaussian(const Vector& samples, double target_variance, double level) {
  if (samples.size() < 50) throw std::invalid_argument("ks_to_gaussian needs >= 50 samples");
  if (!(target_variance > 0.0))
    throw std::invalid_argument("target variance must be positive");
  GaussFitReport r;
  r.sample_count = samples.size();
  r.target_variance = target_variance;
  r.level = level;
  const double sqrt_t = std::sqrt(static_cast<double>(samples.size()));
  r.ks_critical_5 = 1.36 / sqrt_t;
  r.ks_critical_1 = 1.63 / sqrt_t;
  r.ks = ks_statistic(samples, std::sqrt(target_variance));
  r.wasserstein1 = wasserstein1_to_gaussian(samples, target_variance);
  r.empirical_cov = Matrix::Constant(
      1, 1,
      (samples.array() - samples.mean()).square().sum() /
          std::max<double>(1.0, static_cast<double>(samples.size()) - 1.0));
  r.pass = r.ks < (level <= 0.01 ? r.ks_critical_1 : r.ks_critical_5);
  return r;
}

double wasserstein1_to_gaussian(const Vector& samples, double target_variance) {
  if (samples.size() < 50)
    throw std::invalid_argument("wasserstein1_to_gaussian needs >= 50 samples");
  if (!(target_variance > 0.0))
    throw std::invalid_argument("target variance must be positive");
  const double sigma = std::sqrt(target_variance);
  const Vector z = sorted(samples);
  const auto t = z.size();

  // Antiderivative of the target CDF; |F_emp - F| integrates in closed form
  // on each order-statistic segment, splitting where F crosses the step.
  auto anti = [sigma](double x) {
    const double u = x / sigma;
    return x * normal_cdf(u) + sigma * normal_pdf(u);
  };
  auto segment = [&](double lo, double hi, double c) {
    auto piece = [&](double l, double h) {
      return anti(h) - anti(l) - c * (h - l);  // integral of (F - c)
    };
    if (c <= 0.0) return piece(lo, hi);
    if (c >= 1.0) return -piece(lo, hi);
    const double cross = sigma * normal_quantile(c);
    if (cross <= lo) return piece(lo, hi);
    if (cross >= hi) return -piece(lo, hi);
    return -piece(lo, cross) + piece(cross, hi);
  };

  double w = anti(z(0));  // lower tail: integral of F up to the first sample
  for (Eigen::Index i = 0; i + 1 < t; ++i)
    w += segment(z(i), z(i + 1), (static_cast<double>(i) + 1.0) / static_cast<double>(t));
  w += anti(z(t - 1)) - z(t - 1);  // upper tail: integral of 1 - F
  return w;
}

GaussFitReport joint_gauss_fit(const Vector& a, const Vector& b, const Matrix& target_cov,
                               double level, double cov_tol) {
  if (a.size() != b.size()) throw std::invalid_argument("joint_gauss_fit: length mismatch");
  if (a.size() < 100) throw std::invalid_argument("joint_gauss_fit needs >= 100 samples");
  if (target_cov.rows() != 2 || target_cov.cols() != 2)
    throw std::invalid_argument("target covariance must be 2x2");

  GaussFitReport r;
  r.sample_count = a.size();
  r.target_cov = target_cov;
  r.level = level;
  const double t = static_cast<double>(a.size());
  r.ks_critical_5 = 1.36 / std::sqrt(t);
  r.ks_critical_1 = 1.63 / std::sqrt(t);

  const double ma = a.mean(), mb = b.mean();
  const Vector ca = a.array() - ma, cb = b.array() - mb;
  Matrix emp(2, 2);
  emp(0, 0) = ca.squaredNorm() / (t - 1.0);
  emp(1, 1) = cb.squaredNorm() / (t - 1.0);
  emp(0, 1) = emp(1, 0) = ca.dot(cb) / (t - 1.0);
  r.empirical_cov = emp;
  r.cov_rel_error = (emp - target_cov).norm() / target_cov.norm();

  const double vsum = target_cov(0, 0) + 2.0 * target_cov(0, 1) + target_cov(1, 1);
  const double vdiff = target_cov(0, 0) - 2.0 * target_cov(0, 1) + target_cov(1, 1);
  r.component_ks.push_back(ks_statistic(a, std::sqrt(target_cov(0, 0))));
  r.component_ks.push_back(ks_statistic(b, std::sqrt(target_cov(1, 1))));
  if (vsum > 1e-12) r.component_ks.push_back(ks_statistic(a + b, std::sqrt(vsum)));
  if (vdiff > 1e-12) r.component_ks.push_back(ks_statistic(a - b, std::sqrt(vdiff)));
  r.ks = *std::max_element(r.component_ks.begin(), r.component_ks.end());

  const double crit = level <= 0.01 ? r.ks_critical_1 : r.ks_critical_5;
  r.pass = r.cov_rel_error < cov_tol && r.ks < crit;
  return r;
}

IndependenceReport independence_check(const Vector& a, const Vector& b, double slack) {
  if (a.size() != b.size())
    throw std::invalid_argument("independence_check: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("independence_check needs >= 2 samples");
  IndependenceReport r;
  r.correlation = pearson(a, b);
  r.threshold = 3.0 / std::sqrt(static_cast<double>(a.size())) + slack;
  r.pass = std::abs(r.correlation) < r.threshold;
  return r;
}

std::vector<std::pair<double, double>> qq_points(const Vector& samples,
                                                 double target_variance) {
  if (samples.size() < 2) throw std::invalid_argument("qq_points needs >= 2 samples");
  const double sigma = std::sqrt(target_variance);
  const Vector z = sorted(samples);
  std::vector<std::pair<double, double>> pts;
  pts.reserve(static_cast<std::size_t>(z.size()));
  const double t = static_cast<double>(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i)
    pts.emplace_back(sigma * normal_quantile((static_cast<double>(i) + 0.5) / t), z(i));
  return pts;
}

double ks_two_sample(const Vector& a, const Vector& b) {
  if (a.size() == 0 || b.size() == 0)
    throw std::invalid_argument("ks_two_sample: empty sample");
  const Vector sa = sorted(a), sb = sorted(b);
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  double d = 0.0;
  Eigen::Index i = 0, j = 0;
  while (i < sa.size() && j < sb.size()) {
    if (sa(i) <= sb(j))
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_two_sample_critical(std::int64_t n, std::int64_t m, double level) {
  const double c = level <= 0.01 ? 1.628 : 1.358;
  return c * std::sqrt(static_cast<double>(n + m) /
                       (static_cast<double>(n) * static_cast<double>(m)));
}

void export_histogram(const Vector& samples, int bins, const std::string& path) {
  if (bins < 1) throw std::invalid_argument("need at least one bin");
  if (samples.size() == 0) throw std::invalid_argument("empty sample");
  const double lo = samples.minCoeff(), hi = samples.maxCoeff();
  const double width = hi > lo ? (hi - lo) / bins : 1.0;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(bins), 0);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    auto bin = static_cast<std::int64_t>((samples(i) - lo) / width);
    bin = std::clamp<std::int64_t>(bin, 0, bins - 1);
    ++counts[static_cast<std::size_t>(bin)];
  }
  io::CsvWriter csv(path);
  csv.row({"bin_left", "bin_right", "count"});
  for (int bin = 0; bin < bins; ++bin)
    csv.row({io::g17(lo + bin * width), io::g17(lo + (bin + 1) * width),
             std::to_string(counts[static_cast<std::size_t>(bin)])});
  csv.close();
}

void export_qq(const std::vector<std::pair<double, double>>& points,
               const std::string& path) {
  io::CsvWriter csv(path);
  csv.row({"theoretical", "empirical"});
  for (const auto& [th, emp] : points) csv.row({io::g17(th), io::g17(emp)});
  csv.close();
}

}  // namespace piid::stats
