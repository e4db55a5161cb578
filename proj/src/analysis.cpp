#include "piid/analysis.hpp"

#include <Eigen/Cholesky>

#include <cmath>

#include "piid/io.hpp"
#include "piid/kernel.hpp"
#include "piid/quadrature.hpp"

namespace piid::analysis {

namespace {

constexpr double kOverflowGuard = 1e12;

}  // namespace

double variance_map(double q, double sigma_b2, double sigma_w2, const Activation& act,
                    int order) {
  if (q < 0.0) throw std::invalid_argument("variance must be nonnegative");
  return sigma_b2 + sigma_w2 * kernel::pair_expectation(q, q, q, act, order);
}

FixedPointResult fixed_point(double sigma_b2, double sigma_w2, const Activation& act,
                             double tol, int max_iter, double q0, int order) {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  FixedPointResult res;
  double q = q0;
  for (int it = 0; it < max_iter; ++it) {
    const double mapped = variance_map(q, sigma_b2, sigma_w2, act, order);
    res.iterations = it + 1;
    if (std::abs(mapped - q) < tol) {
      res.q_star = q;
      res.converged = true;
      return res;
    }
    q = 0.5 * q + 0.5 * mapped;
    if (!std::isfinite(q) || q > kOverflowGuard) {
      res.diverged = true;  // chaotic variance growth
      res.q_star = q;
      return res;
    }
  }
  res.q_star = q;
  return res;
}

double chi1(double q_star, double sigma_w2, const Activation& act, int order) {
  if (q_star < 0.0) throw std::invalid_argument("q_star must be nonnegative");
  switch (act.kind) {
    case ActKind::Identity: return sigma_w2;
    case ActKind::ReLU: return 0.5 * sigma_w2;  // phi'^2 is the half-line indicator
    default: break;
  }
  if (!act.deriv) throw std::invalid_argument("activation derivative unavailable");
  auto d2 = [&](double u) {
    const double d = act.deriv(u);
    return d * d;
  };
  if (q_star < 1e-14) return sigma_w2 * d2(0.0);
  if (act.kinks.empty()) return sigma_w2 * quad::gauss_expect(d2, q_star, order);
  return sigma_w2 * quad::gauss_expect_piecewise(d2, q_star, act.kinks, order);
}

namespace {

// Damped iteration stalls when the variance map is near-identity (close to
// criticality); refine the stable fixed point by bisecting map(q) - q inside
// the bracket the iteration ends up in.
double solve_q_star(double sigma_b2, double sigma_w2, const Activation& act, int order,
                    bool* diverged) {
  const FixedPointResult fp =
      fixed_point(sigma_b2, sigma_w2, act, 1e-13, 3000, 1.0, order);
  *diverged = fp.diverged;
  if (fp.diverged) return fp.q_star;
  if (fp.converged) return fp.q_star;

  auto g = [&](double q) { return variance_map(q, sigma_b2, sigma_w2, act, order) - q; };
  double hi = std::max(fp.q_star, 1e-30);
  while (g(hi) > 0.0) {
    hi *= 2.0;
    if (hi > kOverflowGuard) {
      *diverged = true;
      return hi;
    }
  }
  // Probe downward for the positive side of the stable root.
  double lo = hi * 0.5;
  while (g(lo) <= 0.0) {
    lo *= 0.5;
    if (lo < 1e-30) return 0.0;  // only the trivial fixed point remains
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16 * std::max(1.0, hi); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<EocPoint> eoc_solve(const Activation& act, const std::vector<double>& sigma_b2_grid,
                                double tol, int order) {
  if (sigma_b2_grid.empty()) throw std::invalid_argument("empty sigma_b2 grid");
  std::vector<EocPoint> out;
  out.reserve(sigma_b2_grid.size());

  for (double sigma_b2 : sigma_b2_grid) {
    auto slope = [&](double sigma_w2) {
      bool diverged = false;
      const double q = solve_q_star(sigma_b2, sigma_w2, act, order, &diverged);
      if (diverged) return 2.0;  // chaotic side
      return chi1(q, sigma_w2, act, order);
    };
    double lo = 1e-4, hi = 25.0;
    double f_lo = slope(lo) - 1.0, f_hi = slope(hi) - 1.0;
    if (f_lo * f_hi > 0.0)
      throw std::runtime_error("eoc_solve: no criticality crossing in [1e-4, 25] at sigma_b2=" +
                               io::g17(sigma_b2));
    while (hi - lo > std::min(tol, 1e-9)) {
      const double mid = 0.5 * (lo + hi);
      const double f_mid = slope(mid) - 1.0;
      if (f_lo * f_mid <= 0.0) {
        hi = mid;
        f_hi = f_mid;
      } else {
        lo = mid;
        f_lo = f_mid;
      }
    }
    EocPoint p;
    p.sigma_b2 = sigma_b2;
    p.sigma_w2 = 0.5 * (lo + hi);
    bool diverged = false;
    p.q_star = solve_q_star(sigma_b2, p.sigma_w2, act, order, &diverged);
    p.chi1 = chi1(p.q_star, p.sigma_w2, act, order);
    out.push_back(p);
  }
  return out;
}

void export_eoc(const std::vector<EocPoint>& curve, const std::string& path) {
  io::CsvWriter csv(path);
  csv.row({"sigma_b2", "sigma_w2", "q_star"});
  for (const auto& p : curve)
    csv.row({io::g17(p.sigma_b2), io::g17(p.sigma_w2), io::g17(p.q_star)});
  csv.close();
}

EffectiveVariance effective_variance(double sigma_w2, RescaleFamily family, double fraction) {
  if (!(sigma_w2 > 0.0)) throw std::invalid_argument("sigma_w2 must be positive");
  switch (family) {
    case RescaleFamily::Dense: return {sigma_w2, sigma_w2};
    case RescaleFamily::Sparse:
    case RescaleFamily::LowRank:
      if (!(fraction > 0.0 && fraction <= 1.0))
        throw std::invalid_argument("fraction must lie in (0,1]");
      return {sigma_w2, sigma_w2 / fraction};
  }
  throw std::invalid_argument("unknown family");
}

namespace {

PosteriorResult solve_posterior(const Matrix& full_kernel, const Vector& targets,
                                Eigen::Index n_train, double noise_variance) {
  const Eigen::Index n_test = full_kernel.rows() - n_train;
  const Matrix k_train = full_kernel.topLeftCorner(n_train, n_train);
  const Matrix k_cross = full_kernel.topRightCorner(n_train, n_test);

  Eigen::LLT<Matrix> llt;
  double jitter = 1e-10;
  for (;; jitter *= 10.0) {
    Matrix sys = k_train + (noise_variance + jitter) * Matrix::Identity(n_train, n_train);
    llt.compute(sys);
    if (llt.info() == Eigen::Success) break;
    if (jitter > 1e-6)
      throw std::runtime_error("posterior factorization failed at maximum jitter");
  }

  PosteriorResult res;
  res.jitter = jitter;
  const Vector alpha = llt.solve(targets);
  res.mean = k_cross.transpose() * alpha;
  const Matrix v = llt.matrixL().solve(k_cross);
  res.variance.resize(n_test);
  for (Eigen::Index i = 0; i < n_test; ++i)
    res.variance(i) =
        std::max(0.0, full_kernel(n_train + i, n_train + i) - v.col(i).squaredNorm());

  double log_det = 0.0;
  for (Eigen::Index i = 0; i < n_train; ++i) log_det += std::log(llt.matrixL()(i, i));
  res.log_marginal_likelihood = -0.5 * targets.dot(alpha) - log_det -
                                0.5 * static_cast<double>(n_train) * std::log(2.0 * M_PI);
  return res;
}

}  // namespace

PosteriorResult nngp_regress(const std::vector<Vector>& train_inputs, const Vector& targets,
                             const std::vector<Vector>& test_inputs, int depth,
                             double sigma_b2, double sigma_w2, const Activation& act,
                             double noise_variance) {
  if (noise_variance < 0.0) throw std::invalid_argument("noise variance must be nonnegative");
  if (static_cast<Eigen::Index>(train_inputs.size()) != targets.size())
    throw std::invalid_argument("targets length must match the training set");
  std::vector<Vector> all = train_inputs;
  all.insert(all.end(), test_inputs.begin(), test_inputs.end());
  const auto tables = kernel::kernel_fcn(all, depth, sigma_b2, sigma_w2, act);
  return solve_posterior(tables.back().values, targets,
                         static_cast<Eigen::Index>(train_inputs.size()), noise_variance);
}

PosteriorResult nngp_regress_cnn(const std::vector<Image>& train_inputs, const Vector& targets,
                                 const std::vector<Image>& test_inputs, int depth,
                                 double sigma_b2, double sigma_w2, int k,
                                 const Activation& act, int readout_row, int readout_col,
                                 double noise_variance) {
  if (noise_variance < 0.0) throw std::invalid_argument("noise variance must be nonnegative");
  if (static_cast<Eigen::Index>(train_inputs.size()) != targets.size())
    throw std::invalid_argument("targets length must match the training set");
  std::vector<Image> all = train_inputs;
  all.insert(all.end(), test_inputs.begin(), test_inputs.end());
  const auto tables = kernel::kernel_cnn(all, depth, sigma_b2, sigma_w2, k, act);
  const auto n = static_cast<Eigen::Index>(all.size());
  Matrix full(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a; b < n; ++b)
      full(a, b) = full(b, a) =
          tables.back().assembled(static_cast<int>(a), static_cast<int>(b), readout_row,
                                  readout_col, readout_row, readout_col);
  return solve_posterior(full, targets, static_cast<Eigen::Index>(train_inputs.size()),
                         noise_variance);
}

}  // namespace piid::analysis
