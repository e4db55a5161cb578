#ifndef PIID_ANALYSIS_HPP
#define PIID_ANALYSIS_HPP

#include <string>
#include <vector>

#include "piid/activation.hpp"
#include "piid/propagate.hpp"
#include "piid/types.hpp"

namespace piid::analysis {

// One solved criticality point: chi1(q*) = 1 at (sigma_b2, sigma_w2).
struct EocPoint {
  double sigma_b2 = 0.0;
  double sigma_w2 = 0.0;
  double q_star = 0.0;
  double chi1 = 0.0;
};

// Single-input layer map q -> sigma_b2 + sigma_w2 E[phi(u)^2], u ~ N(0, q).
double variance_map(double q, double sigma_b2, double sigma_w2, const Activation& act,
                    int order = 40);

struct FixedPointResult {
  double q_star = 0.0;
  int iterations = 0;
  bool converged = false;
  bool diverged = false;  // chaotic variance growth past the overflow guard
};

// Damped iteration (factor 0.5) from q0; a map that is the identity returns
// q0 immediately.
FixedPointResult fixed_point(double sigma_b2, double sigma_w2, const Activation& act,
                             double tol = 1e-9, int max_iter = 200000, double q0 = 1.0,
                             int order = 40);

// chi1 = sigma_w2 * E[phi'(u)^2], u ~ N(0, q_star). Closed forms for identity
// and ReLU, quadrature for differentiable activations.
double chi1(double q_star, double sigma_w2, const Activation& act, int order = 40);

// For each sigma_b2 in the grid, bisect sigma_w2 in [1e-4, 25] until
// chi1(q*(sigma_w2), sigma_w2) = 1.
std::vector<EocPoint> eoc_solve(const Activation& act, const std::vector<double>& sigma_b2_grid,
                                double tol = 1e-6, int order = 40);

void export_eoc(const std::vector<EocPoint>& curve, const std::string& path);

enum class RescaleFamily { Dense, Sparse, LowRank };

struct EffectiveVariance {
  double effective_sigma_w2 = 0.0;   // what a dense net must use: unchanged
  double unnormalized_sigma_w2 = 0.0;  // on-support / factor-entry scale realizing it
};

// With every sampler normalized to E[W_ij^2] = sigma_w2/n, families match
// dense signal propagation at the same sigma_w2; what changes is the raw
// on-support variance (1/density) or factor variance (m/r).
EffectiveVariance effective_variance(double sigma_w2, RescaleFamily family,
                                     double fraction = 1.0);

struct PosteriorResult {
  Vector mean;
  Vector variance;
  double log_marginal_likelihood = 0.0;
  double jitter = 0.0;
};

// Exact GP regression under the limiting network kernel: posterior mean
// K*^T (K + noise I)^{-1} y and variance K** - K*^T (K + noise I)^{-1} K*,
// via Cholesky with jitter escalation 1e-10 -> 1e-6.
PosteriorResult nngp_regress(const std::vector<Vector>& train_inputs, const Vector& targets,
                             const std::vector<Vector>& test_inputs, int depth,
                             double sigma_b2, double sigma_w2, const Activation& act,
                             double noise_variance);

// CNN variant: the kernel is the assembled covariance at a readout pixel.
PosteriorResult nngp_regress_cnn(const std::vector<Image>& train_inputs, const Vector& targets,
                                 const std::vector<Image>& test_inputs, int depth,
                                 double sigma_b2, double sigma_w2, int k,
                                 const Activation& act, int readout_row, int readout_col,
                                 double noise_variance);

}  // namespace piid::analysis

#endif
