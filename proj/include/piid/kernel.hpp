#ifndef PIID_KERNEL_HPP
#define PIID_KERNEL_HPP

#include <vector>

#include "piid/activation.hpp"
#include "piid/types.hpp"

namespace piid::kernel {

inline constexpr int kDefaultQuadOrder = 40;

// E[phi(u) phi(v)] for (u,v) ~ N(0, [[q_uu, q_uv], [q_uv, q_vv]]).
// Closed forms for ReLU / Erf / Identity; otherwise tensorized Gauss-Hermite
// of the given order, with piecewise Gauss-Legendre panels when the
// activation declares kinks and a 1-D reduction for |rho| = 1 or degenerate
// variances. The 2x2 input must be PSD within tolerance (|q_uv| is clipped to
// sqrt(q_uu*q_vv) at roundoff scale, beyond that it is an error).
double pair_expectation(double q_uu, double q_uv, double q_vv, const Activation& act,
                        int order = kDefaultQuadOrder);

// Quadrature path regardless of closed-form availability (for agreement checks).
double pair_expectation_quadrature(double q_uu, double q_uv, double q_vv,
                                   const Activation& act, int order = kDefaultQuadOrder);

// Limiting covariance of the preactivations at one layer over a fixed input
// list, values(p,q) = K(x_p, x_q).
struct KernelTable {
  int layer = 0;
  Matrix values;
  double sigma_b2 = 0.0;
  double sigma_w2 = 1.0;
};

// Symmetrize and clip tiny negative eigenvalues (floor -1e-8 * trace); a
// violation beyond the floor throws, it signals a bug rather than roundoff.
Matrix project_psd(const Matrix& m);

// Limiting covariances for a fully connected stack: the first table is
// sigma_b2 + sigma_w2/N0 * <x, x'>, each further layer maps the previous
// table through the Gaussian pair expectation. Returns tables for layers
// 1 .. depth+1.
std::vector<KernelTable> kernel_fcn(const std::vector<Vector>& inputs, int depth,
                                    double sigma_b2, double sigma_w2, const Activation& act,
                                    int order = kDefaultQuadOrder);

// One position of the k x k window around a pixel; out-of-range positions are
// zero-padding sentinels and contribute nothing to patch sums.
struct PatchIndex {
  int row = 0;
  int col = 0;
  bool in_range = false;
};

// The ordered (row-major) k x k neighborhood of (mu_row, mu_col); k odd.
std::vector<PatchIndex> patch(int mu_row, int mu_col, int k, int image_rows, int image_cols);

// Per-pixel limiting covariances K_nu(X_p, X_q) for one layer of a
// convolutional stack, plus the assembled preactivation covariance
// sigma_b2 + sigma_w2 * sum over the patch intersection.
struct ConvKernelTable {
  int layer = 0;
  int image_rows = 0;
  int image_cols = 0;
  int filter_size = 0;
  double sigma_b2 = 0.0;
  double sigma_w2 = 1.0;
  std::vector<Matrix> pixel_tables;  // indexed row-major by pixel, each P x P

  [[nodiscard]] const Matrix& at(int nu_row, int nu_col) const {
    return pixel_tables[static_cast<std::size_t>(nu_row * image_cols + nu_col)];
  }
  // Covariance of h_{., mu}(X_p) with h_{., mu'}(X_q) at this layer.
  [[nodiscard]] double assembled(int p, int q, int mu_row, int mu_col, int mup_row,
                                 int mup_col) const;
};

// Tables for layers 1 .. depth+1 with "same" zero padding and stride 1.
std::vector<ConvKernelTable> kernel_cnn(const std::vector<Image>& images, int depth,
                                        double sigma_b2, double sigma_w2, int k,
                                        const Activation& act,
                                        int order = kDefaultQuadOrder);

void export_table(const KernelTable& t, const std::vector<std::string>& labels,
                  const std::string& path);
void export_conv_table(const ConvKernelTable& t, const std::string& path);

}  // namespace piid::kernel

#endif
