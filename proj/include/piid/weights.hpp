#ifndef PIID_WEIGHTS_HPP
#define PIID_WEIGHTS_HPP

#include <string>

#include "piid/types.hpp"

namespace piid::weights {

// Entrywise-independent families: IidGaussian, IidUniform, IidDropout,
// IidCauchy. Entries are centered with variance sigma_w2/n (dropout keeps an
// entry with probability 1-p and compensates by 1/(1-p); uniform support is
// +- sigma_w * sqrt(3/n)). Cauchy is the no-variance control.
WeightMatrix sample_iid(int m, int n, const SamplerSpec& spec, const RngSeed& seed);

// sigma_w * O with O Haar on the orthogonal group, so W^T W = sigma_w2 * I
// exactly and E[W_ij^2] = sigma_w2/n. Square only. Haar is drawn as the QR of
// an iid Gaussian matrix with the R-diagonal sign correction.
WeightMatrix sample_orthogonal(int n, double sigma_w2, const RngSeed& seed);

// A = C * P: C an m x r uniformly random orthonormal basis, P r x n iid from
// base_dist with per-entry variance sigma_w2*m/(r*n), giving marginal entry
// variance sigma_w2/n and rank exactly r almost surely.
WeightMatrix sample_low_rank(int m, int n, int r, double sigma_w2, BaseDist base_dist,
                             const RngSeed& seed);

// P_m (A .* B) P_n: B the block-diagonal 0/1 mask with square blocks of side b
// (last block truncated), P_m/P_n uniform permutations, on-support entries iid
// with variance sigma_w2/(n*rho) where rho is the mask density.
WeightMatrix sample_block_sparse(int m, int n, int b, double sigma_w2, BaseDist base_dist,
                                 const RngSeed& seed);

// Energy-preserving filters: the matricized kernel U~ (c_out x k^2*c_in) has
// columns drawn as the leading columns of a Haar orthogonal matrix scaled by
// 1/k, so U~^T U~ = (1/k^2) I exactly. Requires the tall case
// c_out >= k^2*c_in. With rescale_to set, entries are scaled so that
// c_in * E[entry^2] = rescale_to; otherwise the implied value
// c_in/(k^2*c_out) is reported in the bank's metadata.
ConvFilterBank sample_orthogonal_conv(int c_out, int c_in, int k, const RngSeed& seed,
                                      double rescale_to = 0.0);

// Row-orthonormal variant for the wide case c_out < k^2*c_in: rows of U~ are
// the leading rows of a Haar orthogonal matrix scaled by 1/k, so
// U~ U~^T = (1/k^2) I. Same exchangeability and moment structure with the
// orthogonal-group dimension k^2*c_in instead of c_out.
ConvFilterBank sample_orthogonal_conv_wide(int c_out, int c_in, int k, const RngSeed& seed,
                                           double rescale_to = 0.0);

// Dispatch on spec.family for dense layers (rank/block resolved against m,n).
WeightMatrix sample_matrix(int m, int n, const SamplerSpec& spec, const RngSeed& seed);

// Dispatch for conv layers. Iid families draw entries with variance
// sigma_w2/c_in; OrthogonalConv picks the tall or wide construction by shape
// and rescales to sigma_w2.
ConvFilterBank sample_conv(int c_out, int c_in, int k, const SamplerSpec& spec,
                           const RngSeed& seed);

Vector sample_bias(int n, double sigma_b2, const RngSeed& seed);

// Nonzeros as "row,col,value" CSV triplets (17 significant digits).
void export_mask(const WeightMatrix& w, const std::string& path);
Matrix import_mask(const std::string& path, int m, int n);

}  // namespace piid::weights

#endif
