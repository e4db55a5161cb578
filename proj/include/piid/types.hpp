#ifndef PIID_TYPES_HPP
#define PIID_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "piid/rng.hpp"

namespace piid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Weight-distribution families. IidCauchy is a negative control: it has no
// finite variance and must be rejected by the regime checker.
enum class Family {
  IidGaussian,
  IidUniform,
  IidDropout,
  IidCauchy,
  HaarOrthogonal,
  LowRank,
  BlockSparse,
  OrthogonalConv,
};

enum class BaseDist { Gaussian, Uniform };

std::string family_name(Family f);
Family family_from_name(const std::string& name);

// Declarative description of one weight-distribution family. Rank and block
// side may be given either as absolute sizes or as fractions resolved against
// the sampled dimensions (rank = ceil(fraction * min(m,n)), block likewise).
struct SamplerSpec {
  Family family = Family::IidGaussian;
  double sigma_w2 = 1.0;       // target entry-variance scale, E[W_ij^2] = sigma_w2 / n
  double sigma_b2 = 0.0;       // bias variance, carried alongside for network configs
  double dropout_p = 0.5;      // IidDropout: probability of zeroing an entry
  int rank = 0;                // LowRank: absolute rank  (0 = use rank_fraction)
  double rank_fraction = 0.5;  // LowRank: fraction of min(m,n)
  int block = 0;               // BlockSparse: absolute block side (0 = use block_fraction)
  double block_fraction = 0.2; // BlockSparse: fraction of min(m,n)
  BaseDist base_dist = BaseDist::Gaussian;  // entry law for LowRank / BlockSparse

  [[nodiscard]] bool is_control() const { return family == Family::IidCauchy; }

  [[nodiscard]] int resolve_rank(int m, int n) const;
  [[nodiscard]] int resolve_block(int m, int n) const;

  // Throws std::invalid_argument on out-of-range parameters.
  void validate() const;

  static SamplerSpec iid_gaussian(double sigma_w2);
  static SamplerSpec iid_uniform(double sigma_w2);
  static SamplerSpec iid_dropout(double sigma_w2, double p);
  static SamplerSpec iid_cauchy();
  static SamplerSpec haar_orthogonal(double sigma_w2);
  static SamplerSpec low_rank(double sigma_w2, double fraction,
                              BaseDist d = BaseDist::Gaussian);
  static SamplerSpec block_sparse(double sigma_w2, double fraction,
                                  BaseDist d = BaseDist::Gaussian);
  static SamplerSpec orthogonal_conv(double sigma_w2);
};

// One realized dense weight layer together with the recipe that produced it.
struct WeightMatrix {
  Matrix entries;
  SamplerSpec meta;
  RngSeed seed;

  [[nodiscard]] Eigen::Index rows() const { return entries.rows(); }
  [[nodiscard]] Eigen::Index cols() const { return entries.cols(); }
};

// Realized convolutional layer: c_out x c_in filters of odd side k, stored in
// matricized form U~ (c_out x k^2*c_in). Filter (i,j) occupies columns
// [j*k^2, (j+1)*k^2) of row i, pixels in row-major order, so that the
// unfolded-signal product U~ * X~ is the convolution.
struct ConvFilterBank {
  int c_out = 0;
  int c_in = 0;
  int k = 0;
  Matrix matricized;   // c_out x (k^2 * c_in)
  SamplerSpec meta;
  RngSeed seed;
  double implied_sigma_w2 = 0.0;  // c_in * E[entry^2], reported when not rescaled

  [[nodiscard]] double entry(int i, int j, int kr, int kc) const {
    return matricized(i, j * k * k + kr * k + kc);
  }
};

// Multi-channel 2-D signal, channels x (rows*cols) with pixels row-major.
struct Image {
  int channels = 0;
  int rows = 0;
  int cols = 0;
  Matrix data;  // channels x (rows*cols)

  Image() = default;
  Image(int c, int r, int co) : channels(c), rows(r), cols(co), data(Matrix::Zero(c, r * co)) {}

  [[nodiscard]] int pixel_index(int r, int c) const { return r * cols + c; }
  double& at(int ch, int r, int c) { return data(ch, pixel_index(r, c)); }
  [[nodiscard]] double at(int ch, int r, int c) const { return data(ch, pixel_index(r, c)); }
};

}  // namespace piid

#endif
