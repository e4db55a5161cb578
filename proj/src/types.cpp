#include "piid/types.hpp"

#include <algorithm>
#include <cmath>

namespace piid {

std::string family_name(Family f) {
  switch (f) {
    case Family::IidGaussian: return "iid_gaussian";
    case Family::IidUniform: return "iid_uniform";
    case Family::IidDropout: return "iid_dropout";
    case Family::IidCauchy: return "iid_cauchy";
    case Family::HaarOrthogonal: return "haar_orthogonal";
    case Family::LowRank: return "low_rank";
    case Family::BlockSparse: return "block_sparse";
    case Family::OrthogonalConv: return "orthogonal_conv";
  }
  throw std::invalid_argument("unknown family");
}

Family family_from_name(const std::string& name) {
  for (Family f : {Family::IidGaussian, Family::IidUniform, Family::IidDropout,
                   Family::IidCauchy, Family::HaarOrthogonal, Family::LowRank,
                   Family::BlockSparse, Family::OrthogonalConv}) {
    if (family_name(f) == name) return f;
  }
  throw std::invalid_argument("unknown family '" + name + "'");
}

int SamplerSpec::resolve_rank(int m, int n) const {
  const int cap = std::min(m, n);
  int r = rank > 0 ? rank : static_cast<int>(std::ceil(rank_fraction * cap));
  return std::clamp(r, 1, cap);
}

int SamplerSpec::resolve_block(int m, int n) const {
  const int cap = std::min(m, n);
  int b = block > 0 ? block : static_cast<int>(std::ceil(block_fraction * cap));
  return std::clamp(b, 1, cap);
}

void SamplerSpec::validate() const {
  if (!is_control() && !(sigma_w2 > 0.0))
    throw std::invalid_argument("sigma_w2 must be positive");
  if (sigma_b2 < 0.0) throw std::invalid_argument("sigma_b2 must be nonnegative");
  if (family == Family::IidDropout && !(dropout_p >= 0.0 && dropout_p < 1.0))
    throw std::invalid_argument("dropout probability must lie in [0,1)");
  if (family == Family::LowRank && rank == 0 &&
      !(rank_fraction > 0.0 && rank_fraction <= 1.0))
    throw std::invalid_argument("rank fraction must lie in (0,1]");
  if (family == Family::BlockSparse && block == 0 &&
      !(block_fraction > 0.0 && block_fraction <= 1.0))
    throw std::invalid_argument("block fraction must lie in (0,1]");
}

SamplerSpec SamplerSpec::iid_gaussian(double sigma_w2) {
  SamplerSpec s;
  s.family = Family::IidGaussian;
  s.sigma_w2 = sigma_w2;
  return s;
}

SamplerSpec SamplerSpec::iid_uniform(double sigma_w2) {
  SamplerSpec s;
  s.family = Family::IidUniform;
  s.sigma_w2 = sigma_w2;
  return s;
}

SamplerSpec SamplerSpec::iid_dropout(double sigma_w2, double p) {
  SamplerSpec s;
  s.family = Family::IidDropout;
  s.sigma_w2 = sigma_w2;
  s.dropout_p = p;
  return s;
}

SamplerSpec SamplerSpec::iid_cauchy() {
  SamplerSpec s;
  s.family = Family::IidCauchy;
  return s;
}

SamplerSpec SamplerSpec::haar_orthogonal(double sigma_w2) {
  SamplerSpec s;
  s.family = Family::HaarOrthogonal;
  s.sigma_w2 = sigma_w2;
  return s;
}

SamplerSpec SamplerSpec::low_rank(double sigma_w2, double fraction, BaseDist d) {
  SamplerSpec s;
  s.family = Family::LowRank;
  s.sigma_w2 = sigma_w2;
  s.rank_fraction = fraction;
  s.base_dist = d;
  return s;
}

SamplerSpec SamplerSpec::block_sparse(double sigma_w2, double fraction, BaseDist d) {
  SamplerSpec s;
  s.family = Family::BlockSparse;
  s.sigma_w2 = sigma_w2;
  s.block_fraction = fraction;
  s.base_dist = d;
  return s;
}

SamplerSpec SamplerSpec::orthogonal_conv(double sigma_w2) {
  SamplerSpec s;
  s.family = Family::OrthogonalConv;
  s.sigma_w2 = sigma_w2;
  return s;
}

}  // namespace piid
