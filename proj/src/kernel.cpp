#include "piid/kernel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>

#include "piid/io.hpp"
#include "piid/quadrature.hpp"

namespace piid::kernel {

namespace {

constexpr double kPsdTol = 1e-10;
constexpr double kDegenerate = 1e-14;

// Saturating maps transition on an O(1) argument scale; node counts must grow
// with the standard deviation of the argument to keep that region resolved.
int scaled_order(int order, double sigma) {
  const int factor = sigma > 1.0 ? static_cast<int>(std::ceil(sigma)) : 1;
  return order * std::min(factor, 8);
}

// E[f(X)] for X ~ N(mean, var), splitting panels at the activation's kinks.
double gauss_mean_expect(const std::function<double(double)>& f, double mean, double var,
                         const std::vector<double>& kinks, int order) {
  if (var <= kDegenerate) return f(mean);
  if (kinks.empty())
    return quad::gauss_expect([&](double t) { return f(mean + t); }, var,
                              scaled_order(order, std::sqrt(var)));
  std::vector<double> breaks;
  breaks.reserve(kinks.size());
  for (double k : kinks) breaks.push_back(k - mean);
  return quad::gauss_expect_piecewise([&](double t) { return f(mean + t); }, var, breaks,
                                      order);
}

// 1-D reduction E[phi(u) phi(c*u)], u ~ N(0, q_uu).
double degenerate_pair(double q_uu, double c, const Activation& act, int order) {
  if (q_uu <= kDegenerate) {
    const double p0 = act(0.0);
    return p0 * p0;
  }
  auto f = [&](double u) { return act(u) * act(c * u); };
  if (act.kinks.empty()) {
    const double arg_sd = std::sqrt(q_uu) * std::max(1.0, std::abs(c));
    return quad::gauss_expect(f, q_uu, scaled_order(order, arg_sd));
  }
  std::vector<double> breaks = act.kinks;
  if (c != 0.0)
    for (double k : act.kinks) breaks.push_back(k / c);
  return quad::gauss_expect_piecewise(f, q_uu, breaks, order);
}

double quadrature_pair(double q_uu, double q_uv, double q_vv, const Activation& act,
                       int order) {
  if (q_uu <= kDegenerate && q_vv <= kDegenerate) {
    const double p0 = act(0.0);
    return p0 * p0;
  }
  if (q_uu <= kDegenerate)
    return act(0.0) * gauss_mean_expect(act.fn, 0.0, q_vv, act.kinks, order);
  if (q_vv <= kDegenerate)
    return act(0.0) * gauss_mean_expect(act.fn, 0.0, q_uu, act.kinks, order);

  const double su = std::sqrt(q_uu), sv = std::sqrt(q_vv);
  const double rho = q_uv / (su * sv);
  if (std::abs(rho) >= 1.0 - 1e-12)
    return degenerate_pair(q_uu, (rho >= 0.0 ? 1.0 : -1.0) * sv / su, act, order);

  if (act.kinks.empty()) {
    // Tensor Gauss-Hermite in the whitened frame.
    const quad::Rule& r = quad::gauss_hermite(scaled_order(order, std::max(su, sv)));
    const double a = std::sqrt(2.0) * su;
    const double b1 = std::sqrt(2.0) * sv * rho;
    const double b2 = std::sqrt(2.0) * sv * std::sqrt(1.0 - rho * rho);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < r.nodes.size(); ++i) {
      const double u = act(a * r.nodes(i));
      double inner = 0.0;
      for (Eigen::Index j = 0; j < r.nodes.size(); ++j)
        inner += r.weights(j) * act(b1 * r.nodes(i) + b2 * r.nodes(j));
      acc += r.weights(i) * u * inner;
    }
    return acc / M_PI;
  }

  // Piecewise path: outer integral over u with panels at the kinks of phi,
  // inner conditional expectation of phi(v | u), which is smooth in u.
  const double slope = rho * sv / su;
  const double cond_var = q_vv * (1.0 - rho * rho);
  auto outer = [&](double u) {
    return act(u) * gauss_mean_expect(act.fn, slope * u, cond_var, act.kinks, order);
  };
  return quad::gauss_expect_piecewise(outer, q_uu, act.kinks, order);
}

// Validates and repairs the 2x2 input in place; throws beyond tolerance.
void sanitize_pair(double& q_uu, double& q_uv, double& q_vv) {
  const double scale = std::max({1.0, std::abs(q_uu), std::abs(q_vv)});
  if (q_uu < -kPsdTol * scale || q_vv < -kPsdTol * scale)
    throw std::invalid_argument("pair_expectation: negative variance");
  q_uu = std::max(q_uu, 0.0);
  q_vv = std::max(q_vv, 0.0);
  const double limit = std::sqrt(q_uu * q_vv);
  if (std::abs(q_uv) > limit) {
    if (std::abs(q_uv) - limit > kPsdTol * scale)
      throw std::invalid_argument("pair_expectation: 2x2 covariance is not PSD");
    q_uv = q_uv > 0.0 ? limit : -limit;
  }
}

double relu_pair_closed(double q_uu, double q_uv, double q_vv) {
  const double norm = std::sqrt(q_uu * q_vv);
  if (norm <= kDegenerate) return 0.0;
  const double rho = std::clamp(q_uv / norm, -1.0, 1.0);
  const double theta = std::acos(rho);
  return norm / (2.0 * M_PI) * (std::sin(theta) + (M_PI - theta) * rho);
}

double erf_pair_closed(double q_uu, double q_uv, double q_vv) {
  return 2.0 / M_PI *
         std::asin(2.0 * q_uv / std::sqrt((1.0 + 2.0 * q_uu) * (1.0 + 2.0 * q_vv)));
}

}  // namespace

double pair_expectation(double q_uu, double q_uv, double q_vv, const Activation& act,
                        int order) {
  if (order < 1) throw std::invalid_argument("quadrature order must be positive");
  sanitize_pair(q_uu, q_uv, q_vv);
  switch (act.kind) {
    case ActKind::Identity: return q_uv;
    case ActKind::ReLU: return relu_pair_closed(q_uu, q_uv, q_vv);
    case ActKind::Erf: return erf_pair_closed(q_uu, q_uv, q_vv);
    default: return quadrature_pair(q_uu, q_uv, q_vv, act, order);
  }
}

double pair_expectation_quadrature(double q_uu, double q_uv, double q_vv,
                                   const Activation& act, int order) {
  if (order < 1) throw std::invalid_argument("quadrature order must be positive");
  sanitize_pair(q_uu, q_uv, q_vv);
  return quadrature_pair(q_uu, q_uv, q_vv, act, order);
}

Matrix project_psd(const Matrix& m) {
  Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const double floor = -1e-8 * std::max(sym.trace(), 0.0);
  const double lo = es.eigenvalues().minCoeff();
  if (lo >= 0.0) return sym;
  if (lo < floor)
    throw std::runtime_error("kernel table violates PSD beyond the roundoff floor (min " +
                             io::g17(lo) + ", floor " + io::g17(floor) + ")");
  Vector clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

std::vector<KernelTable> kernel_fcn(const std::vector<Vector>& inputs, int depth,
                                    double sigma_b2, double sigma_w2, const Activation& act,
                                    int order) {
  if (inputs.empty()) throw std::invalid_argument("kernel_fcn: empty input list");
  if (depth < 1) throw std::invalid_argument("kernel_fcn: depth must be >= 1");
  const auto n0 = inputs.front().size();
  if (n0 < 1) throw std::invalid_argument("kernel_fcn: empty input vector");
  for (const auto& x : inputs)
    if (x.size() != n0) throw std::invalid_argument("kernel_fcn: input dimension mismatch");

  const int p = static_cast<int>(inputs.size());
  std::vector<KernelTable> tables;
  tables.reserve(static_cast<std::size_t>(depth) + 1);

  Matrix k1(p, p);
  for (int a = 0; a < p; ++a)
    for (int b = a; b < p; ++b)
      k1(a, b) = k1(b, a) =
          sigma_b2 + sigma_w2 / static_cast<double>(n0) * inputs[a].dot(inputs[b]);
  tables.push_back({1, project_psd(k1), sigma_b2, sigma_w2});

  for (int layer = 2; layer <= depth + 1; ++layer) {
    const Matrix& prev = tables.back().values;
    Matrix next(p, p);
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b)
        next(a, b) = next(b, a) =
            sigma_b2 +
            sigma_w2 * pair_expectation(prev(a, a), prev(a, b), prev(b, b), act, order);
    tables.push_back({layer, project_psd(next), sigma_b2, sigma_w2});
  }
  return tables;
}

std::vector<PatchIndex> patch(int mu_row, int mu_col, int k, int image_rows, int image_cols) {
  if (k <= 0 || k % 2 == 0) throw std::invalid_argument("filter side k must be odd");
  if (mu_row < 0 || mu_row >= image_rows || mu_col < 0 || mu_col >= image_cols)
    throw std::invalid_argument("patch center out of range");
  const int half = k / 2;
  std::vector<PatchIndex> out;
  out.reserve(static_cast<std::size_t>(k) * k);
  for (int dr = -half; dr <= half; ++dr)
    for (int dc = -half; dc <= half; ++dc) {
      const int r = mu_row + dr, c = mu_col + dc;
      out.push_back({r, c, r >= 0 && r < image_rows && c >= 0 && c < image_cols});
    }
  return out;
}

double ConvKernelTable::assembled(int p, int q, int mu_row, int mu_col, int mup_row,
                                  int mup_col) const {
  const int half = filter_size / 2;
  const int r_lo = std::max({mu_row - half, mup_row - half, 0});
  const int r_hi = std::min({mu_row + half, mup_row + half, image_rows - 1});
  const int c_lo = std::max({mu_col - half, mup_col - half, 0});
  const int c_hi = std::min({mu_col + half, mup_col + half, image_cols - 1});
  double acc = 0.0;
  for (int r = r_lo; r <= r_hi; ++r)
    for (int c = c_lo; c <= c_hi; ++c) acc += at(r, c)(p, q);
  return sigma_b2 + sigma_w2 * acc;
}

std::vector<ConvKernelTable> kernel_cnn(const std::vector<Image>& images, int depth,
                                        double sigma_b2, double sigma_w2, int k,
                                        const Activation& act, int order) {
  if (images.empty()) throw std::invalid_argument("kernel_cnn: empty image list");
  if (depth < 1) throw std::invalid_argument("kernel_cnn: depth must be >= 1");
  if (k <= 0 || k % 2 == 0) throw std::invalid_argument("filter side k must be odd");
  const Image& first = images.front();
  for (const auto& im : images)
    if (im.channels != first.channels || im.rows != first.rows || im.cols != first.cols)
      throw std::invalid_argument("kernel_cnn: image shape mismatch");

  const int p = static_cast<int>(images.size());
  const int npix = first.rows * first.cols;

  std::vector<ConvKernelTable> tables;
  tables.reserve(static_cast<std::size_t>(depth) + 1);

  ConvKernelTable base{1, first.rows, first.cols, k, sigma_b2, sigma_w2, {}};
  base.pixel_tables.resize(static_cast<std::size_t>(npix));
  for (int nu = 0; nu < npix; ++nu) {
    Matrix t(p, p);
    for (int a = 0; a < p; ++a)
      for (int b = a; b < p; ++b)
        t(a, b) = t(b, a) =
            images[a].data.col(nu).dot(images[b].data.col(nu)) / first.channels;
    base.pixel_tables[static_cast<std::size_t>(nu)] = project_psd(t);
  }
  tables.push_back(std::move(base));

  for (int layer = 2; layer <= depth + 1; ++layer) {
    const ConvKernelTable& prev = tables.back();
    ConvKernelTable next{layer, first.rows, first.cols, k, sigma_b2, sigma_w2, {}};
    next.pixel_tables.resize(static_cast<std::size_t>(npix));
    for (int r = 0; r < first.rows; ++r)
      for (int c = 0; c < first.cols; ++c) {
        // Covariance of the previous layer's preactivation pair at this pixel
        // is the assembled patch sum, which feeds the pair expectation.
        Matrix lam(p, p);
        for (int a = 0; a < p; ++a)
          for (int b = a; b < p; ++b) lam(a, b) = lam(b, a) = prev.assembled(a, b, r, c, r, c);
        Matrix t(p, p);
        for (int a = 0; a < p; ++a)
          for (int b = a; b < p; ++b)
            t(a, b) = t(b, a) =
                pair_expectation(lam(a, a), lam(a, b), lam(b, b), act, order);
        next.pixel_tables[static_cast<std::size_t>(r * first.cols + c)] = project_psd(t);
      }
    tables.push_back(std::move(next));
  }
  return tables;
}

void export_table(const KernelTable& t, const std::vector<std::string>& labels,
                  const std::string& path) {
  const int p = static_cast<int>(t.values.rows());
  std::vector<std::string> header{"input"};
  for (int j = 0; j < p; ++j)
    header.push_back(j < static_cast<int>(labels.size()) ? labels[static_cast<std::size_t>(j)]
                                                         : "x" + std::to_string(j));
  io::CsvWriter csv(path);
  csv.row(header);
  for (int i = 0; i < p; ++i) {
    std::vector<std::string> row{header[static_cast<std::size_t>(i) + 1]};
    for (int j = 0; j < p; ++j) row.push_back(io::g17(t.values(i, j)));
    csv.row(row);
  }
  csv.close();
}

void export_conv_table(const ConvKernelTable& t, const std::string& path) {
  io::CsvWriter csv(path);
  csv.row({"nu_row", "nu_col", "x_idx", "xprime_idx", "value"});
  for (int r = 0; r < t.image_rows; ++r)
    for (int c = 0; c < t.image_cols; ++c) {
      const Matrix& m = t.at(r, c);
      for (int a = 0; a < m.rows(); ++a)
        for (int b = a; b < m.cols(); ++b)
          csv.row({std::to_string(r), std::to_string(c), std::to_string(a),
                   std::to_string(b), io::g17(m(a, b))});
    }
  csv.close();
}

}  // namespace piid::kernel
