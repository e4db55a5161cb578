#include "piid/weights.hpp"

#include <Eigen/QR>

#include <cmath>
#include <numeric>

#include "piid/io.hpp"

namespace piid::weights {

namespace {

void require_dims(int m, int n) {
  if (m <= 0 || n <= 0) throw std::invalid_argument("matrix dimensions must be positive");
}

Matrix gaussian_matrix(int m, int n, double stddev, Rng& rng) {
  Matrix w(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i) w(i, j) = stddev * rng.normal();
  return w;
}

// Base-dist entries with a given variance (uniform support +- sqrt(3*var)).
double base_draw(BaseDist d, double stddev, Rng& rng) {
  if (d == BaseDist::Gaussian) return stddev * rng.normal();
  const double a = stddev * std::sqrt(3.0);
  return rng.uniform(-a, a);
}

// Q of the Householder QR with columns flipped to make diag(R) positive;
// for square iid Gaussian input this is Haar on the orthogonal group, for a
// tall m x r input it is a uniformly random orthonormal r-frame.
Matrix haar_frame(int m, int r, Rng& rng) {
  Matrix g(m, r);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < m; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(m, r);
  for (int j = 0; j < r; ++j)
    if (qr.matrixQR()(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

std::vector<int> random_permutation(int n, Rng& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), 0);
  rng.shuffle(p.begin(), p.end());
  return p;
}

ConvFilterBank finish_conv_bank(Matrix u, int c_out, int c_in, int k,
                                const SamplerSpec& meta, const RngSeed& seed,
                                double rescale_to) {
  ConvFilterBank bank;
  bank.c_out = c_out;
  bank.c_in = c_in;
  bank.k = k;
  bank.meta = meta;
  bank.seed = seed;
  const double implied = static_cast<double>(c_in) / (static_cast<double>(k) * k * c_out);
  if (rescale_to > 0.0) {
    u *= std::sqrt(rescale_to / implied);
    bank.implied_sigma_w2 = rescale_to;
  } else {
    bank.implied_sigma_w2 = implied;
  }
  bank.matricized = std::move(u);
  return bank;
}

}  // namespace

WeightMatrix sample_iid(int m, int n, const SamplerSpec& spec, const RngSeed& seed) {
  require_dims(m, n);
  spec.validate();
  Rng rng(seed);
  WeightMatrix w{Matrix(m, n), spec, seed};

  switch (spec.family) {
    case Family::IidGaussian:
      w.entries = gaussian_matrix(m, n, std::sqrt(spec.sigma_w2 / n), rng);
      break;
    case Family::IidUniform: {
      const double a = std::sqrt(3.0 * spec.sigma_w2 / n);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) w.entries(i, j) = rng.uniform(-a, a);
      break;
    }
    case Family::IidDropout: {
      const double p = spec.dropout_p;
      const double stddev = std::sqrt(spec.sigma_w2 / (n * (1.0 - p)));
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) {
          const double g = stddev * rng.normal();
          w.entries(i, j) = rng.uniform() < p ? 0.0 : g;
        }
      break;
    }
    case Family::IidCauchy: {
      const double scale = 1.0 / std::sqrt(static_cast<double>(n));
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i) w.entries(i, j) = scale * rng.cauchy();
      break;
    }
    default:
      throw std::invalid_argument("sample_iid expects an entrywise-iid family");
  }
  return w;
}

WeightMatrix sample_orthogonal(int n, double sigma_w2, const RngSeed& seed) {
  require_dims(n, n);
  if (!(sigma_w2 > 0.0)) throw std::invalid_argument("sigma_w2 must be positive");
  Rng rng(seed);
  WeightMatrix w{std::sqrt(sigma_w2) * haar_frame(n, n, rng),
                 SamplerSpec::haar_orthogonal(sigma_w2), seed};
  return w;
}

WeightMatrix sample_low_rank(int m, int n, int r, double sigma_w2, BaseDist base_dist,
                             const RngSeed& seed) {
  require_dims(m, n);
  if (r < 1 || r > std::min(m, n)) throw std::invalid_argument("rank out of range");
  if (!(sigma_w2 > 0.0)) throw std::invalid_argument("sigma_w2 must be positive");
  Rng rng(seed);
  const Matrix basis = haar_frame(m, r, rng);
  const double s = std::sqrt(sigma_w2 * m / (static_cast<double>(r) * n));
  Matrix p(r, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < r; ++i) p(i, j) = base_draw(base_dist, s, rng);

  SamplerSpec meta = SamplerSpec::low_rank(sigma_w2, 0.0, base_dist);
  meta.rank = r;
  return WeightMatrix{basis * p, meta, seed};
}

WeightMatrix sample_block_sparse(int m, int n, int b, double sigma_w2, BaseDist base_dist,
                                 const RngSeed& seed) {
  require_dims(m, n);
  if (b < 1 || b > std::min(m, n)) throw std::invalid_argument("block side out of range");
  if (!(sigma_w2 > 0.0)) throw std::invalid_argument("sigma_w2 must be positive");
  Rng rng(seed);

  // Diagonal square blocks of side b, last one truncated by the matrix edge.
  std::int64_t nnz = 0;
  const int diag = std::min(m, n);
  for (int t = 0; t * b < diag; ++t) {
    const std::int64_t rows = std::min(m, (t + 1) * b) - t * b;
    const std::int64_t cols = std::min(n, (t + 1) * b) - t * b;
    nnz += rows * cols;
  }
  const double rho = static_cast<double>(nnz) / (static_cast<double>(m) * n);
  const double s = std::sqrt(sigma_w2 / (n * rho));

  Matrix masked = Matrix::Zero(m, n);
  for (int t = 0; t * b < diag; ++t) {
    const int r0 = t * b, r1 = std::min(m, (t + 1) * b);
    const int c0 = t * b, c1 = std::min(n, (t + 1) * b);
    for (int j = c0; j < c1; ++j)
      for (int i = r0; i < r1; ++i) masked(i, j) = base_draw(base_dist, s, rng);
  }

  const std::vector<int> pr = random_permutation(m, rng);
  const std::vector<int> pc = random_permutation(n, rng);
  Matrix out(m, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < m; ++i)
      out(pr[static_cast<std::size_t>(i)], pc[static_cast<std::size_t>(j)]) = masked(i, j);

  SamplerSpec meta = SamplerSpec::block_sparse(sigma_w2, 0.0, base_dist);
  meta.block = b;
  return WeightMatrix{std::move(out), meta, seed};
}

ConvFilterBank sample_orthogonal_conv(int c_out, int c_in, int k, const RngSeed& seed,
                                      double rescale_to) {
  if (c_out <= 0 || c_in <= 0) throw std::invalid_argument("channel counts must be positive");
  if (k <= 0 || k % 2 == 0) throw std::invalid_argument("filter side k must be odd");
  const int cols = k * k * c_in;
  if (c_out < cols)
    throw std::invalid_argument(
        "orthogonal conv needs c_out >= k^2*c_in (got " + std::to_string(c_out) + " < " +
        std::to_string(cols) + "); use the wide (transposed) construction instead");
  Rng rng(seed);
  Matrix u = haar_frame(c_out, cols, rng) / static_cast<double>(k);
  return finish_conv_bank(std::move(u), c_out, c_in, k,
                          SamplerSpec::orthogonal_conv(rescale_to), seed, rescale_to);
}

ConvFilterBank sample_orthogonal_conv_wide(int c_out, int c_in, int k, const RngSeed& seed,
                                           double rescale_to) {
  if (c_out <= 0 || c_in <= 0) throw std::invalid_argument("channel counts must be positive");
  if (k <= 0 || k % 2 == 0) throw std::invalid_argument("filter side k must be odd");
  const int cols = k * k * c_in;
  if (c_out > cols)
    throw std::invalid_argument("wide orthogonal conv needs c_out <= k^2*c_in");
  Rng rng(seed);
  // Orthonormal rows: transpose of a uniformly random c_out-frame in R^cols.
  Matrix u = haar_frame(cols, c_out, rng).transpose() / static_cast<double>(k);
  ConvFilterBank bank;
  bank.c_out = c_out;
  bank.c_in = c_in;
  bank.k = k;
  bank.meta = SamplerSpec::orthogonal_conv(rescale_to);
  bank.seed = seed;
  // Unit rows of the frame give E[entry^2] = 1/(k^2 * k^2*c_in), i.e. an
  // implied sigma_w2 of 1/k^4.
  const double kd = static_cast<double>(k);
  const double implied = 1.0 / (kd * kd * kd * kd);
  if (rescale_to > 0.0) {
    u *= std::sqrt(rescale_to / implied);
    bank.implied_sigma_w2 = rescale_to;
  } else {
    bank.implied_sigma_w2 = implied;
  }
  bank.matricized = std::move(u);
  return bank;
}

WeightMatrix sample_matrix(int m, int n, const SamplerSpec& spec, const RngSeed& seed) {
  switch (spec.family) {
    case Family::IidGaussian:
    case Family::IidUniform:
    case Family::IidDropout:
    case Family::IidCauchy:
      return sample_iid(m, n, spec, seed);
    case Family::HaarOrthogonal:
      if (m != n)
        throw std::invalid_argument("orthogonal layers must be square (got " +
                                    std::to_string(m) + "x" + std::to_string(n) + ")");
      return sample_orthogonal(n, spec.sigma_w2, seed);
    case Family::LowRank:
      return sample_low_rank(m, n, spec.resolve_rank(m, n), spec.sigma_w2, spec.base_dist,
                             seed);
    case Family::BlockSparse:
      return sample_block_sparse(m, n, spec.resolve_block(m, n), spec.sigma_w2,
                                 spec.base_dist, seed);
    case Family::OrthogonalConv:
      throw std::invalid_argument("orthogonal_conv is a filter-bank family, not a matrix one");
  }
  throw std::invalid_argument("unknown family");
}

ConvFilterBank sample_conv(int c_out, int c_in, int k, const SamplerSpec& spec,
                           const RngSeed& seed) {
  if (k <= 0 || k % 2 == 0) throw std::invalid_argument("filter side k must be odd");
  if (spec.family == Family::OrthogonalConv) {
    return c_out >= k * k * c_in
               ? sample_orthogonal_conv(c_out, c_in, k, seed, spec.sigma_w2)
               : sample_orthogonal_conv_wide(c_out, c_in, k, seed, spec.sigma_w2);
  }
  // Entrywise families with E[entry^2] = sigma_w2 / c_in.
  SamplerSpec entry_spec = spec;
  entry_spec.sigma_w2 = spec.sigma_w2 * k * k;  // sample_iid divides by k^2*c_in
  WeightMatrix w = sample_iid(c_out, k * k * c_in, entry_spec, seed);
  ConvFilterBank bank;
  bank.c_out = c_out;
  bank.c_in = c_in;
  bank.k = k;
  bank.matricized = std::move(w.entries);
  bank.meta = spec;
  bank.seed = seed;
  bank.implied_sigma_w2 = spec.sigma_w2;
  return bank;
}

Vector sample_bias(int n, double sigma_b2, const RngSeed& seed) {
  if (n <= 0) throw std::invalid_argument("bias length must be positive");
  if (sigma_b2 < 0.0) throw std::invalid_argument("sigma_b2 must be nonnegative");
  Vector b = Vector::Zero(n);
  if (sigma_b2 > 0.0) {
    Rng rng(seed);
    const double s = std::sqrt(sigma_b2);
    for (int i = 0; i < n; ++i) b(i) = s * rng.normal();
  }
  return b;
}

void export_mask(const WeightMatrix& w, const std::string& path) {
  io::CsvWriter csv(path);
  csv.row({"row", "col", "value"});
  for (Eigen::Index j = 0; j < w.cols(); ++j)
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      if (w.entries(i, j) != 0.0)
        csv.row({std::to_string(i), std::to_string(j), io::g17(w.entries(i, j))});
  csv.close();
}

Matrix import_mask(const std::string& path, int m, int n) {
  const auto rows = io::read_csv(path);
  Matrix out = Matrix::Zero(m, n);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r];
    if (f.size() != 3) throw std::runtime_error("malformed triplet row in '" + path + "'");
    out(std::stoi(f[0]), std::stoi(f[1])) = std::stod(f[2]);
  }
  return out;
}

}  // namespace piid::weights
