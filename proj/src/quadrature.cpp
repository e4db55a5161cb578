#include "piid/quadrature.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <mutex>
#include <stdexcept>

namespace piid::quad {

namespace {

// Nodes are the eigenvalues of the symmetric Jacobi matrix of the orthogonal
// polynomial family; weights come from the first eigenvector components.
Rule golub_welsch(const Vector& offdiag, double weight_mass) {
  const auto n = offdiag.size() + 1;
  Matrix jacobi = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    jacobi(i, i + 1) = offdiag(i);
    jacobi(i + 1, i) = offdiag(i);
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  if (es.info() != Eigen::Success) throw std::runtime_error("quadrature eigensolve failed");
  Rule r;
  r.nodes = es.eigenvalues();
  r.weights = weight_mass * es.eigenvectors().row(0).array().square();
  return r;
}

const Rule& cached(std::map<int, Rule>& cache, std::mutex& mu, int order,
                   Rule (*build)(int)) {
  if (order < 1) throw std::invalid_argument("quadrature order must be positive");
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, build(order)).first;
  return it->second;
}

Rule build_hermite(int order) {
  Vector off(order - 1);
  for (int i = 1; i < order; ++i) off(i - 1) = std::sqrt(i / 2.0);
  return golub_welsch(off, std::sqrt(M_PI));
}

Rule build_legendre(int order) {
  Vector off(order - 1);
  for (int i = 1; i < order; ++i) off(i - 1) = i / std::sqrt(4.0 * i * i - 1.0);
  return golub_welsch(off, 2.0);
}

}  // namespace

const Rule& gauss_hermite(int order) {
  static std::map<int, Rule> cache;
  static std::mutex mu;
  return cached(cache, mu, order, build_hermite);
}

const Rule& gauss_legendre(int order) {
  static std::map<int, Rule> cache;
  static std::mutex mu;
  return cached(cache, mu, order, build_legendre);
}

}  // namespace piid::quad
