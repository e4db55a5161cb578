#ifndef PIID_QUADRATURE_HPP
#define PIID_QUADRATURE_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "piid/types.hpp"

namespace piid::quad {

struct Rule {
  Vector nodes;
  Vector weights;
};

// Gauss-Hermite rule for weight exp(-x^2) on R (Golub-Welsch, cached per
// order): sum_i w_i f(x_i) ~ integral f(x) exp(-x^2) dx.
const Rule& gauss_hermite(int order);

// Gauss-Legendre rule on [-1, 1], cached per order.
const Rule& gauss_legendre(int order);

// E[f(Z)] for Z ~ N(0, var) of a smooth f via Gauss-Hermite.
template <typename F>
double gauss_expect(F&& f, double var, int order) {
  const Rule& r = gauss_hermite(order);
  const double s = std::sqrt(2.0 * var);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < r.nodes.size(); ++i) acc += r.weights(i) * f(s * r.nodes(i));
  return acc / std::sqrt(M_PI);
}

// E[f(Z)] for Z ~ N(0, var) of a piecewise-smooth f with the given interior
// break points: Gauss-Legendre panels between breaks, truncated at 12 sigma.
// Panels are additionally split at a few multiples of sigma so no single
// panel has to resolve both the Gaussian bulk and its tails.
template <typename F>
double gauss_expect_piecewise(F&& f, double var, const std::vector<double>& breaks,
                              int order) {
  const double s = std::sqrt(var);
  const double lo = -12.0 * s, hi = 12.0 * s;
  std::vector<double> cuts{lo};
  for (double b : breaks)
    if (b > lo && b < hi) cuts.push_back(b);
  for (double m : {-8.0, -4.0, -2.0, -1.0, 1.0, 2.0, 4.0, 8.0}) cuts.push_back(m * s);
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());

  const Rule& r = gauss_legendre(order);
  const double inv = 1.0 / (s * std::sqrt(2.0 * M_PI));
  double acc = 0.0;
  for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
    const double mid = 0.5 * (cuts[p] + cuts[p + 1]);
    const double half = 0.5 * (cuts[p + 1] - cuts[p]);
    if (half <= 0.0) continue;
    double panel = 0.0;
    for (Eigen::Index i = 0; i < r.nodes.size(); ++i) {
      const double x = mid + half * r.nodes(i);
      panel += r.weights(i) * f(x) * std::exp(-0.5 * x * x / var);
    }
    acc += half * panel;
  }
  return acc * inv;
}

}  // namespace piid::quad

#endif
