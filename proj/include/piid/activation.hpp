#ifndef PIID_ACTIVATION_HPP
#define PIID_ACTIVATION_HPP

#include <functional>
#include <string>
#include <vector>

namespace piid {

enum class ActKind { ReLU, Tanh, HTanh, Erf, Identity, Custom };

// Pointwise nonlinearity with the metadata the kernel engine needs: where the
// map is non-smooth (quadrature panels split there), whether a closed-form
// Gaussian pair expectation exists, and the |phi(x)| <= c + M|x| envelope.
struct Activation {
  ActKind kind = ActKind::Tanh;
  std::function<double(double)> fn;
  std::function<double(double)> deriv;  // a.e. derivative; empty if unavailable
  std::vector<double> kinks;            // break points of fn or deriv
  double envelope_c = 0.0;
  double envelope_m = 1.0;
  std::string name = "tanh";

  double operator()(double x) const { return fn(x); }
  [[nodiscard]] bool has_closed_form() const {
    return kind == ActKind::ReLU || kind == ActKind::Erf || kind == ActKind::Identity;
  }

  static Activation relu();
  static Activation tanh();
  static Activation htanh();
  static Activation erf();
  static Activation identity();
  static Activation custom(std::function<double(double)> fn, double envelope_c,
                           double envelope_m, std::vector<double> kinks = {},
                           std::string name = "custom");
  static Activation from_name(const std::string& name);
};

}  // namespace piid

#endif
