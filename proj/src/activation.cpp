#include "piid/activation.hpp"

#include <cmath>
#include <stdexcept>

namespace piid {

Activation Activation::relu() {
  Activation a;
  a.kind = ActKind::ReLU;
  a.fn = [](double x) { return x > 0.0 ? x : 0.0; };
  a.deriv = [](double x) { return x > 0.0 ? 1.0 : 0.0; };
  a.kinks = {0.0};
  a.envelope_c = 0.0;
  a.envelope_m = 1.0;
  a.name = "relu";
  return a;
}

Activation Activation::tanh() {
  Activation a;
  a.kind = ActKind::Tanh;
  a.fn = [](double x) { return std::tanh(x); };
  a.deriv = [](double x) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  };
  a.envelope_c = 1.0;
  a.envelope_m = 0.0;
  a.name = "tanh";
  return a;
}

Activation Activation::htanh() {
  Activation a;
  a.kind = ActKind::HTanh;
  a.fn = [](double x) { return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x); };
  a.deriv = [](double x) { return (x > -1.0 && x < 1.0) ? 1.0 : 0.0; };
  a.kinks = {-1.0, 1.0};
  a.envelope_c = 1.0;
  a.envelope_m = 0.0;
  a.name = "htanh";
  return a;
}

Activation Activation::erf() {
  Activation a;
  a.kind = ActKind::Erf;
  a.fn = [](double x) { return std::erf(x); };
  a.deriv = [](double x) { return 2.0 / std::sqrt(M_PI) * std::exp(-x * x); };
  a.envelope_c = 1.0;
  a.envelope_m = 0.0;
  a.name = "erf";
  return a;
}

Activation Activation::identity() {
  Activation a;
  a.kind = ActKind::Identity;
  a.fn = [](double x) { return x; };
  a.deriv = [](double) { return 1.0; };
  a.envelope_c = 0.0;
  a.envelope_m = 1.0;
  a.name = "identity";
  return a;
}

Activation Activation::custom(std::function<double(double)> fn, double envelope_c,
                              double envelope_m, std::vector<double> kinks,
                              std::string name) {
  Activation a;
  a.kind = ActKind::Custom;
  a.fn = std::move(fn);
  a.kinks = std::move(kinks);
  a.envelope_c = envelope_c;
  a.envelope_m = envelope_m;
  a.name = std::move(name);
  return a;
}

Activation Activation::from_name(const std::string& name) {
  if (name == "relu") return relu();
  if (name == "tanh") return tanh();
  if (name == "htanh") return htanh();
  if (name == "erf") return erf();
  if (name == "identity") return identity();
  throw std::invalid_argument("unknown activation '" + name + "'");
}

}  // namespace piid
