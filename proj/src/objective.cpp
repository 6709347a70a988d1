#include "fairfed/objective.hpp"

#include <cmath>
#include <string>

#include "fairfed/error.hpp"

namespace fairfed {

void QConfig::validate() const {
  if (!(q >= 0.0) || !std::isfinite(q)) {
    throw Error("qconfig: q must be >= 0, got " + std::to_string(q));
  }
  if (!(L > 0.0) || !std::isfinite(L)) {
    throw Error("qconfig: L must be > 0, got " + std::to_string(L));
  }
  if (!(eps_floor > 0.0)) {
    throw Error("qconfig: eps_floor must be > 0, got " + std::to_string(eps_floor));
  }
}

double fpow(double base, double exponent) {
  if (base < 0.0) throw Error("fpow: negative base " + std::to_string(base));
  if (exponent == 0.0) return 1.0;
  if (exponent == 1.0) return base;
  return std::pow(base, exponent);
}

double qffl_value(double q, std::span<const double> p, std::span<const double> losses) {
  if (!(q >= 0.0)) throw Error("qffl_value: q must be >= 0, got " + std::to_string(q));
  if (p.size() != losses.size()) {
    throw Error("qffl_value: " + std::to_string(p.size()) + " weights for " +
                std::to_string(losses.size()) + " losses");
  }
  if (p.empty()) throw Error("qffl_value: empty device list");
  double psum = 0.0;
  for (double pk : p) {
    if (!(pk >= 0.0)) throw Error("qffl_value: negative weight " + std::to_string(pk));
    psum += pk;
  }
  if (std::abs(psum - 1.0) > 1e-9) {
    throw Error("qffl_value: weights sum to " + std::to_string(psum) + ", expected 1");
  }
  double value = 0.0;
  for (size_t k = 0; k < p.size(); ++k) {
    if (!(losses[k] >= 0.0)) {
      throw Error("qffl_value: negative loss " + std::to_string(losses[k]) + " at device " +
                  std::to_string(k));
    }
    value += p[k] / (q + 1.0) * fpow(losses[k], q + 1.0);
  }
  return value;
}

double lipschitz_estimate(double L, double q, double f_value, double grad_norm_sq,
                          double eps_floor) {
  if (!(L > 0.0)) throw Error("lipschitz_estimate: L must be > 0, got " + std::to_string(L));
  if (!(q >= 0.0)) throw Error("lipschitz_estimate: q must be >= 0, got " + std::to_string(q));
  if (!(f_value >= 0.0)) {
    throw Error("lipschitz_estimate: negative loss " + std::to_string(f_value));
  }
  if (!(grad_norm_sq >= 0.0)) {
    throw Error("lipschitz_estimate: negative squared norm " + std::to_string(grad_norm_sq));
  }
  if (q == 0.0) return L;
  // f^(q-1) is singular at f = 0 when q < 1; the floor keeps the bound finite.
  const double floored = (q < 1.0 && f_value < eps_floor) ? eps_floor : f_value;
  return L * fpow(f_value, q) + q * fpow(floored, q - 1.0) * grad_norm_sq;
}

double alpha_fairness_utility(double alpha, double x) {
  if (!(alpha >= 0.0)) {
    throw Error("alpha_fairness_utility: alpha must be >= 0, got " + std::to_string(alpha));
  }
  if (!(x > 0.0)) {
    throw Error("alpha_fairness_utility: x must be > 0, got " + std::to_string(x));
  }
  if (alpha == 1.0) return std::log(x);
  return fpow(x, 1.0 - alpha) / (1.0 - alpha);
}

}  // namespace fairfed
