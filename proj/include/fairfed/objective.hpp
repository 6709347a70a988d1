#pragma once

#include <span>

namespace fairfed {

/// Fairness knobs shared by the q-family solvers: exponent q, the base
/// Lipschitz constant L (supplied as 1/step-size), and the floor applied to
/// losses before negative-power exponentiation.
struct QConfig {
  double q = 0.0;
  double L = 1.0;
  double eps_floor = 1e-10;

  void validate() const;
};

/// pow with the exponents 0 and 1 short-circuited, so that q = 0 collapses
/// to bit-exact identities instead of round-tripping through std::pow.
double fpow(double base, double exponent);

/// Weighted fairness objective sum_k p_k/(q+1) * losses_k^(q+1). With q = 0
/// this is the plain weighted mean, computed by the same summation path.
double qffl_value(double q, std::span<const double> p, std::span<const double> losses);

/// Upper bound on the local Lipschitz constant of the reweighted gradient:
/// L*f^q + q*f^(q-1)*grad_norm_sq. For 0 < q < 1 the value f is floored at
/// eps_floor before the negative power. Returns L exactly when q = 0.
double lipschitz_estimate(double L, double q, double f_value, double grad_norm_sq,
                          double eps_floor);

/// alpha-fairness utility of a positive scalar: ln(x) at alpha = 1, else
/// x^(1-alpha)/(1-alpha).
double alpha_fairness_utility(double alpha, double x);

}  // namespace fairfed
