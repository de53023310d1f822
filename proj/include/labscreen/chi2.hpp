#pragma once

namespace labscreen {

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double regularized_gamma_p(double a, double x);
/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x).
double regularized_gamma_q(double a, double x);

/// Upper tail of the chi-square distribution: Q(df/2, x/2).
/// Throws Domain for x < 0 or df < 1.
double chi2_sf(double x, int df);

}  // namespace labscreen
