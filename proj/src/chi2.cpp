#include "labscreen/chi2.hpp"

#include <cmath>
#include <limits>

#include <fmt/core.h>

#include "labscreen/errors.hpp"

namespace labscreen {

namespace {

constexpr int kMaxIterations = 1000;
constexpr double kEps = 1e-16;

// x^a e^-x / Gamma(a), computed in log space.
double gamma_prefactor(double a, double x) {
  return std::exp(a * std::log(x) - x - std::lgamma(a));
}

// Power series for P(a, x); converges quickly for x < a + 1.
double series_p(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  double ap = a;
  for (int n = 0; n < kMaxIterations; ++n) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) break;
  }
  return sum * gamma_prefactor(a, x);
}

// Continued fraction for Q(a, x) (modified Lentz); used for x >= a + 1.
double continued_fraction_q(double a, double x) {
  constexpr double tiny = std::numeric_limits<double>::min() / kEps;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIterations; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return gamma_prefactor(a, x) * h;
}

void check_args(double a, double x) {
  if (!(a > 0.0) || !(x >= 0.0) || std::isnan(x)) {
    throw Error(ErrorKind::Domain, fmt::format("incomplete gamma needs a > 0, x >= 0 (a={}, x={})", a, x));
  }
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return series_p(a, x);
  return 1.0 - continued_fraction_q(a, x);
}

double regularized_gamma_q(double a, double x) {
  check_args(a, x);
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  if (x < a + 1.0) return 1.0 - series_p(a, x);
  return continued_fraction_q(a, x);
}

double chi2_sf(double x, int df) {
  if (df < 1) throw Error(ErrorKind::Domain, fmt::format("chi-square df must be >= 1 (got {})", df));
  if (!(x >= 0.0)) throw Error(ErrorKind::Domain, fmt::format("chi-square argument must be >= 0 (got {})", x));
  return regularized_gamma_q(0.5 * df, 0.5 * x);
}

}  // namespace labscreen
