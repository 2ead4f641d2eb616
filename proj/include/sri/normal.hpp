#pragma once

namespace sri {

// Standard normal CDF via erfc.
double normal_cdf(double x);

// Inverse standard normal CDF. Rational initial guess refined with two Halley
// steps against normal_cdf; validated in tests against brute-force bisection
// of the CDF to 1e-10. Domain (0, 1); returns +/-inf at the endpoints.
double normal_quantile(double p);

// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

// Survival function of the chi-square distribution with k degrees of freedom.
double chi_square_sf(double x, int k);

}  // namespace sri
