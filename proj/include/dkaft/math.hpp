#pragma once

#include <cstddef>

namespace dkaft::mathx {

double sigmoid(double x);

/// log(1 + e^x), overflow-safe.
double softplus(double x);

/// Inverse of softplus for y > 0.
double softplus_inv(double y);

double normal_pdf(double x);
double normal_cdf(double x);

/// Inverse standard normal CDF (Acklam's rational approximation plus one
/// Halley refinement; accurate to ~1e-15 on (0, 1)).
double normal_quantile(double p);

/// log(1 - Phi(u)), stable far into the upper tail.
double log_normal_sf(double u);

/// d/du log(1 - Phi(u)) = -pdf(u) / (1 - Phi(u)).
double dlog_normal_sf(double u);

/// Regularized incomplete beta I_x(a, b) via Lentz continued fraction.
double reg_inc_beta(double a, double b, double x);

/// Two-sided p-value of a t statistic with dof degrees of freedom.
double student_t_two_sided_p(double t, double dof);

/// Empirical quantile with linear interpolation at index q*(n-1); input must
/// be sorted ascending.
double quantile_sorted(const double* sorted, std::size_t n, double q);

}  // namespace dkaft::mathx
