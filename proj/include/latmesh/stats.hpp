#pragma once

namespace latmesh::stats {

/// Regularized incomplete beta function I_x(a, b), x in [0, 1].
double incomplete_beta(double a, double b, double x);

/// CDF of Student's t distribution with df degrees of freedom.
double student_t_cdf(double t, double df);

/// Standard normal CDF.
double normal_cdf(double z);

} // namespace latmesh::stats
