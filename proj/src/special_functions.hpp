#pragma once

namespace eisbayes {

// log B(a,b) for a,b > 0.
double log_beta(double a, double b);

// Regularized incomplete beta I_x(a,b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// Digamma for x > 0; recurrence below 10, asymptotic series above.
double digamma(double x);

// Standard normal quantile (Acklam's rational approximation, ~1e-9
// relative); used as an initial guess for quantile Newton iterations.
double std_normal_quantile(double p);

}  // namespace eisbayes
