#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <variant>
#include <vector>

namespace eisbayes {

// Value of a reparameterized draw together with its sensitivities to the
// factor's two natural hyperparameters ((mu_ln, sigma_ln) or (a, b)).
struct PathwiseSample {
    double value = 0.0;
    double d_p1 = 0.0;
    double d_p2 = 0.0;
};

struct LognormalFactor {
    double mu_ln = 0.0;
    double sigma_ln = 1.0;

    static LognormalFactor from_moments(double mean, double variance);

    double mean() const;
    double variance() const;
    double log_pdf(double x) const;      // -inf outside (0, inf)
    double d_log_pdf_dx(double x) const;
    double d_log_pdf_dmu(double x) const;     // partials at fixed x
    double d_log_pdf_dsigma(double x) const;

    // x = exp(mu + sigma*eps), eps ~ N(0,1); exact sensitivities.
    PathwiseSample sample_pathwise(double eps) const;

    void validate() const;
};

struct BetaFactor {
    double a = 1.0;
    double b = 1.0;

    static BetaFactor from_moments(double mean, double variance);

    double mean() const;
    double variance() const;
    double log_pdf(double x) const;      // -inf outside (0, 1)
    double d_log_pdf_dx(double x) const;
    double d_log_pdf_da(double x) const;
    double d_log_pdf_db(double x) const;

    double cdf(double x) const;
    // Bisection-guarded Newton inversion of the regularized incomplete
    // beta, |dx| tolerance 1e-12; throws on non-convergence. Results are
    // clamped into [1e-9, 1 - 1e-9].
    double inv_cdf(double u) const;

    // x = F^-1(u; a, b); d/da, d/db by implicit differentiation with
    // central finite differences of the CDF (relative step 1e-5).
    PathwiseSample sample_pathwise(double u) const;

    void validate() const;
};

using Factor = std::variant<LognormalFactor, BetaFactor>;

bool is_beta(const Factor& f);
double factor_mean(const Factor& f);
double factor_variance(const Factor& f);
double factor_log_pdf(const Factor& f, double x);
double factor_d_log_pdf_dx(const Factor& f, double x);
PathwiseSample factor_sample_pathwise(const Factor& f, double base_noise);

// One independent factor per free model parameter (mean-field).
struct VariationalFamily {
    std::vector<Factor> factors;

    std::size_t size() const { return factors.size(); }
    double log_pdf(std::span<const double> x) const;  // sum over factors
    std::vector<double> means() const;
    std::vector<double> variances() const;
    // Physical draw, one value per factor; consumes one base draw each.
    std::vector<double> draw(std::mt19937_64& rng) const;

    void validate() const;
};

// Unconstrained coordinates used by the optimizer: lognormal -> (mu,
// log sigma), beta -> (log a, log b); two entries per factor.
std::vector<double> pack_unconstrained(const VariationalFamily& family);
VariationalFamily unpack_unconstrained(std::span<const double> x,
                                       const VariationalFamily& shape);

}  // namespace eisbayes
