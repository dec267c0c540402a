#include "distributions.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "special_functions.hpp"

namespace eisbayes {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.9189385332046727;  // ln(2*pi)/2
constexpr double kBetaClamp = 1e-9;
}  // namespace

// ---------------------------------------------------------------------------
// Lognormal
// ---------------------------------------------------------------------------

void LognormalFactor::validate() const {
    if (!(sigma_ln > 0.0) || !std::isfinite(sigma_ln) || !std::isfinite(mu_ln))
        throw std::invalid_argument("LognormalFactor: sigma_ln must be positive and finite");
}

LognormalFactor LognormalFactor::from_moments(double mean, double variance) {
    if (!(mean > 0.0) || !(variance > 0.0))
        throw std::invalid_argument("lognormal_from_moments: mean and variance must be positive");
    const double m2 = mean * mean;
    LognormalFactor f;
    f.mu_ln = std::log(m2 / std::sqrt(variance + m2));
    f.sigma_ln = std::sqrt(std::log1p(variance / m2));
    return f;
}

double LognormalFactor::mean() const {
    return std::exp(mu_ln + 0.5 * sigma_ln * sigma_ln);
}

double LognormalFactor::variance() const {
    const double s2 = sigma_ln * sigma_ln;
    return std::expm1(s2) * std::exp(2.0 * mu_ln + s2);
}

double LognormalFactor::log_pdf(double x) const {
    if (!(x > 0.0)) return kNegInf;
    const double z = (std::log(x) - mu_ln) / sigma_ln;
    return -std::log(x) - std::log(sigma_ln) - kHalfLog2Pi - 0.5 * z * z;
}

double LognormalFactor::d_log_pdf_dx(double x) const {
    const double z = (std::log(x) - mu_ln) / (sigma_ln * sigma_ln);
    return -(1.0 + z) / x;
}

double LognormalFactor::d_log_pdf_dmu(double x) const {
    return (std::log(x) - mu_ln) / (sigma_ln * sigma_ln);
}

double LognormalFactor::d_log_pdf_dsigma(double x) const {
    const double d = std::log(x) - mu_ln;
    return -1.0 / sigma_ln + d * d / (sigma_ln * sigma_ln * sigma_ln);
}

PathwiseSample LognormalFactor::sample_pathwise(double eps) const {
    PathwiseSample s;
    s.value = std::exp(mu_ln + sigma_ln * eps);
    s.d_p1 = s.value;
    s.d_p2 = s.value * eps;
    return s;
}

// ---------------------------------------------------------------------------
// Beta
// ---------------------------------------------------------------------------

void BetaFactor::validate() const {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
        throw std::invalid_argument("BetaFactor: a and b must be positive and finite");
}

BetaFactor BetaFactor::from_moments(double mean, double variance) {
    if (!(mean > 0.0) || !(mean < 1.0))
        throw std::invalid_argument("beta_from_moments: mean must lie in (0,1)");
    const double bound = mean * (1.0 - mean);
    if (!(variance > 0.0) || !(variance < bound))
        throw std::invalid_argument("beta_from_moments: need 0 < variance < mean*(1-mean)");
    const double nu = bound / variance - 1.0;
    return BetaFactor{mean * nu, (1.0 - mean) * nu};
}

double BetaFactor::mean() const { return a / (a + b); }

double BetaFactor::variance() const {
    const double s = a + b;
    return a * b / (s * s * (s + 1.0));
}

double BetaFactor::log_pdf(double x) const {
    if (!(x > 0.0) || !(x < 1.0)) return kNegInf;
    return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta(a, b);
}

double BetaFactor::d_log_pdf_dx(double x) const {
    return (a - 1.0) / x - (b - 1.0) / (1.0 - x);
}

double BetaFactor::d_log_pdf_da(double x) const {
    return std::log(x) - digamma(a) + digamma(a + b);
}

double BetaFactor::d_log_pdf_db(double x) const {
    return std::log1p(-x) - digamma(b) + digamma(a + b);
}

double BetaFactor::cdf(double x) const { return incomplete_beta(a, b, x); }

double BetaFactor::inv_cdf(double u) const {
    if (!(u >= 0.0) || !(u <= 1.0) || !std::isfinite(u))
        throw std::invalid_argument("BetaFactor::inv_cdf: u must lie in [0,1]");
    u = std::min(std::max(u, 1e-12), 1.0 - 1e-12);
    double lo = 0.0, hi = 1.0;
    // moment-matched normal quantile as the starting point
    double x = mean() + std::sqrt(variance()) * std_normal_quantile(u);
    x = std::min(std::max(x, kBetaClamp), 1.0 - kBetaClamp);
    const double ln_norm = log_beta(a, b);
    for (int it = 0; it < 200; ++it) {
        const double err = incomplete_beta(a, b, x) - u;
        if (err > 0.0) hi = x; else lo = x;
        const double pdf = std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - ln_norm);
        double next;
        if (pdf > 0.0 && std::isfinite(pdf)) {
            next = x - err / pdf;
            if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
        } else {
            next = 0.5 * (lo + hi);
        }
        next = std::min(std::max(next, kBetaClamp), 1.0 - kBetaClamp);
        if (std::fabs(next - x) < 1e-12) return next;
        x = next;
    }
    throw std::runtime_error("BetaFactor::inv_cdf: inversion did not converge");
}

PathwiseSample BetaFactor::sample_pathwise(double u) const {
    PathwiseSample s;
    s.value = inv_cdf(u);
    const double pdf = std::exp(log_pdf(s.value));
    // dF/da, dF/db at the sampled point; implicit function theorem.
    const double ha = 1e-5 * a;
    const double hb = 1e-5 * b;
    const double dF_da =
        (incomplete_beta(a + ha, b, s.value) - incomplete_beta(a - ha, b, s.value)) / (2.0 * ha);
    const double dF_db =
        (incomplete_beta(a, b + hb, s.value) - incomplete_beta(a, b - hb, s.value)) / (2.0 * hb);
    s.d_p1 = -dF_da / pdf;
    s.d_p2 = -dF_db / pdf;
    return s;
}

// ---------------------------------------------------------------------------
// Factor helpers
// ---------------------------------------------------------------------------

bool is_beta(const Factor& f) { return std::holds_alternative<BetaFactor>(f); }

double factor_mean(const Factor& f) {
    return std::visit([](const auto& d) { return d.mean(); }, f);
}

double factor_variance(const Factor& f) {
    return std::visit([](const auto& d) { return d.variance(); }, f);
}

double factor_log_pdf(const Factor& f, double x) {
    return std::visit([x](const auto& d) { return d.log_pdf(x); }, f);
}

double factor_d_log_pdf_dx(const Factor& f, double x) {
    return std::visit([x](const auto& d) { return d.d_log_pdf_dx(x); }, f);
}

PathwiseSample factor_sample_pathwise(const Factor& f, double base_noise) {
    return std::visit([base_noise](const auto& d) { return d.sample_pathwise(base_noise); }, f);
}

// ---------------------------------------------------------------------------
// VariationalFamily
// ---------------------------------------------------------------------------

void VariationalFamily::validate() const {
    for (const auto& f : factors) std::visit([](const auto& d) { d.validate(); }, f);
}

double VariationalFamily::log_pdf(std::span<const double> x) const {
    if (x.size() != factors.size())
        throw std::invalid_argument("VariationalFamily::log_pdf: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < factors.size(); ++i) total += factor_log_pdf(factors[i], x[i]);
    return total;
}

std::vector<double> VariationalFamily::means() const {
    std::vector<double> out(factors.size());
    for (std::size_t i = 0; i < factors.size(); ++i) out[i] = factor_mean(factors[i]);
    return out;
}

std::vector<double> VariationalFamily::variances() const {
    std::vector<double> out(factors.size());
    for (std::size_t i = 0; i < factors.size(); ++i) out[i] = factor_variance(factors[i]);
    return out;
}

std::vector<double> VariationalFamily::draw(std::mt19937_64& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> out(factors.size());
    for (std::size_t i = 0; i < factors.size(); ++i) {
        if (is_beta(factors[i])) {
            out[i] = std::get<BetaFactor>(factors[i]).inv_cdf(unif(rng));
        } else {
            const auto& ln = std::get<LognormalFactor>(factors[i]);
            out[i] = std::exp(ln.mu_ln + ln.sigma_ln * normal(rng));
        }
    }
    return out;
}

std::vector<double> pack_unconstrained(const VariationalFamily& family) {
    std::vector<double> x;
    x.reserve(2 * family.size());
    for (const auto& f : family.factors) {
        if (is_beta(f)) {
            const auto& d = std::get<BetaFactor>(f);
            x.push_back(std::log(d.a));
            x.push_back(std::log(d.b));
        } else {
            const auto& d = std::get<LognormalFactor>(f);
            x.push_back(d.mu_ln);
            x.push_back(std::log(d.sigma_ln));
        }
    }
    return x;
}

VariationalFamily unpack_unconstrained(std::span<const double> x,
                                       const VariationalFamily& shape) {
    if (x.size() != 2 * shape.size())
        throw std::invalid_argument("unpack_unconstrained: size mismatch");
    VariationalFamily out;
    out.factors.reserve(shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) {
        const double p1 = x[2 * i];
        const double p2 = x[2 * i + 1];
        if (is_beta(shape.factors[i])) {
            out.factors.emplace_back(BetaFactor{std::exp(p1), std::exp(p2)});
        } else {
            out.factors.emplace_back(LognormalFactor{p1, std::exp(p2)});
        }
    }
    return out;
}

}  // namespace eisbayes
