#include "vb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "errors.hpp"
#include "rng.hpp"

namespace eisbayes {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093453;
}  // namespace

void Likelihood::validate() const {
    spectrum.validate();
    if (n_elements < 1) throw ValidationError("Likelihood: model order must be >= 1");
    if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("Likelihood: l must be non-negative");
    if (spectrum.size() < free_param_count())
        throw ValidationError("Likelihood: need at least 3N+2 = " +
                              std::to_string(free_param_count()) + " data points, got " +
                              std::to_string(spectrum.size()));
}

void VbConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("VbConfig: learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw ValidationError("VbConfig: beta1/beta2 must lie in (0,1)");
    if (!(adam_epsilon > 0.0)) throw ValidationError("VbConfig: adam_epsilon must be positive");
    if (mc_samples < 1) throw ValidationError("VbConfig: mc_samples must be >= 1");
    if (min_iters < 1 || max_iters < min_iters)
        throw ValidationError("VbConfig: need 1 <= min_iters <= max_iters");
    if (convergence_window < 1) throw ValidationError("VbConfig: convergence_window must be >= 1");
    if (!(convergence_rel_change > 0.0 && convergence_rel_change < 1.0))
        throw ValidationError("VbConfig: convergence_rel_change must lie in (0,1)");
}

// ---------------------------------------------------------------------------
// Log joint
// ---------------------------------------------------------------------------

double log_joint(const EcmParams& theta, const Likelihood& lik, const VariationalFamily& prior) {
    const auto free = to_free_vector(theta);
    const double lp = prior.log_pdf(free);
    if (lp == kNegInf) return kNegInf;

    const auto z = impedance(theta, lik.spectrum.freqs_hz);
    const std::size_t k = z.size();
    double ssr = 0.0;
    for (std::size_t i = 0; i < k; ++i) ssr += std::norm(lik.spectrum.z[i] - z[i]);
    const double sigma = theta.noise_scale;
    const double ll = -double(2 * k) * std::log(sigma) - double(k) * kLog2Pi - ssr / (2.0 * sigma * sigma);
    return ll + lp;
}

LogJointGradient log_joint_gradient(const EcmParams& theta, const Likelihood& lik,
                                    const VariationalFamily& prior) {
    const std::size_t p = theta.free_param_count();
    LogJointGradient out;
    out.d_free.assign(p, 0.0);

    const auto free = to_free_vector(theta);
    double lp = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        lp += factor_log_pdf(prior.factors[j], free[j]);
        out.d_free[j] = factor_d_log_pdf_dx(prior.factors[j], free[j]);
    }
    if (!std::isfinite(lp)) {
        out.value = kNegInf;
        return out;
    }

    const auto jac = impedance_jacobian(theta, lik.spectrum.freqs_hz);
    const std::size_t k = jac.n_freqs;
    const double sigma = theta.noise_scale;
    const double inv_s2 = 1.0 / (sigma * sigma);
    double ssr = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const std::complex<double> resid = lik.spectrum.z[i] - jac.z[i];
        ssr += std::norm(resid);
        const std::complex<double>* row = jac.partials.data() + i * jac.n_cols;
        for (std::size_t j = 0; j < jac.n_cols; ++j) {
            out.d_free[j] += inv_s2 * (resid.real() * row[j].real() + resid.imag() * row[j].imag());
        }
    }
    // noise_scale enters only the likelihood normalizer and SSR weight.
    out.d_free[p - 1] += -double(2 * k) / sigma + ssr / (sigma * sigma * sigma);
    out.value = lp - double(2 * k) * std::log(sigma) - double(k) * kLog2Pi - ssr * inv_s2 / 2.0;
    return out;
}

// ---------------------------------------------------------------------------
// ELBO estimate with pathwise gradient
// ---------------------------------------------------------------------------

ElboEstimate elbo_estimate(const VariationalFamily& q, const Likelihood& lik,
                           const VariationalFamily& prior, int mc_samples, std::uint64_t seed) {
    auto rng = make_rng(seed);
    return elbo_estimate(q, lik, prior, mc_samples, rng);
}

ElboEstimate elbo_estimate(const VariationalFamily& q, const Likelihood& lik,
                           const VariationalFamily& prior, int mc_samples, std::mt19937_64& rng) {
    const std::size_t p = q.size();
    if (p != prior.size() || p != lik.free_param_count())
        throw ValidationError("elbo_estimate: family/prior/model size mismatch");
    if (mc_samples < 1) throw ValidationError("elbo_estimate: mc_samples must be >= 1");

    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    ElboEstimate acc;
    acc.gradient.assign(2 * p, 0.0);
    std::vector<PathwiseSample> path(p);
    std::vector<double> theta_vec(p);

    for (int s = 0; s < mc_samples; ++s) {
        for (std::size_t j = 0; j < p; ++j) {
            const double base = is_beta(q.factors[j]) ? unif(rng) : normal(rng);
            path[j] = factor_sample_pathwise(q.factors[j], base);
            theta_vec[j] = path[j].value;
        }
        const EcmParams theta = from_free_vector(theta_vec, lik.l);
        const LogJointGradient lj = log_joint_gradient(theta, lik, prior);

        double log_q = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            const double x = theta_vec[j];
            const auto& f = q.factors[j];
            log_q += factor_log_pdf(f, x);
            const double common = lj.d_free[j] - factor_d_log_pdf_dx(f, x);
            double g1, g2;
            if (is_beta(f)) {
                const auto& d = std::get<BetaFactor>(f);
                g1 = common * path[j].d_p1 - d.d_log_pdf_da(x);
                g2 = common * path[j].d_p2 - d.d_log_pdf_db(x);
                g1 *= d.a;  // chain to log a, log b
                g2 *= d.b;
            } else {
                const auto& d = std::get<LognormalFactor>(f);
                g1 = common * path[j].d_p1 - d.d_log_pdf_dmu(x);
                g2 = common * path[j].d_p2 - d.d_log_pdf_dsigma(x);
                g2 *= d.sigma_ln;  // chain to log sigma
            }
            acc.gradient[2 * j] += g1;
            acc.gradient[2 * j + 1] += g2;
        }
        acc.elbo += lj.value - log_q;
    }

    const double inv_s = 1.0 / double(mc_samples);
    acc.elbo *= inv_s;
    for (auto& g : acc.gradient) g *= inv_s;
    return acc;
}

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

void adam_step(AdamState& state, std::span<const double> gradient, std::span<double> x,
               const VbConfig& config) {
    const std::size_t n = gradient.size();
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n || x.size() != n)
        throw ValidationError("adam_step: dimension mismatch");
    ++state.t;
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double bias1 = 1.0 - std::pow(b1, state.t);
    const double bias2 = 1.0 - std::pow(b2, state.t);
    const double eps = config.effective_epsilon();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = gradient[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double m_hat = state.m[i] / bias1;
        const double v_hat = state.v[i] / bias2;
        x[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + eps);
    }
}

// ---------------------------------------------------------------------------
// Fit loop
// ---------------------------------------------------------------------------

PosteriorReport fit(const Likelihood& lik, const VariationalFamily& prior,
                    const VariationalFamily& init, const VbConfig& config) {
    lik.validate();
    config.validate();
    prior.validate();
    init.validate();
    const std::size_t p = lik.free_param_count();
    if (prior.size() != p || init.size() != p)
        throw ValidationError("fit: prior/init size must equal 3N+2");

    const auto t0 = std::chrono::steady_clock::now();
    auto rng = make_rng(config.seed);

    std::vector<double> lambda = pack_unconstrained(init);
    AdamState adam;
    std::vector<double> descent(lambda.size());

    PosteriorReport report;
    report.param_names = free_param_names(lik.n_elements);
    report.n_params = p;
    report.seed = config.seed;
    report.elbo_trace.reserve(config.max_iters);
    report.mean_trace.reserve(std::size_t(config.max_iters) * p);
    report.sd_trace.reserve(std::size_t(config.max_iters) * p);
    report.stop_reason = StopReason::max_iters;

    const int w = config.convergence_window;
    VariationalFamily q = init;
    for (int t = 1; t <= config.max_iters; ++t) {
        const ElboEstimate est = elbo_estimate(q, lik, prior, config.mc_samples, rng);
        if (!std::isfinite(est.elbo))
            throw ConvergenceError("fit: non-finite ELBO at iteration " + std::to_string(t));

        report.elbo_trace.push_back(est.elbo);
        for (std::size_t j = 0; j < p; ++j) {
            report.mean_trace.push_back(factor_mean(q.factors[j]));
            report.sd_trace.push_back(std::sqrt(factor_variance(q.factors[j])));
        }

        for (std::size_t i = 0; i < lambda.size(); ++i) descent[i] = -est.gradient[i];
        adam_step(adam, descent, lambda, config);
        q = unpack_unconstrained(lambda, prior);

        if (t % w == 0 && t >= config.min_iters + w && t >= 2 * w) {
            const auto& e = report.elbo_trace;
            const double last = std::accumulate(e.end() - w, e.end(), 0.0) / w;
            const double prev = std::accumulate(e.end() - 2 * w, e.end() - w, 0.0) / w;
            const double denom = std::max(std::fabs(prev), std::numeric_limits<double>::min());
            if (std::fabs(last - prev) / denom < config.convergence_rel_change) {
                report.iterations = t;
                report.stop_reason = StopReason::converged;
                break;
            }
        }
        report.iterations = t;
    }

    report.fitted = q;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

// ---------------------------------------------------------------------------
// Credible bands
// ---------------------------------------------------------------------------

namespace {
double quantile_sorted(std::vector<double>& v, double q) {
    std::sort(v.begin(), v.end());
    const double idx = q * double(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = idx - double(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}
}  // namespace

CredibleBands extract_bands(const VariationalFamily& fitted, std::size_t n_elements, double l,
                            std::span<const double> freqs_hz, int n_samples, double lo_quantile,
                            double hi_quantile, std::uint64_t seed) {
    if (n_samples < 2) throw ValidationError("extract_bands: n_samples must be >= 2");
    if (!(lo_quantile >= 0.0 && lo_quantile < hi_quantile && hi_quantile <= 1.0))
        throw ValidationError("extract_bands: bad quantiles");
    fitted.validate();
    if (fitted.size() != 3 * n_elements + 2)
        throw ValidationError("extract_bands: family size must equal 3N+2");

    const std::size_t k = freqs_hz.size();
    CredibleBands bands;
    bands.freqs_hz.assign(freqs_hz.begin(), freqs_hz.end());

    const auto mean_curve = impedance(from_free_vector(fitted.means(), l), freqs_hz);
    bands.re_mean.resize(k);
    bands.im_mean.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        bands.re_mean[i] = mean_curve[i].real();
        bands.im_mean[i] = mean_curve[i].imag();
    }

    auto rng = make_rng(seed);
    std::vector<double> re_samples(std::size_t(n_samples) * k);
    std::vector<double> im_samples(std::size_t(n_samples) * k);
    for (int s = 0; s < n_samples; ++s) {
        const auto theta = fitted.draw(rng);
        const auto z = impedance(from_free_vector(theta, l), freqs_hz);
        for (std::size_t i = 0; i < k; ++i) {
            re_samples[std::size_t(s) * k + i] = z[i].real();
            im_samples[std::size_t(s) * k + i] = z[i].imag();
        }
    }

    bands.re_lo.resize(k);
    bands.re_hi.resize(k);
    bands.im_lo.resize(k);
    bands.im_hi.resize(k);
    std::vector<double> col(n_samples);
    for (std::size_t i = 0; i < k; ++i) {
        for (int s = 0; s < n_samples; ++s) col[s] = re_samples[std::size_t(s) * k + i];
        bands.re_lo[i] = quantile_sorted(col, lo_quantile);
        bands.re_hi[i] = quantile_sorted(col, hi_quantile);
        for (int s = 0; s < n_samples; ++s) col[s] = im_samples[std::size_t(s) * k + i];
        bands.im_lo[i] = quantile_sorted(col, lo_quantile);
        bands.im_hi[i] = quantile_sorted(col, hi_quantile);
    }
    return bands;
}

}  // namespace eisbayes
