#include "support/oracles.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "rng.hpp"

namespace eisbayes::test {

std::complex<double> impedance_polar_oracle(const EcmParams& params, double freq_hz) {
    const double w = 2.0 * std::numbers::pi * freq_hz;
    double re = params.r_s;
    double im = w * params.l;
    for (const auto& e : params.elements) {
        // (jw)^a * Q * R in polar form
        const double mag = std::pow(w, e.alpha) * e.q * e.r;
        const double ph = e.alpha * std::numbers::pi / 2.0;
        // denominator 1 + mag*e^{j ph}
        const double dre = 1.0 + mag * std::cos(ph);
        const double dim = mag * std::sin(ph);
        const double d2 = dre * dre + dim * dim;
        re += e.r * dre / d2;
        im += -e.r * dim / d2;
    }
    return {re, im};
}

double central_diff(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

double AdamOracle::step(double g, double lr, double beta1, double beta2, double eps) {
    ++t;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g * g;
    const double m_hat = m / (1.0 - std::pow(beta1, t));
    const double v_hat = v / (1.0 - std::pow(beta2, t));
    return -lr * m_hat / (std::sqrt(v_hat) + eps);
}

ScoreGradient score_function_gradient(const VariationalFamily& q, const Likelihood& lik,
                                      const VariationalFamily& prior, std::size_t factor_index,
                                      int n_samples, std::uint64_t seed) {
    auto rng = make_rng(seed);
    ScoreGradient out;
    std::vector<double> g1(n_samples), g2(n_samples);
    for (int s = 0; s < n_samples; ++s) {
        const auto theta = q.draw(rng);
        const double f = log_joint(from_free_vector(theta, lik.l), lik, prior) - q.log_pdf(theta);
        const double x = theta[factor_index];
        double s1, s2;
        if (is_beta(q.factors[factor_index])) {
            const auto& d = std::get<BetaFactor>(q.factors[factor_index]);
            s1 = d.d_log_pdf_da(x);
            s2 = d.d_log_pdf_db(x);
        } else {
            const auto& d = std::get<LognormalFactor>(q.factors[factor_index]);
            s1 = d.d_log_pdf_dmu(x);
            s2 = d.d_log_pdf_dsigma(x);
        }
        g1[s] = f * s1;
        g2[s] = f * s2;
    }
    double m1 = 0.0, m2 = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        m1 += g1[s];
        m2 += g2[s];
    }
    m1 /= n_samples;
    m2 /= n_samples;
    double v1 = 0.0, v2 = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        v1 += (g1[s] - m1) * (g1[s] - m1);
        v2 += (g2[s] - m2) * (g2[s] - m2);
    }
    out.d_p1 = m1;
    out.d_p2 = m2;
    out.stderr_p1 = std::sqrt(v1 / double(n_samples - 1) / double(n_samples));
    out.stderr_p2 = std::sqrt(v2 / double(n_samples - 1) / double(n_samples));
    return out;
}

ImportanceResult importance_posterior_mean(const Likelihood& lik, const VariationalFamily& prior,
                                           int n_samples, std::uint64_t seed) {
    auto rng = make_rng(seed);
    const std::size_t p = prior.size();
    std::vector<std::vector<double>> thetas(n_samples);
    std::vector<double> logw(n_samples);
    double max_logw = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < n_samples; ++s) {
        thetas[s] = prior.draw(rng);
        // proposal = prior, so the weight is just the likelihood term
        const double lj = log_joint(from_free_vector(thetas[s], lik.l), lik, prior);
        logw[s] = lj - prior.log_pdf(thetas[s]);
        max_logw = std::max(max_logw, logw[s]);
    }
    double wsum = 0.0, w2sum = 0.0;
    std::vector<double> acc(p, 0.0);
    std::vector<double> w(n_samples);
    for (int s = 0; s < n_samples; ++s) {
        w[s] = std::exp(logw[s] - max_logw);
        wsum += w[s];
        w2sum += w[s] * w[s];
        for (std::size_t j = 0; j < p; ++j) acc[j] += w[s] * thetas[s][j];
    }
    ImportanceResult out;
    out.mean.resize(p);
    out.se.resize(p);
    out.effective_sample_size = wsum * wsum / w2sum;
    for (std::size_t j = 0; j < p; ++j) out.mean[j] = acc[j] / wsum;
    // Delta-method standard error of the self-normalized estimator.
    for (std::size_t j = 0; j < p; ++j) {
        double var = 0.0;
        for (int s = 0; s < n_samples; ++s) {
            const double d = (w[s] / wsum) * (thetas[s][j] - out.mean[j]);
            var += d * d;
        }
        out.se[j] = std::sqrt(var);
    }
    return out;
}

namespace {

// Regularized lower incomplete gamma P(a, x), series + continued fraction.
double incgamma_lower(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("incgamma_lower: bad arguments");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15)
                return sum * std::exp(-x + a * std::log(x) - lg);
        }
        throw std::runtime_error("incgamma_lower: series did not converge");
    }
    // Lentz continued fraction for Q(a, x)
    const double fpmin = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / fpmin;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -double(i) * (double(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = b + an / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) {
            const double q = std::exp(-x + a * std::log(x) - lg) * h;
            return 1.0 - q;
        }
    }
    throw std::runtime_error("incgamma_lower: continued fraction did not converge");
}

}  // namespace

double chi_square_p_value(double statistic, int dof) {
    return 1.0 - incgamma_lower(double(dof) / 2.0, statistic / 2.0);
}

ImpedanceSpectrum make_noisy_spectrum(const EcmParams& truth, std::span<const double> freqs_hz,
                                      double sigma, std::uint64_t seed) {
    ImpedanceSpectrum s;
    s.freqs_hz.assign(freqs_hz.begin(), freqs_hz.end());
    s.z = impedance(truth, freqs_hz);
    if (sigma > 0.0) {
        auto rng = make_rng(seed);
        std::normal_distribution<double> noise(0.0, sigma);
        for (auto& z : s.z) z += std::complex<double>(noise(rng), noise(rng));
    }
    return s;
}

}  // namespace eisbayes::test
