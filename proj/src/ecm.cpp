#include "ecm.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace eisbayes {

namespace {
using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;
}  // namespace

void EcmParams::validate() const {
    if (!(r_s > 0.0) || !std::isfinite(r_s))
        throw std::invalid_argument("EcmParams: r_s must be positive");
    if (!(noise_scale > 0.0) || !std::isfinite(noise_scale))
        throw std::invalid_argument("EcmParams: noise_scale must be positive");
    if (!(l >= 0.0) || !std::isfinite(l))
        throw std::invalid_argument("EcmParams: l must be non-negative");
    if (elements.empty()) throw std::invalid_argument("EcmParams: at least one RQ element");
    for (const auto& e : elements) {
        if (!(e.r > 0.0) || !(e.q > 0.0) || !std::isfinite(e.r) || !std::isfinite(e.q))
            throw std::invalid_argument("RqElement: r and q must be positive");
        if (!(e.alpha > 0.0) || !(e.alpha <= 1.0))
            throw std::invalid_argument("RqElement: alpha must lie in (0, 1]");
    }
}

FrequencyGrid FrequencyGrid::log_spaced(double f_min_hz, double f_max_hz, int points_per_decade) {
    if (!(f_min_hz > 0.0) || !(f_max_hz > f_min_hz) || points_per_decade < 1)
        throw std::invalid_argument("FrequencyGrid::log_spaced: invalid range");
    FrequencyGrid g;
    const double lo = std::log10(f_min_hz);
    const double hi = std::log10(f_max_hz);
    const int n = static_cast<int>(std::floor((hi - lo) * points_per_decade)) + 1;
    g.freqs_hz.reserve(n + 1);
    for (int i = 0; i < n; ++i) g.freqs_hz.push_back(std::pow(10.0, lo + double(i) / points_per_decade));
    if (g.freqs_hz.back() < f_max_hz * (1.0 - 1e-12)) g.freqs_hz.push_back(f_max_hz);
    return g;
}

void FrequencyGrid::validate() const {
    if (freqs_hz.empty()) throw std::invalid_argument("FrequencyGrid: empty");
    double prev = 0.0;
    for (double f : freqs_hz) {
        if (!(f > prev) || !std::isfinite(f))
            throw std::invalid_argument("FrequencyGrid: frequencies must be strictly increasing and positive");
        prev = f;
    }
}

namespace {

// Unit-phase factors e^{j alpha pi/2}; the CPE phase does not depend on
// frequency, so one sincos per element serves the whole grid.
std::vector<cd> cpe_phases(const EcmParams& params) {
    std::vector<cd> ph(params.elements.size());
    for (std::size_t i = 0; i < ph.size(); ++i)
        ph[i] = std::polar(1.0, params.elements[i].alpha * kPi / 2.0);
    return ph;
}

}  // namespace

std::vector<cd> impedance(const EcmParams& params, std::span<const double> freqs_hz) {
    params.validate();
    const auto phases = cpe_phases(params);
    std::vector<cd> out(freqs_hz.size());
    for (std::size_t k = 0; k < freqs_hz.size(); ++k) {
        const double w = 2.0 * kPi * freqs_hz[k];
        const double ln_w = w > 0.0 ? std::log(w) : 0.0;
        cd z(params.r_s, w * params.l);
        for (std::size_t i = 0; i < params.elements.size(); ++i) {
            const auto& e = params.elements[i];
            const double mag = w > 0.0 ? std::exp(e.alpha * ln_w) : 0.0;
            const cd jw_a = mag * phases[i];
            z += e.r / (jw_a * e.q * e.r + 1.0);
        }
        out[k] = z;
    }
    return out;
}

ImpedanceJacobian impedance_jacobian(const EcmParams& params, std::span<const double> freqs_hz) {
    params.validate();
    const std::size_t n = params.elements.size();
    const auto phases = cpe_phases(params);
    ImpedanceJacobian jac;
    jac.n_freqs = freqs_hz.size();
    jac.n_cols = 3 * n + 1;
    jac.z.resize(jac.n_freqs);
    jac.partials.assign(jac.n_freqs * jac.n_cols, cd{});
    for (std::size_t k = 0; k < freqs_hz.size(); ++k) {
        const double w = 2.0 * kPi * freqs_hz[k];
        const double ln_w = w > 0.0 ? std::log(w) : 0.0;
        cd* row = jac.partials.data() + k * jac.n_cols;
        cd z(params.r_s, w * params.l);
        row[0] = cd(1.0, 0.0);  // d/d r_s
        for (std::size_t i = 0; i < n; ++i) {
            const auto& e = params.elements[i];
            const double mag = w > 0.0 ? std::exp(e.alpha * ln_w) : 0.0;
            const cd jw_a = mag * phases[i];
            const cd den = jw_a * e.q * e.r + 1.0;
            const cd inv_den2 = 1.0 / (den * den);
            z += e.r / den;
            row[1 + 3 * i] = inv_den2;
            row[2 + 3 * i] = -e.r * e.r * jw_a * inv_den2;
            // d(jw)^a/da = (jw)^a * (ln w + j pi/2); at w = 0 the product
            // w^a ln w vanishes in the limit.
            cd dpole{};
            if (w > 0.0) dpole = jw_a * cd(ln_w, kPi / 2.0);
            row[3 + 3 * i] = -e.r * e.r * e.q * dpole * inv_den2;
        }
        jac.z[k] = z;
    }
    return jac;
}

std::vector<double> to_free_vector(const EcmParams& params) {
    std::vector<double> x;
    x.reserve(params.free_param_count());
    x.push_back(params.r_s);
    for (const auto& e : params.elements) {
        x.push_back(e.r);
        x.push_back(e.q);
        x.push_back(e.alpha);
    }
    x.push_back(params.noise_scale);
    return x;
}

EcmParams from_free_vector(std::span<const double> x, double l) {
    if (x.size() < 5 || (x.size() - 2) % 3 != 0)
        throw std::invalid_argument("from_free_vector: length must be 3N+2");
    EcmParams p;
    p.r_s = x[0];
    p.l = l;
    const std::size_t n = (x.size() - 2) / 3;
    p.elements.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        p.elements[i].r = x[1 + 3 * i];
        p.elements[i].q = x[2 + 3 * i];
        p.elements[i].alpha = x[3 + 3 * i];
    }
    p.noise_scale = x[x.size() - 1];
    return p;
}

std::vector<std::string> free_param_names(std::size_t n_elements) {
    std::vector<std::string> names;
    names.reserve(3 * n_elements + 2);
    names.emplace_back("r_s");
    for (std::size_t i = 1; i <= n_elements; ++i) {
        names.push_back("r_" + std::to_string(i));
        names.push_back("q_" + std::to_string(i));
        names.push_back("alpha_" + std::to_string(i));
    }
    names.emplace_back("noise_scale");
    return names;
}

}  // namespace eisbayes
