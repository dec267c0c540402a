#include "signal_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "errors.hpp"
#include "fft.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace eisbayes {

namespace {
using cd = std::complex<double>;
constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::size_t sample_count(const SimulationConfig& c) {
    return static_cast<std::size_t>(std::llround(c.duration_s * c.sample_rate_hz));
}
}  // namespace

void SimulationConfig::validate() const {
    if (!(duration_s > 0.0) || !(sample_rate_hz > 0.0))
        throw ValidationError("SimulationConfig: duration and sample rate must be positive");
    if (sample_count(*this) < 16) throw ValidationError("SimulationConfig: record too short");
    if (!(sigma_input >= 0.0) || !(sigma_output >= 0.0))
        throw ValidationError("SimulationConfig: noise stds must be non-negative");
    if (!(excitation.amplitude > 0.0))
        throw ValidationError("SimulationConfig: excitation amplitude must be positive");
    if (excitation.kind == ExcitationSpec::Kind::multisine) {
        if (!(excitation.f_min_hz >= 1.0 / duration_s) ||
            !(excitation.f_max_hz > excitation.f_min_hz) ||
            !(excitation.f_max_hz <= sample_rate_hz / 2.0))
            throw ValidationError(
                "SimulationConfig: excitation band must lie within [1/duration, sample_rate/2]");
        if (excitation.tones_per_decade < 1)
            throw ValidationError("SimulationConfig: tones_per_decade must be >= 1");
    } else {
        if (!(excitation.chip_duration_s >= 1.0 / sample_rate_hz) ||
            !(excitation.chip_duration_s <= duration_s / 8.0))
            throw ValidationError("SimulationConfig: DRBS chip duration out of range");
    }
    EcmParams p = true_params;
    if (p.noise_scale <= 0.0) p.noise_scale = 1.0;
    p.validate();
}

std::vector<double> multisine_tones(const ExcitationSpec& exc, double duration_s,
                                    double sample_rate_hz) {
    const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
    const std::size_t m_max = n / 2 - 1;
    std::vector<std::size_t> bins;
    const double lo = std::log10(exc.f_min_hz);
    const double hi = std::log10(exc.f_max_hz);
    const int count = static_cast<int>(std::floor((hi - lo) * exc.tones_per_decade + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) {
        const double f = std::pow(10.0, lo + double(i) / exc.tones_per_decade);
        const auto m = static_cast<std::size_t>(
            std::clamp<long long>(std::llround(f * duration_s), 1, (long long)m_max));
        bins.push_back(m);
    }
    std::sort(bins.begin(), bins.end());
    bins.erase(std::unique(bins.begin(), bins.end()), bins.end());
    std::vector<double> tones;
    tones.reserve(bins.size());
    for (auto m : bins) tones.push_back(double(m) / duration_s);
    return tones;
}

SimulationResult simulate(const SimulationConfig& config) {
    config.validate();
    EcmParams params = config.true_params;
    if (params.noise_scale <= 0.0) params.noise_scale = 1.0;

    const std::size_t n = sample_count(config);
    const double fs = config.sample_rate_hz;
    const double duration = double(n) / fs;

    auto exc_rng = make_rng(config.seed, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // Clean excitation current.
    std::vector<double> current(n);
    std::vector<double> ref_freqs;
    if (config.excitation.kind == ExcitationSpec::Kind::multisine) {
        ref_freqs = multisine_tones(config.excitation, duration, fs);
        std::vector<cd> spec(n, cd{});
        spec[0] = cd(double(n) * config.excitation.dc_offset, 0.0);
        for (double f : ref_freqs) {
            const auto m = static_cast<std::size_t>(std::llround(f * duration));
            const double phase = kTwoPi * unif(exc_rng);
            const cd coef = std::polar(double(n) * config.excitation.amplitude / 2.0, phase - kPi / 2.0);
            spec[m] = coef;
            spec[n - m] = std::conj(coef);
        }
        const auto x = fft_inverse(spec);
        for (std::size_t i = 0; i < n; ++i) current[i] = x[i].real();
    } else {
        const auto chip = static_cast<std::size_t>(
            std::max<long long>(1, std::llround(config.excitation.chip_duration_s * fs)));
        double level = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i % chip == 0)
                level = (unif(exc_rng) < 0.5 ? -1.0 : 1.0) * config.excitation.amplitude;
            current[i] = config.excitation.dc_offset + level;
        }
        const double lo = 10.0 / duration;
        const double hi = std::min(0.25 / config.excitation.chip_duration_s, fs / 4.0);
        if (!(lo < hi)) throw ValidationError("simulate: DRBS record too short for a reference grid");
        ref_freqs = FrequencyGrid::log_spaced(lo, hi, 6).freqs_hz;
    }

    // Clean voltage: frequency-domain multiplication by the model.
    std::vector<cd> x_spec(n);
    for (std::size_t i = 0; i < n; ++i) x_spec[i] = cd(current[i], 0.0);
    x_spec = fft_forward(x_spec);

    std::vector<double> bin_freqs(n / 2 + 1);
    for (std::size_t k = 0; k <= n / 2; ++k) bin_freqs[k] = double(k) * fs / double(n);
    const auto z_bins = impedance(params, bin_freqs);

    std::vector<cd> y_spec(n, cd{});
    y_spec[0] = x_spec[0] * z_bins[0];  // dc bin; Z(0) is real
    for (std::size_t k = 1; k < (n + 1) / 2; ++k) {
        y_spec[k] = x_spec[k] * z_bins[k];
        y_spec[n - k] = std::conj(y_spec[k]);
    }
    if (n % 2 == 0) y_spec[n / 2] = x_spec[n / 2] * z_bins[n / 2].real();  // keep output real
    const auto v = fft_inverse(y_spec);

    SimulationResult out;
    out.current.samples = std::move(current);
    out.current.sample_rate_hz = fs;
    out.current.channel = Channel::current;
    out.current.tone_freqs_hz = ref_freqs;
    out.voltage.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.voltage.samples[i] = v[i].real();
    out.voltage.sample_rate_hz = fs;
    out.voltage.channel = Channel::voltage;
    out.voltage.tone_freqs_hz = ref_freqs;

    if (config.sigma_input > 0.0) {
        auto rng = make_rng(config.seed, 1);
        std::normal_distribution<double> noise(0.0, config.sigma_input);
        for (auto& s : out.current.samples) s += noise(rng);
    }
    if (config.sigma_output > 0.0) {
        auto rng = make_rng(config.seed, 2);
        std::normal_distribution<double> noise(0.0, config.sigma_output);
        for (auto& s : out.voltage.samples) s += noise(rng);
    }

    out.reference.freqs_hz = ref_freqs;
    out.reference.z = impedance(params, ref_freqs);
    return out;
}

CwtBand cwt_valid_band(double sample_rate_hz, std::size_t n_samples, const CwtConfig& cfg) {
    CwtBand band;
    // Largest scale leaving at least 8 samples after both edge exclusions;
    // smallest scale keeps the wavelet sampled (s >= 2).
    const double s_max = (double(n_samples) - 8.0) / (2.0 * cfg.coi_factor * std::numbers::sqrt2);
    band.f_min_hz = std::max(cfg.omega0 * sample_rate_hz / (kTwoPi * s_max),
                             sample_rate_hz / double(n_samples));
    band.f_max_hz = std::min(sample_rate_hz / 2.0, cfg.omega0 * sample_rate_hz / (kTwoPi * 2.0));
    return band;
}

ImpedanceSpectrum estimate_impedance_cwt(const TimeSeriesRecord& current,
                                         const TimeSeriesRecord& voltage,
                                         std::span<const double> freqs_hz, const CwtConfig& cfg) {
    current.validate();
    voltage.validate();
    if (current.channel != Channel::current || voltage.channel != Channel::voltage)
        throw ValidationError("estimate_impedance_cwt: channel tags mismatch");
    if (current.samples.size() != voltage.samples.size())
        throw ValidationError("estimate_impedance_cwt: record lengths differ");
    if (current.sample_rate_hz != voltage.sample_rate_hz)
        throw ValidationError("estimate_impedance_cwt: sample rates differ");
    if (freqs_hz.empty()) throw ValidationError("estimate_impedance_cwt: no frequencies requested");
    if (!(cfg.omega0 >= 3.0)) throw ValidationError("estimate_impedance_cwt: omega0 must be >= 3");
    if (!(cfg.coi_factor > 0.0)) throw ValidationError("estimate_impedance_cwt: bad coi_factor");

    const std::size_t n = current.samples.size();
    const double fs = current.sample_rate_hz;
    const CwtBand band = cwt_valid_band(fs, n, cfg);
    double prev = 0.0;
    for (double f : freqs_hz) {
        if (!(f > prev)) throw ValidationError("estimate_impedance_cwt: frequencies must increase");
        prev = f;
        if (f < band.f_min_hz || f > band.f_max_hz)
            throw ValidationError("estimate_impedance_cwt: frequency " + std::to_string(f) +
                                  " Hz outside valid band [" + std::to_string(band.f_min_hz) + ", " +
                                  std::to_string(band.f_max_hz) + "] Hz for this record");
    }
    bool any_current = false;
    for (double s : current.samples)
        if (s != 0.0) { any_current = true; break; }
    if (!any_current) throw ValidationError("estimate_impedance_cwt: current channel is all zero");

    std::vector<cd> x_i(n), x_u(n);
    for (std::size_t t = 0; t < n; ++t) {
        x_i[t] = cd(current.samples[t], 0.0);
        x_u[t] = cd(voltage.samples[t], 0.0);
    }
    x_i = fft_forward(x_i);
    x_u = fft_forward(x_u);

    ImpedanceSpectrum out;
    out.freqs_hz.assign(freqs_hz.begin(), freqs_hz.end());
    out.z.assign(freqs_hz.size(), cd{});
    out.dispersion.assign(freqs_hz.size(), 0.0);
    std::vector<std::string> errors(freqs_hz.size());

    parallel_for(freqs_hz.size(), [&](std::size_t idx) {
        const double f = freqs_hz[idx];
        const double scale = cfg.omega0 * fs / (kTwoPi * f);
        const auto margin =
            static_cast<std::size_t>(std::ceil(cfg.coi_factor * std::numbers::sqrt2 * scale));
        if (2 * margin + 8 > n) {
            errors[idx] = "no cone-of-influence-valid samples";
            return;
        }

        // Analytic Morlet filter: Gaussian in frequency around omega0/s.
        // The common normalization factor cancels in the ratio below.
        const double half_width = 7.5;  // exp(-7.5^2/2) ~ 6e-13
        const auto k_lo = static_cast<std::size_t>(
            std::max(1.0, std::floor((cfg.omega0 - half_width) / scale * double(n) / kTwoPi)));
        const auto k_hi = static_cast<std::size_t>(std::min(
            double(n / 2 - 1), std::ceil((cfg.omega0 + half_width) / scale * double(n) / kTwoPi)));

        std::vector<cd> w_i_spec(n, cd{}), w_u_spec(n, cd{});
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            const double arg = scale * kTwoPi * double(k) / double(n) - cfg.omega0;
            const double g = std::exp(-0.5 * arg * arg);
            w_i_spec[k] = x_i[k] * g;
            w_u_spec[k] = x_u[k] * g;
        }
        const auto w_i = fft_inverse(w_i_spec);
        const auto w_u = fft_inverse(w_u_spec);

        cd num{};
        double den = 0.0;
        const std::size_t t_lo = margin, t_hi = n - margin;
        for (std::size_t t = t_lo; t < t_hi; ++t) {
            num += w_u[t] * std::conj(w_i[t]);
            den += std::norm(w_i[t]);
        }
        if (!(den > 0.0)) {
            errors[idx] = "current channel carries no power at this frequency";
            return;
        }
        const cd z = num / den;
        out.z[idx] = z;

        const double power_floor = 0.01 * den / double(t_hi - t_lo);
        double acc = 0.0;
        std::size_t cnt = 0;
        for (std::size_t t = t_lo; t < t_hi; ++t) {
            if (std::norm(w_i[t]) < power_floor) continue;
            acc += std::norm(w_u[t] / w_i[t] - z);
            ++cnt;
        }
        out.dispersion[idx] = cnt > 0 ? std::sqrt(acc / double(cnt)) : 0.0;
    });

    for (std::size_t i = 0; i < errors.size(); ++i)
        if (!errors[i].empty())
            throw ValidationError("estimate_impedance_cwt: " + std::to_string(freqs_hz[i]) +
                                  " Hz: " + errors[i]);
    out.validate();
    return out;
}

}  // namespace eisbayes
