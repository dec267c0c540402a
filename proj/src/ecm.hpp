#pragma once

#include <complex>
#include <span>
#include <string>
#include <vector>

namespace eisbayes {

// Parallel R-CPE pair: impedance R / ((jw)^alpha * Q * R + 1).
struct RqElement {
    double r = 0.0;      // ohm
    double q = 0.0;      // F s^(alpha-1)
    double alpha = 0.0;  // fractional order, (0, 1]
};

// One concrete parameter vector of the model. The inductance l is a fixed
// configuration input, never inferred; noise_scale is the std of the
// additive observation noise on each impedance component.
struct EcmParams {
    double r_s = 0.0;
    std::vector<RqElement> elements;
    double l = 0.0;
    double noise_scale = 0.0;

    std::size_t free_param_count() const { return 3 * elements.size() + 2; }
    void validate() const;  // throws std::invalid_argument
};

struct FrequencyGrid {
    std::vector<double> freqs_hz;  // strictly increasing, all positive

    static FrequencyGrid log_spaced(double f_min_hz, double f_max_hz, int points_per_decade);
    void validate() const;
};

// Z(w) = r_s + sum_i r_i / ((jw)^alpha_i q_i r_i + 1) + jwL, w = 2*pi*f.
// (jw)^alpha on the principal branch: magnitude w^alpha, phase alpha*pi/2.
// f = 0 is accepted and yields the exact dc limit r_s + sum r_i.
std::vector<std::complex<double>> impedance(const EcmParams& params,
                                            std::span<const double> freqs_hz);

// Closed-form partials of Z, row-major n_freqs x (3N+1); column order
// r_s, then r_i, q_i, alpha_i per element. noise_scale does not enter Z.
struct ImpedanceJacobian {
    std::size_t n_freqs = 0;
    std::size_t n_cols = 0;
    std::vector<std::complex<double>> z;       // model values, one per frequency
    std::vector<std::complex<double>> partials;

    std::complex<double> at(std::size_t freq_idx, std::size_t col) const {
        return partials[freq_idx * n_cols + col];
    }
};

ImpedanceJacobian impedance_jacobian(const EcmParams& params, std::span<const double> freqs_hz);

// Free-parameter vector layout shared by the inference modules:
// [r_s, (r_i, q_i, alpha_i) per element, noise_scale], 3N+2 entries.
std::vector<double> to_free_vector(const EcmParams& params);
EcmParams from_free_vector(std::span<const double> x, double l);
std::vector<std::string> free_param_names(std::size_t n_elements);

}  // namespace eisbayes
