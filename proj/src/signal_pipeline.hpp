#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ecm.hpp"
#include "spectrum.hpp"

namespace eisbayes {

struct ExcitationSpec {
    enum class Kind { multisine, drbs };
    Kind kind = Kind::multisine;
    double amplitude = 1.0;   // per-tone amplitude; for DRBS half the peak-to-peak
    double dc_offset = 0.0;
    // Multisine band; tones are log-spaced targets snapped to DFT bins.
    double f_min_hz = 0.0;
    double f_max_hz = 0.0;
    int tones_per_decade = 6;
    // DRBS chip duration (the level may flip every chip).
    double chip_duration_s = 0.0;
};

struct SimulationConfig {
    EcmParams true_params;  // noise_scale is irrelevant here and may be defaulted
    ExcitationSpec excitation;
    double duration_s = 0.0;
    double sample_rate_hz = 0.0;
    double sigma_input = 0.0;   // current-channel noise std n1, amps
    double sigma_output = 0.0;  // voltage-channel noise std n2, volts
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimulationResult {
    TimeSeriesRecord current;
    TimeSeriesRecord voltage;
    ImpedanceSpectrum reference;  // noise-free model spectrum at the excited tones
};

// Clean voltage is the inverse transform of Z(w)*I(w) on the discrete
// frequency grid (periodic excitation assumed); noise is then added to
// the two measured channels from independent seeded streams.
SimulationResult simulate(const SimulationConfig& config);

struct CwtConfig {
    double omega0 = 6.0;      // Morlet center frequency
    double coi_factor = 2.0;  // edge exclusion in units of the e-folding time sqrt(2)*s
};

// Transfer-function estimate at each requested frequency: the complex
// Morlet CWT of both channels at scale s = omega0*fs/(2*pi*f), then
// time-avg(W_u * conj(W_i)) / time-avg(|W_i|^2) over the
// cone-of-influence-valid region. Dispersion is the empirical std of
// the instantaneous ratio where the current coefficient carries power.
ImpedanceSpectrum estimate_impedance_cwt(const TimeSeriesRecord& current,
                                         const TimeSeriesRecord& voltage,
                                         std::span<const double> freqs_hz,
                                         const CwtConfig& cfg = {});

// Frequencies the estimator will accept for a record of this length.
struct CwtBand {
    double f_min_hz = 0.0;
    double f_max_hz = 0.0;
};
CwtBand cwt_valid_band(double sample_rate_hz, std::size_t n_samples, const CwtConfig& cfg = {});

// Multisine tone frequencies for a given record length, snapped to DFT
// bins and deduplicated.
std::vector<double> multisine_tones(const ExcitationSpec& exc, double duration_s,
                                    double sample_rate_hz);

}  // namespace eisbayes
