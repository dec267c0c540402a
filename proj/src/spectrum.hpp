#pragma once

#include <complex>
#include <filesystem>
#include <span>
#include <vector>

namespace eisbayes {

// Ordered set of (frequency, complex impedance) points; the central
// measurement object. dispersion is optional (empty or one value per
// point) and carries a per-point scatter estimate.
struct ImpedanceSpectrum {
    std::vector<double> freqs_hz;
    std::vector<std::complex<double>> z;
    std::vector<double> dispersion;

    std::size_t size() const { return freqs_hz.size(); }
    void validate() const;
};

enum class Channel { current, voltage };

struct TimeSeriesRecord {
    std::vector<double> samples;
    double sample_rate_hz = 0.0;
    Channel channel = Channel::current;
    // Excited tone frequencies when the record came from the simulator;
    // carried through the sidecar so the estimator can reuse them.
    std::vector<double> tone_freqs_hz;

    double duration_s() const { return samples.size() / sample_rate_hz; }
    void validate() const;
};

// CSV with header freq_hz,re_ohm,im_ohm[,sigma_ohm]; values round-trip
// losslessly at 17 significant digits.
ImpedanceSpectrum read_spectrum_csv(const std::filesystem::path& path);
void write_spectrum_csv(const ImpedanceSpectrum& s, const std::filesystem::path& path);

// Two-column CSV (t_s,value) plus a JSON sidecar with the sample rate and
// channel tag. The sidecar path is the CSV path with extension ".json".
TimeSeriesRecord read_timeseries_csv(const std::filesystem::path& csv_path);
void write_timeseries_csv(const TimeSeriesRecord& r, const std::filesystem::path& csv_path);

// Pointwise complex mean over spectra sharing an identical frequency
// grid; dispersion of the result is the pointwise std of the inputs.
ImpedanceSpectrum average_spectra(std::span<const ImpedanceSpectrum> spectra);

// Shared numeric formatting: shortest text that parses back exactly.
std::string format_double(double v);

}  // namespace eisbayes
