#include "spectrum.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"

namespace eisbayes {

namespace {

using nlohmann::json;

double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line_no) {
    double v{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": not a number: '" + std::string(text) + "'");
    return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p.replace_extension(".json");
    return p;
}

}  // namespace

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("format_double failed");
    return std::string(buf, ptr);
}

void ImpedanceSpectrum::validate() const {
    if (freqs_hz.size() != z.size())
        throw ValidationError("ImpedanceSpectrum: freqs/z length mismatch");
    if (!dispersion.empty() && dispersion.size() != freqs_hz.size())
        throw ValidationError("ImpedanceSpectrum: dispersion length mismatch");
    double prev = 0.0;
    for (double f : freqs_hz) {
        if (!(f > prev) || !std::isfinite(f))
            throw ValidationError("ImpedanceSpectrum: frequencies must be strictly increasing and positive");
        prev = f;
    }
    for (const auto& v : z)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
            throw ValidationError("ImpedanceSpectrum: non-finite impedance value");
    for (double d : dispersion)
        if (!(d >= 0.0) || !std::isfinite(d))
            throw ValidationError("ImpedanceSpectrum: dispersion must be finite and non-negative");
}

void TimeSeriesRecord::validate() const {
    if (samples.size() < 2) throw ValidationError("TimeSeriesRecord: need at least 2 samples");
    if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz))
        throw ValidationError("TimeSeriesRecord: sample rate must be positive");
    for (double s : samples)
        if (!std::isfinite(s)) throw ValidationError("TimeSeriesRecord: non-finite sample");
}

ImpedanceSpectrum read_spectrum_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open spectrum file: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("empty spectrum file: " + path.string());
    const std::string_view header = strip_cr(line);
    bool has_sigma = false;
    if (header == "freq_hz,re_ohm,im_ohm,sigma_ohm") {
        has_sigma = true;
    } else if (header != "freq_hz,re_ohm,im_ohm") {
        throw ValidationError(path.string() + ": unexpected header '" + std::string(header) + "'");
    }
    ImpedanceSpectrum s;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = strip_cr(line);
        if (row.empty()) continue;
        const auto fields = split_fields(row);
        if (fields.size() != (has_sigma ? 4u : 3u))
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": wrong field count");
        s.freqs_hz.push_back(parse_double(fields[0], path, line_no));
        const double re = parse_double(fields[1], path, line_no);
        const double im = parse_double(fields[2], path, line_no);
        s.z.emplace_back(re, im);
        if (has_sigma) s.dispersion.push_back(parse_double(fields[3], path, line_no));
    }
    if (s.freqs_hz.empty()) throw ValidationError(path.string() + ": no data rows");
    s.validate();
    return s;
}

void write_spectrum_csv(const ImpedanceSpectrum& s, const std::filesystem::path& path) {
    s.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write spectrum file: " + path.string());
    const bool has_sigma = !s.dispersion.empty();
    out << (has_sigma ? "freq_hz,re_ohm,im_ohm,sigma_ohm\n" : "freq_hz,re_ohm,im_ohm\n");
    for (std::size_t i = 0; i < s.size(); ++i) {
        out << format_double(s.freqs_hz[i]) << ',' << format_double(s.z[i].real()) << ','
            << format_double(s.z[i].imag());
        if (has_sigma) out << ',' << format_double(s.dispersion[i]);
        out << '\n';
    }
    if (!out) throw ValidationError("write failed: " + path.string());
}

TimeSeriesRecord read_timeseries_csv(const std::filesystem::path& csv_path) {
    std::ifstream meta_in(sidecar_path(csv_path));
    if (!meta_in) throw ValidationError("cannot open sidecar: " + sidecar_path(csv_path).string());
    json meta;
    try {
        meta = json::parse(meta_in);
    } catch (const json::exception& e) {
        throw ValidationError("bad sidecar JSON: " + sidecar_path(csv_path).string() + ": " + e.what());
    }
    TimeSeriesRecord r;
    try {
        r.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
        const std::string ch = meta.at("channel").get<std::string>();
        if (ch == "current") r.channel = Channel::current;
        else if (ch == "voltage") r.channel = Channel::voltage;
        else throw ValidationError("sidecar channel must be 'current' or 'voltage'");
        if (meta.contains("tone_freqs_hz"))
            r.tone_freqs_hz = meta.at("tone_freqs_hz").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ValidationError("bad sidecar fields: " + std::string(e.what()));
    }

    std::ifstream in(csv_path);
    if (!in) throw ValidationError("cannot open time series: " + csv_path.string());
    std::string line;
    if (!std::getline(in, line) || strip_cr(line) != "t_s,value")
        throw ValidationError(csv_path.string() + ": expected header 't_s,value'");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view row = strip_cr(line);
        if (row.empty()) continue;
        const auto fields = split_fields(row);
        if (fields.size() != 2)
            throw ValidationError(csv_path.string() + ":" + std::to_string(line_no) + ": wrong field count");
        r.samples.push_back(parse_double(fields[1], csv_path, line_no));
    }
    r.validate();
    return r;
}

void write_timeseries_csv(const TimeSeriesRecord& r, const std::filesystem::path& csv_path) {
    r.validate();
    {
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw ValidationError("cannot write time series: " + csv_path.string());
        out << "t_s,value\n";
        const double dt = 1.0 / r.sample_rate_hz;
        for (std::size_t i = 0; i < r.samples.size(); ++i)
            out << format_double(double(i) * dt) << ',' << format_double(r.samples[i]) << '\n';
        if (!out) throw ValidationError("write failed: " + csv_path.string());
    }
    json meta;
    meta["schema_version"] = 1;
    meta["sample_rate_hz"] = r.sample_rate_hz;
    meta["channel"] = (r.channel == Channel::current) ? "current" : "voltage";
    if (!r.tone_freqs_hz.empty()) meta["tone_freqs_hz"] = r.tone_freqs_hz;
    std::ofstream mout(sidecar_path(csv_path), std::ios::binary);
    if (!mout) throw ValidationError("cannot write sidecar: " + sidecar_path(csv_path).string());
    mout << meta.dump(2) << '\n';
}

ImpedanceSpectrum average_spectra(std::span<const ImpedanceSpectrum> spectra) {
    if (spectra.empty()) throw ValidationError("average_spectra: no spectra given");
    for (const auto& s : spectra) s.validate();
    const auto& grid = spectra[0].freqs_hz;
    for (const auto& s : spectra)
        if (s.freqs_hz != grid) throw ValidationError("average_spectra: frequency grids differ");

    const std::size_t k = grid.size();
    const double n = double(spectra.size());
    ImpedanceSpectrum out;
    out.freqs_hz = grid;
    out.z.assign(k, {});
    out.dispersion.assign(k, 0.0);
    for (const auto& s : spectra)
        for (std::size_t i = 0; i < k; ++i) out.z[i] += s.z[i];
    for (auto& v : out.z) v /= n;
    for (const auto& s : spectra)
        for (std::size_t i = 0; i < k; ++i) out.dispersion[i] += std::norm(s.z[i] - out.z[i]);
    for (auto& d : out.dispersion) d = std::sqrt(d / n);
    return out;
}

}  // namespace eisbayes
