#include "eisbayes/eis_bayes.h"

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "errors.hpp"
#include "spectrum.hpp"
#include "vb.hpp"
#include "workflows.hpp"

using namespace eisbayes;

struct eisb_spectrum {
    ImpedanceSpectrum data;
};

struct eisb_vb_report {
    PosteriorReport report;
    std::string json_text;
};

namespace {

thread_local std::string g_last_error;

eisb_status failure(eisb_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
eisb_status guarded(Fn&& fn) {
    try {
        fn();
        return EISB_OK;
    } catch (const ValidationError& e) {
        return failure(EISB_ERR_VALIDATION, e.what());
    } catch (const ConvergenceError& e) {
        return failure(EISB_ERR_CONVERGENCE, e.what());
    } catch (const std::invalid_argument& e) {
        return failure(EISB_ERR_VALIDATION, e.what());
    } catch (const std::exception& e) {
        return failure(EISB_ERR_INTERNAL, e.what());
    } catch (...) {
        return failure(EISB_ERR_INTERNAL, "unknown error");
    }
}

eisb_status require(bool ok, const char* what) {
    if (ok) return EISB_OK;
    return failure(EISB_ERR_VALIDATION, std::string("invalid argument: ") + what);
}

std::optional<std::uint64_t> opt_seed(const uint64_t* p) {
    if (!p) return std::nullopt;
    return *p;
}

}  // namespace

extern "C" {

const char* eisb_version(void) { return "0.1.0"; }

const char* eisb_last_error(void) { return g_last_error.c_str(); }

/* ------------------------------------------------------------------ */
/* Commands                                                             */
/* ------------------------------------------------------------------ */

eisb_status eisb_cmd_simulate(const char* config_json, const char* out_dir,
                              const uint64_t* seed_override) {
    if (auto st = require(config_json && out_dir, "config_json/out_dir")) return st;
    return guarded([&] { workflows::run_simulate(config_json, out_dir, opt_seed(seed_override)); });
}

eisb_status eisb_cmd_estimate(const char* current_csv, const char* voltage_csv,
                              const char* config_json, const char* out_dir) {
    if (auto st = require(current_csv && voltage_csv && out_dir, "paths")) return st;
    return guarded([&] {
        std::optional<std::string> cfg;
        if (config_json) cfg = config_json;
        workflows::run_estimate(current_csv, voltage_csv, cfg, out_dir);
    });
}

eisb_status eisb_cmd_fit_vb(const char* spectrum_csv, const char* config_json, const char* out_dir,
                            const uint64_t* seed_override, int paper_epsilon) {
    if (auto st = require(spectrum_csv && config_json && out_dir, "paths/config")) return st;
    return guarded([&] {
        workflows::run_fit_vb(spectrum_csv, config_json, out_dir, opt_seed(seed_override),
                              paper_epsilon != 0);
    });
}

eisb_status eisb_cmd_fit_mcmc(const char* spectrum_csv, const char* config_json,
                              const char* out_dir, const uint64_t* seed_override) {
    if (auto st = require(spectrum_csv && config_json && out_dir, "paths/config")) return st;
    return guarded([&] {
        workflows::run_fit_mcmc(spectrum_csv, config_json, out_dir, opt_seed(seed_override));
    });
}

eisb_status eisb_cmd_average(const char* const* spectrum_csvs, size_t n_spectra,
                             const char* out_dir) {
    if (auto st = require(spectrum_csvs && n_spectra > 0 && out_dir, "inputs/out_dir")) return st;
    return guarded([&] {
        std::vector<std::filesystem::path> paths;
        paths.reserve(n_spectra);
        for (size_t i = 0; i < n_spectra; ++i) {
            if (!spectrum_csvs[i]) throw ValidationError("null spectrum path");
            paths.emplace_back(spectrum_csvs[i]);
        }
        workflows::run_average(paths, out_dir);
    });
}

eisb_status eisb_cmd_compare(const char* vb_report_json, const char* mcmc_chains_csv,
                             const char* averaged_csv, const char* vb_report_b_json,
                             const char* out_dir) {
    if (auto st = require(vb_report_json && out_dir, "vb_report/out_dir")) return st;
    return guarded([&] {
        std::optional<std::filesystem::path> mcmc, avg, vb_b;
        if (mcmc_chains_csv) mcmc = mcmc_chains_csv;
        if (averaged_csv) avg = averaged_csv;
        if (vb_report_b_json) vb_b = vb_report_b_json;
        workflows::run_compare(vb_report_json, mcmc, avg, vb_b, out_dir);
    });
}

/* ------------------------------------------------------------------ */
/* Objects                                                              */
/* ------------------------------------------------------------------ */

eisb_status eisb_spectrum_create(const double* freq_hz, const double* re_ohm, const double* im_ohm,
                                 const double* sigma_ohm, size_t n, eisb_spectrum** out) {
    if (auto st = require(freq_hz && re_ohm && im_ohm && out && n > 0, "arrays")) return st;
    return guarded([&] {
        auto s = std::make_unique<eisb_spectrum>();
        s->data.freqs_hz.assign(freq_hz, freq_hz + n);
        s->data.z.reserve(n);
        for (size_t i = 0; i < n; ++i) s->data.z.emplace_back(re_ohm[i], im_ohm[i]);
        if (sigma_ohm) s->data.dispersion.assign(sigma_ohm, sigma_ohm + n);
        s->data.validate();
        *out = s.release();
    });
}

eisb_status eisb_spectrum_load_csv(const char* path, eisb_spectrum** out) {
    if (auto st = require(path && out, "path/out")) return st;
    return guarded([&] {
        auto s = std::make_unique<eisb_spectrum>();
        s->data = read_spectrum_csv(path);
        *out = s.release();
    });
}

eisb_status eisb_spectrum_save_csv(const eisb_spectrum* s, const char* path) {
    if (auto st = require(s && path, "spectrum/path")) return st;
    return guarded([&] { write_spectrum_csv(s->data, path); });
}

size_t eisb_spectrum_size(const eisb_spectrum* s) { return s ? s->data.size() : 0; }

eisb_status eisb_spectrum_get(const eisb_spectrum* s, double* freq_hz, double* re_ohm,
                              double* im_ohm, double* sigma_ohm) {
    if (auto st = require(s && freq_hz && re_ohm && im_ohm, "spectrum/buffers")) return st;
    const size_t n = s->data.size();
    for (size_t i = 0; i < n; ++i) {
        freq_hz[i] = s->data.freqs_hz[i];
        re_ohm[i] = s->data.z[i].real();
        im_ohm[i] = s->data.z[i].imag();
        if (sigma_ohm) sigma_ohm[i] = s->data.dispersion.empty() ? 0.0 : s->data.dispersion[i];
    }
    return EISB_OK;
}

void eisb_spectrum_free(eisb_spectrum* s) { delete s; }

eisb_status eisb_impedance(double r_s, double l_henry, const double* rqa, size_t n_elements,
                           const double* freq_hz, size_t n_freqs, double* re_out, double* im_out) {
    if (auto st = require(rqa && freq_hz && re_out && im_out && n_elements > 0 && n_freqs > 0,
                          "arrays"))
        return st;
    return guarded([&] {
        EcmParams p;
        p.r_s = r_s;
        p.l = l_henry;
        p.noise_scale = 1.0;  // irrelevant to Z
        p.elements.resize(n_elements);
        for (size_t i = 0; i < n_elements; ++i)
            p.elements[i] = RqElement{rqa[3 * i], rqa[3 * i + 1], rqa[3 * i + 2]};
        const auto z = impedance(p, std::span<const double>(freq_hz, n_freqs));
        for (size_t i = 0; i < n_freqs; ++i) {
            re_out[i] = z[i].real();
            im_out[i] = z[i].imag();
        }
    });
}

eisb_status eisb_fit_vb(const eisb_spectrum* s, const char* config_json, eisb_vb_report** out) {
    if (auto st = require(s && config_json && out, "spectrum/config/out")) return st;
    return guarded([&] {
        const auto setup = workflows::parse_fit_config(config_json);
        auto result = workflows::fit_vb_core(s->data, setup);
        auto rep = std::make_unique<eisb_vb_report>();
        rep->report = std::move(result.report);
        rep->json_text = result.report_json.dump(2);
        rep->json_text.push_back('\n');
        *out = rep.release();
    });
}

size_t eisb_vb_report_param_count(const eisb_vb_report* r) { return r ? r->report.n_params : 0; }

eisb_status eisb_vb_report_param(const eisb_vb_report* r, size_t index, char* name_buf,
                                 size_t name_buf_len, int* is_beta_out, double* p1, double* p2,
                                 double* mean, double* variance) {
    if (auto st = require(r && index < r->report.n_params, "report/index")) return st;
    const Factor& f = r->report.fitted.factors[index];
    if (name_buf && name_buf_len > 0) {
        const std::string& name = r->report.param_names[index];
        const size_t len = std::min(name.size(), name_buf_len - 1);
        std::memcpy(name_buf, name.data(), len);
        name_buf[len] = '\0';
    }
    if (is_beta_out) *is_beta_out = is_beta(f) ? 1 : 0;
    if (p1 || p2) {
        double a = 0.0, b = 0.0;
        if (is_beta(f)) {
            a = std::get<BetaFactor>(f).a;
            b = std::get<BetaFactor>(f).b;
        } else {
            a = std::get<LognormalFactor>(f).mu_ln;
            b = std::get<LognormalFactor>(f).sigma_ln;
        }
        if (p1) *p1 = a;
        if (p2) *p2 = b;
    }
    if (mean) *mean = factor_mean(f);
    if (variance) *variance = factor_variance(f);
    return EISB_OK;
}

int eisb_vb_report_iterations(const eisb_vb_report* r) { return r ? r->report.iterations : 0; }

int eisb_vb_report_converged(const eisb_vb_report* r) {
    return r && r->report.stop_reason == StopReason::converged ? 1 : 0;
}

double eisb_vb_report_final_elbo(const eisb_vb_report* r) {
    return r && !r->report.elbo_trace.empty() ? r->report.elbo_trace.back() : 0.0;
}

eisb_status eisb_vb_report_to_json(const eisb_vb_report* r, char** json_out) {
    if (auto st = require(r && json_out, "report/out")) return st;
    return guarded([&] {
        char* buf = static_cast<char*>(std::malloc(r->json_text.size() + 1));
        if (!buf) throw std::bad_alloc();
        std::memcpy(buf, r->json_text.c_str(), r->json_text.size() + 1);
        *json_out = buf;
    });
}

void eisb_vb_report_free(eisb_vb_report* r) { delete r; }

void eisb_string_free(char* s) { std::free(s); }

}  // extern "C"
