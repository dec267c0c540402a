#include "workflows.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "errors.hpp"
#include "spectrum.hpp"

namespace eisbayes::workflows {

namespace {

using nlohmann::json;

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(what + ": invalid JSON: " + e.what());
    }
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& ctx) {
    if (!obj.is_object()) throw ValidationError(ctx + ": expected a JSON object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ValidationError(ctx + ": unknown key '" + key + "'");
}

double get_num(const json& obj, const std::string& key, const std::string& ctx) {
    if (!obj.contains(key)) throw ValidationError(ctx + ": missing key '" + key + "'");
    if (!obj.at(key).is_number()) throw ValidationError(ctx + "." + key + ": expected a number");
    return obj.at(key).get<double>();
}

double get_num_or(const json& obj, const std::string& key, double fallback, const std::string& ctx) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number()) throw ValidationError(ctx + "." + key + ": expected a number");
    return obj.at(key).get<double>();
}

int get_int_or(const json& obj, const std::string& key, int fallback, const std::string& ctx) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number_integer()) throw ValidationError(ctx + "." + key + ": expected an integer");
    return obj.at(key).get<int>();
}

std::uint64_t get_u64_or(const json& obj, const std::string& key, std::uint64_t fallback,
                         const std::string& ctx) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number_unsigned() && !obj.at(key).is_number_integer())
        throw ValidationError(ctx + "." + key + ": expected an integer seed");
    return obj.at(key).get<std::uint64_t>();
}

// ---------------------------------------------------------------------------
// Prior parsing
// ---------------------------------------------------------------------------

Factor parse_prior_entry(const json& e, bool beta_slot, const std::string& ctx) {
    if (!e.is_object()) throw ValidationError(ctx + ": expected an object");
    if (e.contains("mean") || e.contains("variance")) {
        check_keys(e, {"mean", "variance"}, ctx);
        const double mean = get_num(e, "mean", ctx);
        const double variance = get_num(e, "variance", ctx);
        try {
            if (beta_slot) return BetaFactor::from_moments(mean, variance);
            return LognormalFactor::from_moments(mean, variance);
        } catch (const std::invalid_argument& err) {
            throw ValidationError(ctx + ": " + err.what());
        }
    }
    if (beta_slot) {
        check_keys(e, {"a", "b"}, ctx);
        BetaFactor f{get_num(e, "a", ctx), get_num(e, "b", ctx)};
        try {
            f.validate();
        } catch (const std::invalid_argument& err) {
            throw ValidationError(ctx + ": " + err.what());
        }
        return f;
    }
    check_keys(e, {"mu_ln", "sigma_ln"}, ctx);
    LognormalFactor f{get_num(e, "mu_ln", ctx), get_num(e, "sigma_ln", ctx)};
    try {
        f.validate();
    } catch (const std::invalid_argument& err) {
        throw ValidationError(ctx + ": " + err.what());
    }
    return f;
}

std::vector<Factor> parse_prior_list(const json& node, bool beta_slot, std::size_t n,
                                     const std::string& ctx) {
    std::vector<Factor> out;
    if (node.is_array()) {
        if (node.size() != n)
            throw ValidationError(ctx + ": expected " + std::to_string(n) + " entries");
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(parse_prior_entry(node[i], beta_slot, ctx + "[" + std::to_string(i) + "]"));
    } else {
        const Factor f = parse_prior_entry(node, beta_slot, ctx);
        out.assign(n, f);
    }
    return out;
}

json factor_to_json(const Factor& f) {
    json out;
    if (is_beta(f)) {
        const auto& d = std::get<BetaFactor>(f);
        out["a"] = d.a;
        out["b"] = d.b;
    } else {
        const auto& d = std::get<LognormalFactor>(f);
        out["mu_ln"] = d.mu_ln;
        out["sigma_ln"] = d.sigma_ln;
    }
    return out;
}

void write_json_file(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) throw ValidationError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void ensure_out_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory " + dir.string());
}

}  // namespace

// ---------------------------------------------------------------------------
// Fit config
// ---------------------------------------------------------------------------

FitSetup parse_fit_config(const std::string& json_text) {
    const json root = parse_json(json_text, "fit config");
    check_keys(root, {"schema_version", "model", "priors", "vb", "mcmc", "bands"}, "fit config");

    FitSetup setup;
    if (!root.contains("model")) throw ValidationError("fit config: missing 'model'");
    const json& model = root.at("model");
    check_keys(model, {"n_rq", "l_henry"}, "model");
    const int n_rq = get_int_or(model, "n_rq", 3, "model");
    if (n_rq < 1 || n_rq > 16) throw ValidationError("model.n_rq must lie in [1, 16]");
    setup.n_elements = static_cast<std::size_t>(n_rq);
    setup.l = get_num_or(model, "l_henry", 0.0, "model");
    if (!(setup.l >= 0.0)) throw ValidationError("model.l_henry must be non-negative");

    if (!root.contains("priors")) throw ValidationError("fit config: missing 'priors'");
    const json& priors = root.at("priors");
    check_keys(priors, {"r_s", "r", "q", "alpha", "noise_scale"}, "priors");
    for (const char* key : {"r_s", "r", "q", "alpha", "noise_scale"})
        if (!priors.contains(key)) throw ValidationError(std::string("priors: missing '") + key + "'");

    const auto r_list = parse_prior_list(priors.at("r"), false, setup.n_elements, "priors.r");
    const auto q_list = parse_prior_list(priors.at("q"), false, setup.n_elements, "priors.q");
    const auto a_list = parse_prior_list(priors.at("alpha"), true, setup.n_elements, "priors.alpha");
    setup.prior.factors.push_back(parse_prior_entry(priors.at("r_s"), false, "priors.r_s"));
    for (std::size_t i = 0; i < setup.n_elements; ++i) {
        setup.prior.factors.push_back(r_list[i]);
        setup.prior.factors.push_back(q_list[i]);
        setup.prior.factors.push_back(a_list[i]);
    }
    setup.prior.factors.push_back(
        parse_prior_entry(priors.at("noise_scale"), false, "priors.noise_scale"));

    if (root.contains("vb")) {
        const json& vb = root.at("vb");
        check_keys(vb,
                   {"learning_rate", "beta1", "beta2", "adam_epsilon", "paper_epsilon",
                    "mc_samples", "min_iters", "max_iters", "convergence_window",
                    "convergence_rel_change", "seed"},
                   "vb");
        setup.vb.learning_rate = get_num_or(vb, "learning_rate", setup.vb.learning_rate, "vb");
        setup.vb.beta1 = get_num_or(vb, "beta1", setup.vb.beta1, "vb");
        setup.vb.beta2 = get_num_or(vb, "beta2", setup.vb.beta2, "vb");
        setup.vb.adam_epsilon = get_num_or(vb, "adam_epsilon", setup.vb.adam_epsilon, "vb");
        if (vb.contains("paper_epsilon")) {
            if (!vb.at("paper_epsilon").is_boolean())
                throw ValidationError("vb.paper_epsilon: expected a boolean");
            setup.vb.paper_epsilon = vb.at("paper_epsilon").get<bool>();
        }
        setup.vb.mc_samples = get_int_or(vb, "mc_samples", setup.vb.mc_samples, "vb");
        setup.vb.min_iters = get_int_or(vb, "min_iters", setup.vb.min_iters, "vb");
        setup.vb.max_iters = get_int_or(vb, "max_iters", setup.vb.max_iters, "vb");
        setup.vb.convergence_window =
            get_int_or(vb, "convergence_window", setup.vb.convergence_window, "vb");
        setup.vb.convergence_rel_change =
            get_num_or(vb, "convergence_rel_change", setup.vb.convergence_rel_change, "vb");
        setup.vb.seed = get_u64_or(vb, "seed", setup.vb.seed, "vb");
    }
    if (root.contains("mcmc")) {
        const json& mc = root.at("mcmc");
        check_keys(mc,
                   {"n_iters", "burn_in", "target_accept", "adapt_window", "seed", "n_chains",
                    "thin"},
                   "mcmc");
        setup.mcmc.n_iters = get_int_or(mc, "n_iters", setup.mcmc.n_iters, "mcmc");
        setup.mcmc.burn_in = get_num_or(mc, "burn_in", setup.mcmc.burn_in, "mcmc");
        setup.mcmc.target_accept = get_num_or(mc, "target_accept", setup.mcmc.target_accept, "mcmc");
        setup.mcmc.adapt_window = get_int_or(mc, "adapt_window", setup.mcmc.adapt_window, "mcmc");
        setup.mcmc.seed = get_u64_or(mc, "seed", setup.mcmc.seed, "mcmc");
        setup.mcmc.n_chains = get_int_or(mc, "n_chains", setup.mcmc.n_chains, "mcmc");
        setup.mcmc.thin = get_int_or(mc, "thin", setup.mcmc.thin, "mcmc");
    }
    if (root.contains("bands")) {
        const json& bands = root.at("bands");
        check_keys(bands, {"n_samples", "lo_quantile", "hi_quantile"}, "bands");
        setup.band_samples = get_int_or(bands, "n_samples", setup.band_samples, "bands");
        setup.band_lo_quantile = get_num_or(bands, "lo_quantile", setup.band_lo_quantile, "bands");
        setup.band_hi_quantile = get_num_or(bands, "hi_quantile", setup.band_hi_quantile, "bands");
    }
    setup.vb.validate();
    setup.mcmc.validate();
    setup.prior.validate();

    // Canonical echo with every default filled in.
    json resolved;
    resolved["schema_version"] = kSchemaVersion;
    resolved["model"] = {{"n_rq", n_rq}, {"l_henry", setup.l}};
    json pr;
    pr["r_s"] = factor_to_json(setup.prior.factors[0]);
    json pr_r = json::array(), pr_q = json::array(), pr_a = json::array();
    for (std::size_t i = 0; i < setup.n_elements; ++i) {
        pr_r.push_back(factor_to_json(setup.prior.factors[1 + 3 * i]));
        pr_q.push_back(factor_to_json(setup.prior.factors[2 + 3 * i]));
        pr_a.push_back(factor_to_json(setup.prior.factors[3 + 3 * i]));
    }
    pr["r"] = pr_r;
    pr["q"] = pr_q;
    pr["alpha"] = pr_a;
    pr["noise_scale"] = factor_to_json(setup.prior.factors.back());
    resolved["priors"] = pr;
    resolved["vb"] = {{"learning_rate", setup.vb.learning_rate},
                      {"beta1", setup.vb.beta1},
                      {"beta2", setup.vb.beta2},
                      {"adam_epsilon", setup.vb.adam_epsilon},
                      {"paper_epsilon", setup.vb.paper_epsilon},
                      {"mc_samples", setup.vb.mc_samples},
                      {"min_iters", setup.vb.min_iters},
                      {"max_iters", setup.vb.max_iters},
                      {"convergence_window", setup.vb.convergence_window},
                      {"convergence_rel_change", setup.vb.convergence_rel_change},
                      {"seed", setup.vb.seed}};
    resolved["mcmc"] = {{"n_iters", setup.mcmc.n_iters},
                        {"burn_in", setup.mcmc.burn_in},
                        {"target_accept", setup.mcmc.target_accept},
                        {"adapt_window", setup.mcmc.adapt_window},
                        {"seed", setup.mcmc.seed},
                        {"n_chains", setup.mcmc.n_chains},
                        {"thin", setup.mcmc.thin}};
    resolved["bands"] = {{"n_samples", setup.band_samples},
                         {"lo_quantile", setup.band_lo_quantile},
                         {"hi_quantile", setup.band_hi_quantile}};
    setup.resolved = std::move(resolved);
    return setup;
}

// ---------------------------------------------------------------------------
// Simulation config
// ---------------------------------------------------------------------------

SimulationConfig parse_sim_config(const std::string& json_text, json* resolved_out) {
    const json root = parse_json(json_text, "simulate config");
    check_keys(root,
               {"schema_version", "true_params", "excitation", "duration_s", "sample_rate_hz",
                "noise", "seed"},
               "simulate config");

    SimulationConfig cfg;
    if (!root.contains("true_params")) throw ValidationError("simulate config: missing 'true_params'");
    const json& tp = root.at("true_params");
    check_keys(tp, {"r_s", "l_henry", "noise_scale", "elements"}, "true_params");
    cfg.true_params.r_s = get_num(tp, "r_s", "true_params");
    cfg.true_params.l = get_num_or(tp, "l_henry", 0.0, "true_params");
    cfg.true_params.noise_scale = get_num_or(tp, "noise_scale", 1.0, "true_params");
    if (!tp.contains("elements") || !tp.at("elements").is_array() || tp.at("elements").empty())
        throw ValidationError("true_params.elements: expected a non-empty array");
    for (const auto& e : tp.at("elements")) {
        check_keys(e, {"r", "q", "alpha"}, "true_params.elements[]");
        cfg.true_params.elements.push_back(RqElement{get_num(e, "r", "elements[]"),
                                                     get_num(e, "q", "elements[]"),
                                                     get_num(e, "alpha", "elements[]")});
    }

    if (!root.contains("excitation")) throw ValidationError("simulate config: missing 'excitation'");
    const json& exc = root.at("excitation");
    const std::string kind =
        exc.contains("kind") && exc.at("kind").is_string() ? exc.at("kind").get<std::string>() : "";
    if (kind == "multisine") {
        check_keys(exc,
                   {"kind", "amplitude", "dc_offset", "f_min_hz", "f_max_hz", "tones_per_decade"},
                   "excitation");
        cfg.excitation.kind = ExcitationSpec::Kind::multisine;
        cfg.excitation.f_min_hz = get_num(exc, "f_min_hz", "excitation");
        cfg.excitation.f_max_hz = get_num(exc, "f_max_hz", "excitation");
        cfg.excitation.tones_per_decade = get_int_or(exc, "tones_per_decade", 6, "excitation");
    } else if (kind == "drbs") {
        check_keys(exc, {"kind", "amplitude", "dc_offset", "chip_duration_s"}, "excitation");
        cfg.excitation.kind = ExcitationSpec::Kind::drbs;
        cfg.excitation.chip_duration_s = get_num(exc, "chip_duration_s", "excitation");
    } else {
        throw ValidationError("excitation.kind must be 'multisine' or 'drbs'");
    }
    cfg.excitation.amplitude = get_num(exc, "amplitude", "excitation");
    cfg.excitation.dc_offset = get_num_or(exc, "dc_offset", 0.0, "excitation");

    cfg.duration_s = get_num(root, "duration_s", "simulate config");
    cfg.sample_rate_hz = get_num(root, "sample_rate_hz", "simulate config");
    if (root.contains("noise")) {
        const json& noise = root.at("noise");
        check_keys(noise, {"sigma_input", "sigma_output"}, "noise");
        cfg.sigma_input = get_num_or(noise, "sigma_input", 0.0, "noise");
        cfg.sigma_output = get_num_or(noise, "sigma_output", 0.0, "noise");
    }
    cfg.seed = get_u64_or(root, "seed", 0, "simulate config");
    cfg.validate();

    if (resolved_out) {
        json resolved;
        resolved["schema_version"] = kSchemaVersion;
        json tpj;
        tpj["r_s"] = cfg.true_params.r_s;
        tpj["l_henry"] = cfg.true_params.l;
        json els = json::array();
        for (const auto& e : cfg.true_params.elements)
            els.push_back({{"r", e.r}, {"q", e.q}, {"alpha", e.alpha}});
        tpj["elements"] = els;
        resolved["true_params"] = tpj;
        json excj;
        if (cfg.excitation.kind == ExcitationSpec::Kind::multisine) {
            excj = {{"kind", "multisine"},
                    {"amplitude", cfg.excitation.amplitude},
                    {"dc_offset", cfg.excitation.dc_offset},
                    {"f_min_hz", cfg.excitation.f_min_hz},
                    {"f_max_hz", cfg.excitation.f_max_hz},
                    {"tones_per_decade", cfg.excitation.tones_per_decade}};
        } else {
            excj = {{"kind", "drbs"},
                    {"amplitude", cfg.excitation.amplitude},
                    {"dc_offset", cfg.excitation.dc_offset},
                    {"chip_duration_s", cfg.excitation.chip_duration_s}};
        }
        resolved["excitation"] = excj;
        resolved["duration_s"] = cfg.duration_s;
        resolved["sample_rate_hz"] = cfg.sample_rate_hz;
        resolved["noise"] = {{"sigma_input", cfg.sigma_input}, {"sigma_output", cfg.sigma_output}};
        resolved["seed"] = cfg.seed;
        *resolved_out = std::move(resolved);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// fit-vb
// ---------------------------------------------------------------------------

VbRunResult fit_vb_core(const ImpedanceSpectrum& spectrum, const FitSetup& setup) {
    Likelihood lik;
    lik.spectrum = spectrum;
    lik.n_elements = setup.n_elements;
    lik.l = setup.l;

    VbRunResult out;
    out.report = fit(lik, setup.prior, setup.prior, setup.vb);

    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["command"] = "fit-vb";
    doc["seed"] = setup.vb.seed;
    doc["config"] = setup.resolved;
    doc["model"] = {{"n_rq", setup.n_elements}, {"l_henry", setup.l}};
    doc["n_data_points"] = spectrum.size();
    doc["frequencies_hz"] = spectrum.freqs_hz;
    doc["iterations"] = out.report.iterations;
    doc["stop_reason"] =
        out.report.stop_reason == StopReason::converged ? "converged" : "max_iters";
    doc["final_elbo"] = out.report.elbo_trace.back();
    json factors = json::array();
    for (std::size_t j = 0; j < out.report.n_params; ++j) {
        const Factor& f = out.report.fitted.factors[j];
        json fj = factor_to_json(f);
        fj["name"] = out.report.param_names[j];
        fj["kind"] = is_beta(f) ? "beta" : "lognormal";
        fj["mean"] = factor_mean(f);
        fj["variance"] = factor_variance(f);
        factors.push_back(fj);
    }
    doc["factors"] = factors;
    out.report_json = std::move(doc);
    return out;
}

void run_fit_vb(const std::filesystem::path& spectrum_csv, const std::string& config_json,
                const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed_override,
                bool paper_epsilon) {
    FitSetup setup = parse_fit_config(config_json);
    if (seed_override) {
        setup.vb.seed = *seed_override;
        setup.resolved["vb"]["seed"] = *seed_override;
    }
    if (paper_epsilon) {
        setup.vb.paper_epsilon = true;
        setup.resolved["vb"]["paper_epsilon"] = true;
    }
    const ImpedanceSpectrum spectrum = read_spectrum_csv(spectrum_csv);
    ensure_out_dir(out_dir);

    VbRunResult result = fit_vb_core(spectrum, setup);
    write_json_file(result.report_json, out_dir / "vb_report.json");

    const CredibleBands bands =
        extract_bands(result.report.fitted, setup.n_elements, setup.l, spectrum.freqs_hz,
                      setup.band_samples, setup.band_lo_quantile, setup.band_hi_quantile,
                      setup.vb.seed);
    {
        std::ofstream out(out_dir / "vb_bands.csv", std::ios::binary);
        if (!out) throw ValidationError("cannot write vb_bands.csv");
        out << "freq_hz,re_mean,im_mean,re_lo,re_hi,im_lo,im_hi\n";
        for (std::size_t i = 0; i < bands.freqs_hz.size(); ++i) {
            out << format_double(bands.freqs_hz[i]) << ',' << format_double(bands.re_mean[i]) << ','
                << format_double(bands.im_mean[i]) << ',' << format_double(bands.re_lo[i]) << ','
                << format_double(bands.re_hi[i]) << ',' << format_double(bands.im_lo[i]) << ','
                << format_double(bands.im_hi[i]) << '\n';
        }
    }
    {
        const auto& rep = result.report;
        std::ofstream out(out_dir / "vb_trace.csv", std::ios::binary);
        if (!out) throw ValidationError("cannot write vb_trace.csv");
        out << "iter,elbo";
        for (const auto& name : rep.param_names) out << ',' << name << "_mean," << name << "_sd";
        out << '\n';
        for (int t = 0; t < rep.iterations; ++t) {
            out << (t + 1) << ',' << format_double(rep.elbo_trace[t]);
            for (std::size_t j = 0; j < rep.n_params; ++j)
                out << ',' << format_double(rep.mean_at(t, j)) << ','
                    << format_double(rep.sd_at(t, j));
            out << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// fit-mcmc
// ---------------------------------------------------------------------------

void run_fit_mcmc(const std::filesystem::path& spectrum_csv, const std::string& config_json,
                  const std::filesystem::path& out_dir,
                  std::optional<std::uint64_t> seed_override) {
    FitSetup setup = parse_fit_config(config_json);
    if (seed_override) {
        setup.mcmc.seed = *seed_override;
        setup.resolved["mcmc"]["seed"] = *seed_override;
    }
    const ImpedanceSpectrum spectrum = read_spectrum_csv(spectrum_csv);
    ensure_out_dir(out_dir);

    Likelihood lik;
    lik.spectrum = spectrum;
    lik.n_elements = setup.n_elements;
    lik.l = setup.l;
    const ChainResult chains = sample(lik, setup.prior, setup.mcmc);

    const auto names = free_param_names(setup.n_elements);
    {
        std::ofstream out(out_dir / "mcmc_chains.csv", std::ios::binary);
        if (!out) throw ValidationError("cannot write mcmc_chains.csv");
        out << "chain,draw";
        for (const auto& n : names) out << ',' << n;
        out << '\n';
        const std::size_t kept = chains.kept_per_chain();
        for (std::size_t c = 0; c < chains.chain_draws.size(); ++c) {
            for (std::size_t i = 0; i < kept; i += setup.mcmc.thin) {
                out << c << ',' << i;
                for (std::size_t j = 0; j < chains.n_params; ++j)
                    out << ',' << format_double(chains.draw(c, i, j));
                out << '\n';
            }
        }
    }
    {
        json doc;
        doc["schema_version"] = kSchemaVersion;
        doc["command"] = "fit-mcmc";
        doc["seed"] = setup.mcmc.seed;
        doc["config"] = setup.resolved;
        doc["model"] = {{"n_rq", setup.n_elements}, {"l_henry", setup.l}};
        doc["n_data_points"] = spectrum.size();
        doc["kept_per_chain"] = chains.kept_per_chain();
        doc["acceptance_rates"] = chains.acceptance_rates;
        doc["degenerate"] = chains.degenerate;
        doc["failure"] = chains.failure;
        json params = json::array();
        for (std::size_t j = 0; j < chains.n_params; ++j) {
            const auto& s = chains.summaries[j];
            json p;
            p["name"] = names[j];
            p["mean"] = s.mean;
            p["variance"] = s.variance;
            if (std::isfinite(s.r_hat)) p["r_hat"] = s.r_hat; else p["r_hat"] = nullptr;
            if (std::isfinite(s.ess)) p["ess"] = s.ess; else p["ess"] = nullptr;
            params.push_back(p);
        }
        doc["params"] = params;
        write_json_file(doc, out_dir / "mcmc_diagnostics.json");
    }
    if (!chains.failure.empty()) throw ConvergenceError("fit-mcmc: " + chains.failure);
}

// ---------------------------------------------------------------------------
// simulate / estimate / average
// ---------------------------------------------------------------------------

void run_simulate(const std::string& config_json, const std::filesystem::path& out_dir,
                  std::optional<std::uint64_t> seed_override) {
    json resolved;
    SimulationConfig cfg = parse_sim_config(config_json, &resolved);
    if (seed_override) {
        cfg.seed = *seed_override;
        resolved["seed"] = *seed_override;
    }
    ensure_out_dir(out_dir);
    const SimulationResult sim = simulate(cfg);
    write_timeseries_csv(sim.current, out_dir / "current.csv");
    write_timeseries_csv(sim.voltage, out_dir / "voltage.csv");
    write_spectrum_csv(sim.reference, out_dir / "reference_spectrum.csv");
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["command"] = "simulate";
    doc["seed"] = cfg.seed;
    doc["config"] = resolved;
    doc["n_samples"] = sim.current.samples.size();
    doc["tone_freqs_hz"] = sim.current.tone_freqs_hz;
    write_json_file(doc, out_dir / "simulate_run.json");
}

void run_estimate(const std::filesystem::path& current_csv,
                  const std::filesystem::path& voltage_csv,
                  const std::optional<std::string>& config_json,
                  const std::filesystem::path& out_dir) {
    CwtConfig cwt;
    json freq_spec;
    freq_spec["kind"] = "sidecar";
    if (config_json) {
        const json root = parse_json(*config_json, "estimate config");
        check_keys(root, {"schema_version", "omega0", "coi_factor", "frequencies"},
                   "estimate config");
        cwt.omega0 = get_num_or(root, "omega0", cwt.omega0, "estimate config");
        cwt.coi_factor = get_num_or(root, "coi_factor", cwt.coi_factor, "estimate config");
        if (root.contains("frequencies")) freq_spec = root.at("frequencies");
    }

    const TimeSeriesRecord current = read_timeseries_csv(current_csv);
    const TimeSeriesRecord voltage = read_timeseries_csv(voltage_csv);
    const CwtBand band = cwt_valid_band(current.sample_rate_hz, current.samples.size(), cwt);

    std::vector<double> requested;
    std::vector<double> dropped;
    const std::string kind =
        freq_spec.contains("kind") && freq_spec.at("kind").is_string()
            ? freq_spec.at("kind").get<std::string>()
            : "";
    if (kind == "sidecar") {
        check_keys(freq_spec, {"kind"}, "frequencies");
        std::vector<double> tones = current.tone_freqs_hz;
        if (tones.empty())
            tones = FrequencyGrid::log_spaced(band.f_min_hz * 1.0000001,
                                              band.f_max_hz * 0.9999999, 6)
                        .freqs_hz;
        for (double f : tones)
            (f >= band.f_min_hz && f <= band.f_max_hz ? requested : dropped).push_back(f);
        if (requested.empty())
            throw ValidationError("estimate: no sidecar tone lies in the valid band");
    } else if (kind == "log") {
        check_keys(freq_spec, {"kind", "f_min_hz", "f_max_hz", "points_per_decade"}, "frequencies");
        requested = FrequencyGrid::log_spaced(get_num(freq_spec, "f_min_hz", "frequencies"),
                                              get_num(freq_spec, "f_max_hz", "frequencies"),
                                              get_int_or(freq_spec, "points_per_decade", 6,
                                                         "frequencies"))
                        .freqs_hz;
    } else if (kind == "list") {
        check_keys(freq_spec, {"kind", "values"}, "frequencies");
        if (!freq_spec.contains("values") || !freq_spec.at("values").is_array())
            throw ValidationError("frequencies.values: expected an array");
        requested = freq_spec.at("values").get<std::vector<double>>();
    } else {
        throw ValidationError("frequencies.kind must be 'sidecar', 'log' or 'list'");
    }

    const ImpedanceSpectrum spectrum = estimate_impedance_cwt(current, voltage, requested, cwt);
    ensure_out_dir(out_dir);
    write_spectrum_csv(spectrum, out_dir / "spectrum.csv");

    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["command"] = "estimate";
    doc["inputs"] = {{"current", current_csv.string()}, {"voltage", voltage_csv.string()}};
    doc["config"] = {{"omega0", cwt.omega0}, {"coi_factor", cwt.coi_factor},
                     {"frequencies", freq_spec}};
    doc["valid_band_hz"] = {{"f_min", band.f_min_hz}, {"f_max", band.f_max_hz}};
    doc["used_frequencies_hz"] = requested;
    doc["dropped_frequencies_hz"] = dropped;
    write_json_file(doc, out_dir / "estimate_run.json");
}

void run_average(std::span<const std::filesystem::path> inputs,
                 const std::filesystem::path& out_dir) {
    if (inputs.empty()) throw ValidationError("average: need at least one spectrum");
    std::vector<ImpedanceSpectrum> spectra;
    spectra.reserve(inputs.size());
    for (const auto& p : inputs) spectra.push_back(read_spectrum_csv(p));
    const ImpedanceSpectrum avg = average_spectra(spectra);
    ensure_out_dir(out_dir);
    write_spectrum_csv(avg, out_dir / "averaged_spectrum.csv");
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["command"] = "average";
    json in = json::array();
    for (const auto& p : inputs) in.push_back(p.string());
    doc["inputs"] = in;
    doc["n_spectra"] = inputs.size();
    write_json_file(doc, out_dir / "average_run.json");
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

namespace {

struct LoadedReport {
    VariationalFamily family;
    std::vector<std::string> names;
    std::size_t n_elements = 0;
    double l = 0.0;
    std::vector<double> freqs_hz;
    std::uint64_t seed = 0;
};

LoadedReport load_vb_report(const std::filesystem::path& path) {
    const json doc = parse_json(read_text_file(path), path.string());
    LoadedReport rep;
    try {
        rep.n_elements = doc.at("model").at("n_rq").get<std::size_t>();
        rep.l = doc.at("model").at("l_henry").get<double>();
        rep.freqs_hz = doc.at("frequencies_hz").get<std::vector<double>>();
        rep.seed = doc.at("seed").get<std::uint64_t>();
        for (const auto& f : doc.at("factors")) {
            rep.names.push_back(f.at("name").get<std::string>());
            if (f.at("kind").get<std::string>() == "beta")
                rep.family.factors.emplace_back(
                    BetaFactor{f.at("a").get<double>(), f.at("b").get<double>()});
            else
                rep.family.factors.emplace_back(LognormalFactor{f.at("mu_ln").get<double>(),
                                                                f.at("sigma_ln").get<double>()});
        }
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": not a vb_report.json document: " + e.what());
    }
    rep.family.validate();
    if (rep.family.size() != 3 * rep.n_elements + 2)
        throw ValidationError(path.string() + ": factor count does not match model order");
    return rep;
}

double overlap_fraction(double lo_a, double hi_a, double lo_b, double hi_b) {
    const double inter = std::min(hi_a, hi_b) - std::max(lo_a, lo_b);
    const double uni = std::max(hi_a, hi_b) - std::min(lo_a, lo_b);
    if (uni <= 0.0) return 1.0;  // both degenerate at the same point
    return std::max(0.0, inter) / uni;
}

json band_overlap_json(const CredibleBands& a, const CredibleBands& b) {
    double re = 0.0, im = 0.0;
    const std::size_t k = a.freqs_hz.size();
    for (std::size_t i = 0; i < k; ++i) {
        re += overlap_fraction(a.re_lo[i], a.re_hi[i], b.re_lo[i], b.re_hi[i]);
        im += overlap_fraction(a.im_lo[i], a.im_hi[i], b.im_lo[i], b.im_hi[i]);
    }
    return {{"re", re / double(k)}, {"im", im / double(k)}};
}

double rms_distance(std::span<const std::complex<double>> a,
                    std::span<const std::complex<double>> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::norm(a[i] - b[i]);
    return std::sqrt(acc / double(a.size()));
}

}  // namespace

void run_compare(const std::filesystem::path& vb_report,
                 const std::optional<std::filesystem::path>& mcmc_chains,
                 const std::optional<std::filesystem::path>& averaged,
                 const std::optional<std::filesystem::path>& vb_report_b,
                 const std::filesystem::path& out_dir) {
    const int n_modes = int(mcmc_chains.has_value()) + int(averaged.has_value()) +
                        int(vb_report_b.has_value());
    if (n_modes != 1)
        throw ValidationError("compare: give exactly one of mcmc chains, averaged spectrum, or a "
                              "second VB report");

    const LoadedReport a = load_vb_report(vb_report);
    const auto a_means = a.family.means();
    const auto a_vars = a.family.variances();
    const auto a_curve = impedance(from_free_vector(a_means, a.l), a.freqs_hz);

    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["command"] = "compare";
    doc["vb_report"] = vb_report.string();

    if (mcmc_chains) {
        doc["mode"] = "vb_vs_mcmc";
        const auto diag_path = mcmc_chains->parent_path() / "mcmc_diagnostics.json";
        const json diag = parse_json(read_text_file(diag_path), diag_path.string());

        std::vector<double> mc_mean, mc_var;
        std::vector<std::string> mc_names;
        try {
            for (const auto& p : diag.at("params")) {
                mc_names.push_back(p.at("name").get<std::string>());
                mc_mean.push_back(p.at("mean").get<double>());
                mc_var.push_back(p.at("variance").get<double>());
            }
        } catch (const json::exception& e) {
            throw ValidationError(diag_path.string() + ": bad diagnostics document: " + e.what());
        }
        if (mc_names != a.names)
            throw ValidationError("compare: MCMC parameters do not match the VB report");

        json per_param = json::array();
        for (std::size_t j = 0; j < a.names.size(); ++j) {
            per_param.push_back({{"name", a.names[j]},
                                 {"vb_mean", a_means[j]},
                                 {"mcmc_mean", mc_mean[j]},
                                 {"mean_ratio", a_means[j] / mc_mean[j]},
                                 {"vb_variance", a_vars[j]},
                                 {"mcmc_variance", mc_var[j]},
                                 {"variance_ratio", a_vars[j] / mc_var[j]}});
        }
        doc["per_param"] = per_param;

        // Posterior predictive bands from the stored draws vs the VB family.
        std::ifstream in(*mcmc_chains);
        if (!in) throw ValidationError("cannot open " + mcmc_chains->string());
        std::string line;
        if (!std::getline(in, line)) throw ValidationError("empty chains file");
        std::vector<std::vector<double>> draws;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<double> row;
            std::size_t start = 0;
            while (start <= line.size()) {
                const auto pos = line.find(',', start);
                const std::string field =
                    line.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
                row.push_back(std::stod(field));
                if (pos == std::string::npos) break;
                start = pos + 1;
            }
            if (row.size() != a.names.size() + 2)
                throw ValidationError("compare: chains row width mismatch");
            draws.emplace_back(row.begin() + 2, row.end());
        }
        if (draws.size() < 10) throw ValidationError("compare: too few MCMC draws");

        const std::size_t n_band = std::min<std::size_t>(1000, draws.size());
        const std::size_t k = a.freqs_hz.size();
        std::vector<double> re_all(n_band * k), im_all(n_band * k);
        for (std::size_t s = 0; s < n_band; ++s) {
            const std::size_t idx = s * draws.size() / n_band;
            const auto z = impedance(from_free_vector(draws[idx], a.l), a.freqs_hz);
            for (std::size_t i = 0; i < k; ++i) {
                re_all[s * k + i] = z[i].real();
                im_all[s * k + i] = z[i].imag();
            }
        }
        CredibleBands mc_bands;
        mc_bands.freqs_hz = a.freqs_hz;
        mc_bands.re_lo.resize(k);
        mc_bands.re_hi.resize(k);
        mc_bands.im_lo.resize(k);
        mc_bands.im_hi.resize(k);
        std::vector<double> col(n_band);
        auto q = [&](std::vector<double>& v, double p) {
            std::sort(v.begin(), v.end());
            const double idx = p * double(v.size() - 1);
            const std::size_t lo = static_cast<std::size_t>(idx);
            const std::size_t hi = std::min(lo + 1, v.size() - 1);
            return v[lo] + (idx - double(lo)) * (v[hi] - v[lo]);
        };
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t s = 0; s < n_band; ++s) col[s] = re_all[s * k + i];
            mc_bands.re_lo[i] = q(col, 0.025);
            mc_bands.re_hi[i] = q(col, 0.975);
            for (std::size_t s = 0; s < n_band; ++s) col[s] = im_all[s * k + i];
            mc_bands.im_lo[i] = q(col, 0.025);
            mc_bands.im_hi[i] = q(col, 0.975);
        }
        const CredibleBands vb_bands =
            extract_bands(a.family, a.n_elements, a.l, a.freqs_hz, 1000, 0.025, 0.975, a.seed);
        doc["band_overlap"] = band_overlap_json(vb_bands, mc_bands);

        const auto mc_curve = impedance(from_free_vector(mc_mean, a.l), a.freqs_hz);
        doc["rms_mean_curves_ohm"] = rms_distance(a_curve, mc_curve);
    } else if (averaged) {
        doc["mode"] = "vb_vs_average";
        const ImpedanceSpectrum avg = read_spectrum_csv(*averaged);
        const auto vb_curve = impedance(from_free_vector(a_means, a.l), avg.freqs_hz);
        doc["averaged_spectrum"] = averaged->string();
        doc["n_points"] = avg.size();
        doc["rms_vb_mean_vs_average_ohm"] = rms_distance(vb_curve, avg.z);
    } else {
        doc["mode"] = "vb_vs_vb";
        const LoadedReport b = load_vb_report(*vb_report_b);
        if (b.names != a.names)
            throw ValidationError("compare: the two VB reports fit different models");
        const auto b_means = b.family.means();
        const auto b_vars = b.family.variances();
        json per_param = json::array();
        for (std::size_t j = 0; j < a.names.size(); ++j) {
            per_param.push_back({{"name", a.names[j]},
                                 {"mean_ratio", a_means[j] / b_means[j]},
                                 {"variance_ratio", a_vars[j] / b_vars[j]}});
        }
        doc["per_param"] = per_param;
        const auto b_curve = impedance(from_free_vector(b_means, b.l), a.freqs_hz);
        doc["rms_mean_curves_ohm"] = rms_distance(a_curve, b_curve);
        const CredibleBands ba =
            extract_bands(a.family, a.n_elements, a.l, a.freqs_hz, 1000, 0.025, 0.975, a.seed);
        const CredibleBands bb =
            extract_bands(b.family, b.n_elements, b.l, a.freqs_hz, 1000, 0.025, 0.975, a.seed);
        doc["band_overlap"] = band_overlap_json(ba, bb);
    }

    ensure_out_dir(out_dir);
    write_json_file(doc, out_dir / "comparison.json");
}

}  // namespace eisbayes::workflows
