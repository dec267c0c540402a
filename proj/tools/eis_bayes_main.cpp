// eis-bayes command-line front end; all work happens in the shared
// library behind the C API.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eisbayes/eis_bayes.h"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        std::cerr << "error: cannot open config file: " << path << "\n";
        std::exit(2);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

int finish(eisb_status status) {
    if (status != EISB_OK) std::cerr << "error: " << eisb_last_error() << "\n";
    return static_cast<int>(status);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian impedance-spectrum analysis for fractional-order circuit models"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(eisb_version()));

    std::string config_path, out_dir;
    std::string current_csv, voltage_csv, spectrum_csv;
    std::string vb_report, vb_report_b, mcmc_chains, averaged_csv;
    std::vector<std::string> average_inputs;
    std::uint64_t seed = 0;
    bool have_seed = false;
    bool paper_epsilon = false;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option_function<std::uint64_t>(
               "--seed",
               [&](const std::uint64_t& v) {
                   seed = v;
                   have_seed = true;
               },
               "Override the seed from the config");
    };

    auto* sim = app.add_subcommand("simulate", "Synthesize noisy current/voltage series");
    sim->add_option("--config", config_path, "Simulation config JSON")->required();
    sim->add_option("--out", out_dir, "Output directory")->required();
    add_seed(sim);

    auto* est = app.add_subcommand("estimate", "Wavelet transfer-function spectrum estimate");
    est->add_option("--current", current_csv, "Current channel CSV")->required();
    est->add_option("--voltage", voltage_csv, "Voltage channel CSV")->required();
    est->add_option("--config", config_path, "Estimator config JSON (optional)");
    est->add_option("--out", out_dir, "Output directory")->required();

    auto* fvb = app.add_subcommand("fit-vb", "Variational-Bayes posterior fit");
    fvb->add_option("--spectrum", spectrum_csv, "Spectrum CSV")->required();
    fvb->add_option("--config", config_path, "Fit config JSON")->required();
    fvb->add_option("--out", out_dir, "Output directory")->required();
    fvb->add_flag("--paper-epsilon", paper_epsilon,
                  "Reuse the learning rate as the ADAM denominator guard");
    add_seed(fvb);

    auto* fmc = app.add_subcommand("fit-mcmc", "Adaptive-Metropolis posterior sampling");
    fmc->add_option("--spectrum", spectrum_csv, "Spectrum CSV")->required();
    fmc->add_option("--config", config_path, "Fit config JSON")->required();
    fmc->add_option("--out", out_dir, "Output directory")->required();
    add_seed(fmc);

    auto* avg = app.add_subcommand("average", "Pointwise mean of spectra on one grid");
    avg->add_option("spectra", average_inputs, "Spectrum CSV files")->required();
    avg->add_option("--out", out_dir, "Output directory")->required();

    auto* cmp = app.add_subcommand("compare", "Compare a VB report against a reference");
    cmp->add_option("--vb-report", vb_report, "vb_report.json")->required();
    cmp->add_option("--mcmc-chains", mcmc_chains, "mcmc_chains.csv to compare against");
    cmp->add_option("--averaged", averaged_csv, "Averaged spectrum CSV to compare against");
    cmp->add_option("--vb-report-b", vb_report_b, "Second vb_report.json to compare against");
    cmp->add_option("--out", out_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    const std::uint64_t* seed_ptr = have_seed ? &seed : nullptr;

    if (sim->parsed()) {
        return finish(eisb_cmd_simulate(read_file(config_path).c_str(), out_dir.c_str(), seed_ptr));
    }
    if (est->parsed()) {
        std::string cfg;
        const char* cfg_ptr = nullptr;
        if (!config_path.empty()) {
            cfg = read_file(config_path);
            cfg_ptr = cfg.c_str();
        }
        return finish(
            eisb_cmd_estimate(current_csv.c_str(), voltage_csv.c_str(), cfg_ptr, out_dir.c_str()));
    }
    if (fvb->parsed()) {
        return finish(eisb_cmd_fit_vb(spectrum_csv.c_str(), read_file(config_path).c_str(),
                                      out_dir.c_str(), seed_ptr, paper_epsilon ? 1 : 0));
    }
    if (fmc->parsed()) {
        return finish(eisb_cmd_fit_mcmc(spectrum_csv.c_str(), read_file(config_path).c_str(),
                                        out_dir.c_str(), seed_ptr));
    }
    if (avg->parsed()) {
        std::vector<const char*> ptrs;
        ptrs.reserve(average_inputs.size());
        for (const auto& p : average_inputs) ptrs.push_back(p.c_str());
        return finish(eisb_cmd_average(ptrs.data(), ptrs.size(), out_dir.c_str()));
    }
    if (cmp->parsed()) {
        return finish(eisb_cmd_compare(vb_report.c_str(),
                                       mcmc_chains.empty() ? nullptr : mcmc_chains.c_str(),
                                       averaged_csv.empty() ? nullptr : averaged_csv.c_str(),
                                       vb_report_b.empty() ? nullptr : vb_report_b.c_str(),
                                       out_dir.c_str()));
    }
    return 1;
}
