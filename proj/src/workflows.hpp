#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "mcmc.hpp"
#include "signal_pipeline.hpp"
#include "vb.hpp"

namespace eisbayes::workflows {

inline constexpr int kSchemaVersion = 1;

// Parsed fit configuration shared by fit-vb and fit-mcmc.
struct FitSetup {
    std::size_t n_elements = 3;
    double l = 0.0;
    VariationalFamily prior;
    VbConfig vb;
    McmcConfig mcmc;
    int band_samples = 1000;
    double band_lo_quantile = 0.025;
    double band_hi_quantile = 0.975;
    nlohmann::json resolved;  // canonical echo written into every output
};

FitSetup parse_fit_config(const std::string& json_text);
SimulationConfig parse_sim_config(const std::string& json_text, nlohmann::json* resolved = nullptr);

struct VbRunResult {
    PosteriorReport report;
    nlohmann::json report_json;
};
// In-memory fit; report_json matches what run_fit_vb writes to disk
// (wall-clock time deliberately excluded to keep outputs reproducible).
VbRunResult fit_vb_core(const ImpedanceSpectrum& spectrum, const FitSetup& setup);

// Command bodies behind the C API. All throw ValidationError /
// ConvergenceError; output-file layout is documented in the README.
void run_simulate(const std::string& config_json, const std::filesystem::path& out_dir,
                  std::optional<std::uint64_t> seed_override);
void run_estimate(const std::filesystem::path& current_csv,
                  const std::filesystem::path& voltage_csv,
                  const std::optional<std::string>& config_json,
                  const std::filesystem::path& out_dir);
void run_fit_vb(const std::filesystem::path& spectrum_csv, const std::string& config_json,
                const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed_override,
                bool paper_epsilon);
void run_fit_mcmc(const std::filesystem::path& spectrum_csv, const std::string& config_json,
                  const std::filesystem::path& out_dir, std::optional<std::uint64_t> seed_override);
void run_average(std::span<const std::filesystem::path> inputs,
                 const std::filesystem::path& out_dir);
void run_compare(const std::filesystem::path& vb_report,
                 const std::optional<std::filesystem::path>& mcmc_chains,
                 const std::optional<std::filesystem::path>& averaged,
                 const std::optional<std::filesystem::path>& vb_report_b,
                 const std::filesystem::path& out_dir);

}  // namespace eisbayes::workflows
