#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "distributions.hpp"
#include "vb.hpp"

namespace eisbayes {

struct McmcConfig {
    int n_iters = 200000;        // per chain; paper ran 300000 NUTS iterations
    double burn_in = 0.5;        // fraction discarded (and used for adaptation)
    double target_accept = 0.234;
    int adapt_window = 100;      // proposal-scale refresh cadence during burn-in
    std::uint64_t seed = 0;
    int n_chains = 4;
    int thin = 10;               // stride used when chains are written to disk

    void validate() const;
};

struct ParamSummary {
    double mean = 0.0;
    double variance = 0.0;
    double r_hat = 0.0;  // NaN when chains are degenerate
    double ess = 0.0;
};

struct ChainResult {
    std::size_t n_params = 0;
    // Post-burn-in draws per chain in physical units, row-major kept x P.
    std::vector<std::vector<double>> chain_draws;
    std::vector<double> acceptance_rates;  // per chain, post-adaptation segment
    std::vector<ParamSummary> summaries;
    bool degenerate = false;
    std::string failure;  // empty when acceptance and R-hat checks pass

    std::size_t kept_per_chain() const {
        return chain_draws.empty() ? 0 : chain_draws[0].size() / n_params;
    }
    double draw(std::size_t chain, std::size_t iter, std::size_t param) const {
        return chain_draws[chain][iter * n_params + param];
    }
};

// Random-walk Metropolis with diagonal Gaussian proposals. During
// burn-in the global step size follows a Robbins-Monro recursion toward
// target_accept and per-coordinate scales track the running std of the
// chain; both freeze at the end of burn-in so the retained segment is a
// fixed-kernel chain. Returns post-burn-in draws (row-major kept x dim).
struct MetropolisRun {
    std::vector<double> draws;
    std::size_t n_kept = 0;
    double acceptance_rate = 0.0;  // over the retained segment
};
MetropolisRun adaptive_metropolis(const std::function<double(std::span<const double>)>& log_target,
                                  std::span<const double> init, int n_iters,
                                  double burn_in_fraction, double target_accept, int adapt_window,
                                  std::mt19937_64& rng);

// Posterior sampling for the ECM model in unconstrained coordinates
// (log for positive parameters, logit for alpha) with the exact
// log-Jacobian correction; chains are seeded independently and may run
// in parallel. failure is set when the post-adaptation acceptance rate
// leaves [0.05, 0.7] or any split R-hat exceeds 1.1.
ChainResult sample(const Likelihood& lik, const VariationalFamily& prior, const McmcConfig& config);

// Split R-hat, ESS (Geyer initial monotone sequence) and pooled moments
// per parameter. degenerate is set when a parameter has zero variance.
std::vector<ParamSummary> diagnostics(const std::vector<std::vector<double>>& chain_draws,
                                      std::size_t n_params, bool* degenerate = nullptr);

}  // namespace eisbayes
