#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "distributions.hpp"
#include "ecm.hpp"
#include "spectrum.hpp"

namespace eisbayes {

// Observation model: independent Gaussian noise with shared std
// noise_scale on the real and imaginary impedance components at every
// frequency. noise_scale is inferred alongside the circuit parameters.
struct Likelihood {
    ImpedanceSpectrum spectrum;
    std::size_t n_elements = 3;  // model order N
    double l = 0.0;              // fixed inductance

    std::size_t free_param_count() const { return 3 * n_elements + 2; }
    void validate() const;  // identifiability floor: >= 3N+2 data points
};

struct VbConfig {
    double learning_rate = 0.05;  // paper: 0.05 simulated, 0.005 measured
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    // With paper_epsilon the learning rate doubles as the denominator
    // guard, reproducing the paper's update rule verbatim.
    bool paper_epsilon = false;
    int mc_samples = 8;
    int min_iters = 8000;
    int max_iters = 35000;
    int convergence_window = 1000;
    double convergence_rel_change = 0.01;
    std::uint64_t seed = 0;

    double effective_epsilon() const { return paper_epsilon ? learning_rate : adam_epsilon; }
    void validate() const;
};

enum class StopReason { converged, max_iters };

struct PosteriorReport {
    VariationalFamily fitted;
    std::vector<std::string> param_names;
    std::vector<double> elbo_trace;               // one entry per iteration
    std::vector<double> mean_trace;               // iterations x P, row-major
    std::vector<double> sd_trace;                 // iterations x P, row-major
    std::size_t n_params = 0;
    int iterations = 0;
    StopReason stop_reason = StopReason::max_iters;
    std::uint64_t seed = 0;
    double wall_seconds = 0.0;  // not serialized; outputs stay bit-reproducible

    double mean_at(int iter, std::size_t p) const { return mean_trace[iter * n_params + p]; }
    double sd_at(int iter, std::size_t p) const { return sd_trace[iter * n_params + p]; }
};

// log p(x|theta) + log p(theta); -inf outside the prior support.
double log_joint(const EcmParams& theta, const Likelihood& lik, const VariationalFamily& prior);

struct LogJointGradient {
    double value = 0.0;
    std::vector<double> d_free;  // d/d free-parameter vector, 3N+2 entries
};
LogJointGradient log_joint_gradient(const EcmParams& theta, const Likelihood& lik,
                                    const VariationalFamily& prior);

// Monte Carlo ELBO with its pathwise gradient in the unconstrained
// hyperparameter coordinates of pack_unconstrained (two per factor).
// The estimate is the per-sample average of log_joint - log q over S
// reparameterized draws; the gradient chains the model and entropy
// derivatives through the draws and adds the explicit d log q / d lambda
// terms, so it is the exact derivative of the fixed-noise estimator.
struct ElboEstimate {
    double elbo = 0.0;
    std::vector<double> gradient;
};
ElboEstimate elbo_estimate(const VariationalFamily& q, const Likelihood& lik,
                           const VariationalFamily& prior, int mc_samples, std::uint64_t seed);
ElboEstimate elbo_estimate(const VariationalFamily& q, const Likelihood& lik,
                           const VariationalFamily& prior, int mc_samples, std::mt19937_64& rng);

struct AdamState {
    int t = 0;
    std::vector<double> m;
    std::vector<double> v;
};

// One ADAM update of x given an ascent problem's descent gradient g
// (callers maximizing an objective pass its negated gradient).
void adam_step(AdamState& state, std::span<const double> gradient, std::span<double> x,
               const VbConfig& config);

// Stochastic ELBO ascent. Stops once the window-mean ELBO changes by
// less than convergence_rel_change between the two most recent
// disjoint windows (checked every window after min_iters), else at
// max_iters. Throws ConvergenceError if the ELBO turns non-finite.
PosteriorReport fit(const Likelihood& lik, const VariationalFamily& prior,
                    const VariationalFamily& init, const VbConfig& config);

struct CredibleBands {
    std::vector<double> freqs_hz;
    std::vector<double> re_mean, im_mean;  // curve at the posterior means
    std::vector<double> re_lo, re_hi;
    std::vector<double> im_lo, im_hi;
};

// Posterior predictive curve quantiles from n_samples parameter draws.
CredibleBands extract_bands(const VariationalFamily& fitted, std::size_t n_elements, double l,
                            std::span<const double> freqs_hz, int n_samples = 1000,
                            double lo_quantile = 0.025, double hi_quantile = 0.975,
                            std::uint64_t seed = 0);

}  // namespace eisbayes
