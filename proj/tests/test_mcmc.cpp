#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "errors.hpp"
#include "mcmc.hpp"
#include "rng.hpp"
#include "support/oracles.hpp"

using namespace eisbayes;

namespace {

EcmParams toy_truth() {
    EcmParams p;
    p.r_s = 2.0;
    p.elements = {{5.0, 0.3, 0.85}};
    p.l = 0.0;
    p.noise_scale = 0.05;
    return p;
}

VariationalFamily toy_prior() {
    VariationalFamily f;
    f.factors = {LognormalFactor::from_moments(2.5, 1.0), LognormalFactor::from_moments(4.0, 4.0),
                 LognormalFactor::from_moments(0.5, 0.25), BetaFactor::from_moments(0.7, 0.02),
                 LognormalFactor::from_moments(0.1, 0.04)};
    return f;
}

Likelihood toy_likelihood(double sigma, std::uint64_t seed) {
    Likelihood lik;
    lik.n_elements = 1;
    lik.l = 0.0;
    const auto grid = FrequencyGrid::log_spaced(1e-3, 1e3, 4);
    lik.spectrum = test::make_noisy_spectrum(toy_truth(), grid.freqs_hz, sigma, seed);
    return lik;
}

}  // namespace

TEST_CASE("standard normal target in one dimension") {
    auto rng = make_rng(5);
    const auto target = [](std::span<const double> z) { return -0.5 * z[0] * z[0]; };
    const std::vector<double> init{0.3};
    const auto run = adaptive_metropolis(target, init, 200000, 0.5, 0.234, 100, rng);
    CHECK(run.n_kept == 100000);
    CHECK(run.acceptance_rate > 0.05);
    CHECK(run.acceptance_rate < 0.7);
    double s1 = 0.0, s2 = 0.0;
    for (double z : run.draws) {
        s1 += z;
        s2 += z * z;
    }
    const double mean = s1 / run.n_kept;
    const double var = s2 / run.n_kept - mean * mean;
    CHECK(std::fabs(mean) < 0.02);
    CHECK(var > 0.95);
    CHECK(var < 1.05);
}

TEST_CASE("sampling the prior alone reproduces its analytic moments") {
    // target = prior only (flat likelihood), in unconstrained coordinates
    // with the log/logit Jacobian corrections written out by hand
    const auto prior = toy_prior();
    const std::size_t p = prior.size();
    const auto log_target = [&](std::span<const double> z) {
        double lp = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            double theta, log_jac;
            if (is_beta(prior.factors[j])) {
                theta = 1.0 / (1.0 + std::exp(-z[j]));
                log_jac = std::log(theta) + std::log1p(-theta);
            } else {
                theta = std::exp(z[j]);
                log_jac = z[j];
            }
            lp += factor_log_pdf(prior.factors[j], theta) + log_jac;
        }
        return lp;
    };
    std::vector<double> init(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        const double m = factor_mean(prior.factors[j]);
        init[j] = is_beta(prior.factors[j]) ? std::log(m / (1.0 - m)) : std::log(m);
    }
    auto rng = make_rng(42);
    const auto run = adaptive_metropolis(log_target, init, 200000, 0.5, 0.234, 100, rng);
    REQUIRE(run.n_kept == 100000);

    const auto means = prior.means();
    const auto vars = prior.variances();
    for (std::size_t j = 0; j < p; ++j) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < run.n_kept; ++i) {
            const double zj = run.draws[i * p + j];
            const double theta = is_beta(prior.factors[j]) ? 1.0 / (1.0 + std::exp(-zj))
                                                           : std::exp(zj);
            s1 += theta;
            s2 += theta * theta;
        }
        const double mean = s1 / double(run.n_kept);
        const double var = s2 / double(run.n_kept) - mean * mean;
        CHECK(mean == doctest::Approx(means[j]).epsilon(0.02));
        CHECK(var == doctest::Approx(vars[j]).epsilon(0.15));
    }
}

TEST_CASE("long-run histogram matches a skewed 1-d target") {
    // detailed-balance smoke test on a discretized asymmetric density
    auto rng = make_rng(11);
    const auto log_target = [](std::span<const double> z) {
        const double x = z[0];
        const double a = std::exp(-0.5 * x * x);
        const double b = 0.5 * std::exp(-0.5 * (x - 2.5) * (x - 2.5) / 0.49) / 0.7;
        return std::log(a + b);
    };
    const std::vector<double> init{0.0};
    const auto run = adaptive_metropolis(log_target, init, 400000, 0.5, 0.234, 100, rng);

    // thin heavily so the chi-square independence assumption is tenable
    std::vector<double> thinned;
    for (std::size_t i = 0; i < run.n_kept; i += 50) thinned.push_back(run.draws[i]);

    // equal-probability bins from a quadrature CDF of the target
    const double lo = -6.0, hi = 7.0;
    const int quad = 200000;
    std::vector<double> grid_x(quad), cdf(quad);
    double norm = 0.0;
    for (int i = 0; i < quad; ++i) {
        grid_x[i] = lo + (hi - lo) * (i + 0.5) / quad;
        norm += std::exp(log_target(std::vector<double>{grid_x[i]}));
        cdf[i] = norm;
    }
    const int bins = 12;
    std::vector<double> edges;
    int gi = 0;
    for (int b = 1; b < bins; ++b) {
        while (gi < quad && cdf[gi] < norm * double(b) / bins) ++gi;
        edges.push_back(grid_x[gi]);
    }
    std::vector<double> observed(bins, 0.0);
    for (double x : thinned) {
        int b = 0;
        while (b < bins - 1 && x >= edges[b]) ++b;
        observed[b] += 1.0;
    }
    const double e = double(thinned.size()) / bins;
    REQUIRE(e > 20.0);
    double stat = 0.0;
    for (int b = 0; b < bins; ++b) stat += (observed[b] - e) * (observed[b] - e) / e;
    const double p_value = test::chi_square_p_value(stat, bins - 1);
    CHECK(p_value > 0.01);
}

TEST_CASE("diagnostics flag degenerate chains") {
    std::vector<std::vector<double>> chains(2);
    chains[0].assign(100, 1.5);
    chains[1].assign(100, 1.5);
    bool degenerate = false;
    const auto s = diagnostics(chains, 1, &degenerate);
    CHECK(degenerate);
    CHECK(std::isnan(s[0].r_hat));
}

TEST_CASE("R-hat close to one for well-mixed Gaussian chains and ESS of iid draws") {
    const std::size_t n = 20000;
    std::vector<std::vector<double>> chains;
    for (int c = 0; c < 2; ++c) {
        auto rng = make_rng(100, c);
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> draws(n);
        for (auto& d : draws) d = normal(rng);
        chains.push_back(std::move(draws));
    }
    const auto s = diagnostics(chains, 1);
    CHECK(s[0].r_hat < 1.01);
    CHECK(s[0].ess == doctest::Approx(double(2 * n)).epsilon(0.10));
    CHECK(s[0].mean == doctest::Approx(0.0).epsilon(0.03));
    CHECK(s[0].variance == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("posterior mean agrees with an importance-sampling oracle on the 1-RQ problem") {
    // weakly informative dataset: prior-proposal importance sampling in
    // five dimensions needs a likelihood that only moderately reshapes
    // the prior, otherwise the weights degenerate
    EcmParams truth = toy_truth();
    truth.noise_scale = 1.0;
    Likelihood lik;
    lik.n_elements = 1;
    lik.l = 0.0;
    const auto grid = FrequencyGrid::log_spaced(1e-2, 1e2, 1);
    lik.spectrum = test::make_noisy_spectrum(truth, grid.freqs_hz, 1.0, 1234);
    VariationalFamily prior = toy_prior();
    prior.factors[4] = LognormalFactor::from_moments(1.0, 0.5);  // noise prior near the truth

    const auto oracle = test::importance_posterior_mean(lik, prior, 1000000, 555);
    REQUIRE(oracle.effective_sample_size > 500.0);

    McmcConfig cfg;
    cfg.n_iters = 100000;
    cfg.n_chains = 4;
    cfg.seed = 9;
    const auto result = sample(lik, prior, cfg);
    CHECK(result.failure.empty());

    for (std::size_t j = 0; j < prior.size(); ++j) {
        const double mcmc_se =
            std::sqrt(result.summaries[j].variance / std::max(result.summaries[j].ess, 1.0));
        const double tol = 3.0 * (oracle.se[j] + mcmc_se);
        CHECK(std::fabs(result.summaries[j].mean - oracle.mean[j]) < tol);
    }
}

TEST_CASE("every retained draw maps to valid parameters") {
    const auto lik = toy_likelihood(0.05, 77);
    const auto prior = toy_prior();
    McmcConfig cfg;
    cfg.n_iters = 4000;
    cfg.n_chains = 2;
    cfg.seed = 31;
    const auto result = sample(lik, prior, cfg);
    for (std::size_t c = 0; c < result.chain_draws.size(); ++c) {
        for (std::size_t i = 0; i < result.kept_per_chain(); ++i) {
            std::vector<double> theta(result.n_params);
            for (std::size_t j = 0; j < result.n_params; ++j) theta[j] = result.draw(c, i, j);
            CHECK_NOTHROW(from_free_vector(theta, lik.l).validate());
        }
    }
}

TEST_CASE("chains are bit-reproducible per seed") {
    const auto lik = toy_likelihood(0.05, 2);
    const auto prior = toy_prior();
    McmcConfig cfg;
    cfg.n_iters = 2000;
    cfg.n_chains = 2;
    cfg.seed = 100;
    const auto a = sample(lik, prior, cfg);
    const auto b = sample(lik, prior, cfg);
    CHECK(a.chain_draws == b.chain_draws);
    CHECK(a.acceptance_rates == b.acceptance_rates);
}

TEST_CASE("config validation") {
    McmcConfig cfg;
    cfg.n_chains = 1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = McmcConfig{};
    cfg.burn_in = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
