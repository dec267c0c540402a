#include "mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace eisbayes {

namespace {
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double sample_variance(std::span<const double> v, double mean) {
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / double(v.size() - 1);
}
}  // namespace

void McmcConfig::validate() const {
    if (n_iters < 100) throw ValidationError("McmcConfig: n_iters too small");
    if (!(burn_in > 0.0 && burn_in < 1.0))
        throw ValidationError("McmcConfig: burn_in must lie in (0,1)");
    if (!(target_accept > 0.0 && target_accept < 1.0))
        throw ValidationError("McmcConfig: target_accept must lie in (0,1)");
    if (adapt_window < 1) throw ValidationError("McmcConfig: adapt_window must be >= 1");
    if (n_chains < 2) throw ValidationError("McmcConfig: need at least 2 chains");
    if (thin < 1) throw ValidationError("McmcConfig: thin must be >= 1");
}

MetropolisRun adaptive_metropolis(const std::function<double(std::span<const double>)>& log_target,
                                  std::span<const double> init, int n_iters,
                                  double burn_in_fraction, double target_accept, int adapt_window,
                                  std::mt19937_64& rng) {
    const std::size_t dim = init.size();
    const int burn = static_cast<int>(n_iters * burn_in_fraction);
    const int kept = n_iters - burn;
    if (kept < 1) throw ValidationError("adaptive_metropolis: nothing kept after burn-in");

    std::vector<double> z(init.begin(), init.end());
    double lp = log_target(z);
    if (!std::isfinite(lp))
        throw ValidationError("adaptive_metropolis: log target not finite at the initial point");

    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    double log_step = std::log(2.38 / std::sqrt(double(dim)));
    std::vector<double> coord_scale(dim, 1.0);
    // Welford accumulators over the burn-in trajectory.
    std::vector<double> run_mean(dim, 0.0), run_m2(dim, 0.0);
    long adapt_count = 0;
    std::vector<double> proposal(dim);

    MetropolisRun out;
    out.draws.resize(std::size_t(kept) * dim);
    long accepted_kept = 0;

    for (int t = 1; t <= n_iters; ++t) {
        const double step = std::exp(log_step);
        for (std::size_t i = 0; i < dim; ++i)
            proposal[i] = z[i] + step * coord_scale[i] * normal(rng);
        const double lp_new = log_target(proposal);
        const double log_alpha = lp_new - lp;
        const double alpha = std::isfinite(lp_new) ? std::min(1.0, std::exp(log_alpha)) : 0.0;
        const bool accept = unif(rng) < alpha;
        if (accept) {
            z = proposal;
            lp = lp_new;
        }

        if (t <= burn) {
            // Robbins-Monro on the global step, variance tracking per coordinate.
            log_step += std::pow(double(t), -0.6) * (alpha - target_accept);
            // Drop the early transient from the variance estimate so the
            // frozen scales reflect the stationary region.
            if (t == burn / 2) {
                std::fill(run_mean.begin(), run_mean.end(), 0.0);
                std::fill(run_m2.begin(), run_m2.end(), 0.0);
                adapt_count = 0;
            }
            ++adapt_count;
            for (std::size_t i = 0; i < dim; ++i) {
                const double delta = z[i] - run_mean[i];
                run_mean[i] += delta / double(adapt_count);
                run_m2[i] += delta * (z[i] - run_mean[i]);
            }
            if (t % adapt_window == 0 && adapt_count >= 2 * long(dim) + 10) {
                for (std::size_t i = 0; i < dim; ++i) {
                    const double var = run_m2[i] / double(adapt_count - 1);
                    coord_scale[i] = std::sqrt(std::max(var, 1e-12));
                }
            }
        } else {
            const int j = t - burn - 1;
            std::copy(z.begin(), z.end(), out.draws.begin() + std::size_t(j) * dim);
            if (accept) ++accepted_kept;
        }
    }
    out.n_kept = kept;
    out.acceptance_rate = double(accepted_kept) / double(kept);
    return out;
}

namespace {

// Unconstrained coordinates: log for positive parameters, logit for alpha.
struct Transform {
    std::vector<bool> logit;  // per parameter

    void to_physical(std::span<const double> z, std::span<double> theta) const {
        for (std::size_t i = 0; i < logit.size(); ++i)
            theta[i] = logit[i] ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]);
    }
    double log_jacobian(std::span<const double> z, std::span<const double> theta) const {
        double lj = 0.0;
        for (std::size_t i = 0; i < logit.size(); ++i) {
            if (logit[i])
                lj += std::log(theta[i]) + std::log1p(-theta[i]);
            else
                lj += z[i];
        }
        return lj;
    }
    std::vector<double> from_physical(std::span<const double> theta) const {
        std::vector<double> z(theta.size());
        for (std::size_t i = 0; i < theta.size(); ++i)
            z[i] = logit[i] ? std::log(theta[i] / (1.0 - theta[i])) : std::log(theta[i]);
        return z;
    }
};

}  // namespace

ChainResult sample(const Likelihood& lik, const VariationalFamily& prior,
                   const McmcConfig& config) {
    lik.validate();
    config.validate();
    prior.validate();
    const std::size_t p = lik.free_param_count();
    if (prior.size() != p) throw ValidationError("mcmc::sample: prior size must equal 3N+2");

    Transform tf;
    tf.logit.resize(p);
    for (std::size_t i = 0; i < p; ++i) tf.logit[i] = is_beta(prior.factors[i]);

    const auto log_target = [&](std::span<const double> z) {
        thread_local std::vector<double> theta;
        theta.resize(z.size());
        Transform const& t = tf;
        t.to_physical(z, theta);
        for (double v : theta)
            if (!std::isfinite(v) || v <= 0.0) return -std::numeric_limits<double>::infinity();
        const EcmParams params = from_free_vector(theta, lik.l);
        return log_joint(params, lik, prior) + t.log_jacobian(z, theta);
    };

    const std::vector<double> init_z = tf.from_physical(prior.means());

    ChainResult result;
    result.n_params = p;
    result.chain_draws.resize(config.n_chains);
    result.acceptance_rates.assign(config.n_chains, 0.0);

    std::vector<std::string> chain_errors(config.n_chains);
    parallel_for(config.n_chains, [&](std::size_t c) {
        try {
            auto rng = make_rng(config.seed, c);
            MetropolisRun run =
                adaptive_metropolis(log_target, init_z, config.n_iters, config.burn_in,
                                    config.target_accept, config.adapt_window, rng);
            // Transform kept draws to physical units in place.
            std::vector<double> theta(p);
            for (std::size_t i = 0; i < run.n_kept; ++i) {
                std::span<double> row(run.draws.data() + i * p, p);
                tf.to_physical(row, theta);
                std::copy(theta.begin(), theta.end(), row.begin());
            }
            result.chain_draws[c] = std::move(run.draws);
            result.acceptance_rates[c] = run.acceptance_rate;
        } catch (const std::exception& e) {
            chain_errors[c] = e.what();
        }
    });
    for (const auto& err : chain_errors)
        if (!err.empty()) throw ValidationError("mcmc::sample: " + err);

    result.summaries = diagnostics(result.chain_draws, p, &result.degenerate);

    for (int c = 0; c < config.n_chains; ++c) {
        const double acc = result.acceptance_rates[c];
        if (acc < 0.05 || acc > 0.7) {
            result.failure = "chain " + std::to_string(c) + " post-adaptation acceptance rate " +
                             std::to_string(acc) + " outside [0.05, 0.7]";
            return result;
        }
    }
    const auto names = free_param_names(lik.n_elements);
    for (std::size_t j = 0; j < p; ++j) {
        const double rh = result.summaries[j].r_hat;
        if (!(rh <= 1.1)) {
            result.failure = "R-hat for " + names[j] + " is " + std::to_string(rh) + " > 1.1";
            return result;
        }
    }
    return result;
}

std::vector<ParamSummary> diagnostics(const std::vector<std::vector<double>>& chain_draws,
                                      std::size_t n_params, bool* degenerate) {
    if (chain_draws.size() < 2) throw ValidationError("diagnostics: need at least 2 chains");
    const std::size_t m_chains = chain_draws.size();
    const std::size_t kept = chain_draws[0].size() / n_params;
    for (const auto& c : chain_draws)
        if (c.size() != kept * n_params)
            throw ValidationError("diagnostics: chains must have equal length");
    if (kept < 4) throw ValidationError("diagnostics: chains too short");

    if (degenerate) *degenerate = false;
    std::vector<ParamSummary> out(n_params);

    const std::size_t half = kept / 2;
    std::vector<double> seq(half);

    for (std::size_t j = 0; j < n_params; ++j) {
        // Pooled moments over all chains.
        double total = 0.0;
        for (const auto& c : chain_draws)
            for (std::size_t i = 0; i < kept; ++i) total += c[i * n_params + j];
        const double mean = total / double(m_chains * kept);
        double ss = 0.0;
        for (const auto& c : chain_draws)
            for (std::size_t i = 0; i < kept; ++i) {
                const double d = c[i * n_params + j] - mean;
                ss += d * d;
            }
        out[j].mean = mean;
        out[j].variance = ss / double(m_chains * kept - 1);

        // Split R-hat over 2*m_chains half-sequences.
        std::vector<double> seq_means, seq_vars;
        for (const auto& c : chain_draws) {
            for (int part = 0; part < 2; ++part) {
                const std::size_t off = part == 0 ? 0 : kept - half;
                for (std::size_t i = 0; i < half; ++i) seq[i] = c[(off + i) * n_params + j];
                const double mu = std::accumulate(seq.begin(), seq.end(), 0.0) / double(half);
                seq_means.push_back(mu);
                seq_vars.push_back(sample_variance(seq, mu));
            }
        }
        const double w = std::accumulate(seq_vars.begin(), seq_vars.end(), 0.0) / double(seq_vars.size());
        const double grand =
            std::accumulate(seq_means.begin(), seq_means.end(), 0.0) / double(seq_means.size());
        const double b = double(half) * sample_variance(seq_means, grand);
        if (w <= 0.0) {
            out[j].r_hat = kNan;
            out[j].ess = kNan;
            if (degenerate) *degenerate = true;
            continue;
        }
        const double var_plus = double(half - 1) / double(half) * w + b / double(half);
        out[j].r_hat = std::sqrt(var_plus / w);

        // ESS via variogram autocorrelations, Geyer initial monotone sum.
        double rho_sum = 0.0;
        double prev_pair = std::numeric_limits<double>::max();
        const std::size_t max_lag = kept / 2;
        for (std::size_t t = 1; t + 1 <= max_lag; t += 2) {
            double rho_pair = 0.0;
            for (std::size_t lag = t; lag <= t + 1; ++lag) {
                double vario = 0.0;
                for (const auto& c : chain_draws)
                    for (std::size_t i = lag; i < kept; ++i) {
                        const double d = c[i * n_params + j] - c[(i - lag) * n_params + j];
                        vario += d * d;
                    }
                vario /= double(m_chains * (kept - lag));
                const double rho = 1.0 - vario / (2.0 * var_plus);
                rho_pair += rho;
            }
            if (rho_pair < 0.0) break;
            rho_pair = std::min(rho_pair, prev_pair);  // enforce monotone decrease
            prev_pair = rho_pair;
            rho_sum += rho_pair;
        }
        const double tau = 1.0 + 2.0 * rho_sum;
        out[j].ess = double(m_chains * kept) / tau;
    }
    return out;
}

}  // namespace eisbayes
