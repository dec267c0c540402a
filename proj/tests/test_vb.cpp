#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "errors.hpp"
#include "rng.hpp"
#include "support/oracles.hpp"
#include "vb.hpp"

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

Likelihood toy_likelihood(double sigma, std::uint64_t seed, int k = 24) {
    Likelihood lik;
    lik.n_elements = 1;
    lik.l = 0.0;
    const auto grid = FrequencyGrid::log_spaced(1e-3, 1e3, (k + 5) / 6);
    std::vector<double> freqs(grid.freqs_hz.begin(),
                              grid.freqs_hz.begin() + std::min<std::size_t>(k, grid.freqs_hz.size()));
    lik.spectrum = test::make_noisy_spectrum(toy_truth(), freqs, sigma, seed);
    return lik;
}

Likelihood empty_likelihood() {
    // zero data points: the likelihood term is identically zero, so the
    // ELBO reduces to -KL(q || prior)
    Likelihood lik;
    lik.n_elements = 1;
    lik.l = 0.0;
    return lik;
}

}  // namespace

TEST_CASE("log joint of a zero-residual observation") {
    EcmParams p = toy_truth();
    p.noise_scale = 1.0;
    Likelihood lik;
    lik.n_elements = 1;
    lik.l = 0.0;
    const auto grid = FrequencyGrid::log_spaced(1e-2, 1e2, 2);
    lik.spectrum.freqs_hz = grid.freqs_hz;
    lik.spectrum.z = impedance(p, grid.freqs_hz);
    const std::size_t k = lik.spectrum.size();

    const auto prior = toy_prior();
    const double lp_prior = prior.log_pdf(to_free_vector(p));
    const double lj = log_joint(p, lik, prior);
    CHECK(lj - lp_prior == doctest::Approx(-double(k) * std::log(2 * std::numbers::pi)).epsilon(1e-12));

    // shifting every observed real part by c drops the log joint by K c^2 / (2 sigma^2)
    const double c = 0.37;
    for (auto& z : lik.spectrum.z) z += c;
    const double shifted = log_joint(p, lik, prior);
    CHECK(lj - shifted == doctest::Approx(double(k) * c * c / 2.0).epsilon(1e-10));
}

TEST_CASE("log joint matches a hand-expanded oracle on a single-point spectrum") {
    const EcmParams p = toy_truth();
    Likelihood lik;
    lik.n_elements = 1;
    lik.l = 0.0;
    lik.spectrum.freqs_hz = {2.5};
    lik.spectrum.z = {{6.1, -1.4}};
    const auto prior = toy_prior();

    const auto z = test::impedance_polar_oracle(p, 2.5);
    const double dre = 6.1 - z.real();
    const double dim = -1.4 - z.imag();
    const double s = p.noise_scale;
    double expected = -2.0 * std::log(s) - std::log(2 * std::numbers::pi) -
                      (dre * dre + dim * dim) / (2 * s * s);
    auto ln_term = [](double x, double mu, double sg) {
        return -std::log(x) - std::log(sg) - 0.5 * std::log(2 * std::numbers::pi) -
               (std::log(x) - mu) * (std::log(x) - mu) / (2 * sg * sg);
    };
    const auto& f0 = std::get<LognormalFactor>(prior.factors[0]);
    const auto& f1 = std::get<LognormalFactor>(prior.factors[1]);
    const auto& f2 = std::get<LognormalFactor>(prior.factors[2]);
    const auto& f3 = std::get<BetaFactor>(prior.factors[3]);
    const auto& f4 = std::get<LognormalFactor>(prior.factors[4]);
    expected += ln_term(p.r_s, f0.mu_ln, f0.sigma_ln);
    expected += ln_term(p.elements[0].r, f1.mu_ln, f1.sigma_ln);
    expected += ln_term(p.elements[0].q, f2.mu_ln, f2.sigma_ln);
    expected += (f3.a - 1) * std::log(p.elements[0].alpha) +
                (f3.b - 1) * std::log(1 - p.elements[0].alpha) -
                (std::lgamma(f3.a) + std::lgamma(f3.b) - std::lgamma(f3.a + f3.b));
    expected += ln_term(p.noise_scale, f4.mu_ln, f4.sigma_ln);

    CHECK(log_joint(p, lik, prior) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(log_joint_gradient(p, lik, prior).value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("log joint is -inf outside the prior support") {
    EcmParams p = toy_truth();
    p.elements[0].alpha = 1.0;  // valid for the model, boundary of the beta support
    const auto lik = toy_likelihood(0.05, 11);
    CHECK(log_joint(p, lik, toy_prior()) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("log joint gradient against finite differences") {
    const auto lik = toy_likelihood(0.05, 3);
    const auto prior = toy_prior();
    EcmParams p = toy_truth();
    p.r_s = 2.2;
    p.elements[0].alpha = 0.8;
    auto x = to_free_vector(p);
    const auto g = log_joint_gradient(p, lik, prior);
    for (std::size_t j = 0; j < x.size(); ++j) {
        auto f = [&](double xj) {
            auto xx = x;
            xx[j] = xj;
            return log_joint(from_free_vector(xx, lik.l), lik, prior);
        };
        const double fd = test::central_diff(f, x[j], 1e-7 * std::max(1.0, std::fabs(x[j])));
        CHECK(g.d_free[j] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("ELBO with q equal to the prior and a flat likelihood") {
    const auto prior = toy_prior();
    const auto lik = empty_likelihood();
    // the entropy and prior terms cancel sample by sample: exactly zero
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        const auto est = elbo_estimate(prior, lik, prior, 16, seed);
        CHECK(est.elbo == doctest::Approx(0.0).epsilon(1e-12));
    }
    // the remaining gradient is a pure score term with zero expectation
    const int batches = 60;
    std::vector<double> sums(2 * prior.size(), 0.0), sums2(2 * prior.size(), 0.0);
    for (int b = 0; b < batches; ++b) {
        const auto est = elbo_estimate(prior, lik, prior, 250, 1000 + b);
        for (std::size_t i = 0; i < sums.size(); ++i) {
            sums[i] += est.gradient[i];
            sums2[i] += est.gradient[i] * est.gradient[i];
        }
    }
    for (std::size_t i = 0; i < sums.size(); ++i) {
        const double mean = sums[i] / batches;
        const double var = sums2[i] / batches - mean * mean;
        const double se = std::sqrt(var / batches);
        CHECK(std::fabs(mean) < 4.0 * se + 1e-12);
    }
}

TEST_CASE("ELBO against 1-d quadrature of the KL terms") {
    // flat likelihood, q differs from the prior in one lognormal and one
    // beta factor: ELBO = -KL(q_ln||p_ln) - KL(q_beta||p_beta)
    const auto prior = toy_prior();
    VariationalFamily q = prior;
    q.factors[1] = LognormalFactor{1.2, 0.3};
    q.factors[3] = BetaFactor{20.0, 9.0};

    double expected = 0.0;
    {
        const auto& qf = std::get<LognormalFactor>(q.factors[1]);
        const auto& pf = std::get<LognormalFactor>(prior.factors[1]);
        const int n = 10000;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double lo = qf.mu_ln - 8 * qf.sigma_ln, hi = qf.mu_ln + 8 * qf.sigma_ln;
            const double u = lo + (hi - lo) * (i + 0.5) / n;  // integrate in log space
            const double x = std::exp(u);
            const double qq = std::exp(qf.log_pdf(x)) * x;  // density in u
            acc += qq * (pf.log_pdf(x) - qf.log_pdf(x)) * (hi - lo) / n;
        }
        expected += acc;
    }
    {
        const auto& qf = std::get<BetaFactor>(q.factors[3]);
        const auto& pf = std::get<BetaFactor>(prior.factors[3]);
        const int n = 20000;
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = (i + 0.5) / n;
            acc += std::exp(qf.log_pdf(x)) * (pf.log_pdf(x) - qf.log_pdf(x)) / n;
        }
        expected += acc;
    }

    const auto lik = empty_likelihood();
    const int batches = 100, per_batch = 400;
    double sum = 0.0, sum2 = 0.0;
    for (int b = 0; b < batches; ++b) {
        const double e = elbo_estimate(q, lik, prior, per_batch, 500 + b).elbo;
        sum += e;
        sum2 += e * e;
    }
    const double mean = sum / batches;
    const double se = std::sqrt((sum2 / batches - mean * mean) / batches);
    CHECK(std::fabs(mean - expected) < 3.0 * se + 1e-6);
}

TEST_CASE("pathwise gradient matches common-random-number finite differences") {
    const auto lik = toy_likelihood(0.05, 21);
    const auto prior = toy_prior();
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);

    for (int point = 0; point < 20; ++point) {
        auto lambda = pack_unconstrained(prior);
        for (auto& v : lambda) v += 0.3 * unif(rng);
        const auto q = unpack_unconstrained(lambda, prior);
        const std::uint64_t seed = 9000 + point;
        const auto est = elbo_estimate(q, lik, prior, 4, seed);
        for (std::size_t i = 0; i < lambda.size(); ++i) {
            const double h = 1e-5 * std::max(1.0, std::fabs(lambda[i]));
            auto at = [&](double v) {
                auto ll = lambda;
                ll[i] = v;
                return elbo_estimate(unpack_unconstrained(ll, prior), lik, prior, 4, seed).elbo;
            };
            const double fd = (at(lambda[i] + h) - at(lambda[i] - h)) / (2 * h);
            const double scale = std::max(std::fabs(fd), 1e-6);
            CHECK(std::fabs(est.gradient[i] - fd) / scale < 1e-3);
        }
    }
}

TEST_CASE("adam single step and fixed point") {
    VbConfig cfg;
    cfg.learning_rate = 0.05;
    AdamState st;
    std::vector<double> x{1.0, -2.0};
    const std::vector<double> g{0.3, -4.0};
    adam_step(st, g, x, cfg);
    // bias correction cancels at t=1: update = -lr * g / (|g| + eps)
    CHECK(x[0] == doctest::Approx(1.0 - 0.05 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(-2.0 + 0.05 * 4.0 / (4.0 + 1e-8)).epsilon(1e-12));

    AdamState st0;
    std::vector<double> y{0.7};
    const std::vector<double> zero{0.0};
    for (int t = 0; t < 50; ++t) adam_step(st0, zero, y, cfg);
    CHECK(y[0] == 0.7);
}

TEST_CASE("adam trajectory matches an independent recursion for 100 steps") {
    VbConfig cfg;
    cfg.learning_rate = 0.01;
    AdamState st;
    test::AdamOracle oracle;
    std::vector<double> x{2.0};
    double x_ref = 2.0;
    for (int t = 1; t <= 100; ++t) {
        adam_step(st, std::vector<double>{1.0}, x, cfg);
        x_ref += oracle.step(1.0, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
        CHECK(x[0] == doctest::Approx(x_ref).epsilon(1e-12));
    }
}

TEST_CASE("paper epsilon flag reuses the learning rate in the denominator") {
    VbConfig cfg;
    cfg.learning_rate = 0.001;
    cfg.paper_epsilon = true;
    AdamState st;
    std::vector<double> x{0.0};
    adam_step(st, std::vector<double>{2.0}, x, cfg);
    CHECK(x[0] == doctest::Approx(-0.001 * 2.0 / (2.0 + 0.001)).epsilon(1e-12));
}

TEST_CASE("fit stops one window after min_iters when already converged") {
    // init = prior already concentrated on the truth, tiny learning rate:
    // the ELBO trace is statistically flat from the start
    const auto truth = toy_truth();
    Likelihood lik;
    lik.n_elements = 1;
    lik.l = 0.0;
    const auto grid = FrequencyGrid::log_spaced(1e-2, 1e2, 3);
    lik.spectrum = test::make_noisy_spectrum(truth, grid.freqs_hz, 0.02, 5);

    VariationalFamily tight;
    tight.factors = {LognormalFactor{std::log(2.0), 0.01}, LognormalFactor{std::log(5.0), 0.01},
                     LognormalFactor{std::log(0.3), 0.01}, BetaFactor::from_moments(0.85, 1e-4),
                     LognormalFactor{std::log(0.05), 0.01}};
    VbConfig cfg;
    cfg.learning_rate = 1e-7;
    cfg.mc_samples = 8;
    cfg.min_iters = 300;
    cfg.max_iters = 2000;
    cfg.convergence_window = 100;
    cfg.seed = 3;

    const auto report = fit(lik, tight, tight, cfg);
    CHECK(report.stop_reason == StopReason::converged);
    CHECK(report.iterations == 400);  // min_iters + window
    CHECK(report.elbo_trace.size() == std::size_t(report.iterations));
    CHECK(report.mean_trace.size() == std::size_t(report.iterations) * report.n_params);
}

TEST_CASE("fit is bit-reproducible for a fixed seed") {
    const auto lik = toy_likelihood(0.05, 8, 12);
    const auto prior = toy_prior();
    VbConfig cfg;
    cfg.min_iters = 150;
    cfg.max_iters = 300;
    cfg.convergence_window = 50;
    cfg.mc_samples = 2;
    cfg.seed = 77;
    const auto a = fit(lik, prior, prior, cfg);
    const auto b = fit(lik, prior, prior, cfg);
    CHECK(a.elbo_trace == b.elbo_trace);
    CHECK(a.mean_trace == b.mean_trace);
    CHECK(a.sd_trace == b.sd_trace);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("identifiability floor is enforced") {
    Likelihood lik;
    lik.n_elements = 1;
    lik.l = 0.0;
    lik.spectrum.freqs_hz = {1.0};
    lik.spectrum.z = {{1.0, -0.5}};
    CHECK_THROWS_AS(lik.validate(), ValidationError);
}

TEST_CASE("credible bands collapse for a near-degenerate posterior") {
    VariationalFamily tight;
    tight.factors = {LognormalFactor{std::log(2.0), 1e-9}, LognormalFactor{std::log(5.0), 1e-9},
                     LognormalFactor{std::log(0.3), 1e-9}, BetaFactor{8.5e6, 1.5e6},
                     LognormalFactor{std::log(0.05), 1e-9}};
    const auto grid = FrequencyGrid::log_spaced(1e-2, 1e2, 3);
    const auto bands = extract_bands(tight, 1, 0.0, grid.freqs_hz, 400, 0.025, 0.975, 9);
    double z_scale = 0.0;
    for (std::size_t i = 0; i < bands.freqs_hz.size(); ++i)
        z_scale = std::max(z_scale, std::hypot(bands.re_mean[i], bands.im_mean[i]));
    for (std::size_t i = 0; i < bands.freqs_hz.size(); ++i) {
        CHECK(bands.re_hi[i] - bands.re_lo[i] >= 0.0);
        CHECK(bands.re_hi[i] - bands.re_lo[i] < 1e-3 * z_scale);
        CHECK(bands.im_hi[i] - bands.im_lo[i] < 1e-3 * z_scale);
    }
}

TEST_CASE("posterior-mean curve lies inside the bands") {
    VariationalFamily fam;
    fam.factors = {LognormalFactor{std::log(2.0), 0.05}, LognormalFactor{std::log(5.0), 0.05},
                   LognormalFactor{std::log(0.3), 0.05}, BetaFactor::from_moments(0.85, 1e-3),
                   LognormalFactor{std::log(0.05), 0.1}};
    const auto grid = FrequencyGrid::log_spaced(1e-2, 1e2, 4);
    const auto bands = extract_bands(fam, 1, 0.0, grid.freqs_hz, 1000, 0.025, 0.975, 4);
    for (std::size_t i = 0; i < bands.freqs_hz.size(); ++i) {
        CHECK(bands.re_lo[i] <= bands.re_mean[i]);
        CHECK(bands.re_mean[i] <= bands.re_hi[i]);
        CHECK(bands.im_lo[i] <= bands.im_mean[i]);
        CHECK(bands.im_mean[i] <= bands.im_hi[i]);
    }
}

TEST_CASE("pathwise and score-function beta gradients agree in expectation") {
    const auto lik = toy_likelihood(0.05, 31, 12);
    const auto prior = toy_prior();
    VariationalFamily q = prior;
    q.factors[3] = BetaFactor{18.0, 6.0};

    const auto score = test::score_function_gradient(q, lik, prior, 3, 400000, 17);

    // average many pathwise estimates (unconstrained gradient -> divide by a, b)
    const auto& bf = std::get<BetaFactor>(q.factors[3]);
    double g_a = 0.0, g_b = 0.0;
    const int batches = 300;
    for (int bidx = 0; bidx < batches; ++bidx) {
        const auto est = elbo_estimate(q, lik, prior, 100, 40000 + bidx);
        g_a += est.gradient[6] / bf.a;
        g_b += est.gradient[7] / bf.b;
    }
    g_a /= batches;
    g_b /= batches;
    CHECK(std::fabs(g_a - score.d_p1) < 4.0 * score.stderr_p1 + 2e-3 * std::fabs(score.d_p1));
    CHECK(std::fabs(g_b - score.d_p2) < 4.0 * score.stderr_p2 + 2e-3 * std::fabs(score.d_p2));
}
