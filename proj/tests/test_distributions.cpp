#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "distributions.hpp"
#include "rng.hpp"
#include "special_functions.hpp"
#include "support/oracles.hpp"

using namespace eisbayes;

TEST_CASE("special functions against frozen references") {
    CHECK(digamma(1.0) == doctest::Approx(-0.5772156649015329).epsilon(1e-12));
    CHECK(digamma(4.2) == doctest::Approx(1.3113388912865996).epsilon(1e-12));
    CHECK(incomplete_beta(13.91, 5.68, 0.71) == doctest::Approx(0.4717676108195166).epsilon(1e-12));
    CHECK(incomplete_beta(1.0, 1.0, 0.25) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(incomplete_beta(2.0, 2.0, 0.5) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("lognormal moment matching reproduces the R_s prior") {
    const auto f = LognormalFactor::from_moments(2.5, 1.0);
    CHECK(f.mu_ln == doctest::Approx(0.84).epsilon(0.005));
    CHECK(f.sigma_ln == doctest::Approx(0.39).epsilon(0.015));
    // exact analytic round trip
    CHECK(f.mean() == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(f.variance() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("beta moment matching reproduces the alpha prior") {
    const auto f = BetaFactor::from_moments(0.8, 0.01);
    CHECK(f.a == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(f.b == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("moment transforms degenerate and invalid inputs") {
    const auto f = LognormalFactor::from_moments(5.0, 1e-12);
    CHECK(f.mu_ln == doctest::Approx(std::log(5.0)).epsilon(1e-9));
    CHECK(f.sigma_ln < 1e-5);
    CHECK_THROWS_AS(LognormalFactor::from_moments(-1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(LognormalFactor::from_moments(1.0, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(BetaFactor::from_moments(0.5, 0.25), std::invalid_argument);  // at the bound
    CHECK_THROWS_AS(BetaFactor::from_moments(0.5, 0.3), std::invalid_argument);
    CHECK_THROWS_AS(BetaFactor::from_moments(1.2, 0.01), std::invalid_argument);
}

TEST_CASE("monte-carlo moments of seeded draws match the requested moments") {
    const int n = 1'000'000;
    {
        const auto f = LognormalFactor::from_moments(5.0, 2.0);
        auto rng = make_rng(42);
        std::normal_distribution<double> eps(0.0, 1.0);
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = std::exp(f.mu_ln + f.sigma_ln * eps(rng));
            s1 += x;
            s2 += x * x;
        }
        const double mean = s1 / n;
        const double var = s2 / n - mean * mean;
        CHECK(mean == doctest::Approx(5.0).epsilon(0.01));
        CHECK(var == doctest::Approx(2.0).epsilon(0.01));
    }
    {
        const auto f = BetaFactor::from_moments(0.71, 0.0105);
        auto rng = make_rng(43);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double x = f.inv_cdf(unif(rng));
            s1 += x;
            s2 += x * x;
        }
        const double mean = s1 / n;
        const double var = s2 / n - mean * mean;
        CHECK(mean == doctest::Approx(0.71).epsilon(0.01));
        CHECK(var == doctest::Approx(0.0105).epsilon(0.01));
    }
}

TEST_CASE("log densities at frozen reference points") {
    const LognormalFactor std_ln{0.0, 1.0};
    CHECK(std_ln.log_pdf(1.0) == doctest::Approx(-0.9189385332046727).epsilon(1e-14));
    const BetaFactor uniform{1.0, 1.0};
    CHECK(uniform.log_pdf(0.1) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(uniform.log_pdf(0.9) == doctest::Approx(0.0).epsilon(1e-14));
    const BetaFactor table1{13.91, 5.68};
    CHECK(table1.log_pdf(0.71) == doctest::Approx(1.3423032892627326).epsilon(1e-12));
    CHECK(std_ln.log_pdf(-1.0) == -std::numeric_limits<double>::infinity());
    CHECK(table1.log_pdf(1.5) == -std::numeric_limits<double>::infinity());
}

TEST_CASE("beta density integrates to one on a dense grid") {
    const BetaFactor f{13.91, 5.68};
    const int n = 100'000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        // midpoint rule over (0,1)
        const double x = (i + 0.5) / n;
        acc += std::exp(f.log_pdf(x));
    }
    acc /= n;
    CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("pathwise sampling trivial cases") {
    const LognormalFactor f{0.0, 0.7};
    const auto s = f.sample_pathwise(0.0);
    CHECK(s.value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.d_p1 == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.d_p2 == doctest::Approx(0.0));

    const BetaFactor uniform{1.0, 1.0};
    CHECK(uniform.inv_cdf(0.25) == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(uniform.inv_cdf(0.75) == doctest::Approx(0.75).epsilon(1e-10));
}

TEST_CASE("beta inverse-CDF against frozen reference and hyperparameter sensitivities") {
    const BetaFactor f{12.0, 3.0};
    CHECK(f.inv_cdf(0.5) == doctest::Approx(0.8135258974145957).epsilon(1e-10));
    const auto s = f.sample_pathwise(0.5);
    // frozen from high-precision implicit differentiation
    CHECK(s.d_p1 == doctest::Approx(0.0130005171283131).epsilon(1e-3));
    CHECK(s.d_p2 == doctest::Approx(-0.0565593611356219).epsilon(1e-3));

    // full finite difference through the inversion itself
    const double h = 1e-6;
    const double fd_a =
        (BetaFactor{12.0 * (1 + h), 3.0}.inv_cdf(0.5) - BetaFactor{12.0 * (1 - h), 3.0}.inv_cdf(0.5)) /
        (2 * 12.0 * h);
    const double fd_b =
        (BetaFactor{12.0, 3.0 * (1 + h)}.inv_cdf(0.5) - BetaFactor{12.0, 3.0 * (1 - h)}.inv_cdf(0.5)) /
        (2 * 3.0 * h);
    CHECK(std::fabs(s.d_p1 - fd_a) / std::fabs(fd_a) < 1e-3);
    CHECK(std::fabs(s.d_p2 - fd_b) / std::fabs(fd_b) < 1e-3);
}

TEST_CASE("beta inversion reaches the stated tolerance across the support") {
    const BetaFactor sharp{969.35, 144.11};  // a posterior-scale factor
    for (double u : {1e-6, 0.01, 0.2, 0.5, 0.8, 0.99, 1.0 - 1e-6}) {
        const double x = sharp.inv_cdf(u);
        CHECK(std::fabs(sharp.cdf(x) - u) < 1e-9);
    }
    const BetaFactor skewed{0.7, 4.0};
    for (double u : {0.001, 0.1, 0.5, 0.9, 0.999}) {
        const double x = skewed.inv_cdf(u);
        CHECK(std::fabs(skewed.cdf(x) - u) < 1e-9);
    }
}

TEST_CASE("factor -> moments -> factor round trip") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        if (i % 2 == 0) {
            const LognormalFactor f{unif(rng) * 6.0 - 3.0, 0.05 + unif(rng) * 1.5};
            const auto back = LognormalFactor::from_moments(f.mean(), f.variance());
            CHECK(back.mu_ln == doctest::Approx(f.mu_ln).epsilon(1e-10));
            CHECK(back.sigma_ln == doctest::Approx(f.sigma_ln).epsilon(1e-10));
        } else {
            const BetaFactor f{0.5 + unif(rng) * 30.0, 0.5 + unif(rng) * 30.0};
            const auto back = BetaFactor::from_moments(f.mean(), f.variance());
            CHECK(back.a == doctest::Approx(f.a).epsilon(1e-10));
            CHECK(back.b == doctest::Approx(f.b).epsilon(1e-10));
        }
    }
}

TEST_CASE("identical seeds give identical draw sequences") {
    VariationalFamily fam;
    fam.factors = {LognormalFactor{0.2, 0.5}, BetaFactor{5.0, 2.0}, LognormalFactor{-1.0, 0.3}};
    auto r1 = make_rng(2024);
    auto r2 = make_rng(2024);
    for (int i = 0; i < 100; ++i) {
        const auto a = fam.draw(r1);
        const auto b = fam.draw(r2);
        CHECK(a == b);
    }
}

TEST_CASE("hyperparameter partials of log q agree with finite differences") {
    const double x = 0.42;
    const BetaFactor f{4.0, 2.5};
    const double h = 1e-6;
    const double fd_a = (BetaFactor{4.0 + h, 2.5}.log_pdf(x) - BetaFactor{4.0 - h, 2.5}.log_pdf(x)) / (2 * h);
    const double fd_b = (BetaFactor{4.0, 2.5 + h}.log_pdf(x) - BetaFactor{4.0, 2.5 - h}.log_pdf(x)) / (2 * h);
    CHECK(f.d_log_pdf_da(x) == doctest::Approx(fd_a).epsilon(1e-6));
    CHECK(f.d_log_pdf_db(x) == doctest::Approx(fd_b).epsilon(1e-6));

    const LognormalFactor g{0.3, 0.8};
    const double y = 1.7;
    const double fd_mu =
        (LognormalFactor{0.3 + h, 0.8}.log_pdf(y) - LognormalFactor{0.3 - h, 0.8}.log_pdf(y)) / (2 * h);
    const double fd_sg =
        (LognormalFactor{0.3, 0.8 + h}.log_pdf(y) - LognormalFactor{0.3, 0.8 - h}.log_pdf(y)) / (2 * h);
    CHECK(g.d_log_pdf_dmu(y) == doctest::Approx(fd_mu).epsilon(1e-6));
    CHECK(g.d_log_pdf_dsigma(y) == doctest::Approx(fd_sg).epsilon(1e-6));
    const double fd_x =
        (g.log_pdf(y + h) - g.log_pdf(y - h)) / (2 * h);
    CHECK(g.d_log_pdf_dx(y) == doctest::Approx(fd_x).epsilon(1e-6));
}

TEST_CASE("unconstrained packing round trip") {
    VariationalFamily fam;
    fam.factors = {LognormalFactor{0.84, 0.39}, BetaFactor{13.91, 5.68}};
    const auto x = pack_unconstrained(fam);
    CHECK(x.size() == 4);
    const auto back = unpack_unconstrained(x, fam);
    CHECK(std::get<LognormalFactor>(back.factors[0]).sigma_ln == doctest::Approx(0.39).epsilon(1e-14));
    CHECK(std::get<BetaFactor>(back.factors[1]).a == doctest::Approx(13.91).epsilon(1e-14));
}
