#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "metaglmm/family.hpp"
#include "metaglmm/rng.hpp"

using namespace metaglmm;

namespace {
const FamilySpec kFamilies[4] = {FamilySpec::binomial(), FamilySpec::poisson(),
                                 FamilySpec::gamma(), FamilySpec::normal()};

double random_admissible_eta(const FamilySpec& spec, CounterRng& rng) {
    switch (spec.kind) {
        case FamilyKind::Binomial:
        case FamilyKind::Normal: return rng.uniform(-6.0, 6.0);
        case FamilyKind::Poisson: return rng.uniform(-6.0, 4.0);
        case FamilyKind::Gamma: return -std::exp(rng.uniform(-4.0, 2.0));
    }
    return 0.0;
}
} // namespace

TEST_CASE("cumulant pinned values") {
    CHECK(cumulant(FamilySpec::binomial(), 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(cumulant(FamilySpec::poisson(), 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(cumulant(FamilySpec::gamma(), -1.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(cumulant(FamilySpec::binomial(), 0.0, 10.0) ==
          doctest::Approx(10.0 * std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("gamma natural-parameter domain is enforced") {
    CHECK_THROWS_WITH_AS(cumulant(FamilySpec::gamma(), 0.5), doctest::Contains("gamma"),
                         std::invalid_argument);
    CHECK_THROWS_AS(cumulant(FamilySpec::gamma(), 0.0), std::invalid_argument);
    CHECK_THROWS_AS(cumulant_d1(FamilySpec::gamma(), 1.0), std::invalid_argument);
}

TEST_CASE("link maps at pinned points") {
    CHECK(inverse_link(FamilySpec::binomial(), 0.5) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(inverse_link(FamilySpec::poisson(), 1.0) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(inverse_link(FamilySpec::gamma(), std::exp(1.0)) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(link_mean(FamilySpec::normal(), -2.5) == doctest::Approx(-2.5));
}

TEST_CASE("boundary means are rejected") {
    CHECK_THROWS_AS(inverse_link(FamilySpec::binomial(), 0.0), std::domain_error);
    CHECK_THROWS_AS(inverse_link(FamilySpec::binomial(), 1.0), std::domain_error);
    CHECK_THROWS_AS(inverse_link(FamilySpec::poisson(), 0.0), std::domain_error);
    CHECK_THROWS_AS(inverse_link(FamilySpec::gamma(), -1.0), std::domain_error);
}

TEST_CASE("natural parameter from the linear predictor") {
    CHECK(natural_param_from_theta(FamilySpec::gamma(), 0.0) == doctest::Approx(-1.0));
    CHECK(natural_param_from_theta(FamilySpec::gamma(), std::log(2.0)) == doctest::Approx(-0.5));
    CHECK(natural_param_from_theta(FamilySpec::binomial(), 1.3) == doctest::Approx(1.3));
    CHECK(natural_param_from_theta(FamilySpec::poisson(), -0.7) == doctest::Approx(-0.7));
    for (double th : {-3.0, 0.0, 4.0})
        CHECK(natural_param_from_theta(FamilySpec::gamma(), th) < 0.0);
}

TEST_CASE("mean identity: numerical cumulant derivative matches the inverted link") {
    CounterRng rng(17);
    for (const FamilySpec& spec : kFamilies) {
        for (int i = 0; i < 200; ++i) {
            const double eta = random_admissible_eta(spec, rng);
            const double h = 1e-6 * (1.0 + std::abs(eta)) *
                             (spec.kind == FamilyKind::Gamma ? std::min(1.0, -eta / 2.0) : 1.0);
            const double d1 = (cumulant(spec, eta + h) - cumulant(spec, eta - h)) / (2.0 * h);
            // mean from the linear-predictor scale
            double theta = eta;
            if (spec.kind == FamilyKind::Gamma) theta = std::log(-1.0 / eta);
            const double mu = link_mean(spec, theta);
            CHECK(std::abs(d1 - mu) < 1e-6 * (1.0 + std::abs(mu)));
            CHECK(std::abs(d1 - cumulant_d1(spec, eta)) < 1e-6 * (1.0 + std::abs(mu)));
        }
    }
}

TEST_CASE("cumulant is convex on its domain") {
    CounterRng rng(29);
    for (const FamilySpec& spec : kFamilies) {
        for (int i = 0; i < 200; ++i) {
            const double eta = random_admissible_eta(spec, rng);
            const double h = 1e-4 * (1.0 + std::abs(eta)) *
                             (spec.kind == FamilyKind::Gamma ? std::min(1.0, -eta / 2.0) : 1.0);
            const double d2 =
                (cumulant(spec, eta + h) - 2.0 * cumulant(spec, eta) + cumulant(spec, eta - h)) /
                (h * h);
            CHECK(d2 > 0.0);
            CHECK(cumulant_d2(spec, eta) > 0.0);
        }
    }
}

TEST_CASE("link round-trip identity") {
    CounterRng rng(41);
    for (const FamilySpec& spec : kFamilies) {
        for (int i = 0; i < 200; ++i) {
            const double theta = rng.uniform(-5.0, 5.0);
            const double mu = link_mean(spec, theta);
            CHECK(inverse_link(spec, mu) == doctest::Approx(theta).epsilon(1e-12));
        }
    }
}

TEST_CASE("only the canonical pairings (plus the gamma log link) validate") {
    for (const FamilySpec& spec : kFamilies) CHECK_NOTHROW(spec.validate());
    CHECK_THROWS_AS((FamilySpec{FamilyKind::Binomial, LinkKind::Log}.validate()),
                    std::invalid_argument);
    CHECK_THROWS_AS((FamilySpec{FamilyKind::Gamma, LinkKind::NegativeInverse}.validate()),
                    std::invalid_argument);
    CHECK_THROWS_AS((FamilySpec{FamilyKind::Normal, LinkKind::Logit}.validate()),
                    std::invalid_argument);
    CHECK_THROWS_AS(family_from_name("weibull"), std::invalid_argument);
}
