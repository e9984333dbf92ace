#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include <sptmle/dgp.hpp>

using namespace sptmle;
using Catch::Matchers::WithinAbs;

namespace {
const DgpSpec kLinear{TreatmentMechanism::Linear};
const DgpSpec kSinusoidal{TreatmentMechanism::Sinusoidal};
const DgpSpec kStep{TreatmentMechanism::Step};
} // namespace

TEST_CASE("true_propensity examples")
{
    CHECK(true_propensity(kLinear, 0.0, 0.0) == 0.5);
    CHECK_THAT(true_propensity(kSinusoidal, 0.0, 0.0), WithinAbs(0.95257, 1e-5));
    CHECK(true_propensity(kSinusoidal, 0.0, 0.0) == expit(3.0));
    CHECK(true_propensity(kStep, 0.5, -0.5) == 0.5);
    CHECK_THAT(true_propensity(kStep, 0.5, 0.5), WithinAbs(0.7311, 1e-4));
    CHECK(true_propensity(kStep, -0.5, -0.5) == expit(1.0));
    CHECK(true_propensity(kLinear, 0.3, -0.4) == expit(2.0 * -0.4 + 0.3));
}

TEST_CASE("true_outcome_mean examples")
{
    CHECK(true_outcome_mean(0.0, 0.0) == 0.5);
    CHECK_THAT(true_outcome_mean(1.0, 1.0), WithinAbs(0.95257, 1e-5));
    CHECK(true_outcome_mean(-1.0, 0.5) == 0.5);
}

TEST_CASE("generate is deterministic in (spec, n, seed)")
{
    const auto a = generate(kLinear, 100, 42);
    const auto b = generate(kLinear, 100, 42);
    CHECK(a.w() == b.w());
    CHECK(a.a() == b.a());
    CHECK(a.y() == b.y());
    CHECK(a.seed() == 42);
    const auto c = generate(kLinear, 100, 43);
    CHECK(a.w() != c.w());
}

TEST_CASE("generated covariates are in range and labels binary")
{
    for (const auto& spec : {kLinear, kSinusoidal, kStep}) {
        const auto d = generate(spec, 2000, 5);
        CHECK(d.w().minCoeff() >= -1.0);
        CHECK(d.w().maxCoeff() < 1.0);
    }
}

TEST_CASE("large-sample means match the truth")
{
    const auto d = generate(kLinear, 1000000, 2024);
    CHECK_THAT(d.y().mean(), WithinAbs(0.5, 0.002));
    CHECK_THAT(d.a().mean(), WithinAbs(0.5, 0.002));

    for (const auto& spec : {kLinear, kSinusoidal, kStep}) {
        const auto dd = generate(spec, 1000000, 77);
        double q = 0.0;
        for (Eigen::Index i = 0; i < dd.size(); ++i) q += true_outcome_mean(dd.w()(i, 0), dd.w()(i, 1));
        CHECK_THAT(q / static_cast<double>(dd.size()), WithinAbs(DgpSpec::true_psi, 0.002));
    }
}

TEST_CASE("sinusoidal propensity has near-positivity-violation regions")
{
    // 3 cos(2 pi r) is most negative at r = 0.5.
    CHECK(true_propensity(kSinusoidal, 0.5, 0.0) < 0.05);
    const auto d = generate(kSinusoidal, 5000, 1);
    double lo = 1.0;
    for (Eigen::Index i = 0; i < d.size(); ++i) lo = std::min(lo, true_propensity(kSinusoidal, d.w()(i, 0), d.w()(i, 1)));
    CHECK(lo < 0.05);
}

TEST_CASE("mechanism names round trip")
{
    for (auto m : {TreatmentMechanism::Linear, TreatmentMechanism::Sinusoidal, TreatmentMechanism::Step}) {
        CHECK(parse_mechanism(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_mechanism("quadratic"), std::invalid_argument);
}

TEST_CASE("Rng unit draws lie in [0,1) and below() is unbiased in range")
{
    Rng rng(9);
    std::array<int, 7> counts{};
    for (int k = 0; k < 70000; ++k) {
        const double u = rng.unit();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        ++counts[rng.below(7)];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}
