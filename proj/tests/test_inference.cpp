#include <catch_amalgamated.hpp>

#include <sptmle/inference.hpp>

using namespace sptmle;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("wald interval on a two-point sample")
{
    const EifSample e{Eigen::Vector2d(-1.0, 1.0)};
    const auto r = wald_interval(e, 0.5);
    CHECK_THAT(*r.se, WithinAbs(1.0, 1e-15));
    CHECK_THAT(*r.ci_lower, WithinAbs(-1.459964, 1e-12));
    CHECK_THAT(*r.ci_upper, WithinAbs(2.459964, 1e-12));
    CHECK(r.eif_mean == 0.0);
}

TEST_CASE("wald interval errors")
{
    CHECK_THROWS_AS(wald_interval(EifSample{Eigen::VectorXd::Constant(10, 0.3)}, 0.5), InferenceError);
    CHECK_THROWS_AS(wald_interval(EifSample{Eigen::VectorXd::Constant(1, 0.3)}, 0.5), InferenceError);
}

TEST_CASE("interval width shrinks as 1/sqrt(n) at fixed variance")
{
    Eigen::VectorXd v(4), v2(8);
    v << -1, 1, -1, 1;
    v2 << -1, 1, -1, 1, -1, 1, -1, 1;
    // Rescale so both samples have the same n-1 variance.
    const double var4 = (v.array() - v.mean()).square().sum() / 3.0;
    const double var8 = (v2.array() - v2.mean()).square().sum() / 7.0;
    v2 *= std::sqrt(var4 / var8);
    const auto a = wald_interval(EifSample{v}, 0.5);
    const auto b = wald_interval(EifSample{v2}, 0.5);
    const double wa = *a.ci_upper - *a.ci_lower, wb = *b.ci_upper - *b.ci_lower;
    CHECK_THAT(wb * wb, WithinRel(wa * wa / 2.0, 1e-12));
}

TEST_CASE("report invariants")
{
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        Eigen::VectorXd v(30);
        for (auto& x : v) x = rng.uniform(-2, 2);
        const double psi = rng.unit();
        const auto r = wald_interval(EifSample{v}, psi);
        CHECK(*r.ci_lower <= r.psi_hat);
        CHECK(r.psi_hat <= *r.ci_upper);
        CHECK_THAT(*r.ci_upper - *r.ci_lower, WithinRel(2.0 * kZ975 * *r.se, 1e-12));
    }
}

TEST_CASE("eif values: perfect fit on all-treated data")
{
    Eigen::MatrixXd w(4, 2);
    w << 0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8;
    const Eigen::Vector4d y(1, 0, 1, 1);
    const Dataset d(w, Eigen::Vector4d::Ones(), y);
    const Eigen::VectorXd q = y;
    const Eigen::VectorXd g = Eigen::VectorXd::Constant(4, 0.7);
    const double psi = q.mean();
    const auto e = eif_values(q, q, g, d, psi);
    for (int i = 0; i < 4; ++i) CHECK(e.values[i] == q[i] - psi);
}

TEST_CASE("eif values match a row-summation oracle")
{
    Eigen::MatrixXd w(3, 2);
    w << -0.5, 0.2, 0.1, -0.7, 0.6, 0.4;
    const Dataset d(w, Eigen::Vector3d(1, 0, 1), Eigen::Vector3d(1, 1, 0));
    const Eigen::Vector3d q_obs(0.62, 0.41, 0.33), q_one(0.7, 0.52, 0.33), g(0.25, 0.6, 0.8);
    const double psi = (0.7 + 0.52 + 0.33) / 3.0;
    const auto e = eif_values(q_obs, q_one, g, d, psi);
    const Eigen::Vector3d oracle(1.0 / 0.25 * (1 - 0.62) + 0.7 - psi,
                                 0.0 + 0.52 - psi,
                                 1.0 / 0.8 * (0 - 0.33) + 0.33 - psi);
    CHECK((e.values - oracle).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("targeted and plug-in reports")
{
    const auto d = generate(DgpSpec{}, 200, 19);
    const auto q = fit_outcome_model(d);
    const auto g = fit_propensity_model(d);

    const auto t = tmle_vanilla(q, g, d);
    const auto rt = targeted_report(t.model, g, d, 0.0, t.iterations);
    CHECK(std::abs(rt.eif_mean) <= 1e-8);
    REQUIRE(rt.se);
    CHECK(*rt.se > 0.0);
    const auto s_t = sp_score_vector(t.model, g, d);
    CHECK_THAT(rt.eif_mean, WithinAbs(s_t[0], 1e-10));

    const auto sp = sp_tmle(q, g, d);
    const auto rs = targeted_report(sp.model, g, d, sp.state.score_means.cwiseAbs().maxCoeff(),
                                    sp.state.iterations);
    CHECK(std::abs(rs.eif_mean) <= sp.state.tol);
    CHECK_THAT(rs.eif_mean, WithinAbs(sp.state.score_means[0], 1e-10));
    CHECK(rs.psi_hat >= 0.0);
    CHECK(rs.psi_hat <= 1.0);

    const auto rp = plugin_report(q.q_treated(), d, &g, q.refit_max_score);
    CHECK_FALSE(rp.se);
    CHECK_FALSE(rp.ci_lower);
    CHECK_FALSE(rp.ci_upper);
    CHECK_THAT(rp.psi_hat, WithinAbs(plug_in_psi(q, d), 1e-15));
}

TEST_CASE("normal quantile for other levels")
{
    CHECK(detail::normal_quantile_two_sided(0.95) == kZ975);
    CHECK_THAT(detail::normal_quantile_two_sided(0.90), WithinAbs(1.6448536, 1e-6));
    CHECK_THROWS_AS(detail::normal_quantile_two_sided(1.0), std::invalid_argument);
}
