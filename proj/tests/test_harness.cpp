#include <catch_amalgamated.hpp>

#include <sptmle/config.hpp>
#include <sptmle/svg.hpp>

using namespace sptmle;
using Catch::Matchers::WithinAbs;

namespace {

ReplicateRecord rec(Estimator e, std::size_t rep, std::optional<double> psi, double se = 0.05)
{
    ReplicateRecord r;
    r.estimator = e;
    r.n = 50;
    r.rep = rep;
    if (psi) {
        EstimateReport er;
        er.psi_hat = *psi;
        if (is_targeted(e)) {
            er.se = se;
            er.ci_lower = *psi - kZ975 * se;
            er.ci_upper = *psi + kZ975 * se;
        }
        r.report = er;
    } else {
        r.error = "boom";
    }
    return r;
}

SweepConfig small_config()
{
    SweepConfig c;
    c.dgps = {{TreatmentMechanism::Linear}, {TreatmentMechanism::Step}};
    c.n_grid = {40, 60};
    c.reps = 4;
    c.base_seed = 77;
    return c;
}

} // namespace

TEST_CASE("summarize: hand examples")
{
    const auto a = summarize({rec(Estimator::Hal, 0, 0.4), rec(Estimator::Hal, 1, 0.6)});
    CHECK_THAT(*a.bias, WithinAbs(0.0, 1e-15));
    CHECK_THAT(*a.variance, WithinAbs(0.01, 1e-15));
    CHECK_THAT(*a.mse, WithinAbs(0.01, 1e-15));
    CHECK_FALSE(a.coverage);

    const auto c = summarize({rec(Estimator::Tmle, 0, 0.5), rec(Estimator::Tmle, 1, 0.5), rec(Estimator::Tmle, 2, 0.5)});
    CHECK(*c.bias == 0.0);
    CHECK(*c.variance == 0.0);
    CHECK(*c.mse == 0.0);
    CHECK(*c.coverage == 1.0);
}

TEST_CASE("summarize: failures and coverage")
{
    const auto all_failed = summarize({rec(Estimator::SpTmle, 0, std::nullopt), rec(Estimator::SpTmle, 1, std::nullopt)});
    CHECK(all_failed.n_failed == 2);
    CHECK_FALSE(all_failed.bias);
    CHECK_FALSE(all_failed.coverage);

    const auto mixed = summarize({rec(Estimator::Tmle, 0, 0.5), rec(Estimator::Tmle, 1, 0.9),
                                  rec(Estimator::Tmle, 2, std::nullopt), rec(Estimator::Tmle, 3, 0.45)});
    CHECK(mixed.n_failed == 1);
    CHECK_THAT(*mixed.coverage, WithinAbs(2.0 / 3.0, 1e-15));
    CHECK_THAT(*mixed.mse, WithinAbs(*mixed.bias * *mixed.bias + *mixed.variance, 1e-12));

    CHECK_THROWS_AS(summarize({rec(Estimator::Tmle, 0, 0.5), rec(Estimator::Hal, 1, 0.5)}), std::invalid_argument);
}

TEST_CASE("sweep config validation")
{
    auto c = small_config();
    CHECK_NOTHROW(c.validate());
    c.reps = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = small_config();
    c.n_grid = {60, 40};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.n_grid = {40, 40};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = small_config();
    c.hal.g_trunc_lower = 0.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("replicate seeds")
{
    const DgpSpec lin{TreatmentMechanism::Linear}, step{TreatmentMechanism::Step};
    CHECK(replicate_seed(5, lin, 50, 3) == replicate_seed(5, lin, 50, 0) + 3);
    CHECK(replicate_seed(6, lin, 50, 0) == replicate_seed(5, lin, 50, 0) + 1);
    CHECK(replicate_seed(5, lin, 50, 0) != replicate_seed(5, step, 50, 0));
    CHECK(replicate_seed(5, lin, 50, 0) != replicate_seed(5, lin, 100, 0));
}

TEST_CASE("run_replicate is deterministic and shares nuisance fits")
{
    const auto c = small_config();
    const auto a = run_replicate(c.dgps[0], 60, 2, c);
    const auto b = run_replicate(c.dgps[0], 60, 2, c);
    REQUIRE(a.records.size() == 4);
    CHECK(replicates_to_csv(a.records) == replicates_to_csv(b.records));
    for (const auto& r : a.records) {
        REQUIRE(r.report);
        CHECK(r.seed == replicate_seed(c.base_seed, c.dgps[0], 60, 2));
    }
    // Recomputing the shared fits by hand reproduces each estimator.
    const auto data = generate(c.dgps[0], 60, a.seed);
    const auto q = fit_outcome_model(data, c.hal);
    const auto g = fit_propensity_model(data, c.hal);
    CHECK(a.records[0].report->psi_hat == q.q_lasso().mean());
    CHECK(a.records[1].report->psi_hat == plug_in_psi(q, data));
    CHECK(a.records[2].report->psi_hat == plug_in_psi(tmle_vanilla(q, g, data).model, data));
    CHECK(a.records[3].report->psi_hat == plug_in_psi(sp_tmle(q, g, data, c.targeting).model, data));
    CHECK(std::abs(a.records[2].report->eif_mean) <= 1e-8);
    CHECK(a.records[3].report->max_score_residual <= default_tolerance(60));
    CHECK(a.records[1].report->max_score_residual <= 1e-8);
}

TEST_CASE("per-estimator failures are recorded without aborting")
{
    const auto d = generate(DgpSpec{}, 60, 3);
    const Dataset none(d.w(), Eigen::VectorXd::Zero(60), d.y(), 3);
    const std::vector<Estimator> all(kAllEstimators.begin(), kAllEstimators.end());
    const auto r = estimate_all(none, all, HalConfig{}, TargetingConfig{});
    REQUIRE(r.records.size() == 4);
    CHECK(r.records[0].report);
    CHECK(r.records[1].report);
    CHECK_FALSE(r.records[2].report);
    CHECK_FALSE(r.records[3].report);
    CHECK_FALSE(r.records[2].error.empty());
    const auto fails = failures_to_csv(r.records);
    CHECK(fails.find("tmle,linear,60,0,3,") != std::string::npos);

    const auto tiny = generate(DgpSpec{}, 10, 3);
    const auto rt = estimate_all(tiny, all, HalConfig{}, TargetingConfig{});
    for (const auto& rec : rt.records) CHECK_FALSE(rec.report);
}

TEST_CASE("sweep results do not depend on execution order or workers")
{
    auto c = small_config();
    const auto base = run_sweep(c);
    c.execution_shuffle = 12345;
    c.workers = 3;
    const auto shuffled = run_sweep(c);
    CHECK(summaries_to_csv(base.summaries) == summaries_to_csv(shuffled.summaries));
    CHECK(replicates_to_csv(base.records) == replicates_to_csv(shuffled.records));
    CHECK(base.summaries.size() == 2 * 2 * 4);
    CHECK_FALSE(base.any_cell_fully_failed(c.reps));
}

TEST_CASE("persisted files round trip through their readers")
{
    auto c = small_config();
    c.keep_traces = true;
    const auto res = run_sweep(c);
    const auto rep_csv = replicates_to_csv(res.records);
    const auto back = replicates_from_csv(rep_csv);
    CHECK(replicates_to_csv(back) == rep_csv);
    CHECK(summaries_to_csv(summarize_all(back)) == summaries_to_csv(res.summaries));
    const auto sum_csv = summaries_to_csv(res.summaries);
    CHECK(summaries_to_csv(summaries_from_csv(sum_csv)) == sum_csv);

    const auto dir = std::filesystem::temp_directory_path() / "sptmle_harness_test";
    std::filesystem::remove_all(dir);
    write_sweep(dir, res);
    CHECK(csv::read_file(dir / "summary.csv") == sum_csv);
    CHECK(csv::read_file(dir / "replicates.csv") == rep_csv);
    CHECK(std::filesystem::exists(dir / "failures.csv"));
    REQUIRE(std::filesystem::exists(dir / "traces"));
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "traces")) {
        ++files;
        const auto text = csv::read_file(e.path());
        CHECK(text.rfind("iter,component,score_mean\n", 0) == 0);
    }
    CHECK(files == res.traces.size());
    std::filesystem::remove_all(dir);

    CHECK_THROWS_AS(replicates_from_csv("nope\n"), CsvError);
    CHECK_THROWS_AS(summaries_from_csv(""), CsvError);
    try {
        replicates_from_csv(std::string(kReplicatesHeader) + "\ntmle,linear,50,0,abc,NA,NA,NA,0,0,1\n");
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        CHECK(e.line() == 2);
        CHECK(e.column() == "psi_hat");
    }
}

TEST_CASE("config files and settings")
{
    RunConfig c;
    apply_config_json(c, R"({
  "sweep.reps": 7,
  "sweep.n_grid": [50, 100],
  "targeting.delta": 0.002,
  "hal.outcome_fit": "treated_only",
  "sweep.dgp": "linear,step"
})");
    CHECK(c.sweep.reps == 7);
    CHECK(c.sweep.n_grid == std::vector<std::size_t>{50, 100});
    CHECK(c.sweep.targeting.delta == 0.002);
    CHECK(c.sweep.hal.outcome_fit == OutcomeFit::TreatedOnly);
    CHECK(c.sweep.dgps.size() == 2);

    apply_setting(c, "sweep.reps", nlohmann::json("9"));
    CHECK(c.sweep.reps == 9);

    try {
        apply_config_json(c, "{\n  \"sweep.reps\": 3,\n  \"sweep.bogus\": 1\n}");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 3);
    }
    try {
        apply_config_json(c, "{\n  \"sweep.reps\": 3\n  \"hal.cv_folds\": 4\n}");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 3);
    }
    try {
        apply_config_json(c, "{\n\n  \"targeting.tol_mode\": \"loose\"\n}");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 3);
    }

    // Every key documented in config_keys() is accepted and echoed.
    const auto resolved = resolved_json(RunConfig{});
    for (const auto& k : config_keys()) {
        CHECK(resolved.contains(std::string(k.key)));
        RunConfig scratch;
        CHECK_NOTHROW(apply_setting(scratch, k.key, nlohmann::json(resolved[std::string(k.key)])));
    }
    RunConfig again;
    apply_config_json(again, resolved.dump());
    CHECK(resolved_json(again) == resolved);
}

TEST_CASE("SVG rendering")
{
    auto c = small_config();
    const auto res = run_sweep(c);
    const auto svg = render_summary_svg(res.summaries, TreatmentMechanism::Linear);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("polyline") != std::string::npos);
}
