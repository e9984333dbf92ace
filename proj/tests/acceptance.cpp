// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 iff all pass.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include <sptmle/config.hpp>

using namespace sptmle;

namespace {

constexpr std::uint64_t kLargeSeed = 20240601;
constexpr std::uint64_t kSmallSeed = 20240602;
constexpr std::size_t kReps = 500;

int failures = 0;

void verdict(int id, bool pass, const std::string& what)
{
    std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

std::size_t workers()
{
    if (auto w = workers_from_env()) return *w;
    return std::max(1u, std::thread::hardware_concurrency());
}

SweepResult sweep(std::size_t n, std::uint64_t seed, std::uint64_t shuffle = 0)
{
    SweepConfig c;
    c.n_grid = {n};
    c.reps = kReps;
    c.base_seed = seed;
    c.workers = workers();
    c.execution_shuffle = shuffle;
    const auto t0 = std::chrono::steady_clock::now();
    auto r = run_sweep(c);
    std::fprintf(stderr, "sweep n=%zu: %.0f s\n", n,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return r;
}

const CellSummary& cell(const SweepResult& r, Estimator e, TreatmentMechanism m)
{
    for (const auto& s : r.summaries) {
        if (s.estimator == e && s.dgp == m) return s;
    }
    throw std::logic_error("missing cell");
}

constexpr std::array<TreatmentMechanism, 3> kMechs{TreatmentMechanism::Linear, TreatmentMechanism::Sinusoidal,
                                                   TreatmentMechanism::Step};

struct ScoreAudit
{
    std::size_t tmle_bad = 0, sp_bad = 0, relaxed_bad = 0, failed = 0, total = 0;
    double tmle_worst = 0, sp_worst_ratio = 0, relaxed_worst = 0;
};

ScoreAudit audit(const SweepResult& r)
{
    ScoreAudit a;
    for (const auto& rec : r.records) {
        if (!rec.report) {
            ++a.failed;
            continue;
        }
        const auto& e = *rec.report;
        switch (rec.estimator) {
        case Estimator::Tmle:
            ++a.total;
            a.tmle_worst = std::max(a.tmle_worst, std::abs(e.eif_mean));
            if (std::abs(e.eif_mean) > 1e-8) ++a.tmle_bad;
            break;
        case Estimator::SpTmle: {
            const double tol = default_tolerance(static_cast<Eigen::Index>(rec.n));
            a.sp_worst_ratio = std::max(a.sp_worst_ratio, e.max_score_residual / tol);
            if (e.max_score_residual > tol) ++a.sp_bad;
            break;
        }
        case Estimator::RelaxedHal:
            a.relaxed_worst = std::max(a.relaxed_worst, e.max_score_residual);
            if (e.max_score_residual > 1e-8) ++a.relaxed_bad;
            break;
        default: break;
        }
    }
    return a;
}

void write_outputs(const std::string& name, const SweepResult& r)
{
    write_sweep(std::filesystem::path("acceptance_out") / name, r);
}

} // namespace

int main()
{
    std::printf("acceptance: %zu replicates per cell, %zu workers\n", kReps, workers());

    // ---- Oracle and single-replicate checks first: they are quick. ----

    {   // 3: score preservation vs un-solving on seeded Linear replicates.
        // Vanilla TMLE pushes a relaxed-HAL score past tol on only some
        // replicates, so seeds 1..40 are all examined: SP-TMLE must keep
        // every one within tol, and at least one must show vanilla TMLE
        // un-solving a score on the same data.
        const double tol = default_tolerance(100);
        std::size_t unsolved = 0, sp_bad = 0;
        std::uint64_t first_seed = 0;
        double first_v = 0.0, first_s = 0.0, sp_worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 40; ++seed) {
            const auto d = generate(DgpSpec{TreatmentMechanism::Linear}, 100, seed);
            const auto q = fit_outcome_model(d);
            const auto g = fit_propensity_model(d);
            const auto s0 = sp_score_vector(tmle_vanilla(q, g, d).model, g, d);
            const double v = s0.tail(s0.size() - 1).cwiseAbs().maxCoeff();
            const double s = sp_tmle(q, g, d).state.score_means.cwiseAbs().maxCoeff();
            sp_worst = std::max(sp_worst, s);
            if (s > tol) ++sp_bad;
            if (v > tol && s <= tol && ++unsolved == 1) {
                first_seed = seed;
                first_v = v;
                first_s = s;
            }
        }
        verdict(3, unsolved > 0 && sp_bad == 0,
                "Linear n=100 seeds 1-40, tol " + fmt(tol) + ": TMLE un-solves a relaxed-HAL score on " +
                    std::to_string(unsolved) + "/40 (first seed " + std::to_string(first_seed) +
                    ": TMLE " + fmt(first_v) + ", SP-TMLE " + fmt(first_s) + "); SP-TMLE over tol on " +
                    std::to_string(sp_bad) + "/40 (worst " + fmt(sp_worst) + ")");
    }

    {   // 5: finite-difference submodel scores.
        double worst = 0.0, worst_order = 0.0;
        for (auto m : kMechs) {
            for (Eigen::Index n : {100, 500}) {
                const auto d = generate(DgpSpec{m}, n, 31 + static_cast<std::uint64_t>(n));
                const auto q = fit_outcome_model(d);
                const auto g = fit_propensity_model(d);
                const auto sp = sp_tmle(q, g, d);
                for (const auto* model : {&q, &sp.model}) {
                    worst = std::max(worst, verify_submodel_scores(*model, g, d, 1e-5));
                    const double a = verify_submodel_scores(*model, g, d, 1e-2);
                    const double b = verify_submodel_scores(*model, g, d, 5e-3);
                    worst_order = std::max(worst_order, std::abs(std::log2(a / b) - 2.0));
                }
            }
        }
        verdict(5, worst <= 1e-6 && worst_order <= 0.1,
                "max FD discrepancy at probe 1e-5 = " + fmt(worst) +
                    " (<= 1e-6); max |observed order - 2| at probes 1e-2/5e-3 = " + fmt(worst_order));
    }

    {   // 8: oracle equivalences.
        const auto d = generate(DgpSpec{TreatmentMechanism::Linear}, 200, 8);
        const auto q = fit_outcome_model(d);
        Eigen::MatrixXd xa = q.active_x;
        const auto lasso = fit_logistic_lasso(xa, d.y(), 1e-10);
        const double coef_gap = (lasso - q.beta).cwiseAbs().maxCoeff();

        Eigen::MatrixXd w(3, 2);
        w << -0.5, 0.2, 0.1, -0.7, 0.6, 0.4;
        const Dataset h(w, Eigen::Vector3d(1, 0, 1), Eigen::Vector3d(1, 1, 0));
        OutcomeModel m;
        m.active_x.resize(3, 2);
        m.active_x << 1, 0, 1, 1, 1, 1;
        m.beta = Eigen::Vector2d(0.3, -0.8);
        m.base_logit = m.active_x * m.beta;
        m.targeting_offset = Eigen::Vector3d(0.05, -0.1, 0.2);
        m.treated_offset = Eigen::Vector3d(0.4, 0.0, -0.3);
        PropensityModel g;
        g.fitted = Eigen::Vector3d(0.25, 0.6, 0.8);

        const auto s = sp_score_vector(m, g, h);
        const double psi = plug_in_psi(m, h);
        const auto e = eif_values(m, g, h, psi);
        Eigen::Vector3d s_or = Eigen::Vector3d::Zero(), e_or;
        double psi_or = 0.0;
        for (int i = 0; i < 3; ++i) psi_or += 1.0 / (1.0 + std::exp(-(m.base_logit[i] + m.treated_offset[i])));
        psi_or /= 3.0;
        for (int i = 0; i < 3; ++i) {
            const double qo = 1.0 / (1.0 + std::exp(-(m.base_logit[i] + m.targeting_offset[i])));
            const double q1 = 1.0 / (1.0 + std::exp(-(m.base_logit[i] + m.treated_offset[i])));
            const double r = h.y()[i] - qo;
            s_or[0] += h.a()[i] / g.fitted[i] * r / 3.0;
            s_or[1] += m.active_x(i, 0) * r / 3.0;
            s_or[2] += m.active_x(i, 1) * r / 3.0;
            e_or[i] = h.a()[i] / g.fitted[i] * r + q1 - psi_or;
        }
        const double s_gap = (s - s_or).cwiseAbs().maxCoeff();
        const double e_gap = (e.values - e_or).cwiseAbs().maxCoeff();
        verdict(8, coef_gap <= 1e-4 && s_gap <= 1e-12 && e_gap <= 1e-12,
                "lasso(1e-10) vs relaxed refit max coef gap = " + fmt(coef_gap) +
                    "; 3-row score gap = " + fmt(s_gap) + ", EIF gap = " + fmt(e_gap));
    }

    // ---- Small-sample sweep (n = 50): criteria 6, 9 and part of 2/4. ----
    const auto small = sweep(50, kSmallSeed);
    write_outputs("n50", small);
    {
        int var_wins = 0;
        bool cov_ok = true;
        std::string detail;
        for (auto m : kMechs) {
            const auto& t = cell(small, Estimator::Tmle, m);
            const auto& s = cell(small, Estimator::SpTmle, m);
            if (*s.variance < *t.variance) ++var_wins;
            cov_ok = cov_ok && *s.coverage >= *t.coverage - 0.02;
            detail += std::string(to_string(m)) + " var " + fmt(*s.variance) + "/" + fmt(*t.variance) + " cov " +
                      fmt(*s.coverage) + "/" + fmt(*t.coverage) + "; ";
        }
        const auto& tl = cell(small, Estimator::Tmle, TreatmentMechanism::Linear);
        const auto& sl = cell(small, Estimator::SpTmle, TreatmentMechanism::Linear);
        const bool bias_ok = std::abs(*sl.bias) < std::abs(*tl.bias);
        verdict(6, var_wins >= 2 && bias_ok && cov_ok,
                "n=50 (SP-TMLE/TMLE): " + detail + "linear |bias| " + fmt(std::abs(*sl.bias)) + "/" +
                    fmt(std::abs(*tl.bias)) + "; variance wins " + std::to_string(var_wins) + "/3");
    }
    {
        const auto again = sweep(50, kSmallSeed, 97);
        const bool same = summaries_to_csv(again.summaries) == summaries_to_csv(small.summaries);
        verdict(9, same, std::string("n=50 sweep rerun with shuffled execution order: summary.csv ") +
                             (same ? "byte-identical" : "DIFFERS"));
    }

    // ---- Large-sample sweep (n = 1000): criteria 1, 7 and part of 2/4. ----
    const auto large = sweep(1000, kLargeSeed);
    write_outputs("n1000", large);
    {
        bool ok = true;
        std::string detail;
        for (auto m : kMechs) {
            for (auto e : {Estimator::Tmle, Estimator::SpTmle}) {
                const auto& c = cell(large, e, m);
                ok = ok && c.bias && std::abs(*c.bias) <= 0.01;
                detail += std::string(to_string(e)) + "/" + std::string(to_string(m)) + " " +
                          (c.bias ? fmt(*c.bias) : "NA") + "; ";
            }
        }
        verdict(1, ok, "n=1000 bias (|bias| <= 0.01): " + detail);
    }
    {
        bool ok = true;
        std::string detail;
        for (auto m : kMechs) {
            for (auto e : {Estimator::Tmle, Estimator::SpTmle}) {
                const auto& c = cell(large, e, m);
                ok = ok && c.coverage && *c.coverage >= 0.92 && *c.coverage <= 0.975;
                detail += std::string(to_string(e)) + "/" + std::string(to_string(m)) + " " +
                          (c.coverage ? fmt(*c.coverage) : "NA") + "; ";
            }
        }
        verdict(7, ok, "n=1000 coverage in [0.92, 0.975]: " + detail);
    }

    {
        const auto a = audit(small), b = audit(large);
        const std::size_t failed = a.failed + b.failed;
        verdict(2, a.tmle_bad + b.tmle_bad == 0 && a.sp_bad + b.sp_bad == 0 && failed == 0,
                "over " + std::to_string(a.total + b.total) + " replicates: max TMLE |P_n D*| = " +
                    fmt(std::max(a.tmle_worst, b.tmle_worst)) + " (<= 1e-8); max SP-TMLE score/tol = " +
                    fmt(std::max(a.sp_worst_ratio, b.sp_worst_ratio)) + " (<= 1); failed estimator runs = " +
                    std::to_string(failed));
        verdict(4, a.relaxed_bad + b.relaxed_bad == 0,
                "max relaxed-HAL active-column score over all replicates = " +
                    fmt(std::max(a.relaxed_worst, b.relaxed_worst)) + " (<= 1e-8)");
    }

    std::printf("acceptance: %d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
