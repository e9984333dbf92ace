#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include <sptmle/config.hpp>
#include <sptmle/svg.hpp>

namespace fs = std::filesystem;
using namespace sptmle;

namespace {

/// String-valued flags that map one-to-one onto config keys. Collected as
/// strings and applied after the config file so flags take precedence.
struct FlagValues
{
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void add(CLI::App& app, std::string_view key, std::string_view flag, std::string_view help)
    {
        auto& slot = values[std::string(key)];
        options[std::string(key)] =
            app.add_option(std::string(flag), slot, std::string(help) + "  [" + std::string(key) + "]");
    }

    void add_switch(CLI::App& app, std::string_view key, std::string_view flag, std::string_view help)
    {
        values[std::string(key)];
        const std::string desc = std::string(help) + "  [" + std::string(key) + "]";
        options[std::string(key)] = app.add_flag(std::string(flag), desc);
    }

    bool given(const std::string& key) const
    {
        auto it = options.find(key);
        return it != options.end() && it->second->count() > 0;
    }

    void apply(RunConfig& c) const
    {
        for (const auto& [key, opt] : options) {
            if (!opt->count()) continue;
            const nlohmann::json v = opt->get_expected() == 0 ? nlohmann::json(true)
                                                               : nlohmann::json(values.at(key));
            try {
                apply_setting(c, key, v);
            } catch (const std::exception& ex) {
                throw ConfigError(0, "flag " + opt->get_name() + ": " + ex.what());
            }
        }
    }
};

std::string keys_footer()
{
    std::string s = "Config file keys (JSON object, flat dotted keys; flags override the file):\n";
    for (const auto& k : config_keys()) {
        s += "  " + std::string(k.key) + std::string(k.key.size() < 24 ? 24 - k.key.size() : 1, ' ') +
             std::string(k.flag) + "  " + std::string(k.help) + "\n";
    }
    return s;
}

/// Shared options for subcommands that fit models.
struct Common
{
    std::string config_path;
    std::string n_single;
    FlagValues flags;

    void attach(CLI::App& app, bool sweep_keys)
    {
        app.add_option("--config", config_path, "JSON config file with dotted keys")->check(CLI::ExistingFile);
        for (const auto& k : config_keys()) {
            const bool is_sweep = k.key.starts_with("sweep.") && k.key != "sweep.dgp" &&
                                  k.key != "sweep.seed" && k.key != "sweep.estimators";
            if (!sweep_keys && (is_sweep || k.key == "output.traces" || k.key == "output.save_data" ||
                                k.key == "output.emit_svg")) {
                continue;
            }
            if (k.key == "output.emit_svg" || k.key == "output.traces" || k.key == "output.save_data") {
                flags.add_switch(app, k.key, k.flag, k.help);
            } else {
                flags.add(app, k.key, k.flag, k.help);
            }
        }
        if (sweep_keys) app.add_option("--n", n_single, "single sample size (shorthand for --n-grid N)");
    }

    RunConfig resolve() const
    {
        RunConfig c;
        bool workers_from_file = false;
        if (!config_path.empty()) {
            const auto text = csv::read_file(config_path);
            apply_config_json(c, text);
            workers_from_file = text.find("\"sweep.workers\"") != std::string::npos;
        }
        if (!flags.given("sweep.workers") && !workers_from_file) {
            if (auto w = workers_from_env()) c.sweep.workers = *w;
        }
        flags.apply(c);
        if (!n_single.empty()) {
            if (flags.given("sweep.n_grid")) throw ConfigError(0, "--n and --n-grid are exclusive");
            apply_setting(c, "sweep.n_grid", nlohmann::json(n_single));
        }
        return c;
    }
};

/// The one DGP for estimate and verify. Without --dgp this is the first
/// configured mechanism.
DgpSpec single_dgp(const Common& common, const RunConfig& c, const char* who)
{
    if (c.sweep.dgps.size() != 1 && common.flags.given("sweep.dgp")) {
        throw ConfigError(0, std::string(who) + " takes a single --dgp");
    }
    return c.sweep.dgps.front();
}

int run_simulate(const Common& common)
{
    RunConfig c = common.resolve();
    c.sweep.validate();
    fs::create_directories(c.out);
    csv::write_atomic(c.out / "config.resolved.json", resolved_json(c).dump(2) + "\n");

    if (c.save_data) {
        fs::create_directories(c.out / "data");
        for (const auto& spec : c.sweep.dgps) {
            for (auto n : c.sweep.n_grid) {
                for (std::size_t r = 0; r < c.sweep.reps; ++r) {
                    const auto seed = replicate_seed(c.sweep.base_seed, spec, n, r);
                    const auto name = std::string(to_string(spec.treatment_mechanism)) + "_n" +
                                      std::to_string(n) + "_rep" + std::to_string(r) + "_seed" +
                                      std::to_string(seed) + ".csv";
                    csv::write_atomic(c.out / "data" / name,
                                      dataset_to_csv(generate(spec, static_cast<Eigen::Index>(n), seed)));
                }
            }
        }
    }

    const bool tty = isatty(fileno(stderr));
    auto result = run_sweep(c.sweep, [&](std::size_t done, std::size_t total) {
        if (tty && (done % 10 == 0 || done == total)) {
            std::fprintf(stderr, "\r%zu/%zu replicates", done, total);
            if (done == total) std::fputc('\n', stderr);
        }
    });
    write_sweep(c.out, result);
    if (c.emit_svg) {
        for (const auto& spec : c.sweep.dgps) {
            csv::write_atomic(c.out / ("summary_" + std::string(to_string(spec.treatment_mechanism)) + ".svg"),
                              render_summary_svg(result.summaries, spec.treatment_mechanism));
        }
    }

    std::size_t failed = 0;
    for (const auto& r : result.records) {
        if (!r.report) {
            ++failed;
            std::cerr << "warning: " << to_string(r.estimator) << " failed on " << to_string(r.dgp)
                      << " n=" << r.n << " rep=" << r.rep << " seed=" << r.seed << ": " << r.error << "\n";
        }
    }
    std::cout << summaries_to_csv(result.summaries);
    if (result.any_cell_fully_failed(c.sweep.reps)) {
        std::cerr << "error: at least one cell failed on every replicate (see failures.csv)\n";
        return 1;
    }
    if (failed) std::cerr << failed << " estimator runs failed; see " << (c.out / "failures.csv") << "\n";
    return 0;
}

int run_estimate(const Common& common, const std::string& input, const std::string& seed_label,
                 std::size_t rep_label)
{
    RunConfig c = common.resolve();
    c.sweep.reps = std::max<std::size_t>(c.sweep.reps, 2);
    c.sweep.validate();
    const auto spec = single_dgp(common, c, "estimate");

    const std::uint64_t seed = seed_label.empty() ? c.sweep.base_seed : detail::as_uint(seed_label);
    const auto data = dataset_from_csv(csv::read_file(input), seed);
    auto res = estimate_all(data, c.sweep.estimators, c.sweep.hal, c.sweep.targeting);
    for (auto& r : res.records) {
        r.dgp = spec.treatment_mechanism;
        r.rep = rep_label;
    }
    fs::create_directories(c.out);
    csv::write_atomic(c.out / "config.resolved.json", resolved_json(c).dump(2) + "\n");
    csv::write_atomic(c.out / "estimates.csv", replicates_to_csv(res.records));
    csv::write_atomic(c.out / "failures.csv", failures_to_csv(res.records));
    std::cout << replicates_to_csv(res.records);
    for (const auto& r : res.records) {
        if (!r.report) std::cerr << "error: " << to_string(r.estimator) << ": " << r.error << "\n";
    }
    return 0;
}

struct VerifyOptions
{
    std::size_t n = 200;
    double probe = 1e-5;
    double tol = 1e-6;
};

int run_verify(const Common& common, const VerifyOptions& v)
{
    RunConfig c = common.resolve();
    const auto spec = single_dgp(common, c, "verify");
    const auto data = generate(spec, static_cast<Eigen::Index>(v.n), c.sweep.base_seed);
    const auto& hal = c.sweep.hal;

    const auto design = outcome_design(data, hal.outcome_fit);
    const auto q = fit_outcome_model(design, data, hal);
    const SplineDesign g_design(build_basis(data), data);
    const auto g = fit_propensity_model(g_design, data, hal);

    bool ok = true;
    auto report = [&](const std::string& name, double value, double tol) {
        const bool pass = value <= tol;
        ok = ok && pass;
        std::printf("%-36s %-4s %.3e (tol %.1e)\n", name.c_str(), pass ? "ok" : "FAIL", value, tol);
    };

    const Eigen::VectorXd weights =
        hal.outcome_fit == OutcomeFit::All ? Eigen::VectorXd::Ones(data.size()) : data.a();
    const auto kq = kkt_check(design, data.y(), q.lasso_beta, q.lambda, {SplineDesign::kIntercept}, weights);
    const auto kg = kkt_check(g_design, data.a(), g.beta, g.lambda, {SplineDesign::kIntercept});
    report("outcome lasso KKT", std::max({kq.inactive_excess, kq.active_gap, kq.unpenalized_score}), 1e-6);
    report("propensity lasso KKT", std::max({kg.inactive_excess, kg.active_gap, kg.unpenalized_score}), 1e-6);
    report("relaxed refit max score", q.refit_max_score, 1e-8);

    const auto fd = submodel_score_check(q, g, data, v.probe);
    report("submodel score FD (probe " + csv::format_double(v.probe) + ")", fd.max_discrepancy, v.tol);
    // At small probes rounding dominates, so the order is read off larger ones.
    const double coarse = submodel_score_check(q, g, data, 1e-2).max_discrepancy;
    const double fine = submodel_score_check(q, g, data, 5e-3).max_discrepancy;
    const double ratio = fine > 0.0 ? coarse / fine : 0.0;
    report("FD order |log2(ratio 1e-2 : 5e-3) - 2|", std::abs(std::log2(ratio) - 2.0), 0.25);
    std::printf("%-36s      %zu components, ratio %.3f\n", "", static_cast<std::size_t>(fd.analytic.size()), ratio);

    if (!ok) std::fprintf(stderr, "verify: one or more checks exceeded tolerance\n");
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Targeted estimation of a treatment-specific mean with HAL, TMLE and SP-TMLE"};
    app.require_subcommand(1);
    app.footer(keys_footer());

    Common sim_common, est_common, ver_common;
    auto* sim = app.add_subcommand("simulate", "run the Monte Carlo sweep");
    sim_common.attach(*sim, true);

    auto* est = app.add_subcommand("estimate", "run the estimators on one CSV dataset (w1,w2,a,y)");
    std::string input, seed_label;
    std::size_t rep_label = 0;
    est->add_option("input", input, "dataset CSV")->required()->check(CLI::ExistingFile);
    est->add_option("--rep", rep_label, "replicate label written to the output rows");
    est_common.attach(*est, false);
    // --seed is the dataset's provenance seed: it seeds the CV fold split.
    est->remove_option(est_common.flags.options["sweep.seed"]);
    est_common.flags.options.erase("sweep.seed");
    est->add_option("--seed", seed_label, "dataset seed (seeds the CV folds)  [sweep.seed]");

    auto* ver = app.add_subcommand("verify", "finite-difference, KKT and relaxed-score checks");
    VerifyOptions vopt;
    ver_common.attach(*ver, false);
    ver->add_option("--n", vopt.n, "sample size of the generated dataset")->check(CLI::PositiveNumber);
    ver->add_option("--probe", vopt.probe, "finite-difference step")->check(CLI::PositiveNumber);
    ver->add_option("--tol", vopt.tol, "tolerance for the finite-difference discrepancy");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*sim) return run_simulate(sim_common);
        if (*est) return run_estimate(est_common, input, seed_label, rep_label);
        if (*ver) return run_verify(ver_common, vopt);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const CsvError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: invalid configuration: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
