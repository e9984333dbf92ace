#pragma once
#include <algorithm>
#include <array>
#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>
#include <variant>

#include "csv.hpp"
#include "dgp.hpp"
#include "inference.hpp"

namespace sptmle {

enum class Estimator { Hal, RelaxedHal, Tmle, SpTmle };

inline constexpr std::array<Estimator, 4> kAllEstimators{Estimator::Hal, Estimator::RelaxedHal,
                                                         Estimator::Tmle, Estimator::SpTmle};

inline std::string_view to_string(Estimator e)
{
    switch (e) {
    case Estimator::Hal: return "hal";
    case Estimator::RelaxedHal: return "relaxed_hal";
    case Estimator::Tmle: return "tmle";
    case Estimator::SpTmle: return "sp_tmle";
    }
    return "?";
}

inline Estimator parse_estimator(std::string_view s)
{
    for (auto e : kAllEstimators) {
        if (to_string(e) == s) return e;
    }
    throw std::invalid_argument("unknown estimator '" + std::string(s) +
                                "' (expected hal, relaxed_hal, tmle or sp_tmle)");
}

inline bool is_targeted(Estimator e) { return e == Estimator::Tmle || e == Estimator::SpTmle; }

struct SweepConfig
{
    std::vector<DgpSpec> dgps{{TreatmentMechanism::Linear},
                              {TreatmentMechanism::Sinusoidal},
                              {TreatmentMechanism::Step}};
    std::vector<std::size_t> n_grid{50, 100, 200, 500, 1000};
    std::size_t reps = 500;
    std::uint64_t base_seed = 1;
    std::vector<Estimator> estimators{kAllEstimators.begin(), kAllEstimators.end()};
    HalConfig hal;
    TargetingConfig targeting;
    std::size_t workers = 1;
    bool keep_traces = false;
    /// Nonzero: replicates are executed in an order shuffled with this seed.
    /// Results do not depend on it.
    std::uint64_t execution_shuffle = 0;

    void validate() const
    {
        if (reps < 2) throw std::invalid_argument("reps must be >= 2 (variance is undefined otherwise)");
        if (dgps.empty()) throw std::invalid_argument("at least one dgp is required");
        if (n_grid.empty()) throw std::invalid_argument("n_grid must not be empty");
        for (std::size_t i = 0; i < n_grid.size(); ++i) {
            if (n_grid[i] == 0) throw std::invalid_argument("n_grid entries must be positive");
            if (i > 0 && n_grid[i] <= n_grid[i - 1]) {
                throw std::invalid_argument("n_grid must be strictly increasing");
            }
        }
        if (estimators.empty()) throw std::invalid_argument("at least one estimator is required");
        if (workers == 0) throw std::invalid_argument("workers must be >= 1");
        if (!(targeting.delta > 0.0)) throw std::invalid_argument("delta must be positive");
        if (targeting.tol_mode == TolMode::Fixed && !(targeting.tol_fixed > 0.0)) {
            throw std::invalid_argument("tol_fixed must be positive");
        }
        if (targeting.max_iters == 0) throw std::invalid_argument("max_iters must be >= 1");
        if (hal.cv_folds < 2) throw std::invalid_argument("cv_folds must be >= 2");
        if (hal.lambda_grid_size < 1) throw std::invalid_argument("lambda_grid_size must be >= 1");
        if (!(hal.g_trunc_lower > 0.0 && hal.g_trunc_lower < hal.g_trunc_upper &&
              hal.g_trunc_upper < 1.0)) {
            throw std::invalid_argument("need 0 < g_trunc_lower < g_trunc_upper < 1");
        }
    }
};

/// base_seed + rep + an offset fixed by (dgp, n), so replicates within a
/// cell have consecutive seeds and cells do not share streams.
inline std::uint64_t replicate_seed(std::uint64_t base_seed, const DgpSpec& spec, std::size_t n,
                                    std::size_t rep)
{
    const auto cell = (static_cast<std::uint64_t>(spec.treatment_mechanism) << 40) ^
                      static_cast<std::uint64_t>(n);
    return base_seed + rep + detail::mix_seed(cell, 3);
}

/// One estimator's outcome on one replicate.
struct ReplicateRecord
{
    Estimator estimator = Estimator::Hal;
    TreatmentMechanism dgp = TreatmentMechanism::Linear;
    std::size_t n = 0;
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    std::optional<EstimateReport> report; ///< empty when the estimator failed
    std::string error;
};

struct ReplicateResult
{
    std::uint64_t seed = 0;
    std::vector<ReplicateRecord> records; ///< one per configured estimator, in config order
    std::vector<double> sp_trace;         ///< SP-TMLE max |score| per iteration
    std::vector<Eigen::VectorXd> sp_score_trace; ///< full score vectors, when traces are kept
};

namespace detail {

/// max_j |P_n w_i x_ij (Y_i - q_i)| over the given design columns.
inline double max_weighted_score(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& cols,
                                 const Eigen::VectorXd& weights, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& q)
{
    const Eigen::VectorXd r = weights.cwiseProduct(y - q) / static_cast<double>(y.size());
    double worst = 0.0;
    for (auto j : cols) worst = std::max(worst, std::abs(x.col(j).dot(r)));
    return worst;
}

} // namespace detail

/// Runs every estimator in `estimators` on one dataset. The outcome and
/// propensity fits are computed once and shared, so the estimators differ
/// only in how (and whether) they target. Failures are recorded per
/// estimator.
inline ReplicateResult estimate_all(const Dataset& data, const std::vector<Estimator>& estimators,
                                    const HalConfig& hal, const TargetingConfig& targeting,
                                    bool keep_traces = false)
{
    ReplicateResult out;
    out.seed = data.seed();
    std::map<Estimator, std::variant<EstimateReport, std::string>> results;
    auto fail_all = [&](const std::string& why, auto pred) {
        for (auto e : estimators) {
            if (pred(e) && !results.count(e)) results[e] = why;
        }
    };
    auto guarded = [&](Estimator e, auto&& body) {
        try {
            results[e] = body();
        } catch (const std::exception& ex) {
            results[e] = std::string(ex.what());
        }
    };

    std::optional<SplineDesign> shared;
    std::optional<SplineDesign> outcome_only;
    std::optional<OutcomeModel> q;
    std::optional<PropensityModel> g;
    std::string q_error, g_error;
    try {
        shared.emplace(build_basis(data), data);
    } catch (const std::exception& ex) {
        q_error = g_error = std::string("basis: ") + ex.what();
    }
    if (shared) {
        try {
            if (hal.outcome_fit == OutcomeFit::All) {
                q = fit_outcome_model(*shared, data, hal);
            } else {
                outcome_only.emplace(outcome_design(data, hal.outcome_fit));
                q = fit_outcome_model(*outcome_only, data, hal);
            }
        } catch (const std::exception& ex) {
            q_error = std::string("outcome fit: ") + ex.what();
        }
        try {
            if (data.a().sum() == 0.0) {
                throw std::invalid_argument("no treated observations, the fluctuation is unidentified");
            }
            g = fit_propensity_model(*shared, data, hal);
        } catch (const std::exception& ex) {
            g_error = std::string("propensity fit: ") + ex.what();
        }
    }
    if (!q) fail_all(q_error, [](Estimator) { return true; });
    if (!g) fail_all(g_error, [](Estimator e) { return is_targeted(e); });

    const auto& design = outcome_only ? *outcome_only : *shared;
    const PropensityModel* gp = g ? &*g : nullptr;

    for (auto e : estimators) {
        if (results.count(e)) continue;
        switch (e) {
        case Estimator::Hal:
            guarded(e, [&] {
                std::vector<Eigen::Index> nz;
                for (Eigen::Index j = 0; j < q->lasso_beta.size(); ++j) {
                    if (q->lasso_beta[j] != 0.0) nz.push_back(j);
                }
                const Eigen::VectorXd weights = q->fit_population == OutcomeFit::All
                                                    ? Eigen::VectorXd::Ones(data.size())
                                                    : data.a();
                const Eigen::VectorXd qh = q->q_lasso();
                return plugin_report(qh, data, gp,
                                     detail::max_weighted_score(design.matrix(), nz, weights, data.y(), qh));
            });
            break;
        case Estimator::RelaxedHal:
            guarded(e, [&] {
                const Eigen::VectorXd qr = q->q_treated();
                const Eigen::VectorXd weights = q->fit_population == OutcomeFit::All
                                                    ? Eigen::VectorXd::Ones(data.size())
                                                    : data.a();
                const Eigen::VectorXd r = weights.cwiseProduct(data.y() - qr) / static_cast<double>(data.size());
                const double worst = (q->active_x.transpose() * r).cwiseAbs().maxCoeff();
                return plugin_report(qr, data, gp, worst);
            });
            break;
        case Estimator::Tmle:
            guarded(e, [&] {
                const auto fit = tmle_vanilla(*q, *g, data);
                const auto s = sp_score_vector(fit.model, *g, data);
                return targeted_report(fit.model, *g, data, std::abs(s[0]), fit.iterations);
            });
            break;
        case Estimator::SpTmle:
            guarded(e, [&] {
                try {
                    const auto fit = sp_tmle(*q, *g, data, targeting.delta,
                                             resolve_tolerance(targeting, data.size()),
                                             targeting.max_iters, keep_traces);
                    out.sp_trace = fit.state.max_score_trace;
                    out.sp_score_trace = fit.state.score_trace;
                    return targeted_report(fit.model, *g, data,
                                           fit.state.score_means.cwiseAbs().maxCoeff(),
                                           fit.state.iterations);
                } catch (const TargetingError& ex) {
                    out.sp_trace = ex.trace();
                    throw;
                }
            });
            break;
        }
    }

    for (auto e : estimators) {
        ReplicateRecord rec;
        rec.estimator = e;
        rec.n = static_cast<std::size_t>(data.size());
        rec.seed = data.seed();
        if (auto* r = std::get_if<EstimateReport>(&results[e])) {
            rec.report = *r;
        } else {
            rec.error = std::get<std::string>(results[e]);
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

inline ReplicateResult run_replicate(const DgpSpec& spec, std::size_t n, std::size_t rep,
                                     const SweepConfig& config)
{
    const auto seed = replicate_seed(config.base_seed, spec, n, rep);
    const auto data = generate(spec, static_cast<Eigen::Index>(n), seed);
    auto out = estimate_all(data, config.estimators, config.hal, config.targeting, config.keep_traces);
    for (auto& r : out.records) {
        r.dgp = spec.treatment_mechanism;
        r.rep = rep;
    }
    return out;
}

struct CellSummary
{
    Estimator estimator = Estimator::Hal;
    TreatmentMechanism dgp = TreatmentMechanism::Linear;
    std::size_t n = 0;
    std::optional<double> bias;
    std::optional<double> variance;
    std::optional<double> mse;
    std::optional<double> coverage;
    std::size_t n_failed = 0;
};

/// Metrics over one (estimator, dgp, n) cell. Records are sorted by rep
/// first so the floating-point fold does not depend on execution order.
inline CellSummary summarize(std::vector<ReplicateRecord> cell, double true_psi = DgpSpec::true_psi)
{
    if (cell.empty()) throw std::invalid_argument("summarize: empty cell");
    std::sort(cell.begin(), cell.end(), [](const auto& a, const auto& b) { return a.rep < b.rep; });
    CellSummary s;
    s.estimator = cell.front().estimator;
    s.dgp = cell.front().dgp;
    s.n = cell.front().n;
    std::vector<const EstimateReport*> ok;
    for (const auto& r : cell) {
        if (r.estimator != s.estimator || r.dgp != s.dgp || r.n != s.n) {
            throw std::invalid_argument("summarize: records from different cells");
        }
        if (r.report) ok.push_back(&*r.report); else ++s.n_failed;
    }
    if (ok.size() < 2) return s;

    const double m = static_cast<double>(ok.size());
    double mean = 0.0;
    for (auto* r : ok) mean += r->psi_hat;
    mean /= m;
    double var = 0.0, mse = 0.0;
    for (auto* r : ok) {
        var += (r->psi_hat - mean) * (r->psi_hat - mean);
        mse += (r->psi_hat - true_psi) * (r->psi_hat - true_psi);
    }
    s.bias = mean - true_psi;
    s.variance = var / m;
    s.mse = mse / m;
    if (is_targeted(s.estimator)) {
        std::size_t hit = 0;
        for (auto* r : ok) {
            if (r->ci_lower && r->ci_upper && *r->ci_lower <= true_psi && true_psi <= *r->ci_upper) ++hit;
        }
        s.coverage = static_cast<double>(hit) / m;
    }
    return s;
}

/// Groups records by (estimator, dgp, n) and summarizes each cell. Output
/// order: dgp, then n, then estimator, following first appearance in
/// `records` after sorting.
inline std::vector<CellSummary> summarize_all(const std::vector<ReplicateRecord>& records,
                                              double true_psi = DgpSpec::true_psi)
{
    std::map<std::tuple<int, std::size_t, int>, std::vector<ReplicateRecord>> cells;
    for (const auto& r : records) {
        cells[{static_cast<int>(r.dgp), r.n, static_cast<int>(r.estimator)}].push_back(r);
    }
    std::vector<CellSummary> out;
    for (auto& [key, cell] : cells) out.push_back(summarize(std::move(cell), true_psi));
    return out;
}

struct SweepResult
{
    std::vector<ReplicateRecord> records; ///< sorted by dgp, n, rep, estimator
    std::vector<CellSummary> summaries;
    /// SP-TMLE traces keyed by (dgp, n, rep); filled only with keep_traces.
    std::map<std::tuple<TreatmentMechanism, std::size_t, std::size_t>, std::vector<Eigen::VectorXd>> traces;

    /// True when some (dgp, n) cell has every estimator failing on every rep.
    bool any_cell_fully_failed(std::size_t reps) const
    {
        for (const auto& s : summaries) {
            if (s.n_failed == reps) return true;
        }
        return false;
    }
};

/// Runs the full (dgp x n x rep) grid across `config.workers` threads.
/// `progress`, when set, is called after each replicate with the number
/// completed so far and the total; calls are serialized.
inline SweepResult run_sweep(const SweepConfig& config,
                             const std::function<void(std::size_t, std::size_t)>& progress = {})
{
    config.validate();
    struct Task { std::size_t dgp, n, rep; };
    std::vector<Task> tasks;
    for (std::size_t d = 0; d < config.dgps.size(); ++d) {
        for (auto n : config.n_grid) {
            for (std::size_t r = 0; r < config.reps; ++r) tasks.push_back({d, n, r});
        }
    }
    std::vector<std::size_t> order(tasks.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (config.execution_shuffle != 0) {
        std::mt19937_64 rng(config.execution_shuffle);
        std::shuffle(order.begin(), order.end(), rng);
    }

    std::vector<ReplicateResult> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::size_t done = 0;
    std::mutex progress_mutex;
    std::exception_ptr fatal;
    auto worker = [&] {
        for (;;) {
            const auto k = next.fetch_add(1);
            if (k >= order.size()) return;
            const auto& t = tasks[order[k]];
            try {
                results[order[k]] = run_replicate(config.dgps[t.dgp], t.n, t.rep, config);
            } catch (...) {
                std::lock_guard lock(progress_mutex);
                if (!fatal) fatal = std::current_exception();
                next = order.size();
                return;
            }
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(++done, order.size());
            }
        }
    };
    const auto nthreads = std::min(config.workers, tasks.size());
    if (nthreads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t i = 0; i < nthreads; ++i) pool.emplace_back(worker);
    }
    if (fatal) std::rethrow_exception(fatal);

    SweepResult out;
    for (std::size_t k = 0; k < tasks.size(); ++k) {
        auto& res = results[k];
        for (auto& r : res.records) out.records.push_back(std::move(r));
        if (config.keep_traces && !res.sp_score_trace.empty()) {
            out.traces[{config.dgps[tasks[k].dgp].treatment_mechanism, tasks[k].n, tasks[k].rep}] =
                std::move(res.sp_score_trace);
        }
    }
    out.summaries = summarize_all(out.records);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr std::string_view kReplicatesHeader =
    "estimator,dgp,n,rep,psi_hat,se,ci_lower,ci_upper,eif_mean,max_score_residual,iterations";
inline constexpr std::string_view kSummaryHeader = "estimator,dgp,n,bias,variance,mse,coverage,n_failed";
inline constexpr std::string_view kFailuresHeader = "estimator,dgp,n,rep,seed,error";

namespace detail {

inline std::string na_or(const std::optional<double>& v)
{
    return v ? csv::format_double(*v) : std::string("NA");
}

inline std::optional<double> parse_optional(std::string_view s, std::size_t line, const std::string& col)
{
    if (csv::trim(s) == "NA") return std::nullopt;
    return csv::parse_double(s, line, col);
}

inline std::size_t parse_count(std::string_view s, std::size_t line, const std::string& col)
{
    const auto t = csv::trim(s);
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size()) {
        throw CsvError(line, col, "expected a nonnegative integer, got '" + std::string(t) + "'");
    }
    return v;
}

/// Splits CSV text into data rows after checking the header.
inline std::vector<std::pair<std::size_t, std::vector<std::string_view>>>
csv_rows(std::string_view text, std::string_view header)
{
    std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool seen_header = false;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (csv::trim(line).empty()) continue;
        if (!seen_header) {
            if (csv::trim(line) != header) {
                throw CsvError(line_no, "header", "expected header '" + std::string(header) + "'");
            }
            width = csv::split(header).size();
            seen_header = true;
            continue;
        }
        auto fields = csv::split(line);
        if (fields.size() != width) {
            throw CsvError(line_no, "row", "expected " + std::to_string(width) + " fields, got " +
                                               std::to_string(fields.size()));
        }
        rows.emplace_back(line_no, std::move(fields));
    }
    if (!seen_header) throw CsvError(1, "header", "empty input");
    return rows;
}

inline std::string csv_escape(std::string s)
{
    for (auto& c : s) {
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
    }
    return s;
}

} // namespace detail

inline std::string replicate_row(const ReplicateRecord& r)
{
    std::ostringstream os;
    os << to_string(r.estimator) << ',' << to_string(r.dgp) << ',' << r.n << ',' << r.rep << ',';
    if (r.report) {
        const auto& e = *r.report;
        os << csv::format_double(e.psi_hat) << ',' << detail::na_or(e.se) << ','
           << detail::na_or(e.ci_lower) << ',' << detail::na_or(e.ci_upper) << ','
           << csv::format_double(e.eif_mean) << ',' << csv::format_double(e.max_score_residual)
           << ',' << e.iterations;
    } else {
        os << "NA,NA,NA,NA,NA,NA,NA";
    }
    return os.str();
}

inline std::string replicates_to_csv(const std::vector<ReplicateRecord>& records)
{
    std::string out(kReplicatesHeader);
    out += '\n';
    for (const auto& r : records) out += replicate_row(r) + '\n';
    return out;
}

inline std::string summaries_to_csv(const std::vector<CellSummary>& summaries)
{
    std::ostringstream os;
    os << kSummaryHeader << '\n';
    for (const auto& s : summaries) {
        os << to_string(s.estimator) << ',' << to_string(s.dgp) << ',' << s.n << ','
           << detail::na_or(s.bias) << ',' << detail::na_or(s.variance) << ','
           << detail::na_or(s.mse) << ',' << detail::na_or(s.coverage) << ',' << s.n_failed << '\n';
    }
    return os.str();
}

inline std::string failures_to_csv(const std::vector<ReplicateRecord>& records)
{
    std::ostringstream os;
    os << kFailuresHeader << '\n';
    for (const auto& r : records) {
        if (r.report) continue;
        os << to_string(r.estimator) << ',' << to_string(r.dgp) << ',' << r.n << ',' << r.rep << ','
           << r.seed << ',' << detail::csv_escape(r.error) << '\n';
    }
    return os.str();
}

/// Parses replicates.csv. Failed rows (psi_hat NA) come back without a
/// report; seeds and error messages are not part of this file.
inline std::vector<ReplicateRecord> replicates_from_csv(std::string_view text)
{
    std::vector<ReplicateRecord> out;
    for (const auto& [line, f] : detail::csv_rows(text, kReplicatesHeader)) {
        ReplicateRecord r;
        try {
            r.estimator = parse_estimator(csv::trim(f[0]));
        } catch (const std::invalid_argument& ex) {
            throw CsvError(line, "estimator", ex.what());
        }
        try {
            r.dgp = parse_mechanism(csv::trim(f[1]));
        } catch (const std::invalid_argument& ex) {
            throw CsvError(line, "dgp", ex.what());
        }
        r.n = detail::parse_count(f[2], line, "n");
        r.rep = detail::parse_count(f[3], line, "rep");
        if (csv::trim(f[4]) != "NA") {
            EstimateReport e;
            e.psi_hat = csv::parse_double(f[4], line, "psi_hat");
            e.se = detail::parse_optional(f[5], line, "se");
            e.ci_lower = detail::parse_optional(f[6], line, "ci_lower");
            e.ci_upper = detail::parse_optional(f[7], line, "ci_upper");
            e.eif_mean = csv::parse_double(f[8], line, "eif_mean");
            e.max_score_residual = csv::parse_double(f[9], line, "max_score_residual");
            e.iterations = detail::parse_count(f[10], line, "iterations");
            r.report = e;
        } else {
            r.error = "failed";
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline std::vector<CellSummary> summaries_from_csv(std::string_view text)
{
    std::vector<CellSummary> out;
    for (const auto& [line, f] : detail::csv_rows(text, kSummaryHeader)) {
        CellSummary s;
        try {
            s.estimator = parse_estimator(csv::trim(f[0]));
            s.dgp = parse_mechanism(csv::trim(f[1]));
        } catch (const std::invalid_argument& ex) {
            throw CsvError(line, "estimator/dgp", ex.what());
        }
        s.n = detail::parse_count(f[2], line, "n");
        s.bias = detail::parse_optional(f[3], line, "bias");
        s.variance = detail::parse_optional(f[4], line, "variance");
        s.mse = detail::parse_optional(f[5], line, "mse");
        s.coverage = detail::parse_optional(f[6], line, "coverage");
        s.n_failed = detail::parse_count(f[7], line, "n_failed");
        out.push_back(s);
    }
    return out;
}

/// `iter,component,score_mean` rows for one SP-TMLE run.
inline std::string trace_to_csv(const std::vector<Eigen::VectorXd>& trace)
{
    std::ostringstream os;
    os << "iter,component,score_mean\n";
    for (std::size_t it = 0; it < trace.size(); ++it) {
        for (Eigen::Index k = 0; k < trace[it].size(); ++k) {
            os << it << ',' << k << ',' << csv::format_double(trace[it][k]) << '\n';
        }
    }
    return os.str();
}

/// Writes replicates.csv, summary.csv, failures.csv and (when present)
/// traces/ under `dir`, each file atomically.
inline void write_sweep(const std::filesystem::path& dir, const SweepResult& result)
{
    std::filesystem::create_directories(dir);
    csv::write_atomic(dir / "replicates.csv", replicates_to_csv(result.records));
    csv::write_atomic(dir / "summary.csv", summaries_to_csv(result.summaries));
    csv::write_atomic(dir / "failures.csv", failures_to_csv(result.records));
    if (!result.traces.empty()) {
        std::filesystem::create_directories(dir / "traces");
        for (const auto& [key, trace] : result.traces) {
            const auto& [dgp, n, rep] = key;
            const auto name = std::string(to_string(dgp)) + "_n" + std::to_string(n) + "_rep" +
                              std::to_string(rep) + ".csv";
            csv::write_atomic(dir / "traces" / name, trace_to_csv(trace));
        }
    }
}

} // namespace sptmle
