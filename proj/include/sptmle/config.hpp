#pragma once
#include <algorithm>
#include <charconv>
#include <optional>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "harness.hpp"

namespace sptmle {

/// Everything a `simulate` or `estimate` run needs besides its inputs.
struct RunConfig
{
    SweepConfig sweep;
    std::filesystem::path out = "sptmle_out";
    bool emit_svg = false;
    bool save_data = false;
};

struct ConfigKey
{
    std::string_view key;
    std::string_view flag;
    std::string_view help;
};

/// Dotted configuration keys accepted in a JSON config file. Each one has
/// a command-line flag of the same meaning; flags win over the file.
inline const std::vector<ConfigKey>& config_keys()
{
    static const std::vector<ConfigKey> keys{
        {"sweep.dgp", "--dgp", "treatment mechanisms: linear, sinusoidal, step, comma list or all"},
        {"sweep.n_grid", "--n-grid", "strictly increasing sample sizes (--n sets a single size)"},
        {"sweep.reps", "--reps", "replicates per (dgp, n) cell, at least 2"},
        {"sweep.seed", "--seed", "base seed; replicate seeds derive from it"},
        {"sweep.estimators", "--estimators", "subset of hal, relaxed_hal, tmle, sp_tmle"},
        {"sweep.workers", "--workers", "parallel replicate workers (env SPTMLE_WORKERS as fallback)"},
        {"targeting.delta", "--delta", "SP-TMLE step size"},
        {"targeting.tol_mode", "--tol-mode", "scaled (1/(sqrt(n) log n)) or fixed"},
        {"targeting.tol_fixed", "--tol-fixed", "SP-TMLE tolerance when tol_mode is fixed"},
        {"targeting.max_iters", "--max-iters", "SP-TMLE iteration cap"},
        {"hal.lambda_grid_size", "--lambda-grid-size", "number of lambda values in the CV grid"},
        {"hal.cv_folds", "--cv-folds", "cross-validation folds for lambda selection"},
        {"hal.g_trunc_lower", "--g-trunc-lower", "lower propensity truncation bound"},
        {"hal.g_trunc_upper", "--g-trunc-upper", "upper propensity truncation bound"},
        {"hal.outcome_fit", "--outcome-fit", "outcome regression rows: all or treated_only"},
        {"output.dir", "--out", "output directory"},
        {"output.emit_svg", "--emit-svg", "also render summary charts as SVG"},
        {"output.traces", "--traces", "write SP-TMLE score traces to traces/"},
        {"output.save_data", "--save-data", "write every generated dataset to data/"},
    };
    return keys;
}

/// Invalid configuration. `line()` is the 1-based line in the config file,
/// or 0 when the problem came from a flag.
class ConfigError : public std::runtime_error
{
public:
    ConfigError(std::size_t line, const std::string& what)
        : std::runtime_error(line ? "config line " + std::to_string(line) + ": " + what : what),
          line_(line)
    {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

namespace detail {

inline std::vector<std::string> split_list(std::string_view s)
{
    std::vector<std::string> out;
    for (auto f : csv::split(s)) {
        const auto t = csv::trim(f);
        if (!t.empty()) out.emplace_back(t);
    }
    return out;
}

inline std::vector<std::string> as_string_list(const nlohmann::json& v)
{
    if (v.is_string()) return split_list(v.get<std::string>());
    if (v.is_array()) {
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (e.is_string()) out.push_back(e.get<std::string>());
            else if (e.is_number_integer()) out.push_back(std::to_string(e.get<long long>()));
            else throw std::invalid_argument("list entries must be strings or integers");
        }
        return out;
    }
    if (v.is_number_integer()) return {std::to_string(v.get<long long>())};
    throw std::invalid_argument("expected a list or a comma-separated string");
}

inline std::uint64_t as_uint(const nlohmann::json& v)
{
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const auto x = v.get<long long>();
        if (x < 0) throw std::invalid_argument("expected a nonnegative integer");
        return static_cast<std::uint64_t>(x);
    }
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        std::uint64_t x = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
        if (ec == std::errc{} && p == s.data() + s.size()) return x;
    }
    throw std::invalid_argument("expected a nonnegative integer");
}

inline double as_real(const nlohmann::json& v)
{
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        double x = 0;
        const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
        if (ec == std::errc{} && p == s.data() + s.size() && std::isfinite(x)) return x;
    }
    throw std::invalid_argument("expected a real number");
}

inline bool as_bool(const nlohmann::json& v)
{
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "true" || s == "1") return true;
        if (s == "false" || s == "0") return false;
    }
    throw std::invalid_argument("expected true or false");
}

inline std::string as_str(const nlohmann::json& v)
{
    if (v.is_string()) return v.get<std::string>();
    throw std::invalid_argument("expected a string");
}

/// Line of the first occurrence of `"key"` in `text`, or 0.
inline std::size_t line_of_key(std::string_view text, std::string_view key)
{
    const auto pos = text.find("\"" + std::string(key) + "\"");
    if (pos == std::string_view::npos) return 0;
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + pos, '\n'));
}

inline std::size_t line_of_offset(std::string_view text, std::size_t byte)
{
    byte = std::min(byte, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

} // namespace detail

inline std::vector<DgpSpec> parse_dgps(const std::vector<std::string>& names)
{
    if (names.size() == 1 && names[0] == "all") {
        return {{TreatmentMechanism::Linear}, {TreatmentMechanism::Sinusoidal}, {TreatmentMechanism::Step}};
    }
    std::vector<DgpSpec> out;
    for (const auto& s : names) out.push_back({parse_mechanism(s)});
    if (out.empty()) throw std::invalid_argument("no dgp given");
    return out;
}

/// Applies one setting. Values may be typed JSON or strings as they come
/// from the command line.
inline void apply_setting(RunConfig& c, std::string_view key, const nlohmann::json& v)
{
    auto& s = c.sweep;
    if (key == "sweep.dgp") {
        s.dgps = parse_dgps(detail::as_string_list(v));
    } else if (key == "sweep.n_grid") {
        s.n_grid.clear();
        for (const auto& t : detail::as_string_list(v)) s.n_grid.push_back(detail::as_uint(t));
    } else if (key == "sweep.reps") {
        s.reps = detail::as_uint(v);
    } else if (key == "sweep.seed") {
        s.base_seed = detail::as_uint(v);
    } else if (key == "sweep.estimators") {
        s.estimators.clear();
        for (const auto& t : detail::as_string_list(v)) s.estimators.push_back(parse_estimator(t));
    } else if (key == "sweep.workers") {
        s.workers = detail::as_uint(v);
    } else if (key == "targeting.delta") {
        s.targeting.delta = detail::as_real(v);
    } else if (key == "targeting.tol_mode") {
        s.targeting.tol_mode = parse_tol_mode(detail::as_str(v));
    } else if (key == "targeting.tol_fixed") {
        s.targeting.tol_fixed = detail::as_real(v);
    } else if (key == "targeting.max_iters") {
        s.targeting.max_iters = detail::as_uint(v);
    } else if (key == "hal.lambda_grid_size") {
        s.hal.lambda_grid_size = detail::as_uint(v);
    } else if (key == "hal.cv_folds") {
        s.hal.cv_folds = static_cast<int>(detail::as_uint(v));
    } else if (key == "hal.g_trunc_lower") {
        s.hal.g_trunc_lower = detail::as_real(v);
    } else if (key == "hal.g_trunc_upper") {
        s.hal.g_trunc_upper = detail::as_real(v);
    } else if (key == "hal.outcome_fit") {
        s.hal.outcome_fit = parse_outcome_fit(detail::as_str(v));
    } else if (key == "output.dir") {
        c.out = detail::as_str(v);
    } else if (key == "output.emit_svg") {
        c.emit_svg = detail::as_bool(v);
    } else if (key == "output.traces") {
        s.keep_traces = detail::as_bool(v);
    } else if (key == "output.save_data") {
        c.save_data = detail::as_bool(v);
    } else {
        throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
    }
}

/// Applies a JSON config file's contents. The top level must be an object
/// of dotted keys. Every error names the offending line.
inline void apply_config_json(RunConfig& c, std::string_view text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& ex) {
        throw ConfigError(detail::line_of_offset(text, ex.byte == 0 ? 0 : ex.byte - 1),
                          std::string("malformed JSON: ") + ex.what());
    }
    if (!j.is_object()) throw ConfigError(1, "top level must be a JSON object of dotted keys");
    for (const auto& [key, value] : j.items()) {
        try {
            apply_setting(c, key, value);
        } catch (const std::exception& ex) {
            throw ConfigError(std::max<std::size_t>(1, detail::line_of_key(text, key)),
                              "'" + key + "': " + ex.what());
        }
    }
}

inline nlohmann::ordered_json resolved_json(const RunConfig& c)
{
    const auto& s = c.sweep;
    std::vector<std::string> dgps, ests;
    for (const auto& d : s.dgps) dgps.emplace_back(to_string(d.treatment_mechanism));
    for (auto e : s.estimators) ests.emplace_back(to_string(e));
    nlohmann::ordered_json j;
    j["sweep.dgp"] = dgps;
    j["sweep.n_grid"] = s.n_grid;
    j["sweep.reps"] = s.reps;
    j["sweep.seed"] = s.base_seed;
    j["sweep.estimators"] = ests;
    j["sweep.workers"] = s.workers;
    j["targeting.delta"] = s.targeting.delta;
    j["targeting.tol_mode"] = std::string(to_string(s.targeting.tol_mode));
    j["targeting.tol_fixed"] = s.targeting.tol_fixed;
    j["targeting.max_iters"] = s.targeting.max_iters;
    j["hal.lambda_grid_size"] = s.hal.lambda_grid_size;
    j["hal.cv_folds"] = s.hal.cv_folds;
    j["hal.g_trunc_lower"] = s.hal.g_trunc_lower;
    j["hal.g_trunc_upper"] = s.hal.g_trunc_upper;
    j["hal.outcome_fit"] = std::string(to_string(s.hal.outcome_fit));
    j["output.dir"] = c.out.string();
    j["output.emit_svg"] = c.emit_svg;
    j["output.traces"] = s.keep_traces;
    j["output.save_data"] = c.save_data;
    return j;
}

/// Workers from SPTMLE_WORKERS, if set to a positive integer.
inline std::optional<std::size_t> workers_from_env()
{
    const char* v = std::getenv("SPTMLE_WORKERS");
    if (!v || !*v) return std::nullopt;
    std::size_t x = 0;
    const std::string_view s(v);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || p != s.data() + s.size() || x == 0) {
        throw ConfigError(0, "SPTMLE_WORKERS must be a positive integer, got '" + std::string(s) + "'");
    }
    return x;
}

} // namespace sptmle
