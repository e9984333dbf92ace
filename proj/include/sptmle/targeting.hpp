#pragma once
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "hal.hpp"

namespace sptmle {

enum class TolMode { Scaled, Fixed };

inline std::string_view to_string(TolMode m) { return m == TolMode::Scaled ? "scaled" : "fixed"; }

inline TolMode parse_tol_mode(std::string_view s)
{
    if (s == "scaled") return TolMode::Scaled;
    if (s == "fixed") return TolMode::Fixed;
    throw std::invalid_argument("unknown tol_mode '" + std::string(s) + "' (expected scaled or fixed)");
}

struct TargetingConfig
{
    double delta = 0.001;
    TolMode tol_mode = TolMode::Scaled;
    double tol_fixed = 1e-3;
    std::size_t max_iters = 100000;
    /// Keep every iteration's full score vector (memory grows with iters * d).
    bool record_scores = false;
};

/// 1 / (sqrt(n) log n).
inline double default_tolerance(Eigen::Index n)
{
    const double dn = static_cast<double>(n);
    return 1.0 / (std::sqrt(dn) * std::log(dn));
}

inline double resolve_tolerance(const TargetingConfig& config, Eigen::Index n)
{
    return config.tol_mode == TolMode::Scaled ? default_tolerance(n) : config.tol_fixed;
}

/// Failure of a targeting update, with the trace that led to it.
class TargetingError : public std::runtime_error
{
public:
    TargetingError(const std::string& what, std::vector<double> trace = {})
        : std::runtime_error(what), trace_(std::move(trace))
    {}

    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

inline double clever_covariate(double a, double g_hat) { return a / g_hat; }

/// Fluctuation covariates of the (d+1)-dimensional submodel, one row per
/// observation. Column 0 is the clever covariate, columns 1..d the relaxed
/// active basis functions (multiplied by A when the outcome was fit on the
/// treated only).
struct Fluctuation
{
    Eigen::MatrixXd observed; ///< evaluated at the observed A
    Eigen::MatrixXd treated;  ///< evaluated at A = 1
};

inline Fluctuation fluctuation_covariates(const OutcomeModel& model, const PropensityModel& g,
                                          const Dataset& data)
{
    const auto n = data.size();
    if (model.n() != n || g.fitted.size() != n) {
        throw std::invalid_argument("fluctuation_covariates: models were fit on different data");
    }
    const auto k = model.active_x.cols();
    Fluctuation f{Eigen::MatrixXd(n, k + 1), Eigen::MatrixXd(n, k + 1)};
    for (Eigen::Index i = 0; i < n; ++i) {
        f.observed(i, 0) = clever_covariate(data.a()[i], g.fitted[i]);
        f.treated(i, 0) = clever_covariate(1.0, g.fitted[i]);
    }
    f.treated.rightCols(k) = model.active_x;
    f.observed.rightCols(k) = model.active_x;
    if (model.fit_population == OutcomeFit::TreatedOnly) {
        f.observed.rightCols(k) = data.a().asDiagonal() * model.active_x;
    }
    return f;
}

/// Empirical means P_n S: component 0 is P_n (A/g)(Y - Q), components
/// 1..d are P_n phi_j (Y - Q), with Q including all targeting offsets.
inline Eigen::VectorXd sp_score_vector(const OutcomeModel& model, const PropensityModel& g,
                                       const Dataset& data)
{
    const auto f = fluctuation_covariates(model, g, data);
    const Eigen::VectorXd resid = data.y() - model.q_observed();
    return f.observed.transpose() * resid / static_cast<double>(data.size());
}

struct TmleResult
{
    OutcomeModel model;
    double epsilon = 0.0;
    std::size_t iterations = 0;
};

/// One-step TMLE along logit Q* = logit Q + eps * A/g. eps solves
/// P_n (A/g)(Y - Q*) = 0, found by safeguarded Newton on that monotone
/// score.
inline TmleResult tmle_vanilla(const OutcomeModel& model, const PropensityModel& g,
                               const Dataset& data)
{
    const auto n = data.size();
    Eigen::VectorXd h_obs(n), h_one(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        h_obs[i] = clever_covariate(data.a()[i], g.fitted[i]);
        h_one[i] = clever_covariate(1.0, g.fitted[i]);
    }
    if (h_obs.cwiseAbs().maxCoeff() == 0.0) {
        throw TargetingError("tmle_vanilla: no treated observations, clever covariate is "
                             "identically zero and the fluctuation is unidentified");
    }
    const Eigen::VectorXd offset = model.base_logit + model.targeting_offset;
    const auto& y = data.y();

    auto score = [&](double eps, double* slope) {
        double s = 0.0, d = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (h_obs[i] == 0.0) continue;
            const double q = clamp_prob(expit(offset[i] + eps * h_obs[i]));
            s += h_obs[i] * (y[i] - q);
            d += h_obs[i] * h_obs[i] * q * (1.0 - q);
        }
        if (slope) *slope = -d / static_cast<double>(n);
        return s / static_cast<double>(n);
    };

    TmleResult out{model, 0.0, 0};
    double slope = 0.0;
    double f = score(0.0, &slope);
    std::vector<double> trace{f};
    if (std::abs(f) <= 1e-14) return out;

    // Bracket the root: the score is nonincreasing in eps.
    double lo = 0.0, hi = 0.0, f_lo = f, f_hi = f;
    {
        double step = f > 0.0 ? 1.0 : -1.0;
        double probe = step;
        for (int k = 0; k < 60; ++k, step *= 2.0, probe = step) {
            const double fp = score(probe, nullptr);
            if ((fp > 0.0) != (f > 0.0) || fp == 0.0) {
                (f > 0.0 ? hi : lo) = probe;
                (f > 0.0 ? f_hi : f_lo) = fp;
                break;
            }
        }
        if (f > 0.0 ? f_hi == f : f_lo == f) {
            throw TargetingError("tmle_vanilla: could not bracket the score root", trace);
        }
    }
    (void)f_lo;
    (void)f_hi;

    double eps = 0.0;
    for (std::size_t it = 1; it <= 100; ++it) {
        double next = slope < 0.0 ? eps - f / slope : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        const double change = std::abs(next - eps);
        eps = next;
        f = score(eps, &slope);
        trace.push_back(f);
        if (f > 0.0) lo = eps; else hi = eps;
        if (change < 1e-10 || f == 0.0) {
            out.epsilon = eps;
            out.iterations = it;
            out.model.targeting_offset += eps * h_obs;
            out.model.treated_offset += eps * h_one;
            return out;
        }
    }
    throw TargetingError("tmle_vanilla: Newton did not converge in 100 iterations", trace);
}

struct TargetingState
{
    Eigen::VectorXd epsilon_accum; ///< sum of all steps, length d+1
    Eigen::VectorXd score_means;   ///< P_n S at the returned model
    double delta = 0.001;
    double tol = 0.0;
    std::size_t max_iters = 0;
    std::size_t iterations = 0;
    std::vector<double> max_score_trace; ///< max |P_n S| before each step, plus the final value
    std::vector<Eigen::VectorXd> score_trace; ///< full P_n S per iteration when recorded
    double max_step_norm_error = 0.0; ///< max | ||eps|| - delta | over steps
};

struct SpTmleResult
{
    OutcomeModel model;
    TargetingState state;
};

/// Score-preserving TMLE: repeated normalized steps
///   eps = delta * P_n S / ||P_n S||_2
/// along logit Q + eps_0 A/g + sum_j eps_j phi_j until every component of
/// P_n S is within tol.
inline SpTmleResult sp_tmle(const OutcomeModel& model, const PropensityModel& g,
                            const Dataset& data, double delta, double tol, std::size_t max_iters,
                            bool record_scores = false)
{
    if (!(delta > 0.0)) throw std::invalid_argument("sp_tmle: delta must be positive");
    if (!(tol > 0.0)) throw std::invalid_argument("sp_tmle: tol must be positive");
    const auto n = data.size();
    if (data.a().sum() == 0.0) {
        throw TargetingError("sp_tmle: no treated observations, clever covariate is identically "
                             "zero and the fluctuation is unidentified");
    }
    const auto f = fluctuation_covariates(model, g, data);
    const auto d = f.observed.cols();
    const auto& y = data.y();

    SpTmleResult out{model, {}};
    auto& st = out.state;
    st.epsilon_accum = Eigen::VectorXd::Zero(d);
    st.delta = delta;
    st.tol = tol;
    st.max_iters = max_iters;

    Eigen::VectorXd logit_obs = model.base_logit + model.targeting_offset;
    Eigen::VectorXd resid(n);
    for (std::size_t it = 0;; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) resid[i] = y[i] - clamp_prob(expit(logit_obs[i]));
        const Eigen::VectorXd s = f.observed.transpose() * resid / static_cast<double>(n);
        const double worst = s.cwiseAbs().maxCoeff();
        st.max_score_trace.push_back(worst);
        if (record_scores) st.score_trace.push_back(s);
        if (worst <= tol) {
            st.iterations = it;
            st.score_means = s;
            break;
        }
        if (it == max_iters) {
            throw TargetingError("sp_tmle: " + std::to_string(max_iters) +
                                     " iterations without reaching tol " + std::to_string(tol) +
                                     " (max |score| " + std::to_string(worst) + ")",
                                 st.max_score_trace);
        }
        const Eigen::VectorXd eps = delta * s / s.norm();
        st.max_step_norm_error = std::max(st.max_step_norm_error, std::abs(eps.norm() - delta));
        st.epsilon_accum += eps;
        logit_obs.noalias() += f.observed * eps;
        out.model.targeting_offset.noalias() += f.observed * eps;
        out.model.treated_offset.noalias() += f.treated * eps;
    }
    return out;
}

inline SpTmleResult sp_tmle(const OutcomeModel& model, const PropensityModel& g,
                            const Dataset& data, const TargetingConfig& config = {})
{
    return sp_tmle(model, g, data, config.delta, resolve_tolerance(config, data.size()),
                   config.max_iters, config.record_scores);
}

/// One normalized step eps = delta * s / ||s||_2 from `model`; returns the
/// updated model and the step taken. A zero score vector gives a zero step.
inline std::pair<OutcomeModel, Eigen::VectorXd> sp_tmle_step(const OutcomeModel& model,
                                                             const PropensityModel& g,
                                                             const Dataset& data, double delta)
{
    const auto f = fluctuation_covariates(model, g, data);
    const Eigen::VectorXd resid = data.y() - model.q_observed();
    const Eigen::VectorXd s = f.observed.transpose() * resid / static_cast<double>(data.size());
    const double norm = s.norm();
    const Eigen::VectorXd eps = norm > 0.0 ? Eigen::VectorXd(delta * s / norm)
                                           : Eigen::VectorXd(Eigen::VectorXd::Zero(s.size()));
    OutcomeModel out = model;
    out.targeting_offset.noalias() += f.observed * eps;
    out.treated_offset.noalias() += f.treated * eps;
    return {std::move(out), eps};
}

/// (1/n) sum_i Q*(1, W_i).
inline double plug_in_psi(const OutcomeModel& model, const Dataset& data)
{
    if (model.n() != data.size()) throw std::invalid_argument("plug_in_psi: model/data mismatch");
    return model.q_treated().mean();
}

struct SubmodelScoreCheck
{
    Eigen::VectorXd analytic;
    Eigen::VectorXd numeric;
    double max_discrepancy = 0.0;
};

/// Compares, for every fluctuation direction k, the analytic score
/// P_n c_k (Y - Q) of the Bernoulli log-likelihood at eps = 0 with a central
/// difference of the empirical log-likelihood along eps_k.
inline SubmodelScoreCheck submodel_score_check(const OutcomeModel& model, const PropensityModel& g,
                                               const Dataset& data, double probe)
{
    const auto n = data.size();
    const auto f = fluctuation_covariates(model, g, data);
    const auto d = f.observed.cols();
    const Eigen::VectorXd z0 = model.base_logit + model.targeting_offset;
    const auto& y = data.y();

    auto loglik = [&](Eigen::Index k, double eps) {
        double l = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) l -= bernoulli_nll(y[i], z0[i] + eps * f.observed(i, k));
        return l / static_cast<double>(n);
    };

    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) resid[i] = y[i] - expit(z0[i]);

    SubmodelScoreCheck out{f.observed.transpose() * resid / static_cast<double>(n),
                           Eigen::VectorXd(d), 0.0};
    for (Eigen::Index k = 0; k < d; ++k) {
        out.numeric[k] = (loglik(k, probe) - loglik(k, -probe)) / (2.0 * probe);
        out.max_discrepancy = std::max(out.max_discrepancy, std::abs(out.numeric[k] - out.analytic[k]));
    }
    return out;
}

inline double verify_submodel_scores(const OutcomeModel& model, const PropensityModel& g,
                                     const Dataset& data, double probe)
{
    return submodel_score_check(model, g, data, probe).max_discrepancy;
}

} // namespace sptmle
