#pragma once
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "design.hpp"
#include "dgp.hpp"

namespace sptmle {

class LassoConvergenceError : public std::runtime_error
{
public:
    LassoConvergenceError(Eigen::VectorXd last_iterate, double last_change, std::size_t cycles)
        : std::runtime_error("logistic lasso did not converge after " + std::to_string(cycles) +
                             " cycles (last max coefficient change " + std::to_string(last_change) +
                             ")"),
          last_iterate_(std::move(last_iterate)), last_change_(last_change)
    {}

    const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }
    double last_change() const noexcept { return last_change_; }

private:
    Eigen::VectorXd last_iterate_;
    double last_change_;
};

struct LassoOptions
{
    /// Columns excluded from the penalty. The first entry is treated as the
    /// intercept for the degenerate constant-response rule.
    std::vector<Eigen::Index> unpenalized{0};
    double tol = 1e-7;
    std::size_t max_cycles = 10000;
    /// Observation weights; empty means all ones. Zero-weight rows are
    /// carried along (their linear predictor stays current) but do not
    /// enter the loss.
    Eigen::VectorXd weights;
};

/// Mean response rule for a constant y: clamp into [1e-6, 1 - 1e-6].
inline constexpr double kDegenerateClamp = 1e-6;

namespace detail {

/// Exact minimizer of 1/2 z'Hz - b'z + lambda * sum_{pen} |z_j| by
/// feature-sign search (an active-set method over sign patterns), started
/// from x. H must be positive definite.
inline Eigen::VectorXd feature_sign(const Eigen::MatrixXd& h, const Eigen::VectorXd& b,
                                    double lambda, const std::vector<bool>& penalized,
                                    Eigen::VectorXd x)
{
    const auto m = b.size();
    auto objective = [&](const Eigen::VectorXd& z) {
        double l1 = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (penalized[j]) l1 += std::abs(z[j]);
        }
        return 0.5 * z.dot(h * z) - b.dot(z) + lambda * l1;
    };
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    const double opt_tol = 1e-11 * scale;

    std::vector<bool> active(static_cast<std::size_t>(m));
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        active[j] = !penalized[j] || x[j] != 0.0;
        if (penalized[j]) theta[j] = x[j] > 0.0 ? 1.0 : (x[j] < 0.0 ? -1.0 : 0.0);
    }

    const std::size_t cap = 20 * static_cast<std::size_t>(m) + 100;
    for (std::size_t iter = 0; iter < cap; ++iter) {
        const Eigen::VectorXd grad = h * x - b;
        bool nonzero_optimal = true;
        for (Eigen::Index j = 0; j < m && nonzero_optimal; ++j) {
            if (active[j] && std::abs(grad[j] + lambda * theta[j]) > opt_tol) nonzero_optimal = false;
        }
        if (nonzero_optimal) {
            Eigen::Index pick = -1;
            double best = lambda + opt_tol;
            for (Eigen::Index j = 0; j < m; ++j) {
                if (!active[j] && std::abs(grad[j]) > best) {
                    best = std::abs(grad[j]);
                    pick = j;
                }
            }
            if (pick < 0) return x;
            active[pick] = true;
            theta[pick] = grad[pick] > 0.0 ? -1.0 : 1.0;
        }

        std::vector<Eigen::Index> idx;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (active[j]) idx.push_back(j);
        }
        const auto k = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd ha(k, k);
        Eigen::VectorXd rhs(k), xa(k);
        for (Eigen::Index r = 0; r < k; ++r) {
            rhs[r] = b[idx[r]] - lambda * theta[idx[r]];
            xa[r] = x[idx[r]];
            for (Eigen::Index c = 0; c < k; ++c) ha(r, c) = h(idx[r], idx[c]);
        }
        const Eigen::VectorXd target = ha.ldlt().solve(rhs);

        // Discrete line search over the segment xa -> target: the endpoint
        // and every point where a penalized coefficient crosses zero.
        std::vector<std::pair<double, Eigen::Index>> breaks;
        for (Eigen::Index r = 0; r < k; ++r) {
            if (!penalized[idx[r]] || xa[r] == 0.0) continue;
            if ((xa[r] > 0.0) != (target[r] > 0.0) || target[r] == 0.0) {
                const double t = xa[r] / (xa[r] - target[r]);
                if (t > 0.0 && t < 1.0) breaks.emplace_back(t, r);
            }
        }
        if (breaks.empty()) {
            // No sign change along the segment: the solve is the minimizer on
            // this orthant face, even when the objective gain is below
            // rounding.
            for (Eigen::Index r = 0; r < k; ++r) x[idx[r]] = target[r];
        } else {
            auto point = [&](double t, Eigen::Index zeroed) {
                Eigen::VectorXd z = x;
                for (Eigen::Index r = 0; r < k; ++r) z[idx[r]] = xa[r] + t * (target[r] - xa[r]);
                if (zeroed >= 0) z[idx[zeroed]] = 0.0;
                return z;
            };
            std::sort(breaks.begin(), breaks.end());
            Eigen::VectorXd best = point(1.0, -1);
            double best_obj = objective(best);
            for (const auto& [t, r] : breaks) {
                Eigen::VectorXd z = point(t, r);
                const double obj = objective(z);
                if (obj < best_obj) {
                    best_obj = obj;
                    best = std::move(z);
                }
            }
            // The face objective decreases monotonically up to the first
            // breakpoint, so stepping there is never worse in exact
            // arithmetic. Taking it when nothing measurably improves (a
            // coefficient at rounding level about to flip sign) changes the
            // active set instead of stalling.
            if (!(best_obj < objective(x))) best = point(breaks.front().first, breaks.front().second);
            x = std::move(best);
        }
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!penalized[j]) continue;
            if (x[j] == 0.0) {
                active[j] = false;
                theta[j] = 0.0;
            } else {
                active[j] = true;
                theta[j] = x[j] > 0.0 ? 1.0 : -1.0;
            }
        }
    }
    return x;
}

} // namespace detail

/// Weighted L1-penalized logistic regression.
///
/// Minimizes (1/S) sum_i v_i nll(y_i, x_i' b) + lambda * sum_{j penalized} |b_j|
/// with S = sum_i v_i. Each cycle forms the IRLS quadratic approximation on
/// the working set (nonzero, unpenalized and KKT-violating columns), solves
/// that penalized quadratic exactly, and backtracks on the true objective.
/// Converged when a cycle moves no coefficient by more than `tol` and every
/// zero coefficient satisfies the KKT bound.
///
/// The solver keeps its iterate between calls, so solving a decreasing
/// lambda sequence warm-starts along the path.
template <LogisticDesign D>
class LogisticLasso
{
public:
    LogisticLasso(const D& x, const Eigen::VectorXd& y, LassoOptions options = {})
        : x_(x), y_(y), opt_(std::move(options))
    {
        const auto n = x_.rows();
        if (y_.size() != n) throw std::invalid_argument("LogisticLasso: y length mismatch");
        if (opt_.weights.size() == 0) opt_.weights = Eigen::VectorXd::Ones(n);
        if (opt_.weights.size() != n) throw std::invalid_argument("LogisticLasso: weight length");
        weight_sum_ = opt_.weights.sum();
        if (!(weight_sum_ > 0.0)) throw std::invalid_argument("LogisticLasso: zero total weight");

        penalized_.assign(static_cast<std::size_t>(x_.cols()), true);
        for (auto j : opt_.unpenalized) penalized_[static_cast<std::size_t>(j)] = false;

        beta_ = Eigen::VectorXd::Zero(x_.cols());
        eta_ = Eigen::VectorXd::Zero(n);

        const double ybar = opt_.weights.dot(y_) / weight_sum_;
        degenerate_ = (ybar <= 0.0 || ybar >= 1.0);
        if (!opt_.unpenalized.empty()) {
            // Intercept starts at the (clamped) Bernoulli MLE.
            const auto j0 = opt_.unpenalized.front();
            const double b0 = logit(std::clamp(ybar, kDegenerateClamp, 1.0 - kDegenerateClamp));
            beta_[j0] = b0;
            eta_ += b0 * x_.col(j0);
        }
    }

    bool degenerate() const noexcept { return degenerate_; }
    const Eigen::VectorXd& beta() const noexcept { return beta_; }
    /// Linear predictor on every row, including zero-weight rows.
    const Eigen::VectorXd& eta() const noexcept { return eta_; }
    std::size_t cycles() const noexcept { return cycles_; }
    double weight_sum() const noexcept { return weight_sum_; }

    /// Mean score (1/S) X^T v (y - p) at the current iterate.
    Eigen::VectorXd gradient() const { return x_.cross(weighted_residual(eta_)) / weight_sum_; }

    /// Smallest lambda at which every penalized coefficient is zero, from
    /// the score at the unpenalized-only fit.
    double lambda_max()
    {
        if (degenerate_) return 0.0;
        solve(std::numeric_limits<double>::infinity());
        const Eigen::VectorXd g = gradient();
        double lmax = 0.0;
        for (Eigen::Index j = 0; j < g.size(); ++j) {
            if (penalized_[static_cast<std::size_t>(j)]) lmax = std::max(lmax, std::abs(g[j]));
        }
        return lmax;
    }

    double objective(double lambda) const { return penalized_objective(eta_, beta_, lambda); }

    const Eigen::VectorXd& solve(double lambda)
    {
        if (degenerate_) return beta_;
        const auto n = x_.rows();
        const auto& v = opt_.weights;
        double last_change = std::numeric_limits<double>::infinity();
        int stalled = 0;
        std::size_t cycle = 0;
        for (; cycle < opt_.max_cycles; ++cycle) {
            Eigen::VectorXd p(n), w(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                p[i] = expit(eta_[i]);
                w[i] = v[i] * std::max(p[i] * (1.0 - p[i]), kWeightFloor) / weight_sum_;
            }
            const Eigen::VectorXd g =
                x_.cross((v.array() * (y_.array() - p.array())).matrix()) / weight_sum_;

            const double kkt_bound = lambda * (1.0 + 1e-9) + 1e-9;
            std::vector<Eigen::Index> work, violators;
            for (Eigen::Index j = 0; j < g.size(); ++j) {
                const bool pen = penalized_[static_cast<std::size_t>(j)];
                if (!pen || beta_[j] != 0.0) {
                    work.push_back(j);
                } else if (std::abs(g[j]) > kkt_bound) {
                    violators.push_back(j);
                }
            }
            double worst = 0.0;
            for (auto j : violators) worst = std::max(worst, std::abs(g[j]) - lambda);
            // Violations at the level of the gradient's own rounding are
            // ties, not missing columns.
            if (last_change < opt_.tol && worst <= kTieSlack) break;
            // A subproblem that no longer moves the iterate has nothing left
            // to contribute at this lambda.
            if (last_change > kNegligibleChange) {
                stalled = 0;
            } else if (stalled++ > 0) {
                if (worst > 1e-7) throw LassoConvergenceError(beta_, last_change, cycle);
                break;
            }
            // Only the strongest violators join per cycle; the rest are
            // picked up by later KKT sweeps if still violating.
            if (violators.size() > kMaxEntering) {
                std::partial_sort(violators.begin(), violators.begin() + kMaxEntering, violators.end(),
                                  [&](Eigen::Index a, Eigen::Index b) {
                                      const double ga = std::abs(g[a]), gb = std::abs(g[b]);
                                      return ga != gb ? ga > gb : a < b;
                                  });
                violators.resize(kMaxEntering);
            }
            work.insert(work.end(), violators.begin(), violators.end());
            std::sort(work.begin(), work.end());

            const auto m = static_cast<Eigen::Index>(work.size());
            std::vector<bool> pen(static_cast<std::size_t>(m));
            Eigen::VectorXd b0(m), gw(m);
            for (Eigen::Index c = 0; c < m; ++c) {
                pen[c] = penalized_[static_cast<std::size_t>(work[c])];
                b0[c] = beta_[work[c]];
                gw[c] = g[work[c]];
            }
            Eigen::MatrixXd h = x_.weighted_gram(work, w);
            h.diagonal().array() += 1e-10 * std::max(h.diagonal().maxCoeff(), 1e-12);

            const Eigen::VectorXd target =
                detail::feature_sign(h, gw + h * b0, std::isfinite(lambda) ? lambda : 0.0, pen, b0);
            const Eigen::VectorXd step = target - b0;
            Eigen::VectorXd eta_step = Eigen::VectorXd::Zero(n);
            for (Eigen::Index c = 0; c < m; ++c) {
                if (step[c] != 0.0) eta_step += step[c] * x_.col(work[c]);
            }

            const double f0 = penalized_objective(eta_, beta_, lambda);
            // Steps whose effect is below rounding of the objective are
            // judged by the quadratic model, which is exact at that scale.
            const double f_accept = f0 + 8.0 * std::numeric_limits<double>::epsilon() * std::abs(f0);
            double t = 1.0;
            bool accepted = false;
            Eigen::VectorXd trial_beta = beta_;
            for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
                for (Eigen::Index c = 0; c < m; ++c) trial_beta[work[c]] = b0[c] + t * step[c];
                const Eigen::VectorXd trial_eta = eta_ + t * eta_step;
                if (penalized_objective(trial_eta, trial_beta, lambda) <= f_accept) {
                    beta_ = trial_beta;
                    eta_ = trial_eta;
                    accepted = true;
                    break;
                }
            }
            last_change = accepted ? t * step.cwiseAbs().maxCoeff() : 0.0;
        }
        cycles_ = cycle;
        if (cycle == opt_.max_cycles) throw LassoConvergenceError(beta_, last_change, cycle);
        return beta_;
    }

private:
    static constexpr double kWeightFloor = 1e-5;
    static constexpr std::size_t kMaxEntering = 10;
    static constexpr double kTieSlack = 1e-8;
    static constexpr double kNegligibleChange = 1e-12;

    Eigen::VectorXd weighted_residual(const Eigen::VectorXd& eta) const
    {
        Eigen::VectorXd r(eta.size());
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            r[i] = opt_.weights[i] * (y_[i] - expit(eta[i]));
        }
        return r;
    }

    double penalized_objective(const Eigen::VectorXd& eta, const Eigen::VectorXd& beta,
                               double lambda) const
    {
        double f = 0.0;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            if (opt_.weights[i] != 0.0) f += opt_.weights[i] * bernoulli_nll(y_[i], eta[i]);
        }
        f /= weight_sum_;
        if (!std::isfinite(lambda)) return f;
        double l1 = 0.0;
        for (Eigen::Index j = 0; j < beta.size(); ++j) {
            if (penalized_[static_cast<std::size_t>(j)]) l1 += std::abs(beta[j]);
        }
        return f + lambda * l1;
    }

    const D& x_;
    const Eigen::VectorXd& y_;
    LassoOptions opt_;
    double weight_sum_ = 0.0;
    bool degenerate_ = false;
    std::vector<bool> penalized_;
    Eigen::VectorXd beta_;
    Eigen::VectorXd eta_;
    std::size_t cycles_ = 0;
};

/// Single-lambda fit. Warm-starts through a geometric sequence from
/// lambda_max when lambda is below it, which is how the solution is reached
/// in practice anyway.
template <LogisticDesign D>
Eigen::VectorXd fit_logistic_lasso(const D& x, const Eigen::VectorXd& y, double lambda,
                                   LassoOptions options = {})
{
    if (x.rows() < 2) throw std::invalid_argument("fit_logistic_lasso: need n >= 2");
    if (lambda < 0.0) throw std::invalid_argument("fit_logistic_lasso: negative lambda");
    LogisticLasso<D> solver(x, y, std::move(options));
    if (solver.degenerate()) return solver.beta();
    const double lmax = solver.lambda_max();
    if (lambda < lmax) {
        for (double l = lmax * 0.5; l > lambda; l *= 0.5) solver.solve(l);
    }
    return solver.solve(lambda);
}

inline Eigen::VectorXd fit_logistic_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                          double lambda, LassoOptions options = {})
{
    return fit_logistic_lasso(DenseDesign(x), y, lambda, std::move(options));
}

/// `size` log-spaced values from lambda_max down to lambda_max * min_ratio.
inline std::vector<double> lambda_grid(double lambda_max, std::size_t size, double min_ratio = 1e-4)
{
    std::vector<double> grid;
    if (size == 0 || !(lambda_max > 0.0)) return grid;
    grid.reserve(size);
    if (size == 1) {
        grid.push_back(lambda_max);
        return grid;
    }
    const double step = std::log(min_ratio) / static_cast<double>(size - 1);
    for (std::size_t k = 0; k < size; ++k) {
        grid.push_back(lambda_max * std::exp(step * static_cast<double>(k)));
    }
    return grid;
}

/// Seeded fold labels: a Fisher-Yates permutation of the rows, then
/// position mod n_folds.
inline std::vector<int> assign_folds(Eigen::Index n, int n_folds, std::uint64_t seed)
{
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng rng(seed);
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[i], perm[j]);
    }
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (Eigen::Index pos = 0; pos < n; ++pos) fold[perm[pos]] = static_cast<int>(pos % n_folds);
    return fold;
}

struct CvOptions
{
    int n_folds = 10;
    std::size_t grid_size = 100;
    double min_ratio = 1e-4;
    /// Explicit grid (descending); overrides grid_size/min_ratio when set.
    std::vector<double> grid;
    std::uint64_t seed = 0;
    std::vector<Eigen::Index> unpenalized{0};
    double tol = 1e-7;
    /// Observation weights; zero-weight rows never enter training or held-out loss.
    Eigen::VectorXd weights;
    /// Stop walking the grid once the mean held-out loss has failed to
    /// improve on its running minimum for this many consecutive lambdas.
    /// Zero walks the whole grid.
    std::size_t patience = 10;
};

struct CvResult
{
    std::vector<double> lambdas; ///< grid prefix actually evaluated
    std::vector<double> loss;    ///< mean over folds of held-out mean NLL
    std::vector<double> loss_se; ///< standard error of that mean across folds
    std::size_t selected = 0;
    double lambda = 0.0;
};

class CvError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// K-fold cross-validation over a descending lambda grid; picks the lambda
/// with the smallest mean held-out log-loss.
template <LogisticDesign D>
CvResult select_lambda_cv(const D& x, const Eigen::VectorXd& y, const CvOptions& options)
{
    const auto n = x.rows();
    const int k = options.n_folds;
    Eigen::VectorXd base_w = options.weights.size() ? options.weights : Eigen::VectorXd::Ones(n);
    Eigen::Index n_used = 0;
    for (Eigen::Index i = 0; i < n; ++i) n_used += base_w[i] > 0.0 ? 1 : 0;
    if (k < 2) throw std::invalid_argument("select_lambda_cv: need at least 2 folds");
    if (n_used < 2 * k) {
        throw std::invalid_argument("select_lambda_cv: n = " + std::to_string(n_used) +
                                    " is below 2 * n_folds");
    }

    CvResult out;
    out.lambdas = options.grid;
    if (out.lambdas.empty()) {
        LassoOptions lo{options.unpenalized, options.tol, 10000, base_w};
        LogisticLasso<D> full(x, y, lo);
        if (full.degenerate()) throw CvError("select_lambda_cv: response is constant");
        out.lambdas = lambda_grid(full.lambda_max(), options.grid_size, options.min_ratio);
    }
    const auto m = out.lambdas.size();

    // Fold labels over the rows that carry weight.
    std::vector<Eigen::Index> used;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (base_w[i] > 0.0) used.push_back(i);
    }
    const auto sub = assign_folds(static_cast<Eigen::Index>(used.size()), k, options.seed);
    std::vector<int> fold(static_cast<std::size_t>(n), -1);
    for (std::size_t t = 0; t < used.size(); ++t) fold[used[t]] = sub[t];

    std::vector<double> held_weight(static_cast<std::size_t>(k), 0.0);
    std::vector<std::unique_ptr<LogisticLasso<D>>> solvers;
    solvers.reserve(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        Eigen::VectorXd w = base_w;
        double train_y = 0.0, train_w = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (fold[i] == f) {
                held_weight[f] += base_w[i];
                w[i] = 0.0;
            } else {
                train_y += w[i] * y[i];
                train_w += w[i];
            }
        }
        if (train_y <= 0.0 || train_y >= train_w) {
            throw CvError("select_lambda_cv: fold " + std::to_string(f) +
                          " has a constant training response; reduce n_folds");
        }
        solvers.push_back(std::make_unique<LogisticLasso<D>>(
            x, y, LassoOptions{options.unpenalized, options.tol, 10000, std::move(w)}));
    }

    // Folds advance through the grid together so the mean held-out loss is
    // known at every step.
    std::vector<double> fold_loss(static_cast<std::size_t>(k));
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    for (std::size_t l = 0; l < m; ++l) {
        for (int f = 0; f < k; ++f) {
            auto& solver = *solvers[f];
            solver.solve(out.lambdas[l]);
            const auto& eta = solver.eta();
            double loss = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (fold[i] == f) loss += base_w[i] * bernoulli_nll(y[i], eta[i]);
            }
            fold_loss[f] = loss / held_weight[f];
        }
        double mean = 0.0;
        for (int f = 0; f < k; ++f) mean += fold_loss[f];
        mean /= k;
        double ss = 0.0;
        for (int f = 0; f < k; ++f) ss += (fold_loss[f] - mean) * (fold_loss[f] - mean);
        out.loss.push_back(mean);
        out.loss_se.push_back(std::sqrt(ss / (k - 1) / k));
        if (mean < best) {
            best = mean;
            since_best = 0;
        } else if (options.patience > 0 && ++since_best >= options.patience) {
            break;
        }
    }
    out.lambdas.resize(out.loss.size());
    out.selected = static_cast<std::size_t>(
        std::min_element(out.loss.begin(), out.loss.end()) - out.loss.begin());
    out.lambda = out.lambdas[out.selected];
    return out;
}

/// Outcome of an unpenalized refit on a column subset.
struct RelaxedFit
{
    std::vector<Eigen::Index> columns; ///< columns kept after dependency removal
    Eigen::VectorXd beta;              ///< coefficients over `columns`
    double max_score = 0.0;            ///< max_j |(1/S) sum_i v_i x_ij (y_i - p_i)|
    std::size_t iterations = 0;
    bool ridge_fallback = false;
};

class RefitError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Indices (into `cols`) of a maximal linearly independent subset, found by
/// Gram-Schmidt in the given column order over rows with positive weight.
inline std::vector<std::size_t> independent_columns(const Eigen::MatrixXd& x,
                                                    const std::vector<Eigen::Index>& cols,
                                                    const Eigen::VectorXd& weights)
{
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (weights[i] > 0.0) rows.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd q(m, 0);
    std::vector<std::size_t> keep;
    Eigen::VectorXd c(m);
    for (std::size_t t = 0; t < cols.size(); ++t) {
        for (Eigen::Index r = 0; r < m; ++r) c[r] = x(rows[r], cols[t]);
        const double norm = c.norm();
        if (norm == 0.0) continue;
        for (int pass = 0; pass < 2; ++pass) {
            if (q.cols() > 0) c -= q * (q.transpose() * c);
        }
        const double resid = c.norm();
        if (resid <= 1e-9 * norm) continue;
        q.conservativeResize(m, q.cols() + 1);
        q.col(q.cols() - 1) = c / resid;
        keep.push_back(t);
    }
    return keep;
}

} // namespace detail

struct RefitOptions
{
    Eigen::VectorXd weights;
    double score_tol = 1e-10;
    std::size_t max_iters = 200;
    double ridge = 1e-6;
};

/// Unpenalized logistic MLE on `active_set` by damped Newton. Linearly
/// dependent columns are dropped in the order given. If the Newton
/// iteration stalls with a saturated linear predictor (separation), the fit
/// is redone with a small ridge penalty and flagged.
inline RelaxedFit relaxed_refit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const std::vector<Eigen::Index>& active_set,
                                RefitOptions options = {})
{
    const auto n = x.rows();
    Eigen::VectorXd v = options.weights.size() ? options.weights : Eigen::VectorXd::Ones(n);
    const double s = v.sum();

    RelaxedFit fit;
    for (auto t : detail::independent_columns(x, active_set, v)) fit.columns.push_back(active_set[t]);
    const auto k = static_cast<Eigen::Index>(fit.columns.size());
    if (k >= n) throw RefitError("relaxed_refit: active set is not smaller than n");
    Eigen::MatrixXd xa(n, k);
    for (Eigen::Index j = 0; j < k; ++j) xa.col(j) = x.col(fit.columns[j]);

    auto objective = [&](const Eigen::VectorXd& eta, const Eigen::VectorXd& b, double ridge) {
        double f = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) f += v[i] * bernoulli_nll(y[i], eta[i]);
        return f / s + 0.5 * ridge * b.squaredNorm();
    };

    auto newton = [&](double ridge, Eigen::VectorXd& b) -> double {
        Eigen::VectorXd eta = xa * b, p(n), r(n);
        double max_score = std::numeric_limits<double>::infinity();
        for (std::size_t it = 0; it < options.max_iters; ++it) {
            fit.iterations = it;
            for (Eigen::Index i = 0; i < n; ++i) {
                p[i] = expit(eta[i]);
                r[i] = v[i] * (y[i] - p[i]);
            }
            const Eigen::VectorXd g = xa.transpose() * r / s - ridge * b;
            max_score = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
            if (max_score <= options.score_tol) break;
            Eigen::VectorXd hw = (v.array() * p.array() * (1.0 - p.array())).matrix() / s;
            Eigen::MatrixXd h = xa.transpose() * hw.asDiagonal() * xa;
            h.diagonal().array() += ridge + 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
            const Eigen::VectorXd step = h.ldlt().solve(g);
            const double f0 = objective(eta, b, ridge);
            const double slope = g.dot(step);
            double t = 1.0;
            bool moved = false;
            for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
                const Eigen::VectorXd bn = b + t * step;
                const Eigen::VectorXd en = xa * bn;
                if (objective(en, bn, ridge) <= f0 - 1e-4 * t * slope) {
                    b = bn;
                    eta = en;
                    moved = true;
                    break;
                }
            }
            if (!moved) break;
        }
        return max_score;
    };

    Eigen::VectorXd b = Eigen::VectorXd::Zero(k);
    double max_score = newton(0.0, b);
    if (max_score > 1e-8) {
        const Eigen::VectorXd eta = xa * b;
        const double sat = eta.size() ? eta.cwiseAbs().maxCoeff() : 0.0;
        if (sat <= 30.0 && max_score > 1e-6) {
            throw RefitError("relaxed_refit: Newton iteration stalled with max score " +
                             std::to_string(max_score));
        }
        b.setZero();
        newton(options.ridge, b);
        fit.ridge_fallback = true;
    }
    fit.beta = b;
    // Report the unpenalized score whichever route produced b.
    Eigen::VectorXd eta = xa * b, r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = v[i] * (y[i] - clamp_prob(expit(eta[i])));
    fit.max_score = k ? (xa.transpose() * r / s).cwiseAbs().maxCoeff() : 0.0;
    return fit;
}

/// Lasso optimality at a candidate solution: `inactive_excess` is
/// max(|g_j| - lambda, 0) over penalized zero coefficients and
/// `active_gap` is max | |g_j| - lambda | over penalized nonzeros, with g the
/// weighted mean score.
struct KktReport
{
    double inactive_excess = 0.0;
    double active_gap = 0.0;
    double unpenalized_score = 0.0;

    bool holds(double tol = 1e-6) const
    {
        return inactive_excess <= tol && active_gap <= tol && unpenalized_score <= tol;
    }
};

template <LogisticDesign D>
KktReport kkt_check(const D& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta, double lambda,
                    const std::vector<Eigen::Index>& unpenalized = {0},
                    Eigen::VectorXd weights = {})
{
    const auto n = x.rows();
    if (weights.size() == 0) weights = Eigen::VectorXd::Ones(n);
    const Eigen::VectorXd eta = x.matrix() * beta;
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r[i] = weights[i] * (y[i] - expit(eta[i]));
    const Eigen::VectorXd g = x.cross(r) / weights.sum();
    KktReport k;
    for (Eigen::Index j = 0; j < g.size(); ++j) {
        const bool pen = std::find(unpenalized.begin(), unpenalized.end(), j) == unpenalized.end();
        if (!pen) {
            k.unpenalized_score = std::max(k.unpenalized_score, std::abs(g[j]));
        } else if (beta[j] == 0.0) {
            k.inactive_excess = std::max(k.inactive_excess, std::abs(g[j]) - lambda);
        } else {
            k.active_gap = std::max(k.active_gap, std::abs(std::abs(g[j]) - lambda));
        }
    }
    return k;
}

} // namespace sptmle
