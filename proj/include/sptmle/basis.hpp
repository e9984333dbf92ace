#pragma once
#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "core.hpp"

namespace sptmle {

enum class ColumnKind : std::uint8_t { Intercept, Main, Interaction };

/// One zero-order spline indicator. Main columns are 1{w[coord] >= knot1};
/// interaction columns are 1{w1 >= knot1} * 1{w2 >= knot2}.
struct BasisColumn
{
    ColumnKind kind = ColumnKind::Intercept;
    int coord = 0;
    double knot1 = 0.0;
    double knot2 = 0.0;

    double evaluate(double w1, double w2) const noexcept
    {
        switch (kind) {
        case ColumnKind::Intercept: return 1.0;
        case ColumnKind::Main: return (coord == 0 ? w1 : w2) >= knot1 ? 1.0 : 0.0;
        case ColumnKind::Interaction: return (w1 >= knot1 && w2 >= knot2) ? 1.0 : 0.0;
        }
        return 0.0;
    }
};

/// Saturated zero-order spline basis over two covariates.
///
/// Column order is fixed: intercept (if present), W1 main knots ascending,
/// W2 main knots ascending, then interaction pairs in lexicographic order.
class BasisExpansion
{
public:
    BasisExpansion() = default;

    BasisExpansion(std::array<std::vector<double>, 2> main_knots,
                   std::vector<std::pair<double, double>> interaction_knots,
                   bool include_intercept)
        : main_knots_(std::move(main_knots)),
          interaction_knots_(std::move(interaction_knots)),
          include_intercept_(include_intercept)
    {
        for (auto& k : main_knots_) {
            std::sort(k.begin(), k.end());
            k.erase(std::unique(k.begin(), k.end()), k.end());
        }
        std::sort(interaction_knots_.begin(), interaction_knots_.end());
        interaction_knots_.erase(std::unique(interaction_knots_.begin(), interaction_knots_.end()),
                                 interaction_knots_.end());
    }

    const std::array<std::vector<double>, 2>& main_knots() const noexcept { return main_knots_; }
    const std::vector<std::pair<double, double>>& interaction_knots() const noexcept
    {
        return interaction_knots_;
    }
    bool include_intercept() const noexcept { return include_intercept_; }

    std::size_t size() const noexcept
    {
        return (include_intercept_ ? 1 : 0) + main_knots_[0].size() + main_knots_[1].size() +
               interaction_knots_.size();
    }

    BasisColumn column(std::size_t j) const
    {
        if (include_intercept_) {
            if (j == 0) return {};
            --j;
        }
        for (int c = 0; c < 2; ++c) {
            if (j < main_knots_[c].size()) {
                return {ColumnKind::Main, c, main_knots_[c][j], 0.0};
            }
            j -= main_knots_[c].size();
        }
        if (j < interaction_knots_.size()) {
            const auto& [k1, k2] = interaction_knots_[j];
            return {ColumnKind::Interaction, 0, k1, k2};
        }
        throw std::out_of_range("BasisExpansion::column: index out of range");
    }

    Eigen::VectorXd evaluate(double w1, double w2) const
    {
        Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
        Eigen::Index j = 0;
        if (include_intercept_) out[j++] = 1.0;
        for (double k : main_knots_[0]) out[j++] = w1 >= k ? 1.0 : 0.0;
        for (double k : main_knots_[1]) out[j++] = w2 >= k ? 1.0 : 0.0;
        for (const auto& [k1, k2] : interaction_knots_) {
            out[j++] = (w1 >= k1 && w2 >= k2) ? 1.0 : 0.0;
        }
        return out;
    }

    friend bool operator==(const BasisExpansion&, const BasisExpansion&) = default;

private:
    std::array<std::vector<double>, 2> main_knots_;
    std::vector<std::pair<double, double>> interaction_knots_;
    bool include_intercept_ = true;
};

/// Knots at every observed coordinate value, interaction knots at every
/// observed (W1, W2) row pair.
inline BasisExpansion build_basis(const Dataset& data)
{
    const auto& w = data.w();
    std::array<std::vector<double>, 2> main;
    std::vector<std::pair<double, double>> inter;
    main[0].reserve(w.rows());
    main[1].reserve(w.rows());
    inter.reserve(w.rows());
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        main[0].push_back(w(i, 0));
        main[1].push_back(w(i, 1));
        inter.emplace_back(w(i, 0), w(i, 1));
    }
    return BasisExpansion(std::move(main), std::move(inter), true);
}

inline Eigen::VectorXd evaluate(const BasisExpansion& basis, double w1, double w2)
{
    return basis.evaluate(w1, w2);
}

/// Basis evaluated on a dataset with duplicate columns removed.
struct DesignMatrix
{
    Eigen::MatrixXd x;                ///< n x kept, entries 0/1
    std::vector<std::size_t> columns; ///< basis column index of each kept column
    std::vector<std::size_t> back_map; ///< basis column -> kept column holding identical values
};

inline DesignMatrix design_matrix(const BasisExpansion& basis, const Dataset& data)
{
    const auto n = data.size();
    const auto d = basis.size();
    const auto& w = data.w();

    DesignMatrix out;
    out.back_map.resize(d);
    out.x.resize(n, static_cast<Eigen::Index>(d));
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> by_hash;
    Eigen::VectorXd col(n);
    for (std::size_t j = 0; j < d; ++j) {
        const auto spec = basis.column(j);
        std::uint64_t h = 1469598103934665603ULL;
        for (Eigen::Index i = 0; i < n; ++i) {
            col[i] = spec.evaluate(w(i, 0), w(i, 1));
            h = (h ^ static_cast<std::uint64_t>(col[i] != 0.0)) * 1099511628211ULL;
        }
        auto& bucket = by_hash[h];
        bool merged = false;
        for (std::size_t k : bucket) {
            if (out.x.col(static_cast<Eigen::Index>(k)) == col) {
                out.back_map[j] = k;
                merged = true;
                break;
            }
        }
        if (merged) continue;
        const auto k = out.columns.size();
        out.x.col(static_cast<Eigen::Index>(k)) = col;
        out.columns.push_back(j);
        out.back_map[j] = k;
        bucket.push_back(k);
    }
    out.x.conservativeResize(n, static_cast<Eigen::Index>(out.columns.size()));
    return out;
}

/// Computes X^T v for a deduplicated spline design in O((n + d) log n)
/// using sorted suffix sums for main effects and a Fenwick tree sweep for
/// the interaction (2-D dominance) sums.
class ColumnSums
{
public:
    ColumnSums() = default;

    ColumnSums(const BasisExpansion& basis, const std::vector<std::size_t>& columns,
               const Eigen::MatrixXd& w)
        : n_(w.rows()), d_(static_cast<Eigen::Index>(columns.size()))
    {
        for (int c = 0; c < 2; ++c) {
            order_[c].resize(static_cast<std::size_t>(n_));
            for (Eigen::Index i = 0; i < n_; ++i) order_[c][i] = i;
            std::stable_sort(order_[c].begin(), order_[c].end(),
                             [&](Eigen::Index a, Eigen::Index b) { return w(a, c) < w(b, c); });
            sorted_[c].resize(static_cast<std::size_t>(n_));
            for (Eigen::Index r = 0; r < n_; ++r) sorted_[c][r] = w(order_[c][r], c);
        }
        rank2_.resize(static_cast<std::size_t>(n_));
        for (Eigen::Index r = 0; r < n_; ++r) rank2_[order_[1][r]] = r;

        std::vector<Interaction> inter;
        for (std::size_t k = 0; k < columns.size(); ++k) {
            const auto spec = basis.column(columns[k]);
            switch (spec.kind) {
            case ColumnKind::Intercept: intercepts_.push_back(k); break;
            case ColumnKind::Main:
                mains_.push_back({k, spec.coord, first_at_least(spec.coord, spec.knot1)});
                break;
            case ColumnKind::Interaction:
                inter.push_back({k, spec.knot1, first_at_least(1, spec.knot2)});
                break;
            }
        }
        std::stable_sort(inter.begin(), inter.end(),
                         [](const Interaction& a, const Interaction& b) { return a.knot1 > b.knot1; });
        interactions_ = std::move(inter);
        w1_desc_.assign(order_[0].rbegin(), order_[0].rend());
        w1_ = w.col(0);
    }

    Eigen::Index rows() const noexcept { return n_; }
    Eigen::Index cols() const noexcept { return d_; }

    Eigen::VectorXd operator()(const Eigen::VectorXd& v) const
    {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(d_);
        const double total = v.sum();
        for (auto k : intercepts_) out[static_cast<Eigen::Index>(k)] = total;

        std::array<std::vector<double>, 2> suffix;
        for (int c = 0; c < 2; ++c) {
            suffix[c].assign(static_cast<std::size_t>(n_) + 1, 0.0);
            for (Eigen::Index r = n_ - 1; r >= 0; --r) {
                suffix[c][r] = suffix[c][r + 1] + v[order_[c][r]];
            }
        }
        for (const auto& m : mains_) {
            out[static_cast<Eigen::Index>(m.column)] = suffix[m.coord][m.first];
        }

        std::vector<double> tree(static_cast<std::size_t>(n_) + 1, 0.0);
        double added = 0.0;
        std::size_t next = 0;
        for (const auto& it : interactions_) {
            while (next < w1_desc_.size() && w1_[w1_desc_[next]] >= it.knot1) {
                const auto row = w1_desc_[next++];
                const double val = v[row];
                added += val;
                for (auto r = rank2_[row] + 1; r <= n_; r += r & -r) tree[r] += val;
            }
            double below = 0.0;
            for (auto r = it.first2; r > 0; r -= r & -r) below += tree[r];
            out[static_cast<Eigen::Index>(it.column)] = added - below;
        }
        return out;
    }

private:
    struct Main
    {
        std::size_t column;
        int coord;
        Eigen::Index first;
    };
    struct Interaction
    {
        std::size_t column;
        double knot1;
        Eigen::Index first2;
    };

    Eigen::Index first_at_least(int coord, double knot) const
    {
        const auto& s = sorted_[coord];
        return std::lower_bound(s.begin(), s.end(), knot) - s.begin();
    }

    Eigen::Index n_ = 0;
    Eigen::Index d_ = 0;
    std::array<std::vector<Eigen::Index>, 2> order_;
    std::array<std::vector<double>, 2> sorted_;
    std::vector<Eigen::Index> rank2_;
    std::vector<Eigen::Index> w1_desc_;
    Eigen::VectorXd w1_;
    std::vector<std::size_t> intercepts_;
    std::vector<Main> mains_;
    std::vector<Interaction> interactions_;
};

inline nlohmann::json to_json(const BasisExpansion& basis)
{
    nlohmann::json inter = nlohmann::json::array();
    for (const auto& [k1, k2] : basis.interaction_knots()) inter.push_back({k1, k2});
    return {{"main_knots", {basis.main_knots()[0], basis.main_knots()[1]}},
            {"interaction_knots", inter},
            {"include_intercept", basis.include_intercept()}};
}

inline BasisExpansion basis_from_json(const nlohmann::json& j)
{
    std::array<std::vector<double>, 2> main{j.at("main_knots").at(0).get<std::vector<double>>(),
                                            j.at("main_knots").at(1).get<std::vector<double>>()};
    std::vector<std::pair<double, double>> inter;
    for (const auto& p : j.at("interaction_knots")) {
        inter.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    }
    return BasisExpansion(std::move(main), std::move(inter), j.at("include_intercept").get<bool>());
}

} // namespace sptmle
