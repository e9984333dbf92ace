#pragma once
#include <algorithm>
#include <cmath>
#include <sstream>

#include "harness.hpp"

namespace sptmle {

/// Line charts of bias, variance, MSE and coverage against n for one DGP,
/// one line per estimator, laid out as a 2x2 panel. The n axis is
/// logarithmic.
inline std::string render_summary_svg(const std::vector<CellSummary>& summaries, TreatmentMechanism dgp)
{
    constexpr double kPanelW = 360, kPanelH = 240, kMargin = 48;
    constexpr std::array<const char*, 4> kColors{"#1b9e77", "#d95f02", "#7570b3", "#e7298a"};
    struct Metric { const char* name; std::optional<double> CellSummary::*field; };
    const std::array<Metric, 4> metrics{{{"bias", &CellSummary::bias},
                                         {"variance", &CellSummary::variance},
                                         {"mse", &CellSummary::mse},
                                         {"coverage", &CellSummary::coverage}}};

    std::vector<const CellSummary*> rows;
    for (const auto& s : summaries) {
        if (s.dgp == dgp) rows.push_back(&s);
    }
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * kPanelW << "\" height=\""
       << 2 * kPanelH + 30 << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<text x=\"8\" y=\"18\" font-size=\"14\">" << to_string(dgp) << "</text>\n";
    for (std::size_t e = 0; e < kAllEstimators.size(); ++e) {
        os << "<text x=\"" << 120 + 120 * e << "\" y=\"18\" fill=\"" << kColors[e] << "\">"
           << to_string(kAllEstimators[e]) << "</text>\n";
    }
    if (rows.empty()) {
        os << "</svg>\n";
        return os.str();
    }
    double nmin = 1e300, nmax = 0;
    for (auto* r : rows) {
        nmin = std::min(nmin, static_cast<double>(r->n));
        nmax = std::max(nmax, static_cast<double>(r->n));
    }
    const double lx0 = std::log(nmin), lx1 = std::max(std::log(nmax), lx0 + 1e-9);

    for (std::size_t p = 0; p < metrics.size(); ++p) {
        const double ox = (p % 2) * kPanelW, oy = 30 + (p / 2) * kPanelH;
        const double x0 = ox + kMargin, x1 = ox + kPanelW - 12;
        const double y0 = oy + kPanelH - 28, y1 = oy + 18;
        double lo = 1e300, hi = -1e300;
        for (auto* r : rows) {
            if (const auto& v = r->*metrics[p].field) {
                lo = std::min(lo, *v);
                hi = std::max(hi, *v);
            }
        }
        os << "<text x=\"" << ox + 8 << "\" y=\"" << oy + 12 << "\">" << metrics[p].name << "</text>\n";
        os << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\""
           << y0 - y1 << "\" fill=\"none\" stroke=\"#999\"/>\n";
        if (lo > hi) continue;
        if (hi - lo < 1e-12) {
            lo -= 0.5e-3;
            hi += 0.5e-3;
        }
        auto sx = [&](double n) { return x0 + (std::log(n) - lx0) / (lx1 - lx0) * (x1 - x0); };
        auto sy = [&](double v) { return y0 - (v - lo) / (hi - lo) * (y0 - y1); };
        os << "<text x=\"" << ox + 2 << "\" y=\"" << y1 + 4 << "\">" << csv::format_double(hi).substr(0, 8)
           << "</text>\n<text x=\"" << ox + 2 << "\" y=\"" << y0 << "\">"
           << csv::format_double(lo).substr(0, 8) << "</text>\n";
        for (auto* r : rows) {
            if (r->estimator != kAllEstimators[0]) continue;
            os << "<text x=\"" << sx(static_cast<double>(r->n)) - 8 << "\" y=\"" << y0 + 14 << "\">"
               << r->n << "</text>\n";
        }
        for (std::size_t e = 0; e < kAllEstimators.size(); ++e) {
            std::vector<std::pair<double, double>> pts;
            for (auto* r : rows) {
                const auto& v = r->*metrics[p].field;
                if (r->estimator == kAllEstimators[e] && v) pts.emplace_back(static_cast<double>(r->n), *v);
            }
            std::sort(pts.begin(), pts.end());
            if (pts.empty()) continue;
            os << "<polyline fill=\"none\" stroke=\"" << kColors[e] << "\" stroke-width=\"1.5\" points=\"";
            for (const auto& [n, v] : pts) os << sx(n) << ',' << sy(v) << ' ';
            os << "\"/>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace sptmle
