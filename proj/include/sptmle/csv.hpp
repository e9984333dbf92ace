#pragma once
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"

namespace sptmle {

/// Parse failure with the 1-based line and column name that caused it.
class CsvError : public std::runtime_error
{
public:
    CsvError(std::size_t line, std::string column, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) +
                             (column.empty() ? "" : ", column '" + column + "'") + ": " + what),
          line_(line), column_(std::move(column))
    {}

    std::size_t line() const noexcept { return line_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::string column_;
};

namespace csv {

/// Shortest text that reads back to the same double.
inline std::string format_double(double x)
{
    char buf[64];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) break;
    }
    return buf;
}

inline std::vector<std::string_view> split(std::string_view line)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    return s;
}

inline double parse_double(std::string_view s, std::size_t line, const std::string& column)
{
    s = trim(s);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw CsvError(line, column, "expected a real number, got '" + std::string(s) + "'");
    }
    return v;
}

/// Writes to a sibling temp file, then renames over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
        out << contents;
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace csv

inline constexpr std::string_view kDatasetHeader = "w1,w2,a,y";

inline std::string dataset_to_csv(const Dataset& data)
{
    std::string out(kDatasetHeader);
    out += '\n';
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        out += csv::format_double(data.w()(i, 0));
        out += ',';
        out += csv::format_double(data.w()(i, 1));
        out += data.a()[i] == 1.0 ? ",1," : ",0,";
        out += data.y()[i] == 1.0 ? "1\n" : "0\n";
    }
    return out;
}

/// Parses the `w1,w2,a,y` schema. The seed is not part of the file and is
/// supplied by the caller.
inline Dataset dataset_from_csv(std::string_view text, std::uint64_t seed = 0)
{
    static const std::string names[] = {"w1", "w2", "a", "y"};
    std::vector<double> w1, w2, a, y;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const auto line = csv::trim(text.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != kDatasetHeader) {
                throw CsvError(line_no, "", "expected header '" + std::string(kDatasetHeader) + "'");
            }
            header_seen = true;
            continue;
        }
        const auto fields = csv::split(line);
        if (fields.size() != 4) {
            throw CsvError(line_no, "", "expected 4 fields, got " + std::to_string(fields.size()));
        }
        w1.push_back(csv::parse_double(fields[0], line_no, names[0]));
        w2.push_back(csv::parse_double(fields[1], line_no, names[1]));
        for (int k = 2; k < 4; ++k) {
            const auto f = csv::trim(fields[k]);
            if (f != "0" && f != "1") {
                throw CsvError(line_no, names[k], "expected 0 or 1, got '" + std::string(f) + "'");
            }
            (k == 2 ? a : y).push_back(f == "1" ? 1.0 : 0.0);
        }
    }
    if (!header_seen) throw CsvError(line_no, "", "empty input");
    if (w1.empty()) throw CsvError(line_no, "", "no data rows");
    const auto n = static_cast<Eigen::Index>(w1.size());
    Eigen::MatrixXd w(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        w(i, 0) = w1[i];
        w(i, 1) = w2[i];
    }
    return Dataset(std::move(w), Eigen::Map<Eigen::VectorXd>(a.data(), n),
                   Eigen::Map<Eigen::VectorXd>(y.data(), n), seed);
}

} // namespace sptmle
