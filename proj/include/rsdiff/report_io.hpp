#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsdiff/error_analysis.hpp"
#include "rsdiff/errors.hpp"

namespace rsdiff {

namespace repdetail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

// Write-to-temp-then-rename so readers never observe partial files.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("cannot open " + tmp.string());
        os << content;
        if (!os) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace repdetail

inline std::string report_csv(const ErrorReport& r) {
    std::ostringstream os;
    os << "t,modular,input,cumulative,mu,mu_defined\n";
    for (int t = 1; t <= r.T; ++t) {
        const std::size_t i = static_cast<std::size_t>(t - 1);
        os << t << "," << repdetail::fmt(r.modular[i]) << "," << repdetail::fmt(r.input_error[i])
           << "," << repdetail::fmt(r.cumulative[i]) << "," << repdetail::fmt(r.mu[i]) << ","
           << (r.mu_defined[i] ? 1 : 0) << "\n";
    }
    return os.str();
}

// Writes the CSV plus a JSON sidecar (same stem, .json) with the metric id,
// seed, and sample counts.
inline void write_report(const std::filesystem::path& csv_path, const ErrorReport& r) {
    repdetail::atomic_write(csv_path, report_csv(r));
    nlohmann::json j;
    j["metric"] = to_string(r.metric);
    j["seed"] = r.seed;
    j["samples_per_t"] = r.samples_per_t;
    j["items"] = r.items;
    j["T"] = r.T;
    j["mode"] = r.mode_label;
    std::filesystem::path side = csv_path;
    side.replace_extension(".json");
    repdetail::atomic_write(side, j.dump(2) + "\n");
}

inline ErrorReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("read_report_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != "t,modular,input,cumulative,mu,mu_defined")
        throw ParseError(path.string() + ": unexpected report header '" + line + "'");
    ErrorReport r;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 6)
            throw ParseError(path.string() + ": expected 6 columns, got " +
                             std::to_string(cells.size()));
        r.modular.push_back(std::stod(cells[1]));
        r.input_error.push_back(std::stod(cells[2]));
        r.cumulative.push_back(std::stod(cells[3]));
        r.mu.push_back(std::stod(cells[4]));
        r.mu_defined.push_back(cells[5] == "1");
    }
    r.T = static_cast<int>(r.modular.size());
    return r;
}

// Per-iteration differences (a - b) between two reports, for side-by-side
// comparisons of training modes.
inline std::string compare_reports_csv(const ErrorReport& a, const ErrorReport& b) {
    if (a.T != b.T)
        throw std::invalid_argument("compare_reports: iteration counts differ (" +
                                    std::to_string(a.T) + " vs " + std::to_string(b.T) + ")");
    std::ostringstream os;
    os << "t,d_modular,d_input,d_cumulative,d_mu,mu_defined_both\n";
    for (int t = 1; t <= a.T; ++t) {
        const std::size_t i = static_cast<std::size_t>(t - 1);
        const bool both = a.mu_defined[i] && b.mu_defined[i];
        os << t << "," << repdetail::fmt(a.modular[i] - b.modular[i]) << ","
           << repdetail::fmt(a.input_error[i] - b.input_error[i]) << ","
           << repdetail::fmt(a.cumulative[i] - b.cumulative[i]) << ","
           << repdetail::fmt(both ? a.mu[i] - b.mu[i] : 0.0) << "," << (both ? 1 : 0) << "\n";
    }
    return os.str();
}

}  // namespace rsdiff
