#include "coalflow/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace coalflow::report {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::string cell(const nlohmann::json& v) {
    if (v.is_number_float()) return format_double(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

// Columns of the ladder table: "ladder" plus every same-length array field.
std::vector<std::string> row_columns(const nlohmann::json& rep) {
    std::vector<std::string> cols;
    if (!rep.contains("ladder")) return cols;
    std::size_t n = rep["ladder"].size();
    cols.push_back("ladder");
    for (const char* key : {"p_hat", "stderr", "ci_lo", "ci_hi", "gap", "bound", "msd", "msd_stderr"})
        if (rep.contains(key) && rep[key].is_array() && rep[key].size() == n) cols.emplace_back(key);
    return cols;
}

}  // namespace

std::string to_csv(const nlohmann::json& rep) {
    std::ostringstream out;
    auto cols = row_columns(rep);
    if (cols.empty()) return "";
    for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cols[c];
    out << "\n";
    std::size_t n = rep["ladder"].size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < cols.size(); ++c) out << (c ? "," : "") << cell(rep[cols[c]][i]);
        out << "\n";
    }
    return out.str();
}

std::string render_table(const nlohmann::json& rep) {
    std::ostringstream out;
    out << "study: " << rep.value("study", "?") << "   model: " << rep.value("model", "?")
        << "   samples: " << rep.value("samples", 0) << "   seed: " << rep.value("seed", 0ull) << "\n";
    if (rep.contains("monotone_flag")) out << "monotone: " << (rep["monotone_flag"].get<bool>() ? "yes" : "VIOLATED") << "\n";
    if (rep.contains("c_hat")) out << "c_hat: " << cell(rep["c_hat"]) << "\n";
    if (rep.contains("reference_p_hat"))
        out << "reference: " << cell(rep["reference_p_hat"]) << " +- " << cell(rep["reference_stderr"]) << "\n";
    if (rep.contains("slope")) out << "slope: " << cell(rep["slope"]) << "\n";

    auto cols = row_columns(rep);
    if (cols.empty()) return out.str();
    std::vector<std::vector<std::string>> cells;
    cells.push_back(cols);
    std::size_t n = rep["ladder"].size();
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> row;
        for (const auto& c : cols) {
            const auto& v = rep[c][i];
            if (v.is_number_float()) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%.6g", v.get<double>());
                row.emplace_back(buf);
            } else {
                row.push_back(cell(v));
            }
        }
        cells.push_back(std::move(row));
    }
    std::vector<std::size_t> width(cols.size(), 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out << row[c];
            if (c + 1 < row.size()) out << std::string(width[c] - row[c].size() + 2, ' ');
        }
        out << "\n";
    }
    return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << content;
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    return nlohmann::json::parse(f);
}

}  // namespace coalflow::report
