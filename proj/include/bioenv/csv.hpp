#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bioenv/errors.hpp"

namespace bioenv {

/// Raw CSV contents: one header row plus string cells. Comma separator,
/// UTF-8, decimal point; no quoting support (the sensor formats never quote).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index for an exact header name, if present.
    std::optional<std::size_t> column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        return std::nullopt;
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.emplace_back(line.substr(start));
            break;
        }
        cells.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    for (std::string& c : cells) {
        while (!c.empty() && (c.back() == '\r' || c.back() == ' ' || c.back() == '\t')) c.pop_back();
        std::size_t lead = 0;
        while (lead < c.size() && (c[lead] == ' ' || c[lead] == '\t')) ++lead;
        if (lead) c.erase(0, lead);
    }
    return cells;
}

} // namespace detail

inline CsvTable read_csv_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV file: " + path.string());
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty CSV file: " + path.string());
    table.header = detail::split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        table.rows.push_back(detail::split_csv_line(line));
    }
    return table;
}

/// Parses a numeric cell. Empty cells and the usual null spellings come back
/// as NaN so list-wise deletion can drop the row later; anything else that
/// fails to parse returns nullopt (structurally bad row).
inline std::optional<double> parse_csv_number(std::string_view cell) {
    if (cell.empty() || cell == "null" || cell == "NULL" || cell == "NA" ||
        cell == "nan" || cell == "NaN") {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) return std::nullopt;
    return value;
}

} // namespace bioenv
