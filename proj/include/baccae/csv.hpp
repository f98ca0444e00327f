#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace baccae::csv {

// Plain comma-separated tables: no quoting, header row required.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;  // 1-based source line per row
    std::filesystem::path source;

    std::size_t column(std::string_view name) const;
};

std::vector<std::string> split(std::string_view line, char sep = ',');
std::string_view trim(std::string_view s);

// Reads a table; blank lines are skipped and every row must match the header width.
Table read(const std::filesystem::path& path);

// Throws Error(Parse) naming the file and line on failure.
long long parse_int(std::string_view text, const Table& table, std::size_t row);
double parse_double(std::string_view text, const Table& table, std::size_t row);

// Shortest text that round-trips a double exactly.
std::string format_double(double v);

}  // namespace baccae::csv
