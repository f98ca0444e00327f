#include "baccae/csv.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "baccae/error.hpp"

namespace baccae::csv {

std::size_t Table::column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw Error(ErrorKind::Parse, source.string() + ": missing column '" + std::string(name) + "'");
    }
    return static_cast<std::size_t>(it - header.begin());
}

std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.emplace_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

Table read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    Table table;
    table.source = path;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split(line);
        if (table.header.empty()) {
            table.header = std::move(fields);
            continue;
        }
        if (fields.size() != table.header.size()) {
            throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                              std::to_string(table.header.size()) + " fields, got " +
                                              std::to_string(fields.size()));
        }
        table.rows.push_back(std::move(fields));
        table.line_numbers.push_back(line_no);
    }
    if (table.header.empty()) throw Error(ErrorKind::Parse, path.string() + ": empty file");
    return table;
}

namespace {

[[noreturn]] void bad_value(std::string_view text, const char* what, const Table& table, std::size_t row) {
    throw Error(ErrorKind::Parse, table.source.string() + ":" + std::to_string(table.line_numbers.at(row)) +
                                      ": invalid " + what + " '" + std::string(text) + "'");
}

}  // namespace

long long parse_int(std::string_view text, const Table& table, std::size_t row) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        bad_value(text, "integer", table, row);
    }
    return v;
}

double parse_double(std::string_view text, const Table& table, std::size_t row) {
    double v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        bad_value(text, "number", table, row);
    }
    return v;
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace baccae::csv
