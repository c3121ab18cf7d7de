#pragma once

// Minimal comma-separated reader shared by the file formats.
// Lines starting with '#' before the column header carry "key=value" metadata.

#include <initializer_list>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace odnet::csv {

std::vector<std::string> split(const std::string& line, char sep = ',');

class Row {
public:
    Row(std::vector<std::string> cells, std::size_t line) : cells_(std::move(cells)), line_(line) {}

    std::size_t size() const { return cells_.size(); }
    const std::string& text(std::size_t i) const;
    double number(std::size_t i) const;  // accepts "NA" as NaN
    int integer(std::size_t i) const;
    std::string context() const { return "line " + std::to_string(line_); }

private:
    std::vector<std::string> cells_;
    std::size_t line_;
};

class Reader {
public:
    explicit Reader(std::istream& in);

    // Metadata from leading '#' lines (consumed up to the column header).
    const std::map<std::string, std::string>& header_values();
    const std::vector<std::string>& columns();
    void expect_columns(std::initializer_list<const char*> names);
    std::optional<Row> next();

private:
    void read_preamble();

    std::istream& in_;
    bool preamble_done_ = false;
    std::size_t line_ = 0;
    std::map<std::string, std::string> meta_;
    std::vector<std::string> columns_;
};

}  // namespace odnet::csv
