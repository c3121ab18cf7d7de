#include "odnet/csv.hpp"

#include "odnet/error.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace odnet::csv {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

const std::string& Row::text(std::size_t i) const {
    if (i >= cells_.size()) throw ParseError(context() + ": expected at least " + std::to_string(i + 1) + " columns");
    return cells_[i];
}

double Row::number(std::size_t i) const {
    const std::string& s = text(i);
    if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(context() + ": column " + std::to_string(i + 1) + " is not a number: '" + s + "'");
    }
}

int Row::integer(std::size_t i) const {
    const std::string& s = text(i);
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(context() + ": column " + std::to_string(i + 1) + " is not an integer: '" + s + "'");
    }
}

Reader::Reader(std::istream& in) : in_(in) {}

void Reader::read_preamble() {
    if (preamble_done_) return;
    preamble_done_ = true;
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        const std::string t = trim(line);
        if (t.empty()) continue;
        if (t.front() == '#') {
            std::istringstream ss(t.substr(1));
            std::string tok;
            while (ss >> tok) {
                const auto eq = tok.find('=');
                if (eq != std::string::npos) meta_[tok.substr(0, eq)] = tok.substr(eq + 1);
            }
            continue;
        }
        columns_ = split(t);
        return;
    }
    throw ParseError("missing column header");
}

const std::map<std::string, std::string>& Reader::header_values() {
    read_preamble();
    return meta_;
}

const std::vector<std::string>& Reader::columns() {
    read_preamble();
    return columns_;
}

void Reader::expect_columns(std::initializer_list<const char*> names) {
    read_preamble();
    std::size_t k = 0;
    for (const char* n : names) {
        if (k >= columns_.size() || columns_[k] != n)
            throw ParseError("line " + std::to_string(line_) + ": expected column '" + n + "' at position " +
                             std::to_string(k + 1));
        ++k;
    }
}

std::optional<Row> Reader::next() {
    read_preamble();
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        return Row(split(t), line_);
    }
    return std::nullopt;
}

}  // namespace odnet::csv
