#include "qpsim/csv.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "qpsim/errors.hpp"

namespace qpsim::io {

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void Table::add_header(const std::string& k, double v) { header.emplace_back(k, format_number(v)); }

void Table::add_row(std::vector<double> r) {
    if (r.size() != columns.size()) throw RangeError("row width does not match the column count");
    rows.push_back(std::move(r));
}

std::vector<double> Table::column(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j] != name) continue;
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[j]);
        return out;
    }
    throw RangeError("no column '" + name + "'");
}

std::string Table::header_value(const std::string& key) const {
    for (const auto& [k, v] : header)
        if (k == key) return v;
    return {};
}

std::string to_csv(const Table& t) {
    std::ostringstream os;
    for (const auto& [k, v] : t.header) os << "# " << k << " = " << v << "\n";
    for (std::size_t j = 0; j < t.columns.size(); ++j) os << (j ? "," : "") << t.columns[j];
    os << "\n";
    for (const auto& r : t.rows) {
        for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "," : "") << format_number(r[j]);
        os << "\n";
    }
    return os.str();
}

void write_csv(const Table& t, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw IOError("cannot write '" + path + "'");
    os << to_csv(t);
    if (!os) throw IOError("write to '" + path + "' failed");
}

Table read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOError("cannot read '" + path + "'");
    Table t;
    bool have_cols = false;
    int lineno = 0;
    for (std::string line; std::getline(in, line);) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find(" = ");
            if (eq != std::string::npos && line.size() > 2) t.header.emplace_back(line.substr(2, eq - 2), line.substr(eq + 3));
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
        if (!have_cols) {
            t.columns = cells;
            have_cols = true;
            continue;
        }
        if (cells.size() != t.columns.size()) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.columns.size()) +
                              " fields");
        }
        std::vector<double> r;
        for (const auto& c : cells) {
            try {
                r.push_back(std::stod(c));
            } catch (const std::exception&) {
                throw FormatError(path + ":" + std::to_string(lineno) + ": '" + c + "' is not a number");
            }
        }
        t.rows.push_back(std::move(r));
    }
    if (!have_cols) throw FormatError(path + ": no column header");
    return t;
}

} // namespace qpsim::io
