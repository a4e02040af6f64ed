// csv.hpp: CSV with a "# key = value" header block.

#pragma once

#include <string>
#include <utility>
#include <vector>

namespace qpsim::io {

struct Table {
    std::vector<std::pair<std::string, std::string>> header;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    void add_header(const std::string& k, const std::string& v) { header.emplace_back(k, v); }
    void add_header(const std::string& k, double v);
    void add_row(std::vector<double> r);
    /// Column by name. Throws RangeError.
    std::vector<double> column(const std::string& name) const;
    /// Header value by key, empty when absent.
    std::string header_value(const std::string& key) const;
};

void write_csv(const Table& t, const std::string& path);
std::string to_csv(const Table& t);
Table read_csv(const std::string& path);

std::string format_number(double v);

} // namespace qpsim::io
