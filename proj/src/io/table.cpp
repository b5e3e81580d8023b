#include "chamber/io/table.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace chamber::io {

int Table::column(const std::string& name) const {
    for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return int(i);
    return -1;
}

const std::string& Table::at(size_t row, const std::string& col) const {
    const int c = column(col);
    if (c < 0) throw std::out_of_range("table has no column '" + col + "'");
    return rows.at(row).at(size_t(c));
}

void Table::write(const std::string& path) const {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write table: " + path);
    for (size_t i = 0; i < header.size(); ++i) os << (i ? "\t" : "") << header[i];
    os << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) os << (i ? "\t" : "") << row[i];
        os << "\n";
    }
    if (!os) throw std::runtime_error("table write failed: " + path);
}

Table Table::read(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read table: " + path);
    Table t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, '\t')) out.push_back(cell);
        return out;
    };
    if (std::getline(is, line)) t.header = split(line);
    while (std::getline(is, line))
        if (!line.empty()) t.rows.push_back(split(line));
    return t;
}

std::string format_double(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

} // namespace chamber::io
