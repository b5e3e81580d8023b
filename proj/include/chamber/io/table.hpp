#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace chamber::io {

/// Tab-separated table with a header row. All report and metadata files use
/// this format; floats are written with fixed precision so files are
/// byte-reproducible.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const; // -1 when absent
    const std::string& at(size_t row, const std::string& col) const;

    void write(const std::string& path) const;
    static Table read(const std::string& path);
};

std::string format_double(double v, int precision = 6);

} // namespace chamber::io
