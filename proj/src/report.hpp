#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace masklm {

// Self-describing run artifact: ordered key/value header plus named TSV
// blocks. Rendering is deterministic, so a seed-fixed rerun produces a
// byte-identical file. Timing never goes in here; it belongs on the console.
struct Report {
    struct Table {
        std::string name;
        std::vector<std::string> columns;
        std::vector<std::vector<std::string>> rows;
    };

    std::vector<std::pair<std::string, std::string>> fields;
    std::vector<Table> tables;

    void put(const std::string& key, const std::string& value);
    void put(const std::string& key, const char* value);
    void put(const std::string& key, int64_t value);
    void put(const std::string& key, uint64_t value);
    void put(const std::string& key, double value);

    Table& add_table(const std::string& name, std::vector<std::string> columns);

    std::string render() const;
};

// Shortest form that survives a text roundtrip unchanged for our metrics.
std::string format_double(double v);

// Same, but for float-valued knobs: widening 0.003f through the double
// path would print stray digits ("0.003000000026"), so stop at the first
// precision that reads back as the same float.
std::string format_float(float v);

}  // namespace masklm
