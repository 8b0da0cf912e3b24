#include "report.hpp"

#include <cstdio>
#include <cstdlib>

#include "common.hpp"

namespace masklm {

namespace {

void check_cell(const std::string& text) {
    if (text.find('\t') != std::string::npos || text.find('\n') != std::string::npos) {
        fail(ErrKind::invalid_argument, "report entries may not contain tabs or newlines: '" + text + "'");
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string format_float(float v) {
    char buf[64];
    for (int prec = 6; prec <= 9; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, double(v));
        if (std::strtof(buf, nullptr) == v) break;
    }
    return buf;
}

void Report::put(const std::string& key, const std::string& value) {
    check_cell(key);
    check_cell(value);
    fields.emplace_back(key, value);
}

void Report::put(const std::string& key, const char* value) { put(key, std::string(value)); }

void Report::put(const std::string& key, int64_t value) { put(key, std::to_string(value)); }

void Report::put(const std::string& key, uint64_t value) { put(key, std::to_string(value)); }

void Report::put(const std::string& key, double value) { put(key, format_double(value)); }

Report::Table& Report::add_table(const std::string& name, std::vector<std::string> columns) {
    check_cell(name);
    for (const auto& c : columns) check_cell(c);
    tables.push_back(Table{name, std::move(columns), {}});
    return tables.back();
}

std::string Report::render() const {
    std::string out;
    for (const auto& [key, value] : fields) {
        out += key;
        out += '\t';
        out += value;
        out += '\n';
    }
    for (const auto& table : tables) {
        out += "\n#table ";
        out += table.name;
        out += '\n';
        for (size_t c = 0; c < table.columns.size(); ++c) {
            if (c) out += '\t';
            out += table.columns[c];
        }
        out += '\n';
        for (const auto& row : table.rows) {
            if (row.size() != table.columns.size()) {
                fail(ErrKind::internal, "table '" + table.name + "' row width mismatch");
            }
            for (size_t c = 0; c < row.size(); ++c) {
                check_cell(row[c]);
                if (c) out += '\t';
                out += row[c];
            }
            out += '\n';
        }
    }
    return out;
}

}  // namespace masklm
