#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "protopath/core/error.hpp"

namespace protopath::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, std::string_view bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write " + path.string());
    f.write(bytes.data(), std::streamsize(bytes.size()));
    if (!f) throw InputError("write failed for " + path.string());
}

/// Shortest text that parses back to the same double; "nan", "inf", "-inf"
/// for non-finite values.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline std::string format_number(float v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <class T>
T parse_number(std::string_view s, const std::string& what) {
    T v{};
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (b != e && *b == '+') ++b;
    auto [ptr, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || ptr != e || b == e) throw InputError(what + ": cannot parse '" + std::string(s) + "'");
    return v;
}

/// Parsed CSV. Row 0 of the file is the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InputError("missing CSV column '" + name + "'");
    }

    void require_header(const std::vector<std::string>& expected, const std::string& what) const {
        if (header.size() < expected.size() || !std::equal(expected.begin(), expected.end(), header.begin())) {
            std::string want;
            for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
            throw InputError(what + ": header must start with " + want);
        }
    }
};

inline bool needs_quotes(std::string_view s) { return s.find_first_of(",\"\r\n") != std::string_view::npos; }

inline std::string csv_field(std::string_view s) {
    if (!needs_quotes(s)) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += csv_field(fields[i]);
    }
    return out + "\n";
}

inline std::string write_csv(const CsvTable& t) {
    std::string out = csv_row(t.header);
    for (const auto& r : t.rows) out += csv_row(r);
    return out;
}

/// RFC 4180 style: quoted fields may hold commas, quotes and newlines; CRLF is
/// accepted. Every row must have as many fields as the header.
inline CsvTable parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, field_started = false;
    std::size_t line = 1;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        records.push_back(std::move(row));
        row.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        if (c == '"' && !field_started && field.empty()) {
            quoted = field_started = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_row();
            ++line;
        } else {
            field += c;
            field_started = true;
        }
    }
    if (quoted) throw ParseError("unterminated quoted field", line);
    if (field_started || !field.empty() || !row.empty()) end_row();

    CsvTable t;
    if (records.empty()) throw InputError("CSV is empty");
    t.header = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() == 1 && records[r][0].empty()) continue; // blank line
        if (records[r].size() != t.header.size())
            throw ParseError("expected " + std::to_string(t.header.size()) + " fields, found " +
                                 std::to_string(records[r].size()),
                             r + 1);
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

inline CsvTable read_csv(const fs::path& path) {
    try {
        return parse_csv(read_file(path));
    } catch (const ParseError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

} // namespace protopath::io
