#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace fambench {

// Shortest round-trip decimal representation. Report files must be
// byte-stable and reloadable without loss, so all floating-point output
// goes through here.
inline std::string fmt_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::runtime_error("fmt_double: to_chars failed");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error("parse_double: bad number '" + std::string(s) + "'");
    return v;
}

inline long long parse_int(std::string_view s) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw std::runtime_error("parse_int: bad integer '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find('\t', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

// Tab-separated table with a single header row.
struct TextTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string to_string() const {
        std::ostringstream os;
        for (std::size_t c = 0; c < header.size(); ++c)
            os << (c ? "\t" : "") << header[c];
        os << '\n';
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c)
                os << (c ? "\t" : "") << row[c];
            os << '\n';
        }
        return os.str();
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open for write: " + path.string());
        f << to_string();
    }

    static TextTable load(const std::filesystem::path& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open for read: " + path.string());
        TextTable t;
        std::string line;
        if (!std::getline(f, line)) throw std::runtime_error("empty table file: " + path.string());
        t.header = split_tabs(line);
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            auto cells = split_tabs(line);
            if (cells.size() != t.header.size())
                throw std::runtime_error("ragged row in " + path.string());
            t.rows.push_back(std::move(cells));
        }
        return t;
    }

    std::size_t column(std::string_view name) const {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return c;
        throw std::runtime_error("missing column '" + std::string(name) + "'");
    }
};

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f << content;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for read: " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace fambench
