#pragma once

// Internal io helpers shared by the core sources. Not installed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stackelgrad/errors.hpp"

namespace stackelgrad::detail {

// Shortest round-trippable decimal form; all persisted floats go through this
// so rerun outputs are byte-identical.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("cannot open for write: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ContractError("short write: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open for read: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ContractError("cannot create directory " + dir + ": " + ec.message());
}

// Minimal CSV: callers own the column layout; fields here are pre-rendered.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) {
        append_row(header);
    }

    void append_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) body_ += ',';
            body_ += fields[i];
        }
        body_ += '\n';
    }

    const std::string& str() const { return body_; }

    void save(const std::string& path) const { write_file(path, body_); }

private:
    std::string body_;
};

}  // namespace stackelgrad::detail
