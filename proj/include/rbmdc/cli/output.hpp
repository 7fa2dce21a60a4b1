#pragma once

#include "rbmdc/core/types.hpp"

#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace rbmdc::cli {

/// Shortest round-trip text for a double.
inline std::string num(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string num(long v) { return std::to_string(v); }
inline std::string num(std::uint64_t v) { return std::to_string(v); }

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
}

/// CSV file whose first line is "# config_hash=<hex>" followed by a header row.
class CsvFile {
public:
    CsvFile(const std::filesystem::path& path, const std::string& hash, const std::vector<std::string>& columns)
        : path_(path), columns_(columns.size()) {
        if (path.has_parent_path()) ensure_directory(path.parent_path());
        out_.open(path, std::ios::binary | std::ios::trunc);
        if (!out_) throw ConfigError("cannot write '" + path.string() + "'");
        out_ << "# config_hash=" << hash << '\n';
        write(columns);
    }

    void row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_) throw std::logic_error("CSV row width does not match the header");
        write(cells);
    }

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }

private:
    void write(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << '\n';
        if (!out_) throw ConfigError("write failed for '" + path_.string() + "'");
    }

    std::filesystem::path path_;
    std::size_t columns_;
    std::ofstream out_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) ensure_directory(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
}

inline nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace rbmdc::cli
