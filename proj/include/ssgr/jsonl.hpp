#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssgr/errors.hpp"

namespace ssgr {

inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open '" + path + "'");
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": bad JSON line: " + e.what());
        }
    }
    return out;
}

inline void write_jsonl(const std::string& path, const std::vector<nlohmann::json>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    for (const auto& r : rows) out << r.dump() << '\n';
    if (!out) throw IoFailure("write failed for '" + path + "'");
}

/// Token corpora on disk: one JSON array of integers per line.
inline std::vector<std::vector<int>> read_token_sequences(const std::string& path) {
    std::vector<std::vector<int>> out;
    for (const auto& row : read_jsonl(path)) {
        if (!row.is_array()) throw Error(path + ": expected a JSON array per line");
        out.push_back(row.get<std::vector<int>>());
    }
    return out;
}

inline void write_token_sequences(const std::string& path,
                                  const std::vector<std::vector<int>>& seqs) {
    std::vector<nlohmann::json> rows;
    rows.reserve(seqs.size());
    for (const auto& s : seqs) rows.emplace_back(s);
    write_jsonl(path, rows);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open '" + path + "'");
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoFailure("write failed for '" + path + "'");
}

} // namespace ssgr
