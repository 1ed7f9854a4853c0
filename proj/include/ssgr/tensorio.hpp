#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <regex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ssgr/errors.hpp"
#include "ssgr/fp16.hpp"
#include "ssgr/matrix.hpp"

namespace ssgr::tensorio {

enum class Dtype { f16, f32, f64 };

inline std::size_t dtype_size(Dtype d) {
    switch (d) {
        case Dtype::f16: return 2;
        case Dtype::f32: return 4;
        case Dtype::f64: return 8;
    }
    return 0;
}

inline const char* dtype_name(Dtype d) {
    switch (d) {
        case Dtype::f16: return "F16";
        case Dtype::f32: return "F32";
        case Dtype::f64: return "F64";
    }
    return "?";
}

inline Dtype dtype_from_name(const std::string& s) {
    if (s == "F16") return Dtype::f16;
    if (s == "F32") return Dtype::f32;
    if (s == "F64") return Dtype::f64;
    throw MalformedHeader("unsupported dtype '" + s + "'");
}

struct TensorRecord {
    std::string name;
    Dtype dtype = Dtype::f32;
    std::vector<std::int64_t> shape;
    std::int64_t byte_offset = 0; // relative to payload start
    std::int64_t byte_length = 0;

    std::int64_t element_count() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

namespace detail {

inline std::vector<double> bytes_to_f64(const std::vector<std::uint8_t>& raw, Dtype dtype) {
    const std::size_t esz = dtype_size(dtype);
    const std::size_t n = raw.size() / esz;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* p = raw.data() + i * esz;
        switch (dtype) {
            case Dtype::f16: {
                std::uint16_t h;
                std::memcpy(&h, p, 2);
                out[i] = fp16_to_double(h);
                break;
            }
            case Dtype::f32: {
                float f;
                std::memcpy(&f, p, 4);
                out[i] = static_cast<double>(f);
                break;
            }
            case Dtype::f64: {
                std::memcpy(&out[i], p, 8);
                break;
            }
        }
    }
    return out;
}

inline std::vector<std::uint8_t> f64_to_bytes(const std::vector<double>& vals, Dtype dtype) {
    const std::size_t esz = dtype_size(dtype);
    std::vector<std::uint8_t> out(vals.size() * esz);
    for (std::size_t i = 0; i < vals.size(); ++i) {
        std::uint8_t* p = out.data() + i * esz;
        switch (dtype) {
            case Dtype::f16: {
                const std::uint16_t h = double_to_fp16(vals[i]);
                std::memcpy(p, &h, 2);
                break;
            }
            case Dtype::f32: {
                const float f = static_cast<float>(vals[i]);
                std::memcpy(p, &f, 4);
                break;
            }
            case Dtype::f64: {
                std::memcpy(p, &vals[i], 8);
                break;
            }
        }
    }
    return out;
}

inline std::regex glob_to_regex(const std::string& pattern) {
    std::string rx;
    rx.reserve(pattern.size() * 2);
    for (char c : pattern) {
        switch (c) {
            case '*': rx += ".*"; break;
            case '?': rx += '.'; break;
            case '.': case '+': case '(': case ')': case '[': case ']':
            case '{': case '}': case '^': case '$': case '|': case '\\':
                rx += '\\';
                rx += c;
                break;
            default: rx += c;
        }
    }
    return std::regex(rx);
}

} // namespace detail

/// Single-file tensor container: an 8-byte little-endian header length,
/// a JSON header mapping tensor name -> {dtype, shape, data_offsets}
/// (string-to-string metadata under "__metadata__"), then the raw
/// little-endian payload. Tensor payloads are read lazily; modified or
/// added tensors are staged in memory until write().
class TensorArchive {
public:
    TensorArchive() = default;

    static TensorArchive read(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoFailure("cannot open '" + path + "'");
        in.seekg(0, std::ios::end);
        const std::int64_t file_size = static_cast<std::int64_t>(in.tellg());
        in.seekg(0);
        if (file_size < 8) throw MalformedHeader("file shorter than length prefix");

        std::uint64_t header_len = 0;
        std::uint8_t lenbuf[8];
        in.read(reinterpret_cast<char*>(lenbuf), 8);
        for (int i = 7; i >= 0; --i) header_len = (header_len << 8) | lenbuf[i];
        if (header_len > static_cast<std::uint64_t>(file_size - 8))
            throw MalformedHeader("declared header length exceeds file size");

        std::string header(header_len, '\0');
        in.read(header.data(), static_cast<std::streamsize>(header_len));
        if (!in) throw IoFailure("short read on header");

        TensorArchive a;
        a.source_path_ = path;
        a.payload_offset_ = 8 + static_cast<std::int64_t>(header_len);
        a.payload_size_ = file_size - a.payload_offset_;
        a.parse_header(header);
        return a;
    }

    void write(const std::string& path) const {
        nlohmann::ordered_json header;
        if (!metadata_.empty()) {
            nlohmann::ordered_json meta;
            for (const auto& [k, v] : metadata_) meta[k] = v; // std::map order: sorted keys
            header["__metadata__"] = std::move(meta);
        }
        std::int64_t offset = 0;
        for (const auto& r : records_) {
            nlohmann::ordered_json e;
            e["dtype"] = dtype_name(r.dtype);
            e["shape"] = r.shape;
            e["data_offsets"] = {offset, offset + r.byte_length};
            header[r.name] = std::move(e);
            offset += r.byte_length;
        }
        const std::string header_str = header.dump();

        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoFailure("cannot open '" + path + "' for writing");
        std::uint8_t lenbuf[8];
        std::uint64_t n = header_str.size();
        for (int i = 0; i < 8; ++i) {
            lenbuf[i] = static_cast<std::uint8_t>(n & 0xff);
            n >>= 8;
        }
        out.write(reinterpret_cast<const char*>(lenbuf), 8);
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const auto& r : records_) {
            const std::vector<std::uint8_t> raw = raw_bytes(r.name);
            out.write(reinterpret_cast<const char*>(raw.data()),
                      static_cast<std::streamsize>(raw.size()));
        }
        if (!out) throw IoFailure("write failed for '" + path + "'");
    }

    const std::vector<TensorRecord>& records() const { return records_; }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    const TensorRecord& record(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw NoMatches("no tensor named '" + name + "'");
        return records_[it->second];
    }

    std::map<std::string, std::string>& metadata() { return metadata_; }
    const std::map<std::string, std::string>& metadata() const { return metadata_; }

    std::vector<std::uint8_t> raw_bytes(const std::string& name) const {
        const TensorRecord& r = record(name);
        auto st = staged_.find(name);
        if (st != staged_.end()) return st->second;
        std::ifstream in(source_path_, std::ios::binary);
        if (!in) throw IoFailure("cannot reopen '" + source_path_ + "'");
        in.seekg(payload_offset_ + r.byte_offset);
        std::vector<std::uint8_t> raw(static_cast<std::size_t>(r.byte_length));
        in.read(reinterpret_cast<char*>(raw.data()), r.byte_length);
        if (!in) throw IoFailure("short read on tensor '" + name + "'");
        return raw;
    }

    std::vector<double> tensor_f64(const std::string& name) const {
        return detail::bytes_to_f64(raw_bytes(name), record(name).dtype);
    }

    /// Rank-2 tensor widened to a 64-bit DenseMatrix.
    DenseMatrix matrix(const std::string& name) const {
        const TensorRecord& r = record(name);
        if (r.shape.size() != 2) throw DimMismatch("tensor '" + name + "' is not rank-2");
        return DenseMatrix(r.shape[0], r.shape[1], tensor_f64(name));
    }

    /// Add or replace a tensor; values are narrowed to `dtype` on write.
    void put(const std::string& name, Dtype dtype, std::vector<std::int64_t> shape,
             const std::vector<double>& values) {
        std::int64_t count = 1;
        for (auto d : shape) {
            if (d <= 0) throw DimMismatch("tensor shape entries must be positive");
            count *= d;
        }
        if (count != static_cast<std::int64_t>(values.size()))
            throw DimMismatch("value count does not match shape for '" + name + "'");
        TensorRecord r;
        r.name = name;
        r.dtype = dtype;
        r.shape = std::move(shape);
        r.byte_length = count * static_cast<std::int64_t>(dtype_size(dtype));
        staged_[name] = detail::f64_to_bytes(values, dtype);
        auto it = index_.find(name);
        if (it == index_.end()) {
            index_[name] = records_.size();
            records_.push_back(std::move(r));
        } else {
            r.byte_offset = records_[it->second].byte_offset;
            records_[it->second] = std::move(r);
        }
    }

    void put_matrix(const std::string& name, Dtype dtype, const DenseMatrix& m) {
        put(name, dtype, {m.rows(), m.cols()}, m.data());
    }

private:
    void parse_header(const std::string& header) {
        using json = nlohmann::json;
        // Track top-level keys during parsing; json objects silently drop
        // duplicates, and duplicate tensor names must be rejected.
        std::vector<std::string> keys_seen;
        json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
            if (event == json::parse_event_t::key && depth == 1)
                keys_seen.push_back(parsed.get<std::string>());
            return true;
        };
        json doc;
        try {
            doc = json::parse(header, cb);
        } catch (const json::exception& e) {
            throw MalformedHeader(std::string("header is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw MalformedHeader("header root must be a JSON object");

        {
            std::map<std::string, int> counts;
            for (const auto& k : keys_seen)
                if (++counts[k] > 1) throw DuplicateName("duplicate tensor name '" + k + "'");
        }

        for (const auto& key : keys_seen) {
            if (key == "__metadata__") {
                for (const auto& [mk, mv] : doc.at(key).items()) {
                    if (!mv.is_string()) throw MalformedHeader("metadata values must be strings");
                    metadata_[mk] = mv.get<std::string>();
                }
                continue;
            }
            const json& e = doc.at(key);
            if (!e.is_object() || !e.contains("dtype") || !e.contains("shape") ||
                !e.contains("data_offsets"))
                throw MalformedHeader("record '" + key + "' missing required fields");
            TensorRecord r;
            r.name = key;
            r.dtype = dtype_from_name(e.at("dtype").get<std::string>());
            r.shape = e.at("shape").get<std::vector<std::int64_t>>();
            for (auto d : r.shape)
                if (d <= 0) throw MalformedHeader("non-positive shape entry in '" + key + "'");
            const auto offs = e.at("data_offsets").get<std::vector<std::int64_t>>();
            if (offs.size() != 2 || offs[0] < 0 || offs[1] < offs[0])
                throw MalformedHeader("bad data_offsets in '" + key + "'");
            r.byte_offset = offs[0];
            r.byte_length = offs[1] - offs[0];
            if (r.byte_length != r.element_count() * static_cast<std::int64_t>(dtype_size(r.dtype)))
                throw MalformedHeader("byte length does not match shape*dtype in '" + key + "'");
            if (offs[1] > payload_size_)
                throw BoundsViolation("record '" + key + "' extends past end of payload");
            index_[r.name] = records_.size();
            records_.push_back(std::move(r));
        }

        // Regions must not overlap.
        std::vector<std::pair<std::int64_t, std::int64_t>> spans;
        spans.reserve(records_.size());
        for (const auto& r : records_) spans.emplace_back(r.byte_offset, r.byte_offset + r.byte_length);
        std::sort(spans.begin(), spans.end());
        for (std::size_t i = 1; i < spans.size(); ++i)
            if (spans[i].first < spans[i - 1].second)
                throw BoundsViolation("overlapping tensor byte regions");
    }

    std::vector<TensorRecord> records_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::string> metadata_;
    std::map<std::string, std::vector<std::uint8_t>> staged_;
    std::string source_path_;
    std::int64_t payload_offset_ = 0;
    std::int64_t payload_size_ = 0;
};

inline TensorArchive read_archive(const std::string& path) { return TensorArchive::read(path); }

inline void write_archive(const TensorArchive& archive, const std::string& path) {
    archive.write(path);
}

/// Rank-2 tensors whose names match a glob pattern, in archive order,
/// widened to f64. Rank-1 tensors (biases, norms) never qualify.
inline std::vector<std::pair<std::string, DenseMatrix>> prunable_layers(
    const TensorArchive& archive, const std::string& name_pattern) {
    const std::regex rx = detail::glob_to_regex(name_pattern);
    std::vector<std::pair<std::string, DenseMatrix>> out;
    for (const auto& r : archive.records()) {
        if (r.shape.size() != 2) continue;
        if (!std::regex_match(r.name, rx)) continue;
        out.emplace_back(r.name, archive.matrix(r.name));
    }
    if (out.empty())
        throw NoMatches("no rank-2 tensors match pattern '" + name_pattern + "'");
    return out;
}

} // namespace ssgr::tensorio
