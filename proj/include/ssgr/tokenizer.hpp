#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ssgr {

struct Tokenizer {
    virtual ~Tokenizer() = default;
    virtual std::vector<int> encode(std::string_view text) const = 0;
    virtual std::string decode(const std::vector<int>& ids) const = 0;
    virtual int vocab_size() const = 0;
    virtual int bos_token() const = 0;
    virtual int pad_token() const = 0;
    std::int64_t count(std::string_view text) const {
        return static_cast<std::int64_t>(encode(text).size());
    }
};

/// Byte-level tokenizer: ids 0-255 are raw bytes, 256 is BOS, 257 is PAD.
/// No external vocabulary, and token counts are exact byte counts.
struct ByteTokenizer final : Tokenizer {
    static constexpr int kBos = 256;
    static constexpr int kPad = 257;
    static constexpr int kVocab = 258;

    std::vector<int> encode(std::string_view text) const override {
        std::vector<int> ids;
        ids.reserve(text.size());
        for (unsigned char c : text) ids.push_back(static_cast<int>(c));
        return ids;
    }

    std::string decode(const std::vector<int>& ids) const override {
        std::string out;
        out.reserve(ids.size());
        for (int id : ids)
            if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
        return out;
    }

    int vocab_size() const override { return kVocab; }
    int bos_token() const override { return kBos; }
    int pad_token() const override { return kPad; }
};

/// ceil(bytes / 4): the fallback token estimate when neither an
/// endpoint-reported count nor a tokenizer is available.
inline std::int64_t heuristic_token_count(std::string_view text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

} // namespace ssgr
