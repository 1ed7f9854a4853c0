#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <regex>
#include <string>

namespace ssgr::calib {

namespace detail {

inline bool is_word_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::string collapse_ws(const std::string& s) {
    std::string out;
    bool in_ws = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) out += ' ';
        in_ws = false;
        out += c;
    }
    return out;
}

/// Content of a balanced {...} starting at `open`, or nullopt.
inline std::optional<std::string> balanced_braces(const std::string& s, std::size_t open) {
    if (open >= s.size() || s[open] != '{') return std::nullopt;
    int depth = 0;
    for (std::size_t i = open; i < s.size(); ++i) {
        if (s[i] == '{') ++depth;
        else if (s[i] == '}') {
            --depth;
            if (depth == 0) return s.substr(open + 1, i - open - 1);
        }
    }
    return std::nullopt;
}

inline void replace_all(std::string& s, const std::string& from, const std::string& to) {
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

// \frac{a}{b} -> a/b, \text{x} -> x (single level)
inline std::string expand_latex(std::string s) {
    for (const char* cmd : {"\\dfrac", "\\tfrac", "\\frac"}) {
        std::size_t pos;
        while ((pos = s.find(cmd)) != std::string::npos) {
            const std::size_t a_open = s.find('{', pos);
            auto a = balanced_braces(s, a_open);
            if (!a) break;
            const std::size_t b_open = a_open + a->size() + 2;
            auto b = balanced_braces(s, b_open);
            if (!b) break;
            s.replace(pos, b_open + b->size() + 2 - pos, *a + "/" + *b);
        }
    }
    for (const char* cmd : {"\\text", "\\mathrm", "\\mathbf"}) {
        std::size_t pos;
        while ((pos = s.find(cmd)) != std::string::npos) {
            const std::size_t open = s.find('{', pos);
            auto inner = balanced_braces(s, open);
            if (!inner) break;
            s.replace(pos, open + inner->size() + 2 - pos, *inner);
        }
    }
    replace_all(s, "\\left", "");
    replace_all(s, "\\right", "");
    replace_all(s, "\\!", "");
    replace_all(s, "\\,", " ");
    replace_all(s, "\\;", " ");
    replace_all(s, "\\%", "%");
    return s;
}

inline bool strip_enclosing(std::string& s, const std::string& open, const std::string& close) {
    if (s.size() >= open.size() + close.size() && s.compare(0, open.size(), open) == 0 &&
        s.compare(s.size() - close.size(), close.size(), close) == 0) {
        s = s.substr(open.size(), s.size() - open.size() - close.size());
        return true;
    }
    return false;
}

/// "0.50" -> "0.5", "+3" -> "3", "3.0" -> "3", ".5" -> "0.5"
inline std::string canonical_number(const std::string& s) {
    static const std::regex plain(R"(^[-+]?(\d+\.?\d*|\.\d+)$)");
    if (!std::regex_match(s, plain)) return s;
    bool neg = false;
    std::string t = s;
    if (!t.empty() && (t[0] == '+' || t[0] == '-')) {
        neg = t[0] == '-';
        t = t.substr(1);
    }
    std::string ip, fp;
    const auto dot = t.find('.');
    if (dot == std::string::npos) {
        ip = t;
    } else {
        ip = t.substr(0, dot);
        fp = t.substr(dot + 1);
    }
    while (ip.size() > 1 && ip[0] == '0') ip.erase(0, 1);
    if (ip.empty()) ip = "0";
    while (!fp.empty() && fp.back() == '0') fp.pop_back();
    std::string out = ip;
    if (!fp.empty()) out += "." + fp;
    if (neg && out != "0") out = "-" + out;
    return out;
}

} // namespace detail

/// Canonical answer form: latex shells and markdown stripped, whitespace
/// collapsed, thousands separators dropped, numbers in minimal form,
/// single letters uppercased.
inline std::string normalize_answer(const std::string& raw) {
    std::string s = detail::trim(raw);
    s = detail::expand_latex(s);
    detail::replace_all(s, "**", "");
    detail::replace_all(s, "`", "");
    for (bool changed = true; changed;) {
        changed = false;
        s = detail::trim(s);
        changed |= detail::strip_enclosing(s, "$$", "$$");
        changed |= detail::strip_enclosing(s, "$", "$");
        changed |= detail::strip_enclosing(s, "\\(", "\\)");
        changed |= detail::strip_enclosing(s, "\\[", "\\]");
        changed |= detail::strip_enclosing(s, "{", "}");
        changed |= detail::strip_enclosing(s, "(", ")");
    }
    s = detail::collapse_ws(s);
    while (!s.empty() && (s.back() == '.' || s.back() == ';')) s.pop_back();
    s = detail::trim(s);
    // drop separators in digit groups: 1,234,567 -> 1234567
    std::string no_commas;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == ',' && i > 0 && i + 1 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
            std::isdigit(static_cast<unsigned char>(s[i + 1])))
            continue;
        no_commas += s[i];
    }
    s = detail::canonical_number(no_commas);
    if (s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0])))
        s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    return s;
}

/// Decimal, a/b fraction, or percentage value of a normalized answer.
inline std::optional<double> parse_numeric(const std::string& s) {
    if (s.empty()) return std::nullopt;
    auto parse_plain = [](const std::string& t) -> std::optional<double> {
        static const std::regex num(R"(^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$)");
        if (!std::regex_match(t, num)) return std::nullopt;
        return std::strtod(t.c_str(), nullptr);
    };
    if (s.back() == '%') {
        auto v = parse_plain(detail::trim(s.substr(0, s.size() - 1)));
        if (v) return *v / 100.0;
        return std::nullopt;
    }
    const auto slash = s.find('/');
    if (slash != std::string::npos && s.find('/', slash + 1) == std::string::npos) {
        auto a = parse_plain(detail::trim(s.substr(0, slash)));
        auto b = parse_plain(detail::trim(s.substr(slash + 1)));
        if (a && b && *b != 0.0) return *a / *b;
        return std::nullopt;
    }
    return parse_plain(s);
}

inline std::optional<std::string> extract_boxed(const std::string& text) {
    std::size_t pos = text.rfind("\\boxed");
    while (pos != std::string::npos) {
        std::size_t open = pos + 6;
        while (open < text.size() && std::isspace(static_cast<unsigned char>(text[open]))) ++open;
        auto inner = detail::balanced_braces(text, open);
        if (inner) return inner;
        pos = pos == 0 ? std::string::npos : text.rfind("\\boxed", pos - 1);
    }
    return std::nullopt;
}

inline std::optional<std::string> extract_answer_line(const std::string& text) {
    static const std::regex rx(R"((?:final answer|answer)\s*(?:is|:)\s*(.+))",
                               std::regex::icase);
    std::optional<std::string> found;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(start, nl - start);
        std::smatch m;
        if (std::regex_search(line, m, rx)) {
            const std::string cand = detail::trim(m[1].str());
            if (!cand.empty()) found = cand;
        }
        start = nl + 1;
    }
    return found;
}

inline std::optional<std::string> extract_last_number(const std::string& text) {
    static const std::regex rx(R"([-+]?\d+(?:,\d{3})*(?:\.\d+)?(?:[eE][-+]?\d+)?)");
    std::optional<std::string> found;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), rx);
         it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        const std::size_t b = static_cast<std::size_t>(m.position());
        const std::size_t e = b + static_cast<std::size_t>(m.length());
        // standalone: not glued to an identifier
        if (b > 0 && detail::is_word_char(text[b - 1])) continue;
        if (e < text.size() && detail::is_word_char(text[e])) continue;
        found = m.str();
    }
    return found;
}

inline std::optional<std::string> extract_choice_letter(const std::string& text) {
    std::optional<std::string> found;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] < 'A' || text[i] > 'E') continue;
        const bool left_ok = i == 0 || !detail::is_word_char(text[i - 1]);
        const bool right_ok = i + 1 == text.size() || !detail::is_word_char(text[i + 1]);
        if (left_ok && right_ok) found = std::string(1, text[i]);
    }
    return found;
}

/// Extraction ladder: boxed expression, then the last "Answer:"-style line,
/// then the last standalone number, then a single multiple-choice letter.
inline std::optional<std::string> extract_answer(const std::string& text) {
    if (auto b = extract_boxed(text)) return b;
    if (auto a = extract_answer_line(text)) {
        // an answer line may itself carry a boxed expression
        if (auto inner = extract_boxed(*a)) return inner;
        return a;
    }
    if (auto n = extract_last_number(text)) return n;
    return extract_choice_letter(text);
}

/// Exact string equality after normalization, with a numeric-equality
/// fallback when both sides parse as numbers. Unextractable answers are
/// simply wrong.
inline bool verify_answer(const std::string& response_text, const std::string& gold) {
    const auto extracted = extract_answer(response_text);
    if (!extracted) return false;
    const std::string a = normalize_answer(*extracted);
    const std::string b = normalize_answer(gold);
    if (a == b && !a.empty()) return true;
    const auto va = parse_numeric(a);
    const auto vb = parse_numeric(b);
    if (va && vb)
        return std::abs(*va - *vb) <= 1e-9 * std::max({1.0, std::abs(*va), std::abs(*vb)});
    return false;
}

} // namespace ssgr::calib
