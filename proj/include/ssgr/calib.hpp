#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssgr/answers.hpp"
#include "ssgr/errors.hpp"
#include "ssgr/jsonl.hpp"
#include "ssgr/rng.hpp"
#include "ssgr/tokenizer.hpp"

namespace ssgr::calib {

struct Problem {
    std::string id;
    std::string prompt;
    std::string gold_answer;
    std::string source;
    std::optional<std::string> human_difficulty;
};

inline std::vector<Problem> load_problems(const std::string& path) {
    std::vector<Problem> out;
    std::set<std::string> seen;
    for (const auto& row : read_jsonl(path)) {
        Problem p;
        p.id = row.at("id").get<std::string>();
        p.prompt = row.at("prompt").get<std::string>();
        p.gold_answer = row.at("gold_answer").get<std::string>();
        p.source = row.value("source", std::string{});
        if (row.contains("difficulty") && row.at("difficulty").is_string())
            p.human_difficulty = row.at("difficulty").get<std::string>();
        if (p.prompt.empty()) throw ValidationError("problem '" + p.id + "' has empty prompt");
        if (!seen.insert(p.id).second)
            throw ValidationError("duplicate problem id '" + p.id + "' in " + path);
        out.push_back(std::move(p));
    }
    return out;
}

enum class Finish { stop, length_truncated };

inline const char* finish_name(Finish f) { return f == Finish::stop ? "stop" : "length"; }
inline Finish finish_from_name(const std::string& s) {
    if (s == "stop") return Finish::stop;
    if (s == "length") return Finish::length_truncated;
    throw CacheCorruption("unknown finish reason '" + s + "'");
}

enum class QualityFlag { repetitive, no_thinking, format_violation, unclosed_thinking };

inline const char* quality_flag_name(QualityFlag f) {
    switch (f) {
        case QualityFlag::repetitive: return "repetitive";
        case QualityFlag::no_thinking: return "no_thinking";
        case QualityFlag::format_violation: return "format_violation";
        case QualityFlag::unclosed_thinking: return "unclosed_thinking";
    }
    return "?";
}

enum class LengthSource { reported, tokenizer, heuristic };

struct Response {
    std::string text;
    std::int64_t token_length = 0;
    LengthSource length_source = LengthSource::heuristic;
    Finish finish = Finish::stop;
    bool correct = false;
    std::set<QualityFlag> quality_flags;
    int sample_index = 0; // generation order
};

struct ResponseSet {
    Problem problem;
    std::string prompt_used; // templated prompt actually sent to the endpoint
    std::vector<Response> responses;
    int k = 0;    // correct responses
    double c = 0; // correctness ratio k/n

    void recount() {
        k = 0;
        for (const auto& r : responses) k += r.correct ? 1 : 0;
        c = responses.empty() ? 0.0
                              : static_cast<double>(k) / static_cast<double>(responses.size());
    }
};

inline double correctness_ratio(const ResponseSet& rs) {
    if (rs.responses.empty()) throw EmptySet("correctness_ratio: no responses");
    return static_cast<double>(rs.k) / static_cast<double>(rs.responses.size());
}

/// Thinking-segment markers; the angle-bracket think tags by default.
struct ThinkMarkers {
    std::string open = "<think>";
    std::string close = "</think>";
};

/// Endpoint-reported count when available, else the pluggable tokenizer,
/// else ceil(bytes / 4).
inline std::pair<std::int64_t, LengthSource> token_length(const std::string& text,
                                                          std::int64_t reported_tokens = -1,
                                                          const Tokenizer* tokenizer = nullptr) {
    if (reported_tokens >= 0) return {reported_tokens, LengthSource::reported};
    if (tokenizer) return {tokenizer->count(text), LengthSource::tokenizer};
    return {heuristic_token_count(text), LengthSource::heuristic};
}

namespace detail {

inline std::vector<std::string> whitespace_words(const std::string& text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t b = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > b) out.push_back(text.substr(b, i - b));
    }
    return out;
}

} // namespace detail

/// Largest fraction of the text covered by the occurrences of any single
/// repeated window of `window` consecutive words.
inline double repetition_coverage(const std::string& text, int window = 20) {
    const std::vector<std::string> words = detail::whitespace_words(text);
    const std::int64_t n = static_cast<std::int64_t>(words.size());
    if (n < 2 * window) return 0.0;

    std::map<std::string, std::vector<std::int64_t>> positions;
    std::string key;
    for (std::int64_t i = 0; i + window <= n; ++i) {
        key.clear();
        for (int j = 0; j < window; ++j) {
            key += words[static_cast<std::size_t>(i + j)];
            key += '\x1f';
        }
        positions[key].push_back(i);
    }

    double best = 0.0;
    for (const auto& [k, pos] : positions) {
        if (pos.size() < 2) continue;
        // union of [p, p+window) intervals over sorted positions
        std::int64_t covered = 0, reach = -1;
        for (std::int64_t p : pos) {
            const std::int64_t lo = std::max(p, reach);
            covered += std::max<std::int64_t>(0, p + window - lo);
            reach = std::max(reach, p + window);
        }
        best = std::max(best, static_cast<double>(covered) / static_cast<double>(n));
    }
    return best;
}

/// Quality screening per the sampling protocol: repetition, a missing
/// thinking segment, and unverifiable answer formats (including truncated
/// generations) each raise a flag. A response is usable only when flag-free
/// and correct.
inline std::set<QualityFlag> quality_filter(const std::string& text, Finish finish,
                                            const ThinkMarkers& markers = {}) {
    std::set<QualityFlag> flags;
    if (finish == Finish::length_truncated || !extract_answer(text))
        flags.insert(QualityFlag::format_violation);
    if (text.find(markers.open) == std::string::npos) flags.insert(QualityFlag::no_thinking);
    if (repetition_coverage(text) >= 0.3) flags.insert(QualityFlag::repetitive);
    return flags;
}

inline std::set<QualityFlag> quality_filter(const Response& r, const ThinkMarkers& markers = {}) {
    return quality_filter(r.text, r.finish, markers);
}

/// Remove thinking segments (opening marker through closing marker,
/// inclusive). An unclosed opening marker swallows the rest of the text and
/// raises the unclosed_thinking flag. Idempotent; the result carries no
/// opening marker.
inline Response strip_thinking(const Response& response, const ThinkMarkers& markers = {},
                               const Tokenizer* tokenizer = nullptr) {
    Response out = response;
    std::string& text = out.text;
    for (;;) {
        const std::size_t open = text.find(markers.open);
        if (open == std::string::npos) break;
        const std::size_t close = text.find(markers.close, open + markers.open.size());
        if (close == std::string::npos) {
            text.erase(open);
            out.quality_flags.insert(QualityFlag::unclosed_thinking);
            break;
        }
        text.erase(open, close + markers.close.size() - open);
    }
    if (text != response.text) {
        // leading separator left behind by the removed segment
        std::size_t b = 0;
        while (b < text.size() && (text[b] == '\n' || text[b] == '\r')) ++b;
        text.erase(0, b);
        const auto [len, src] = token_length(text, -1, tokenizer);
        out.token_length = len;
        out.length_source = src;
    }
    return out;
}

/// Keep exactly the sets with c <= tau, order preserved.
inline std::vector<ResponseSet> difficulty_filter(const std::vector<ResponseSet>& sets,
                                                  double tau) {
    if (tau < 0.0 || tau > 1.0) throw ValidationError("difficulty threshold must be in [0,1]");
    std::vector<ResponseSet> out;
    for (const auto& rs : sets)
        if (rs.c <= tau) out.push_back(rs);
    return out;
}

enum class DifficultyBucket { easy, medium, hard };

inline const char* bucket_name(DifficultyBucket b) {
    switch (b) {
        case DifficultyBucket::easy: return "easy";
        case DifficultyBucket::medium: return "medium";
        case DifficultyBucket::hard: return "hard";
    }
    return "?";
}

/// Model-centric difficulty: always correct -> Easy, majority correct ->
/// Medium, otherwise Hard.
inline DifficultyBucket difficulty_bucket(double c) {
    if (c < 0.0 || c > 1.0) throw ValidationError("correctness ratio must be in [0,1]");
    if (c == 1.0) return DifficultyBucket::easy;
    if (c > 0.5) return DifficultyBucket::medium;
    return DifficultyBucket::hard;
}

/// Ascending by token length; generation order breaks ties.
inline std::vector<Response> sort_by_length(std::vector<Response> responses) {
    std::sort(responses.begin(), responses.end(), [](const Response& a, const Response& b) {
        return a.token_length != b.token_length ? a.token_length < b.token_length
                                                : a.sample_index < b.sample_index;
    });
    return responses;
}

/// Target-response selection over the filtered, length-sorted set: the
/// median-length response when it fits the remaining budget l' = l - l_q,
/// otherwise the longest response that fits, otherwise the shortest
/// available (over budget; the packer truncates and flags it).
inline const Response& select_response(const std::vector<Response>& filtered_sorted,
                                       std::int64_t l, std::int64_t l_q) {
    if (filtered_sorted.empty()) throw EmptySet("select_response: no usable responses");
    if (l <= l_q) throw ValidationError("select_response: no budget left after the prompt");
    const std::int64_t budget = l - l_q;
    const std::size_t mid = filtered_sorted.size() / 2;
    if (filtered_sorted[mid].token_length <= budget) return filtered_sorted[mid];
    // longest response within the budget: last qualifying index in the
    // ascending order
    for (std::size_t i = filtered_sorted.size(); i-- > 0;)
        if (filtered_sorted[i].token_length <= budget) return filtered_sorted[i];
    return filtered_sorted.front();
}

enum class SelectionPolicy { eq1, shortest, median, longest, random, first_correct };

inline const char* policy_name(SelectionPolicy p) {
    switch (p) {
        case SelectionPolicy::eq1: return "eq1";
        case SelectionPolicy::shortest: return "short";
        case SelectionPolicy::median: return "medium";
        case SelectionPolicy::longest: return "long";
        case SelectionPolicy::random: return "random";
        case SelectionPolicy::first_correct: return "first";
    }
    return "?";
}

inline SelectionPolicy policy_from_name(const std::string& s) {
    if (s == "eq1" || s == "ssgr") return SelectionPolicy::eq1;
    if (s == "short" || s == "shortest") return SelectionPolicy::shortest;
    if (s == "medium" || s == "median") return SelectionPolicy::median;
    if (s == "long" || s == "longest") return SelectionPolicy::longest;
    if (s == "random") return SelectionPolicy::random;
    if (s == "first" || s == "first_correct") return SelectionPolicy::first_correct;
    throw ValidationError("unknown selection policy '" + s + "'");
}

/// Length-policy variants: shortest / median / longest / seeded-random pick,
/// plus generation-order first response.
inline const Response& select_by_length_policy(const std::vector<Response>& filtered_sorted,
                                               SelectionPolicy policy, std::uint64_t seed = 0) {
    if (filtered_sorted.empty()) throw EmptySet("select_by_length_policy: no usable responses");
    switch (policy) {
        case SelectionPolicy::shortest: return filtered_sorted.front();
        case SelectionPolicy::median: return filtered_sorted[filtered_sorted.size() / 2];
        case SelectionPolicy::longest: return filtered_sorted.back();
        case SelectionPolicy::random: {
            Rng rng(derive_seed(seed, "calib.policy.random"));
            return filtered_sorted[static_cast<std::size_t>(
                rng.uniform_int(filtered_sorted.size()))];
        }
        case SelectionPolicy::first_correct: {
            const Response* best = &filtered_sorted.front();
            for (const auto& r : filtered_sorted)
                if (r.sample_index < best->sample_index) best = &r;
            return *best;
        }
        case SelectionPolicy::eq1: break;
    }
    throw ValidationError("select_by_length_policy: eq1 requires a length budget");
}

struct CalibrationSample {
    std::string problem_id;
    std::string prompt_text; // templated prompt the response answers
    std::int64_t prompt_tokens_len = 0;
    Response response;
    std::int64_t total_budget = 0;
    double c = 0.0;
    DifficultyBucket bucket = DifficultyBucket::hard;
    bool over_budget = false; // fallback shortest still exceeded the budget
    bool truncated = false;   // packer had to cut the response tail
};

struct CalibrationSet {
    std::vector<CalibrationSample> samples;
    std::int64_t sequence_length = 0;
    std::int64_t count = 0;
    std::vector<std::vector<int>> packed;
};

/// Prompt tokens, then response tokens, then PAD to exactly `l`. When the
/// content exceeds `l` (fallback selections), the response tail is cut and
/// the sample flagged.
inline std::vector<int> pack_sequence(CalibrationSample& sample, std::int64_t l,
                                      const Tokenizer& tokenizer) {
    std::vector<int> ids = tokenizer.encode(sample.prompt_text);
    const std::vector<int> resp = tokenizer.encode(sample.response.text);
    ids.insert(ids.end(), resp.begin(), resp.end());
    if (static_cast<std::int64_t>(ids.size()) > l) {
        ids.resize(static_cast<std::size_t>(l));
        sample.truncated = true;
    }
    ids.resize(static_cast<std::size_t>(l), tokenizer.pad_token());
    return ids;
}

struct GenerationParams {
    std::string model;
    double temperature = 0.6;
    double top_p = 0.95;
    int max_tokens = 32768;

    void validate() const {
        if (temperature <= 0.0) throw ValidationError("temperature must be > 0");
        if (top_p <= 0.0 || top_p > 1.0) throw ValidationError("top_p must be in (0,1]");
        if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
    }

    std::uint64_t hash() const {
        nlohmann::json j{{"model", model},
                         {"temperature", temperature},
                         {"top_p", top_p},
                         {"max_tokens", max_tokens}};
        return fnv1a64(j.dump());
    }
};

/// Source of verified, quality-flagged response sets. The cached sampler in
/// genclient.hpp is the production implementation; tests script their own.
struct SampleSource {
    virtual ~SampleSource() = default;
    virtual ResponseSet sample_responses(const Problem& problem, int n,
                                         const GenerationParams& params) = 0;
};

struct CalibConfig {
    int n = 16;
    double tau = 0.75;
    std::int64_t sequence_length = 16384;
    std::int64_t count = 128;
    SelectionPolicy policy = SelectionPolicy::eq1;
    std::uint64_t seed = 0;
    bool strip_thinking = false;  // the "without thinking" ablation input
    bool use_incorrect = false;   // select among incorrect responses instead
    GenerationParams params;
    ThinkMarkers markers;

    void validate() const {
        if (n < 1) throw ValidationError("calib: n must be >= 1");
        if (tau < 0.0 || tau > 1.0) throw ValidationError("calib: tau must be in [0,1]");
        if (sequence_length < 1) throw ValidationError("calib: sequence length must be >= 1");
        if (count < 1) throw ValidationError("calib: count must be >= 1");
        params.validate();
    }
};

/// Full pipeline: sample -> verify -> quality-filter -> difficulty-filter ->
/// select -> seeded uniform subsample of `count` problems -> pack.
/// Deterministic given (dataset, config, seed, response cache).
inline CalibrationSet build_calibration_set(const std::vector<Problem>& dataset,
                                            SampleSource& source, const CalibConfig& config,
                                            const Tokenizer& tokenizer) {
    config.validate();

    std::vector<ResponseSet> sets;
    sets.reserve(dataset.size());
    for (const auto& p : dataset) sets.push_back(source.sample_responses(p, config.n, config.params));

    const std::vector<ResponseSet> retained = difficulty_filter(sets, config.tau);

    std::vector<CalibrationSample> candidates;
    for (const auto& rs : retained) {
        std::vector<Response> usable;
        for (const auto& r : rs.responses)
            if (r.quality_flags.empty() && r.correct != config.use_incorrect) usable.push_back(r);
        if (usable.empty()) continue;
        const std::vector<Response> sorted = sort_by_length(std::move(usable));

        CalibrationSample s;
        s.problem_id = rs.problem.id;
        s.prompt_text = rs.prompt_used.empty() ? rs.problem.prompt : rs.prompt_used;
        s.prompt_tokens_len = tokenizer.count(s.prompt_text);
        s.total_budget = config.sequence_length;
        s.c = rs.c;
        s.bucket = difficulty_bucket(rs.c);
        if (s.prompt_tokens_len >= config.sequence_length) continue; // no room for any response

        const Response* chosen;
        if (config.policy == SelectionPolicy::eq1) {
            chosen = &select_response(sorted, config.sequence_length, s.prompt_tokens_len);
        } else {
            chosen = &select_by_length_policy(
                sorted, config.policy, derive_seed(config.seed, "calib.policy", candidates.size()));
        }
        s.response = *chosen;
        if (config.strip_thinking)
            s.response = calib::strip_thinking(s.response, config.markers, &tokenizer);
        s.over_budget =
            s.prompt_tokens_len + s.response.token_length > config.sequence_length;
        candidates.push_back(std::move(s));
    }

    if (static_cast<std::int64_t>(candidates.size()) < config.count)
        throw InsufficientProblems("filtering left " + std::to_string(candidates.size()) +
                                   " problems but " + std::to_string(config.count) +
                                   " are required");

    // Seeded uniform subsample without replacement, reported in dataset order.
    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(config.seed, "calib.subsample"));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(i))]);
    order.resize(static_cast<std::size_t>(config.count));
    std::sort(order.begin(), order.end());

    CalibrationSet set;
    set.sequence_length = config.sequence_length;
    set.count = config.count;
    for (std::size_t idx : order) {
        CalibrationSample s = candidates[idx];
        set.packed.push_back(pack_sequence(s, config.sequence_length, tokenizer));
        set.samples.push_back(std::move(s));
    }
    return set;
}

inline nlohmann::json calibration_manifest(const CalibrationSet& set, const CalibConfig& config) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : set.samples) {
        nlohmann::json flags = nlohmann::json::array();
        for (auto f : s.response.quality_flags) flags.push_back(quality_flag_name(f));
        if (s.over_budget) flags.push_back("over_budget");
        if (s.truncated) flags.push_back("truncated");
        samples.push_back({{"problem_id", s.problem_id},
                           {"c", s.c},
                           {"bucket", bucket_name(s.bucket)},
                           {"chosen_length", s.response.token_length},
                           {"flags", flags}});
    }
    return nlohmann::json{
        {"schema", "ssgr.calib.v1"},
        {"seed", config.seed},
        {"config",
         {{"n", config.n},
          {"tau", config.tau},
          {"sequence_length", config.sequence_length},
          {"count", config.count},
          {"policy", policy_name(config.policy)},
          {"strip_thinking", config.strip_thinking},
          {"use_incorrect", config.use_incorrect},
          {"model", config.params.model},
          {"temperature", config.params.temperature},
          {"top_p", config.params.top_p},
          {"max_tokens", config.params.max_tokens}}},
        {"samples", samples}};
}

/// manifest.json + packed.jsonl under `dir`.
inline void write_calibration_set(const CalibrationSet& set, const CalibConfig& config,
                                  const std::string& dir) {
    write_file(dir + "/manifest.json", calibration_manifest(set, config).dump(2) + "\n");
    write_token_sequences(dir + "/packed.jsonl", set.packed);
}

} // namespace ssgr::calib
