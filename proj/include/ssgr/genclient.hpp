#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ssgr/calib.hpp"
#include "ssgr/errors.hpp"
#include "ssgr/micromodel.hpp"
#include "ssgr/rng.hpp"

namespace ssgr::calib {

struct Completion {
    std::string text;
    Finish finish = Finish::stop;
    std::int64_t usage_tokens = -1; // endpoint-reported completion tokens
};

struct GenerationClient {
    virtual ~GenerationClient() = default;
    virtual Completion complete(const std::string& prompt, const GenerationParams& params,
                                std::uint64_t request_seed) = 0;
};

/// OpenAI-compatible chat-completions client: one completion per request,
/// exponential backoff on transport errors, 429 and 5xx.
class HttpChatClient final : public GenerationClient {
public:
    struct Options {
        std::string base_url;                       // http://host:port
        std::string path = "/v1/chat/completions";
        std::string api_key_env = "SSGR_API_KEY";
        std::optional<std::string> system_prompt;
        int max_tries = 5;
        int backoff_base_ms = 1000; // doubled per retry
        int timeout_sec = 600;
        bool send_seed = true;
    };

    explicit HttpChatClient(Options opts) : opts_(std::move(opts)) {
        if (opts_.base_url.empty()) throw ValidationError("endpoint base URL is empty");
    }

    Completion complete(const std::string& prompt, const GenerationParams& params,
                        std::uint64_t request_seed) override {
        nlohmann::json messages = nlohmann::json::array();
        if (opts_.system_prompt)
            messages.push_back({{"role", "system"}, {"content", *opts_.system_prompt}});
        messages.push_back({{"role", "user"}, {"content", prompt}});
        nlohmann::json body{{"model", params.model},     {"messages", messages},
                            {"temperature", params.temperature}, {"top_p", params.top_p},
                            {"max_tokens", params.max_tokens},   {"n", 1}};
        if (opts_.send_seed) body["seed"] = request_seed;
        const std::string payload = body.dump();

        std::string last_error;
        int backoff_ms = opts_.backoff_base_ms;
        for (int attempt = 0; attempt < opts_.max_tries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
                backoff_ms *= 2;
            }
            httplib::Client cli(opts_.base_url);
            cli.set_connection_timeout(opts_.timeout_sec, 0);
            cli.set_read_timeout(opts_.timeout_sec, 0);
            httplib::Headers headers;
            if (const char* key = std::getenv(opts_.api_key_env.c_str()); key && *key)
                headers.emplace("Authorization", std::string("Bearer ") + key);
            auto res = cli.Post(opts_.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw EndpointUnavailable("endpoint rejected request: HTTP " +
                                          std::to_string(res->status) + " " + res->body);
            return parse_completion(res->body);
        }
        throw EndpointUnavailable("endpoint unreachable after " +
                                  std::to_string(opts_.max_tries) + " tries: " + last_error);
    }

private:
    static Completion parse_completion(const std::string& body) {
        try {
            const nlohmann::json j = nlohmann::json::parse(body);
            const auto& choice = j.at("choices").at(0);
            Completion c;
            c.text = choice.at("message").at("content").get<std::string>();
            const std::string reason = choice.value("finish_reason", "stop");
            c.finish = reason == "length" ? Finish::length_truncated : Finish::stop;
            if (j.contains("usage") && j["usage"].contains("completion_tokens"))
                c.usage_tokens = j["usage"]["completion_tokens"].get<std::int64_t>();
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw EndpointUnavailable(std::string("malformed completion response: ") + e.what());
        }
    }

    Options opts_;
};

/// Generation backed by a micro-model checkpoint, for fully offline runs.
/// Prompts and completions are byte-level text.
class MicroClient final : public GenerationClient {
public:
    explicit MicroClient(micro::MicroModel model) : model_(std::move(model)) {}

    static MicroClient from_checkpoint(const std::string& path) {
        return MicroClient(micro::load_model(path));
    }

    const micro::MicroModel& model() const { return model_; }

    Completion complete(const std::string& prompt, const GenerationParams& params,
                        std::uint64_t request_seed) override {
        params.validate();
        std::vector<int> ids;
        ids.push_back(model_.config.bos_token());
        for (int t : tok_.encode(prompt)) ids.push_back(t);
        const int ctx = model_.config.max_context;
        if (static_cast<int>(ids.size()) >= ctx)
            ids.resize(static_cast<std::size_t>(ctx) - 1); // leave room to generate

        micro::SampleParams sp;
        sp.temperature = params.temperature;
        sp.top_p = params.top_p;
        sp.max_new_tokens = std::min<int>(params.max_tokens, ctx - static_cast<int>(ids.size()));
        sp.seed = request_seed;
        const micro::GenerateResult res = micro::generate_ex(model_, ids, sp);

        Completion c;
        const std::vector<int> completion_ids(res.tokens.begin() + static_cast<std::ptrdiff_t>(ids.size()),
                                              res.tokens.end());
        c.text = tok_.decode(completion_ids);
        c.finish = res.length_truncated ? Finish::length_truncated : Finish::stop;
        c.usage_tokens = static_cast<std::int64_t>(completion_ids.size());
        return c;
    }

private:
    micro::MicroModel model_;
    ByteTokenizer tok_;
};

/// Append-only response cache: one JSONL file per problem, one line per
/// sampled response. Lines are written in a single append so concurrent
/// writers cannot interleave a record.
class ResponseCache {
public:
    struct Entry {
        std::string problem_id;
        int sample_index = 0;
        std::uint64_t params_hash = 0;
        std::string text;
        Finish finish = Finish::stop;
        std::int64_t usage_tokens = -1;
    };

    explicit ResponseCache(std::string dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    const std::string& dir() const { return dir_; }

    std::string path_for(const std::string& problem_id) const {
        return dir_ + "/" + sanitize(problem_id) + ".jsonl";
    }

    std::vector<Entry> load(const std::string& problem_id) const {
        const std::string path = path_for(problem_id);
        std::vector<Entry> out;
        std::ifstream in(path);
        if (!in) return out; // cold cache
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                const nlohmann::json j = nlohmann::json::parse(line);
                Entry e;
                e.problem_id = j.at("problem_id").get<std::string>();
                e.sample_index = j.at("sample_index").get<int>();
                e.params_hash = j.at("params_hash").get<std::uint64_t>();
                e.text = j.at("text").get<std::string>();
                e.finish = finish_from_name(j.at("finish").get<std::string>());
                e.usage_tokens = j.value("usage_tokens", std::int64_t{-1});
                out.push_back(std::move(e));
            } catch (const nlohmann::json::exception& ex) {
                throw CacheCorruption(path + ":" + std::to_string(lineno) + ": " + ex.what());
            }
        }
        return out;
    }

    void append(const Entry& e) {
        const nlohmann::json j{{"problem_id", e.problem_id},
                               {"sample_index", e.sample_index},
                               {"params_hash", e.params_hash},
                               {"text", e.text},
                               {"finish", finish_name(e.finish)},
                               {"usage_tokens", e.usage_tokens}};
        std::ofstream out(path_for(e.problem_id), std::ios::app);
        if (!out) throw IoFailure("cannot append to cache for '" + e.problem_id + "'");
        out << j.dump() << '\n';
        out.flush();
        if (!out) throw IoFailure("cache write failed for '" + e.problem_id + "'");
    }

private:
    static std::string sanitize(const std::string& id) {
        std::string out;
        for (char c : id) {
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')
                out += c;
            else {
                char buf[8];
                std::snprintf(buf, sizeof buf, "%%%02x", static_cast<unsigned char>(c));
                out += buf;
            }
        }
        return out.empty() ? "_" : out;
    }

    std::string dir_;
};

/// Zero-shot chat prompt: the problem text plus the boxed-answer instruction.
inline std::string zero_shot_prompt(const Problem& p,
                                    const std::string& prompt_template = {}) {
    static const std::string kDefault =
        "{problem}\nPlease reason step by step, and put your final answer within \\boxed{}.";
    std::string t = prompt_template.empty() ? kDefault : prompt_template;
    const std::string placeholder = "{problem}";
    const auto pos = t.find(placeholder);
    if (pos == std::string::npos) return t + "\n" + p.prompt;
    return t.replace(pos, placeholder.size(), p.prompt);
}

/// Cache-backed sampler: asks the endpoint only for samples missing from the
/// cache, verifies answers, and applies the quality filter. Warm-cache reruns
/// never touch the network and are byte-identical.
class CachedSampler final : public SampleSource {
public:
    struct Options {
        std::uint64_t seed = 0;              // request seed derivation base
        const Tokenizer* tokenizer = nullptr; // fallback token counter
        ThinkMarkers markers;
        std::string prompt_template;
    };

    CachedSampler(GenerationClient& client, ResponseCache& cache, Options opts = {})
        : client_(&client), cache_(&cache), opts_(std::move(opts)) {}

    /// Cache-only sampler; throws EndpointUnavailable on any cache miss.
    CachedSampler(ResponseCache& cache, Options opts = {})
        : client_(nullptr), cache_(&cache), opts_(std::move(opts)) {}

    ResponseSet sample_responses(const Problem& problem, int n, const GenerationParams& params) {
        if (n < 1) throw ValidationError("sample_responses: n must be >= 1");
        params.validate();
        const std::uint64_t phash = params.hash();
        const std::string prompt = zero_shot_prompt(problem, opts_.prompt_template);

        std::map<int, ResponseCache::Entry> by_index;
        for (auto& e : cache_->load(problem.id))
            if (e.params_hash == phash) by_index.emplace(e.sample_index, std::move(e));

        ResponseSet rs;
        rs.problem = problem;
        rs.prompt_used = prompt;
        for (int i = 0; i < n; ++i) {
            auto it = by_index.find(i);
            if (it == by_index.end()) {
                if (!client_)
                    throw EndpointUnavailable("sample " + std::to_string(i) + " of '" +
                                              problem.id + "' missing from cache and no "
                                              "endpoint configured");
                const Completion c = client_->complete(
                    prompt, params, derive_seed(opts_.seed, problem.id, static_cast<std::uint64_t>(i)));
                ResponseCache::Entry e;
                e.problem_id = problem.id;
                e.sample_index = i;
                e.params_hash = phash;
                e.text = c.text;
                e.finish = c.finish;
                e.usage_tokens = c.usage_tokens;
                cache_->append(e);
                it = by_index.emplace(i, std::move(e)).first;
            }
            const ResponseCache::Entry& e = it->second;
            Response r;
            r.text = e.text;
            r.finish = e.finish;
            r.sample_index = i;
            const auto [len, src] = token_length(e.text, e.usage_tokens, opts_.tokenizer);
            r.token_length = len;
            r.length_source = src;
            r.correct = verify_answer(e.text, problem.gold_answer);
            r.quality_flags = quality_filter(e.text, e.finish, opts_.markers);
            rs.responses.push_back(std::move(r));
        }
        rs.recount();
        return rs;
    }

    /// Number of samples that would hit the endpoint for this problem.
    int missing_count(const Problem& problem, int n, const GenerationParams& params) const {
        const std::uint64_t phash = params.hash();
        std::set<int> have;
        for (const auto& e : cache_->load(problem.id))
            if (e.params_hash == phash) have.insert(e.sample_index);
        int missing = 0;
        for (int i = 0; i < n; ++i) missing += have.count(i) ? 0 : 1;
        return missing;
    }

private:
    GenerationClient* client_;
    ResponseCache* cache_;
    Options opts_;
};

} // namespace ssgr::calib
