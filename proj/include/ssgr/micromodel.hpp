#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssgr/errors.hpp"
#include "ssgr/matrix.hpp"
#include "ssgr/rng.hpp"
#include "ssgr/tensorio.hpp"
#include "ssgr/tokenizer.hpp"

namespace ssgr::micro {

struct MicroConfig {
    int n_layers = 4;
    int d_model = 128;
    int n_heads = 4;
    int d_ff = 512;
    int vocab_size = ByteTokenizer::kVocab;
    int max_context = 512;
    std::uint64_t seed = 0;

    int head_dim() const { return d_model / n_heads; }
    int pad_token() const { return vocab_size - 1; }
    int bos_token() const { return vocab_size - 2; }

    void validate() const {
        if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 || max_context <= 0)
            throw ValidationError("micro config: dimensions must be positive");
        if (d_model % n_heads != 0)
            throw ValidationError("micro config: d_model must be divisible by n_heads");
        if ((d_model / n_heads) % 2 != 0)
            throw ValidationError("micro config: head dim must be even for rotary encoding");
        if (vocab_size < 3)
            throw ValidationError("micro config: vocab_size must be at least 3");
    }

    std::string to_json() const {
        nlohmann::json j{{"n_layers", n_layers}, {"d_model", d_model},   {"n_heads", n_heads},
                         {"d_ff", d_ff},         {"vocab_size", vocab_size},
                         {"max_context", max_context}, {"seed", seed}};
        return j.dump();
    }

    static MicroConfig from_json(const std::string& s) {
        nlohmann::json j = nlohmann::json::parse(s);
        MicroConfig c;
        c.n_layers = j.at("n_layers").get<int>();
        c.d_model = j.at("d_model").get<int>();
        c.n_heads = j.at("n_heads").get<int>();
        c.d_ff = j.at("d_ff").get<int>();
        c.vocab_size = j.at("vocab_size").get<int>();
        c.max_context = j.at("max_context").get<int>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.validate();
        return c;
    }
};

/// Decoder-only transformer at desk scale: pre-norm residual blocks, rotary
/// positions, gated MLP, byte-level vocabulary, unembedding tied to the
/// embedding. Random-initialized; every quality claim built on it is
/// comparative (dense vs pruned of the same model), never absolute.
struct MicroModel {
    struct Block {
        DenseMatrix wq, wk, wv, wo;       // d_model x d_model
        DenseMatrix w_up, w_gate;         // d_ff x d_model
        DenseMatrix w_down;               // d_model x d_ff
        std::vector<double> attn_norm, mlp_norm;
    };

    MicroConfig config;
    DenseMatrix embedding; // vocab_size x d_model, also the unembedding
    std::vector<Block> blocks;
    std::vector<double> final_norm;

    static std::string weight_name(int block, const char* part) {
        return "block." + std::to_string(block) + "." + part + ".weight";
    }

    /// Prunable matrices in checkpoint order: 7 per block.
    template <typename Self>
    static auto prunable_impl(Self& self) {
        using Ptr = decltype(&self.blocks[0].wq);
        std::vector<std::pair<std::string, Ptr>> out;
        for (int i = 0; i < self.config.n_layers; ++i) {
            auto& b = self.blocks[static_cast<std::size_t>(i)];
            out.emplace_back(weight_name(i, "attn.q"), &b.wq);
            out.emplace_back(weight_name(i, "attn.k"), &b.wk);
            out.emplace_back(weight_name(i, "attn.v"), &b.wv);
            out.emplace_back(weight_name(i, "attn.o"), &b.wo);
            out.emplace_back(weight_name(i, "mlp.up"), &b.w_up);
            out.emplace_back(weight_name(i, "mlp.gate"), &b.w_gate);
            out.emplace_back(weight_name(i, "mlp.down"), &b.w_down);
        }
        return out;
    }

    std::vector<std::pair<std::string, DenseMatrix*>> prunable_weights() {
        return prunable_impl(*this);
    }
    std::vector<std::pair<std::string, const DenseMatrix*>> prunable_weights() const {
        return prunable_impl(*this);
    }

    DenseMatrix* find_weight(const std::string& name) {
        for (auto& [n, w] : prunable_weights())
            if (n == name) return w;
        return nullptr;
    }
};

/// Inputs one prunable matrix received, concatenated across all positions of
/// all captured sequences. Rows are input features, columns are tokens.
struct ActivationBatch {
    std::string layer_name;
    DenseMatrix inputs; // in_features x n_tokens
    std::int64_t token_count = 0;
};

enum class CaptureMode { dense_propagation, sequential_pruned_propagation };

/// Returns a replacement for the named weight, or nullptr to keep the
/// model's own. Consulted only in sequential_pruned_propagation mode.
using WeightOverride = std::function<const DenseMatrix*(const std::string&)>;

inline MicroModel init_random(const MicroConfig& config) {
    config.validate();
    MicroModel m;
    m.config = config;

    auto fill = [&](DenseMatrix& w, const std::string& name, double scale) {
        Rng rng(derive_seed(config.seed, name));
        for (double& v : w.data()) v = rng.normal(0.0, scale);
    };

    const double res_scale = 0.02 / std::sqrt(static_cast<double>(config.n_layers));
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(config.d_model));

    m.embedding = DenseMatrix(config.vocab_size, config.d_model);
    fill(m.embedding, "embed.weight", 0.02);
    m.final_norm.assign(static_cast<std::size_t>(config.d_model), 1.0);

    m.blocks.resize(static_cast<std::size_t>(config.n_layers));
    for (int i = 0; i < config.n_layers; ++i) {
        auto& b = m.blocks[static_cast<std::size_t>(i)];
        b.wq = DenseMatrix(config.d_model, config.d_model);
        b.wk = DenseMatrix(config.d_model, config.d_model);
        b.wv = DenseMatrix(config.d_model, config.d_model);
        b.wo = DenseMatrix(config.d_model, config.d_model);
        b.w_up = DenseMatrix(config.d_ff, config.d_model);
        b.w_gate = DenseMatrix(config.d_ff, config.d_model);
        b.w_down = DenseMatrix(config.d_model, config.d_ff);
        fill(b.wq, MicroModel::weight_name(i, "attn.q"), in_scale);
        fill(b.wk, MicroModel::weight_name(i, "attn.k"), in_scale);
        fill(b.wv, MicroModel::weight_name(i, "attn.v"), in_scale);
        fill(b.wo, MicroModel::weight_name(i, "attn.o"), res_scale);
        fill(b.w_up, MicroModel::weight_name(i, "mlp.up"), in_scale);
        fill(b.w_gate, MicroModel::weight_name(i, "mlp.gate"), in_scale);
        fill(b.w_down, MicroModel::weight_name(i, "mlp.down"), res_scale);
        b.attn_norm.assign(static_cast<std::size_t>(config.d_model), 1.0);
        b.mlp_norm.assign(static_cast<std::size_t>(config.d_model), 1.0);
    }
    return m;
}

namespace detail {

constexpr double kNormEps = 1e-6;
constexpr double kRopeBase = 10000.0;

inline void rmsnorm(const double* x, const std::vector<double>& gain, double* out, int n) {
    double ss = 0.0;
    for (int i = 0; i < n; ++i) ss += x[i] * x[i];
    const double inv = 1.0 / std::sqrt(ss / n + kNormEps);
    for (int i = 0; i < n; ++i) out[i] = x[i] * gain[static_cast<std::size_t>(i)] * inv;
}

// y[r] = dot(w.row(r), x)
inline void matvec(const DenseMatrix& w, const double* x, double* y) {
    const std::int64_t rows = w.rows(), cols = w.cols();
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* wr = w.row_ptr(r);
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) s += wr[c] * x[c];
        y[r] = s;
    }
}

inline void rope(double* vec, int d_model, int n_heads, std::int64_t pos) {
    const int hd = d_model / n_heads;
    for (int h = 0; h < n_heads; ++h) {
        double* v = vec + h * hd;
        for (int i = 0; i < hd / 2; ++i) {
            const double theta =
                static_cast<double>(pos) * std::pow(kRopeBase, -2.0 * i / hd);
            const double c = std::cos(theta), s = std::sin(theta);
            const double x0 = v[2 * i], x1 = v[2 * i + 1];
            v[2 * i] = x0 * c - x1 * s;
            v[2 * i + 1] = x0 * s + x1 * c;
        }
    }
}

inline double silu(double x) { return x / (1.0 + std::exp(-x)); }

struct Taps {
    // (layer name, input vector, its length) once per token position.
    std::function<void(const std::string&, const double*, std::int64_t)> on_input;
    std::function<bool(const std::string&)> want_layer; // optional filter
    bool wants(const std::string& name) const {
        return on_input && (!want_layer || want_layer(name));
    }
};

/// Position-by-position decoder pass shared by forward, generation, and
/// activation capture. Keys/values are cached so generation extends a
/// sequence incrementally with the same arithmetic.
class Decoder {
public:
    Decoder(const MicroModel& m, const WeightOverride* ov, const Taps* taps)
        : m_(m), ov_(ov), taps_(taps), kcache_(m.blocks.size()), vcache_(m.blocks.size()) {}

    std::int64_t position() const { return pos_; }

    const DenseMatrix& weight(const std::string& name, const DenseMatrix& own) const {
        if (ov_ && *ov_) {
            const DenseMatrix* r = (*ov_)(name);
            if (r) {
                if (!r->same_shape(own))
                    throw DimMismatch("override for '" + name + "' has wrong shape");
                return *r;
            }
        }
        return own;
    }

    /// Process one token; returns logits over the vocabulary.
    std::vector<double> step(int token) {
        const MicroConfig& cfg = m_.config;
        const int d = cfg.d_model;
        if (token < 0 || token >= cfg.vocab_size)
            throw InvalidToken("token id " + std::to_string(token) + " out of range");
        if (pos_ >= cfg.max_context)
            throw ContextOverflow("sequence exceeds max_context " +
                                  std::to_string(cfg.max_context));

        std::vector<double> x(m_.embedding.row_ptr(token), m_.embedding.row_ptr(token) + d);
        std::vector<double> a(static_cast<std::size_t>(d));
        std::vector<double> q(static_cast<std::size_t>(d)), k(static_cast<std::size_t>(d)),
            v(static_cast<std::size_t>(d)), ctx(static_cast<std::size_t>(d));
        std::vector<double> up(static_cast<std::size_t>(cfg.d_ff)),
            gate(static_cast<std::size_t>(cfg.d_ff)), act(static_cast<std::size_t>(cfg.d_ff));
        std::vector<double> tmp(static_cast<std::size_t>(d));

        for (std::size_t bi = 0; bi < m_.blocks.size(); ++bi) {
            const auto& b = m_.blocks[bi];
            const int blk = static_cast<int>(bi);
            rmsnorm(x.data(), b.attn_norm, a.data(), d);
            tap(MicroModel::weight_name(blk, "attn.q"), a.data(), d);
            tap(MicroModel::weight_name(blk, "attn.k"), a.data(), d);
            tap(MicroModel::weight_name(blk, "attn.v"), a.data(), d);

            matvec(weight(MicroModel::weight_name(blk, "attn.q"), b.wq), a.data(), q.data());
            matvec(weight(MicroModel::weight_name(blk, "attn.k"), b.wk), a.data(), k.data());
            matvec(weight(MicroModel::weight_name(blk, "attn.v"), b.wv), a.data(), v.data());
            rope(q.data(), d, cfg.n_heads, pos_);
            rope(k.data(), d, cfg.n_heads, pos_);
            kcache_[bi].insert(kcache_[bi].end(), k.begin(), k.end());
            vcache_[bi].insert(vcache_[bi].end(), v.begin(), v.end());

            attention(bi, q.data(), ctx.data());
            tap(MicroModel::weight_name(blk, "attn.o"), ctx.data(), d);
            matvec(weight(MicroModel::weight_name(blk, "attn.o"), b.wo), ctx.data(), tmp.data());
            for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += tmp[static_cast<std::size_t>(i)];

            rmsnorm(x.data(), b.mlp_norm, a.data(), d);
            tap(MicroModel::weight_name(blk, "mlp.up"), a.data(), d);
            tap(MicroModel::weight_name(blk, "mlp.gate"), a.data(), d);
            matvec(weight(MicroModel::weight_name(blk, "mlp.up"), b.w_up), a.data(), up.data());
            matvec(weight(MicroModel::weight_name(blk, "mlp.gate"), b.w_gate), a.data(), gate.data());
            for (int i = 0; i < cfg.d_ff; ++i)
                act[static_cast<std::size_t>(i)] =
                    silu(gate[static_cast<std::size_t>(i)]) * up[static_cast<std::size_t>(i)];
            tap(MicroModel::weight_name(blk, "mlp.down"), act.data(), cfg.d_ff);
            matvec(weight(MicroModel::weight_name(blk, "mlp.down"), b.w_down), act.data(), tmp.data());
            for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] += tmp[static_cast<std::size_t>(i)];
        }

        rmsnorm(x.data(), m_.final_norm, a.data(), d);
        std::vector<double> logits(static_cast<std::size_t>(cfg.vocab_size));
        matvec(m_.embedding, a.data(), logits.data()); // tied unembedding
        ++pos_;
        return logits;
    }

private:
    void tap(const std::string& name, const double* vec, std::int64_t len) {
        if (taps_ && taps_->wants(name)) taps_->on_input(name, vec, len);
    }

    void attention(std::size_t bi, const double* q, double* out) {
        const int d = m_.config.d_model;
        const int nh = m_.config.n_heads;
        const int hd = d / nh;
        const std::int64_t n_keys = pos_ + 1;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
        const double* kc = kcache_[bi].data();
        const double* vc = vcache_[bi].data();
        scores_.resize(static_cast<std::size_t>(n_keys));
        for (int h = 0; h < nh; ++h) {
            const double* qh = q + h * hd;
            double max_s = -std::numeric_limits<double>::infinity();
            for (std::int64_t t = 0; t < n_keys; ++t) {
                const double* kh = kc + t * d + h * hd;
                double s = 0.0;
                for (int i = 0; i < hd; ++i) s += qh[i] * kh[i];
                s *= inv_sqrt;
                scores_[static_cast<std::size_t>(t)] = s;
                max_s = std::max(max_s, s);
            }
            double denom = 0.0;
            for (std::int64_t t = 0; t < n_keys; ++t) {
                const double e = std::exp(scores_[static_cast<std::size_t>(t)] - max_s);
                scores_[static_cast<std::size_t>(t)] = e;
                denom += e;
            }
            double* oh = out + h * hd;
            std::fill(oh, oh + hd, 0.0);
            for (std::int64_t t = 0; t < n_keys; ++t) {
                const double w = scores_[static_cast<std::size_t>(t)] / denom;
                const double* vh = vc + t * d + h * hd;
                for (int i = 0; i < hd; ++i) oh[i] += w * vh[i];
            }
        }
    }

    const MicroModel& m_;
    const WeightOverride* ov_;
    const Taps* taps_;
    std::vector<std::vector<double>> kcache_, vcache_;
    std::vector<double> scores_;
    std::int64_t pos_ = 0;
};

inline void check_tokens(const MicroModel& m, const std::vector<int>& tokens) {
    if (static_cast<int>(tokens.size()) > m.config.max_context)
        throw ContextOverflow("sequence length " + std::to_string(tokens.size()) +
                              " exceeds max_context " + std::to_string(m.config.max_context));
    for (int t : tokens)
        if (t < 0 || t >= m.config.vocab_size)
            throw InvalidToken("token id " + std::to_string(t) + " out of range");
}

} // namespace detail

/// Full-sequence forward pass; returns the logits matrix (vocab_size x len).
inline DenseMatrix forward(const MicroModel& model, const std::vector<int>& tokens) {
    if (tokens.empty()) throw EmptyCorpus("forward: empty token sequence");
    detail::check_tokens(model, tokens);
    detail::Decoder dec(model, nullptr, nullptr);
    DenseMatrix logits(model.config.vocab_size, static_cast<std::int64_t>(tokens.size()));
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const std::vector<double> col = dec.step(tokens[t]);
        for (int v = 0; v < model.config.vocab_size; ++v)
            logits(v, static_cast<std::int64_t>(t)) = col[static_cast<std::size_t>(v)];
    }
    return logits;
}

/// exp(mean next-token negative log-likelihood) over every position with a
/// successor, in nats.
inline double perplexity(const MicroModel& model, const std::vector<std::vector<int>>& corpus) {
    if (corpus.empty()) throw EmptyCorpus("perplexity: empty corpus");
    double nll_sum = 0.0;
    std::int64_t transitions = 0;
    for (const auto& seq : corpus) {
        if (seq.size() < 2) continue;
        detail::check_tokens(model, seq);
        detail::Decoder dec(model, nullptr, nullptr);
        for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
            const std::vector<double> logits = dec.step(seq[t]);
            double max_l = -std::numeric_limits<double>::infinity();
            for (double l : logits) max_l = std::max(max_l, l);
            double denom = 0.0;
            for (double l : logits) denom += std::exp(l - max_l);
            const double lp = logits[static_cast<std::size_t>(seq[t + 1])] - max_l - std::log(denom);
            nll_sum -= lp;
            ++transitions;
        }
    }
    if (transitions == 0) throw EmptyCorpus("perplexity: no position has a successor");
    return std::exp(nll_sum / static_cast<double>(transitions));
}

struct SampleParams {
    double temperature = 0.6;
    double top_p = 0.95;
    int max_new_tokens = 128;
    std::uint64_t seed = 0;
};

struct GenerateResult {
    std::vector<int> tokens; // prompt + completion
    bool length_truncated = false;
};

inline GenerateResult generate_ex(const MicroModel& model, const std::vector<int>& prompt,
                                  const SampleParams& params) {
    if (params.temperature <= 0.0) throw ValidationError("generate: temperature must be > 0");
    if (params.top_p <= 0.0 || params.top_p > 1.0)
        throw ValidationError("generate: top_p must be in (0, 1]");
    if (prompt.empty()) throw EmptyCorpus("generate: empty prompt");
    detail::check_tokens(model, prompt);

    detail::Decoder dec(model, nullptr, nullptr);
    std::vector<double> logits;
    for (int t : prompt) logits = dec.step(t);

    Rng rng(derive_seed(params.seed, "micro.generate"));
    GenerateResult res;
    res.tokens = prompt;
    const int vocab = model.config.vocab_size;
    std::vector<int> order(static_cast<std::size_t>(vocab));

    for (int produced = 0; produced < params.max_new_tokens; ++produced) {
        if (dec.position() >= model.config.max_context) {
            res.length_truncated = true;
            break;
        }
        // softmax over logits / temperature
        std::vector<double> p(static_cast<std::size_t>(vocab));
        double max_l = -std::numeric_limits<double>::infinity();
        for (double l : logits) max_l = std::max(max_l, l);
        double denom = 0.0;
        for (int v = 0; v < vocab; ++v) {
            p[static_cast<std::size_t>(v)] =
                std::exp((logits[static_cast<std::size_t>(v)] - max_l) / params.temperature);
            denom += p[static_cast<std::size_t>(v)];
        }
        for (double& x : p) x /= denom;

        // nucleus: smallest prefix of the probability-sorted vocabulary with
        // cumulative mass >= top_p; ties resolved toward lower token ids
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const double pa = p[static_cast<std::size_t>(a)], pb = p[static_cast<std::size_t>(b)];
            return pa != pb ? pa > pb : a < b;
        });
        std::size_t cut = 0;
        double mass = 0.0;
        for (; cut < order.size(); ++cut) {
            mass += p[static_cast<std::size_t>(order[cut])];
            if (mass >= params.top_p) {
                ++cut;
                break;
            }
        }
        if (cut == 0) cut = 1;

        const double u = rng.uniform() * mass;
        double acc = 0.0;
        int chosen = order[cut - 1];
        for (std::size_t i = 0; i < cut; ++i) {
            acc += p[static_cast<std::size_t>(order[i])];
            if (u < acc) {
                chosen = order[i];
                break;
            }
        }

        if (chosen == model.config.pad_token()) break; // PAD ends generation
        res.tokens.push_back(chosen);
        if (produced + 1 < params.max_new_tokens) logits = dec.step(chosen);
    }
    if (res.tokens.size() == prompt.size() + static_cast<std::size_t>(params.max_new_tokens) &&
        params.max_new_tokens > 0)
        res.length_truncated = true;
    return res;
}

inline std::vector<int> generate(const MicroModel& model, const std::vector<int>& prompt,
                                 const SampleParams& params) {
    return generate_ex(model, prompt, params).tokens;
}

/// Streaming capture: invokes `sink(layer, x, len)` once per token position
/// for every prunable matrix the filter accepts, running sequences through
/// the model with optional weight overrides.
inline void capture_stream(const MicroModel& model, const std::vector<std::vector<int>>& sequences,
                           CaptureMode mode, const WeightOverride& override_fn,
                           const std::function<bool(const std::string&)>& layer_filter,
                           const std::function<void(const std::string&, const double*, std::int64_t)>& sink) {
    detail::Taps taps;
    taps.on_input = sink;
    taps.want_layer = layer_filter;
    const WeightOverride* ov =
        (mode == CaptureMode::sequential_pruned_propagation && override_fn) ? &override_fn : nullptr;
    for (const auto& seq : sequences) {
        if (seq.empty()) continue;
        detail::check_tokens(model, seq);
        detail::Decoder dec(model, ov, &taps);
        for (int t : seq) (void)dec.step(t);
    }
}

/// Concatenated per-layer input activations for every prunable matrix.
inline std::map<std::string, ActivationBatch> capture_activations(
    const MicroModel& model, const std::vector<std::vector<int>>& sequences,
    CaptureMode mode = CaptureMode::dense_propagation, const WeightOverride& override_fn = {}) {
    std::int64_t total_tokens = 0;
    for (const auto& s : sequences) total_tokens += static_cast<std::int64_t>(s.size());
    if (total_tokens == 0) throw EmptyCorpus("capture_activations: no tokens");

    std::map<std::string, ActivationBatch> out;
    for (const auto& [name, w] : model.prunable_weights()) {
        ActivationBatch b;
        b.layer_name = name;
        b.inputs = DenseMatrix(w->cols(), total_tokens);
        b.token_count = 0;
        out.emplace(name, std::move(b));
    }
    capture_stream(model, sequences, mode, override_fn, {},
                   [&](const std::string& name, const double* x, std::int64_t len) {
                       ActivationBatch& b = out.at(name);
                       const std::int64_t col = b.token_count++;
                       for (std::int64_t i = 0; i < len; ++i) b.inputs(i, col) = x[i];
                   });
    return out;
}

inline void save_model(const MicroModel& model, const std::string& path,
                       tensorio::Dtype dtype = tensorio::Dtype::f32) {
    tensorio::TensorArchive a;
    a.metadata()["ssgr.micro.config"] = model.config.to_json();
    a.put_matrix("embed.weight", dtype, model.embedding);
    for (int i = 0; i < model.config.n_layers; ++i) {
        const auto& b = model.blocks[static_cast<std::size_t>(i)];
        const std::int64_t d = model.config.d_model;
        a.put("block." + std::to_string(i) + ".attn_norm.weight", dtype, {d}, b.attn_norm);
        a.put_matrix(MicroModel::weight_name(i, "attn.q"), dtype, b.wq);
        a.put_matrix(MicroModel::weight_name(i, "attn.k"), dtype, b.wk);
        a.put_matrix(MicroModel::weight_name(i, "attn.v"), dtype, b.wv);
        a.put_matrix(MicroModel::weight_name(i, "attn.o"), dtype, b.wo);
        a.put("block." + std::to_string(i) + ".mlp_norm.weight", dtype, {d}, b.mlp_norm);
        a.put_matrix(MicroModel::weight_name(i, "mlp.up"), dtype, b.w_up);
        a.put_matrix(MicroModel::weight_name(i, "mlp.gate"), dtype, b.w_gate);
        a.put_matrix(MicroModel::weight_name(i, "mlp.down"), dtype, b.w_down);
    }
    a.put("final_norm.weight", dtype,
          {static_cast<std::int64_t>(model.final_norm.size())}, model.final_norm);
    a.write(path);
}

inline MicroModel load_model(const tensorio::TensorArchive& a) {
    auto it = a.metadata().find("ssgr.micro.config");
    if (it == a.metadata().end())
        throw MalformedHeader("archive has no ssgr.micro.config metadata");
    MicroModel m;
    m.config = MicroConfig::from_json(it->second);
    m.embedding = a.matrix("embed.weight");
    m.final_norm = a.tensor_f64("final_norm.weight");
    m.blocks.resize(static_cast<std::size_t>(m.config.n_layers));
    for (int i = 0; i < m.config.n_layers; ++i) {
        auto& b = m.blocks[static_cast<std::size_t>(i)];
        b.attn_norm = a.tensor_f64("block." + std::to_string(i) + ".attn_norm.weight");
        b.wq = a.matrix(MicroModel::weight_name(i, "attn.q"));
        b.wk = a.matrix(MicroModel::weight_name(i, "attn.k"));
        b.wv = a.matrix(MicroModel::weight_name(i, "attn.v"));
        b.wo = a.matrix(MicroModel::weight_name(i, "attn.o"));
        b.mlp_norm = a.tensor_f64("block." + std::to_string(i) + ".mlp_norm.weight");
        b.w_up = a.matrix(MicroModel::weight_name(i, "mlp.up"));
        b.w_gate = a.matrix(MicroModel::weight_name(i, "mlp.gate"));
        b.w_down = a.matrix(MicroModel::weight_name(i, "mlp.down"));
    }
    for (auto& [name, w] : m.prunable_weights())
        if (!w->all_finite()) throw MalformedHeader("non-finite weights in '" + name + "'");
    return m;
}

inline MicroModel load_model(const std::string& path) {
    return load_model(tensorio::read_archive(path));
}

} // namespace ssgr::micro
