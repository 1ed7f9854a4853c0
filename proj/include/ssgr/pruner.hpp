#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssgr/errors.hpp"
#include "ssgr/linalg.hpp"
#include "ssgr/matrix.hpp"
#include "ssgr/micromodel.hpp"

namespace ssgr::prune {

struct SparsityPattern {
    enum class Kind { unstructured, semi_structured };

    Kind kind = Kind::unstructured;
    double ratio = 0.5; // unstructured: fraction of weights removed
    int n = 0, m = 0;   // semi-structured: keep n of every m consecutive

    static SparsityPattern unstructured(double ratio) {
        SparsityPattern p;
        p.kind = Kind::unstructured;
        p.ratio = ratio;
        p.validate();
        return p;
    }

    static SparsityPattern semi_structured(int n, int m) {
        SparsityPattern p;
        p.kind = Kind::semi_structured;
        p.n = n;
        p.m = m;
        p.validate();
        return p;
    }

    void validate() const {
        if (kind == Kind::unstructured) {
            if (!(ratio > 0.0 && ratio < 1.0))
                throw ValidationError("unstructured sparsity ratio must be in (0,1)");
        } else {
            if (!(n > 0 && n < m))
                throw ValidationError("semi-structured pattern requires 0 < n < m");
        }
    }

    double target_sparsity() const {
        return kind == Kind::unstructured
                   ? ratio
                   : 1.0 - static_cast<double>(n) / static_cast<double>(m);
    }

    std::string to_string() const {
        if (kind == Kind::semi_structured) return std::to_string(n) + ":" + std::to_string(m);
        nlohmann::json j = ratio; // shortest round-trip float formatting
        return j.dump();
    }

    /// Accepts "0.5" (unstructured ratio) or "2:4" (N:M).
    static SparsityPattern parse(const std::string& s) {
        const auto colon = s.find(':');
        try {
            if (colon != std::string::npos)
                return semi_structured(std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1)));
            return unstructured(std::stod(s));
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception&) {
            throw ValidationError("cannot parse sparsity pattern '" + s + "'");
        }
    }
};

/// Per-layer calibration statistics: the raw activation Gram matrix
/// (sum over tokens of x x^T, upper triangle maintained) and the token count.
/// Column norms are the square roots of the Gram diagonal, so they always
/// equal the l2 norm of each input feature over all tokens seen.
class ActivationStats {
public:
    ActivationStats() = default;

    ActivationStats(std::string layer_name, std::int64_t dim)
        : layer_name_(std::move(layer_name)), dim_(dim),
          gram_(static_cast<std::size_t>(dim * dim), 0.0) {
        if (dim <= 0) throw DimMismatch("ActivationStats dim must be positive");
    }

    const std::string& layer_name() const { return layer_name_; }
    std::int64_t dim() const { return dim_; }
    std::int64_t token_count() const { return token_count_; }

    void add_token(const double* x, std::int64_t len) {
        if (len != dim_) throw DimMismatch("activation length does not match stats dim");
        for (std::int64_t i = 0; i < dim_; ++i) {
            const double xi = x[i];
            double* row = gram_.data() + i * dim_;
            for (std::int64_t j = i; j < dim_; ++j) row[j] += xi * x[j];
        }
        ++token_count_;
    }

    std::vector<double> col_norms() const {
        std::vector<double> out(static_cast<std::size_t>(dim_));
        for (std::int64_t i = 0; i < dim_; ++i)
            out[static_cast<std::size_t>(i)] = std::sqrt(gram_[static_cast<std::size_t>(i * dim_ + i)]);
        return out;
    }

    /// Unscaled Gram matrix X X^T.
    SpdMatrix raw_gram() const { return mirrored(1.0); }

    /// Hessian proxy (2 / token_count) * X X^T.
    SpdMatrix finalized_hessian() const {
        if (token_count_ == 0) throw EmptyCorpus("no tokens accumulated for " + layer_name_);
        return mirrored(2.0 / static_cast<double>(token_count_));
    }

private:
    SpdMatrix mirrored(double scale) const {
        SpdMatrix h(dim_);
        for (std::int64_t i = 0; i < dim_; ++i)
            for (std::int64_t j = i; j < dim_; ++j) {
                const double v = gram_[static_cast<std::size_t>(i * dim_ + j)] * scale;
                h(i, j) = v;
                h(j, i) = v;
            }
        return h;
    }

    std::string layer_name_;
    std::int64_t dim_ = 0;
    std::vector<double> gram_;
    std::int64_t token_count_ = 0;
};

inline void accumulate_stats(ActivationStats& stats, const micro::ActivationBatch& batch) {
    if (batch.inputs.rows() != stats.dim())
        throw DimMismatch("batch feature count does not match stats dim");
    std::vector<double> x(static_cast<std::size_t>(stats.dim()));
    for (std::int64_t t = 0; t < batch.token_count; ++t) {
        for (std::int64_t i = 0; i < stats.dim(); ++i)
            x[static_cast<std::size_t>(i)] = batch.inputs(i, t);
        stats.add_token(x.data(), stats.dim());
    }
}

struct PruneMask {
    std::int64_t rows = 0, cols = 0;
    std::vector<std::uint8_t> keep; // row-major, true = weight survives

    PruneMask() = default;
    PruneMask(std::int64_t r, std::int64_t c)
        : rows(r), cols(c), keep(static_cast<std::size_t>(r * c), 1) {}

    bool at(std::int64_t r, std::int64_t c) const {
        return keep[static_cast<std::size_t>(r * cols + c)] != 0;
    }
    void set(std::int64_t r, std::int64_t c, bool v) {
        keep[static_cast<std::size_t>(r * cols + c)] = v ? 1 : 0;
    }

    std::int64_t pruned_count() const {
        std::int64_t n = 0;
        for (auto k : keep) n += (k == 0);
        return n;
    }

    double achieved_sparsity() const {
        return static_cast<double>(pruned_count()) / static_cast<double>(rows * cols);
    }

    friend bool operator==(const PruneMask& a, const PruneMask& b) {
        return a.rows == b.rows && a.cols == b.cols && a.keep == b.keep;
    }
};

struct LayerPruneReport {
    std::string layer_name;
    std::string method;
    double target_sparsity = 0.0;
    double achieved_sparsity = 0.0;
    double reconstruction_error = 0.0;
    double wall_time_ms = 0.0;
};

inline nlohmann::json report_to_json(const LayerPruneReport& r) {
    return nlohmann::json{{"layer", r.layer_name},          {"method", r.method},
                          {"target", r.target_sparsity},    {"achieved", r.achieved_sparsity},
                          {"recon_error", r.reconstruction_error}, {"ms", r.wall_time_ms}};
}

inline DenseMatrix magnitude_scores(const DenseMatrix& w) {
    DenseMatrix s = w;
    for (double& v : s.data()) v = std::abs(v);
    return s;
}

/// S[i][j] = |w[i][j]| * ||X_j||_2
inline DenseMatrix wanda_scores(const DenseMatrix& w, const ActivationStats& stats) {
    if (w.cols() != stats.dim()) throw DimMismatch("wanda_scores: w.cols != stats dim");
    const std::vector<double> norms = stats.col_norms();
    DenseMatrix s(w.rows(), w.cols());
    for (std::int64_t r = 0; r < w.rows(); ++r)
        for (std::int64_t c = 0; c < w.cols(); ++c)
            s(r, c) = std::abs(w(r, c)) * norms[static_cast<std::size_t>(c)];
    return s;
}

enum class Grouping { per_row, global };

namespace detail {

// Prune the `n_prune` lowest-scoring entries of `idx` (ties: lower column
// index first).
inline void prune_lowest(const DenseMatrix& scores, std::int64_t row,
                         std::vector<std::int64_t>& idx, std::int64_t n_prune, PruneMask& mask) {
    std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        const double sa = scores(row, a), sb = scores(row, b);
        return sa != sb ? sa < sb : a < b;
    });
    for (std::int64_t i = 0; i < n_prune; ++i) mask.set(row, idx[static_cast<std::size_t>(i)], false);
}

inline std::int64_t floor_count(std::int64_t total, double ratio) {
    return static_cast<std::int64_t>(std::floor(static_cast<double>(total) * ratio + 1e-9));
}

} // namespace detail

/// Mask construction under the pattern's exact counting rules.
/// Unstructured: per output row, the floor(cols * ratio) lowest-scoring
/// entries are pruned (global grouping available for comparison runs).
/// Semi-structured: every aligned group of m consecutive entries along the
/// input dimension loses its m-n lowest-scoring entries.
inline PruneMask build_mask(const DenseMatrix& scores, const SparsityPattern& pattern,
                            Grouping grouping = Grouping::per_row) {
    pattern.validate();
    PruneMask mask(scores.rows(), scores.cols());

    if (pattern.kind == SparsityPattern::Kind::semi_structured) {
        if (scores.cols() % pattern.m != 0)
            throw IndivisibleGroup("cols " + std::to_string(scores.cols()) +
                                   " not divisible by group size " + std::to_string(pattern.m));
        std::vector<std::int64_t> idx(static_cast<std::size_t>(pattern.m));
        for (std::int64_t r = 0; r < scores.rows(); ++r)
            for (std::int64_t g = 0; g < scores.cols(); g += pattern.m) {
                std::iota(idx.begin(), idx.end(), g);
                detail::prune_lowest(scores, r, idx, pattern.m - pattern.n, mask);
            }
        return mask;
    }

    if (grouping == Grouping::per_row) {
        const std::int64_t n_prune = detail::floor_count(scores.cols(), pattern.ratio);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(scores.cols()));
        for (std::int64_t r = 0; r < scores.rows(); ++r) {
            std::iota(idx.begin(), idx.end(), 0);
            detail::prune_lowest(scores, r, idx, n_prune, mask);
        }
        return mask;
    }

    // Global grouping: one comparison pool over the whole matrix.
    const std::int64_t total = scores.rows() * scores.cols();
    const std::int64_t n_prune = detail::floor_count(total, pattern.ratio);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(total));
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        const double sa = scores.data()[static_cast<std::size_t>(a)];
        const double sb = scores.data()[static_cast<std::size_t>(b)];
        return sa != sb ? sa < sb : a < b;
    });
    for (std::int64_t i = 0; i < n_prune; ++i) {
        const std::int64_t flat = idx[static_cast<std::size_t>(i)];
        mask.set(flat / scores.cols(), flat % scores.cols(), false);
    }
    return mask;
}

/// True when every aligned group of m holds exactly m-n pruned entries.
inline bool mask_satisfies(const PruneMask& mask, const SparsityPattern& pattern) {
    if (pattern.kind == SparsityPattern::Kind::semi_structured) {
        if (mask.cols % pattern.m != 0) return false;
        for (std::int64_t r = 0; r < mask.rows; ++r)
            for (std::int64_t g = 0; g < mask.cols; g += pattern.m) {
                int pruned = 0;
                for (int i = 0; i < pattern.m; ++i) pruned += !mask.at(r, g + i);
                if (pruned != pattern.m - pattern.n) return false;
            }
        return true;
    }
    const std::int64_t per_row = detail::floor_count(mask.cols, pattern.ratio);
    for (std::int64_t r = 0; r < mask.rows; ++r) {
        std::int64_t pruned = 0;
        for (std::int64_t c = 0; c < mask.cols; ++c) pruned += !mask.at(r, c);
        if (pruned != per_row) return false;
    }
    return true;
}

inline DenseMatrix apply_mask(const DenseMatrix& w, const PruneMask& mask) {
    if (w.rows() != mask.rows || w.cols() != mask.cols)
        throw DimMismatch("apply_mask: shape mismatch");
    DenseMatrix out = w;
    for (std::int64_t r = 0; r < w.rows(); ++r)
        for (std::int64_t c = 0; c < w.cols(); ++c)
            if (!mask.at(r, c)) out(r, c) = 0.0;
    return out;
}

/// ||w X - w_hat X||_F^2 on the captured inputs.
inline double reconstruction_error(const DenseMatrix& w, const DenseMatrix& w_hat,
                                   const micro::ActivationBatch& batch) {
    if (!w.same_shape(w_hat)) throw DimMismatch("reconstruction_error: weight shapes differ");
    if (batch.inputs.rows() != w.cols())
        throw DimMismatch("reconstruction_error: activation features != w.cols");
    double acc = 0.0;
    std::vector<double> delta(static_cast<std::size_t>(w.cols()));
    for (std::int64_t r = 0; r < w.rows(); ++r) {
        for (std::int64_t c = 0; c < w.cols(); ++c)
            delta[static_cast<std::size_t>(c)] = w(r, c) - w_hat(r, c);
        for (std::int64_t t = 0; t < batch.token_count; ++t) {
            double s = 0.0;
            for (std::int64_t c = 0; c < w.cols(); ++c)
                s += delta[static_cast<std::size_t>(c)] * batch.inputs(c, t);
            acc += s * s;
        }
    }
    return acc;
}

/// Same quantity computed from the Gram matrix: ||dW X||_F^2 = dW G dW^T summed
/// over rows. Lets prune_model report errors without materializing X.
inline double reconstruction_error_gram(const DenseMatrix& w, const DenseMatrix& w_hat,
                                        const ActivationStats& stats) {
    if (!w.same_shape(w_hat)) throw DimMismatch("reconstruction_error: weight shapes differ");
    if (stats.dim() != w.cols()) throw DimMismatch("reconstruction_error: stats dim != w.cols");
    const SpdMatrix g = stats.raw_gram();
    double acc = 0.0;
    std::vector<double> delta(static_cast<std::size_t>(w.cols()));
    std::vector<double> gd(static_cast<std::size_t>(w.cols()));
    for (std::int64_t r = 0; r < w.rows(); ++r) {
        for (std::int64_t c = 0; c < w.cols(); ++c)
            delta[static_cast<std::size_t>(c)] = w(r, c) - w_hat(r, c);
        for (std::int64_t i = 0; i < w.cols(); ++i) {
            double s = 0.0;
            const double* gi = g.row_ptr(i);
            for (std::int64_t j = 0; j < w.cols(); ++j) s += gi[j] * delta[static_cast<std::size_t>(j)];
            gd[static_cast<std::size_t>(i)] = s;
        }
        for (std::int64_t i = 0; i < w.cols(); ++i)
            acc += delta[static_cast<std::size_t>(i)] * gd[static_cast<std::size_t>(i)];
    }
    return std::max(0.0, acc);
}

struct SparseGptResult {
    DenseMatrix weights;
    PruneMask mask;
    LayerPruneReport report;
};

/// One-shot second-order pruning of a single layer.
///
/// The damped inverse Hessian's upper Cholesky factor U drives both the
/// saliency scores w^2 / U[j][j]^2 and the surviving-weight compensation:
/// eliminating column j adds -(w[i][j]-q)/U[j][j] * U[j][j:] to the
/// not-yet-processed columns of row i. Masks are chosen upfront under the
/// pattern's exact counting rules, so achieved sparsity matches the target
/// and reruns are byte-identical. Trailing updates are batched per column
/// block of `blocksize`.
inline SparseGptResult sparsegpt_prune(const DenseMatrix& w, const ActivationStats& stats,
                                       const SparsityPattern& pattern, int blocksize = 128,
                                       double lambda_frac = 0.01,
                                       Grouping grouping = Grouping::per_row) {
    const auto t0 = std::chrono::steady_clock::now();
    if (w.cols() != stats.dim()) throw DimMismatch("sparsegpt_prune: w.cols != stats dim");
    if (blocksize <= 0) throw ValidationError("sparsegpt_prune: blocksize must be positive");
    const std::int64_t rows = w.rows(), cols = w.cols();

    SpdMatrix h = stats.finalized_hessian();
    DenseMatrix work = w;

    // Dead input features (identically zero activations) contribute nothing:
    // zero their weight columns outright and decouple them in H.
    for (std::int64_t j = 0; j < cols; ++j) {
        if (h(j, j) == 0.0) {
            for (std::int64_t r = 0; r < rows; ++r) work(r, j) = 0.0;
            h(j, j) = 1.0;
        }
    }

    SpdMatrix hinv;
    double lambda = lambda_frac;
    for (int attempt = 0;; ++attempt) {
        try {
            hinv = linalg::spd_inverse(linalg::dampen(h, lambda));
            break;
        } catch (const NotPositiveDefinite&) {
            if (attempt >= 3) throw;
            lambda = (lambda == 0.0) ? 0.01 : lambda * 10.0;
        }
    }
    // Lower factor of H^-1; the upper factor is its transpose, so
    // U[j][t] == chol(t, j) for t >= j.
    const DenseMatrix chol = linalg::cholesky(hinv);

    DenseMatrix saliency(rows, cols);
    for (std::int64_t c = 0; c < cols; ++c) {
        const double d = chol(c, c);
        const double inv_d2 = 1.0 / (d * d);
        for (std::int64_t r = 0; r < rows; ++r) saliency(r, c) = work(r, c) * work(r, c) * inv_d2;
    }
    const PruneMask mask = build_mask(saliency, pattern, grouping);

    std::vector<double> err(static_cast<std::size_t>(rows * blocksize));
    for (std::int64_t b0 = 0; b0 < cols; b0 += blocksize) {
        const std::int64_t b1 = std::min<std::int64_t>(b0 + blocksize, cols);
        const std::int64_t bw = b1 - b0;
        std::fill(err.begin(), err.begin() + static_cast<std::size_t>(rows * bw), 0.0);

        for (std::int64_t j = b0; j < b1; ++j) {
            const double d = chol(j, j);
            for (std::int64_t r = 0; r < rows; ++r) {
                double* wr = work.row_ptr(r);
                const double wv = wr[j];
                const double q = mask.at(r, j) ? wv : 0.0;
                const double e = (wv - q) / d;
                wr[j] = q;
                if (e != 0.0)
                    for (std::int64_t t = j + 1; t < b1; ++t) wr[t] -= e * chol(t, j);
                err[static_cast<std::size_t>(r * bw + (j - b0))] = e;
            }
        }
        // Batched trailing update: W[:, b1:] -= Err * U[b0:b1, b1:]
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* er = err.data() + r * bw;
            double* wr = work.row_ptr(r);
            for (std::int64_t t = b1; t < cols; ++t) {
                double s = 0.0;
                const double* ct = chol.row_ptr(t);
                for (std::int64_t j = 0; j < bw; ++j) s += er[j] * ct[b0 + j];
                wr[t] -= s;
            }
        }
    }

    SparseGptResult res;
    res.report.layer_name = stats.layer_name();
    res.report.method = "sparsegpt";
    res.report.target_sparsity = pattern.target_sparsity();
    res.report.achieved_sparsity = mask.achieved_sparsity();
    res.report.reconstruction_error = reconstruction_error_gram(w, work, stats);
    res.weights = std::move(work);
    res.mask = mask;
    res.report.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

enum class Method { magnitude, wanda, sparsegpt };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::magnitude: return "magnitude";
        case Method::wanda: return "wanda";
        case Method::sparsegpt: return "sparsegpt";
    }
    return "?";
}

inline Method method_from_name(const std::string& s) {
    if (s == "magnitude") return Method::magnitude;
    if (s == "wanda") return Method::wanda;
    if (s == "sparsegpt") return Method::sparsegpt;
    throw ValidationError("unknown pruning method '" + s + "'");
}

struct PruneOptions {
    Method method = Method::sparsegpt;
    SparsityPattern pattern = SparsityPattern::unstructured(0.5);
    micro::CaptureMode capture_mode = micro::CaptureMode::sequential_pruned_propagation;
    int blocksize = 128;
    double lambda_frac = 0.01;
    Grouping grouping = Grouping::per_row;
};

namespace detail {

// Within a block the prunable matrices fall into four dependency stages:
// q/k/v read the attention norm, o reads the (q/k/v-dependent) attention
// output, up/gate read the MLP norm (o-dependent), down reads the gated
// activations. Sequential propagation recaptures at stage boundaries so a
// layer's inputs always reflect every previously pruned layer.
inline int stage_of(const std::string& layer_name) {
    if (layer_name.find(".attn.o.") != std::string::npos) return 1;
    if (layer_name.find(".mlp.up.") != std::string::npos ||
        layer_name.find(".mlp.gate.") != std::string::npos)
        return 2;
    if (layer_name.find(".mlp.down.") != std::string::npos) return 3;
    return 0; // q, k, v
}

} // namespace detail

/// Prune every prunable matrix of a micro-model in checkpoint order.
/// In sequential mode, activation statistics for each dependency stage are
/// recaptured from the partially pruned model; dense mode captures once
/// from the intact model.
inline std::vector<LayerPruneReport> prune_model(micro::MicroModel& model,
                                                 const std::vector<std::vector<int>>& calib_sequences,
                                                 const PruneOptions& opts) {
    if (calib_sequences.empty()) throw EmptyCorpus("prune_model: empty calibration set");
    opts.pattern.validate();

    auto layers = model.prunable_weights();

    // Group layers into capture units.
    std::vector<std::vector<std::size_t>> units;
    if (opts.capture_mode == micro::CaptureMode::dense_propagation) {
        units.emplace_back(layers.size());
        std::iota(units.back().begin(), units.back().end(), std::size_t{0});
    } else {
        int last_block = -1, last_stage = -1;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const int blk = std::stoi(layers[i].first.substr(6)); // after "block."
            const int stage = detail::stage_of(layers[i].first);
            if (blk != last_block || stage != last_stage) {
                units.emplace_back();
                last_block = blk;
                last_stage = stage;
            }
            units.back().push_back(i);
        }
    }

    std::vector<LayerPruneReport> reports;
    reports.reserve(layers.size());

    for (const auto& unit : units) {
        std::map<std::string, ActivationStats> stats;
        std::map<std::string, bool> wanted;
        for (std::size_t i : unit) {
            stats.emplace(layers[i].first,
                          ActivationStats(layers[i].first, layers[i].second->cols()));
            wanted[layers[i].first] = true;
        }
        micro::capture_stream(
            model, calib_sequences, micro::CaptureMode::dense_propagation, {},
            [&](const std::string& name) { return wanted.count(name) != 0; },
            [&](const std::string& name, const double* x, std::int64_t len) {
                stats.at(name).add_token(x, len);
            });

        for (std::size_t i : unit) {
            const std::string& name = layers[i].first;
            DenseMatrix& w = *layers[i].second;
            const ActivationStats& st = stats.at(name);

            if (opts.method == Method::sparsegpt) {
                SparseGptResult r = sparsegpt_prune(w, st, opts.pattern, opts.blocksize,
                                                    opts.lambda_frac, opts.grouping);
                w = std::move(r.weights);
                reports.push_back(std::move(r.report));
                continue;
            }

            const auto t0 = std::chrono::steady_clock::now();
            const DenseMatrix scores = opts.method == Method::magnitude
                                           ? magnitude_scores(w)
                                           : wanda_scores(w, st);
            const PruneMask mask = build_mask(scores, opts.pattern, opts.grouping);
            DenseMatrix pruned = apply_mask(w, mask);
            LayerPruneReport rep;
            rep.layer_name = name;
            rep.method = method_name(opts.method);
            rep.target_sparsity = opts.pattern.target_sparsity();
            rep.achieved_sparsity = mask.achieved_sparsity();
            rep.reconstruction_error = reconstruction_error_gram(w, pruned, st);
            rep.wall_time_ms = std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - t0)
                                   .count();
            w = std::move(pruned);
            reports.push_back(std::move(rep));
        }
    }
    return reports;
}

/// Summary written under the "ssgr.prune" metadata key of pruned archives.
inline std::string prune_metadata_json(const PruneOptions& opts,
                                       const std::vector<LayerPruneReport>& reports) {
    double mean_achieved = 0.0;
    for (const auto& r : reports) mean_achieved += r.achieved_sparsity;
    if (!reports.empty()) mean_achieved /= static_cast<double>(reports.size());
    nlohmann::json j{{"method", method_name(opts.method)},
                     {"pattern", opts.pattern.to_string()},
                     {"target_sparsity", opts.pattern.target_sparsity()},
                     {"achieved_sparsity", mean_achieved},
                     {"layers", reports.size()}};
    return j.dump();
}

/// Prune a checkpoint archive. Micro-model checkpoints support every method;
/// foreign archives (no micro config metadata) support magnitude pruning of
/// the rank-2 tensors matching `name_pattern`.
inline std::vector<LayerPruneReport> prune_archive(const std::string& in_path,
                                                   const std::string& out_path,
                                                   const std::vector<std::vector<int>>& calib_sequences,
                                                   const PruneOptions& opts,
                                                   const std::string& name_pattern = "block.*.weight") {
    tensorio::TensorArchive archive = tensorio::read_archive(in_path);
    std::vector<LayerPruneReport> reports;

    if (archive.metadata().count("ssgr.micro.config")) {
        micro::MicroModel model = micro::load_model(archive);
        reports = prune_model(model, calib_sequences, opts);
        for (const auto& [name, w] : model.prunable_weights())
            archive.put_matrix(name, archive.record(name).dtype, *w);
    } else {
        if (opts.method != Method::magnitude)
            throw ValidationError("archive has no micro-model config; only magnitude pruning "
                                  "is possible without activations");
        for (const auto& [name, w] : tensorio::prunable_layers(archive, name_pattern)) {
            const auto t0 = std::chrono::steady_clock::now();
            const PruneMask mask = build_mask(magnitude_scores(w), opts.pattern, opts.grouping);
            archive.put_matrix(name, archive.record(name).dtype, apply_mask(w, mask));
            LayerPruneReport rep;
            rep.layer_name = name;
            rep.method = method_name(opts.method);
            rep.target_sparsity = opts.pattern.target_sparsity();
            rep.achieved_sparsity = mask.achieved_sparsity();
            rep.wall_time_ms = std::chrono::duration<double, std::milli>(
                                   std::chrono::steady_clock::now() - t0)
                                   .count();
            reports.push_back(std::move(rep));
        }
    }

    archive.metadata()["ssgr.prune"] = prune_metadata_json(opts, reports);
    archive.write(out_path);
    return reports;
}

} // namespace ssgr::prune
