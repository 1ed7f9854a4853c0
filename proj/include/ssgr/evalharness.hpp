#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssgr/calib.hpp"
#include "ssgr/errors.hpp"
#include "ssgr/pruner.hpp"

namespace ssgr::evalh {

struct Benchmark {
    std::string name;
    std::vector<calib::Problem> problems;
};

inline Benchmark load_benchmark(const std::string& name, const std::string& path) {
    Benchmark b;
    b.name = name;
    b.problems = calib::load_problems(path);
    if (b.problems.empty()) throw ValidationError("benchmark '" + name + "' is empty");
    return b;
}

inline double pass_at_1(int correct_count, int k) {
    if (k < 1 || correct_count < 0 || correct_count > k)
        throw ValidationError("pass_at_1: need 0 <= correct_count <= k, k >= 1");
    return static_cast<double>(correct_count) / static_cast<double>(k);
}

struct ProblemEval {
    std::string id;
    int k = 0;
    int correct_count = 0;
    double pass_at_1 = 0.0;
    std::vector<std::int64_t> response_tokens;
    double mean_response_tokens = 0.0;
};

struct EvalResult {
    std::string benchmark;
    std::string variant; // (model-variant, calibration-data) label
    int k = 0;
    std::vector<ProblemEval> per_problem;
    double aggregate_pass_at_1 = 0.0;
    double aggregate_mean_response_tokens = 0.0;
};

/// k samples per problem through the (cache-backed) source; answers verified
/// with the calib verifier; per-problem pass@1 averaged unweighted.
inline EvalResult run_benchmark(calib::SampleSource& source, const Benchmark& benchmark, int k,
                                const calib::GenerationParams& params,
                                const std::string& variant = {}) {
    if (k < 1) throw ValidationError("run_benchmark: k must be >= 1");
    EvalResult res;
    res.benchmark = benchmark.name;
    res.variant = variant;
    res.k = k;
    double pass_sum = 0.0, len_sum = 0.0;
    std::int64_t len_n = 0;
    for (const auto& p : benchmark.problems) {
        const calib::ResponseSet rs = source.sample_responses(p, k, params);
        ProblemEval pe;
        pe.id = p.id;
        pe.k = k;
        pe.correct_count = rs.k;
        pe.pass_at_1 = pass_at_1(rs.k, k);
        double plen = 0.0;
        for (const auto& r : rs.responses) {
            pe.response_tokens.push_back(r.token_length);
            plen += static_cast<double>(r.token_length);
        }
        pe.mean_response_tokens = plen / static_cast<double>(k);
        pass_sum += pe.pass_at_1;
        len_sum += plen;
        len_n += k;
        res.per_problem.push_back(std::move(pe));
    }
    res.aggregate_pass_at_1 = pass_sum / static_cast<double>(benchmark.problems.size());
    res.aggregate_mean_response_tokens =
        len_n ? len_sum / static_cast<double>(len_n) : 0.0;
    return res;
}

struct LengthStats {
    double mean = 0.0;
    double median = 0.0;
    std::int64_t max = 0;
};

/// Token-length aggregates over every sampled response of a result.
inline LengthStats response_length_stats(const EvalResult& result) {
    std::vector<std::int64_t> lens;
    for (const auto& pe : result.per_problem)
        lens.insert(lens.end(), pe.response_tokens.begin(), pe.response_tokens.end());
    if (lens.empty()) throw EmptySet("response_length_stats: no responses");
    std::sort(lens.begin(), lens.end());
    LengthStats s;
    double sum = 0.0;
    for (auto l : lens) sum += static_cast<double>(l);
    s.mean = sum / static_cast<double>(lens.size());
    const std::size_t n = lens.size();
    s.median = n % 2 ? static_cast<double>(lens[n / 2])
                     : 0.5 * static_cast<double>(lens[n / 2 - 1] + lens[n / 2]);
    s.max = lens.back();
    return s;
}

inline nlohmann::json eval_result_to_json(const EvalResult& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& pe : r.per_problem)
        per.push_back({{"id", pe.id},
                       {"k", pe.k},
                       {"correct_count", pe.correct_count},
                       {"pass_at_1", pe.pass_at_1},
                       {"response_tokens", pe.response_tokens},
                       {"mean_response_tokens", pe.mean_response_tokens}});
    return nlohmann::json{{"schema", "ssgr.eval.v1"},
                          {"benchmark", r.benchmark},
                          {"variant", r.variant},
                          {"k", r.k},
                          {"aggregate_pass_at_1", r.aggregate_pass_at_1},
                          {"aggregate_mean_response_tokens", r.aggregate_mean_response_tokens},
                          {"per_problem", per}};
}

inline EvalResult eval_result_from_json(const nlohmann::json& j) {
    if (j.value("schema", std::string{}) != "ssgr.eval.v1")
        throw ValidationError("not an ssgr.eval.v1 document");
    EvalResult r;
    r.benchmark = j.at("benchmark").get<std::string>();
    r.variant = j.value("variant", std::string{});
    r.k = j.at("k").get<int>();
    r.aggregate_pass_at_1 = j.at("aggregate_pass_at_1").get<double>();
    r.aggregate_mean_response_tokens = j.at("aggregate_mean_response_tokens").get<double>();
    for (const auto& pj : j.at("per_problem")) {
        ProblemEval pe;
        pe.id = pj.at("id").get<std::string>();
        pe.k = pj.at("k").get<int>();
        pe.correct_count = pj.at("correct_count").get<int>();
        pe.pass_at_1 = pj.at("pass_at_1").get<double>();
        pe.response_tokens = pj.at("response_tokens").get<std::vector<std::int64_t>>();
        pe.mean_response_tokens = pj.at("mean_response_tokens").get<double>();
        r.per_problem.push_back(std::move(pe));
    }
    return r;
}

enum class ReportFormat { json, csv, markdown };

inline ReportFormat report_format_from_name(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    throw ValidationError("unknown report format '" + s + "'");
}

namespace detail {

struct Grid {
    std::vector<std::string> benchmarks;             // column order
    std::vector<std::string> variants;               // row order
    std::map<std::string, std::map<std::string, double>> cells; // variant -> benchmark -> score
    std::vector<double> avg;                         // per variant row
};

// Scores land in the grid as percentages rounded to one decimal, and AVG is
// the exact mean of those rounded cells, so every renderer reports the same
// numbers.
inline Grid make_grid(const std::vector<EvalResult>& results) {
    Grid g;
    for (const auto& r : results) {
        if (std::find(g.benchmarks.begin(), g.benchmarks.end(), r.benchmark) == g.benchmarks.end())
            g.benchmarks.push_back(r.benchmark);
        if (std::find(g.variants.begin(), g.variants.end(), r.variant) == g.variants.end())
            g.variants.push_back(r.variant);
        g.cells[r.variant][r.benchmark] = std::round(r.aggregate_pass_at_1 * 1000.0) / 10.0;
    }
    for (const auto& v : g.variants) {
        double sum = 0.0;
        int n = 0;
        for (const auto& b : g.benchmarks) {
            auto it = g.cells[v].find(b);
            if (it != g.cells[v].end()) {
                sum += it->second;
                ++n;
            }
        }
        g.avg.push_back(n ? sum / n : 0.0);
    }
    return g;
}

inline std::string num(double v) {
    nlohmann::json j = v;
    return j.dump(); // shortest round-trip, identical in every format
}

} // namespace detail

/// Table 2-style grid: one row per (model-variant, calibration-data) label,
/// one column per benchmark plus the unweighted AVG; optional per-layer
/// pruning diagnostics appended.
inline std::string report(const std::vector<EvalResult>& results,
                          const std::vector<prune::LayerPruneReport>& prune_reports,
                          ReportFormat format) {
    const detail::Grid g = detail::make_grid(results);

    if (format == ReportFormat::json) {
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t i = 0; i < g.variants.size(); ++i) {
            nlohmann::json row;
            row["variant"] = g.variants[i];
            for (const auto& b : g.benchmarks) {
                auto it = g.cells.at(g.variants[i]).find(b);
                if (it != g.cells.at(g.variants[i]).end()) row[b] = it->second;
            }
            row["AVG"] = g.avg[i];
            rows.push_back(std::move(row));
        }
        nlohmann::json doc{{"schema", "ssgr.report.v1"}, {"rows", rows}};
        if (!prune_reports.empty()) {
            nlohmann::json lp = nlohmann::json::array();
            for (const auto& r : prune_reports) lp.push_back(prune::report_to_json(r));
            doc["prune_layers"] = std::move(lp);
        }
        return doc.dump(2) + "\n";
    }

    if (format == ReportFormat::csv) {
        std::string out = "variant";
        for (const auto& b : g.benchmarks) out += "," + b;
        out += ",AVG\n";
        for (std::size_t i = 0; i < g.variants.size(); ++i) {
            out += g.variants[i];
            for (const auto& b : g.benchmarks) {
                out += ",";
                auto it = g.cells.at(g.variants[i]).find(b);
                if (it != g.cells.at(g.variants[i]).end()) out += detail::num(it->second);
            }
            out += "," + detail::num(g.avg[i]) + "\n";
        }
        if (!prune_reports.empty()) {
            out += "\nlayer,method,target,achieved,recon_error\n";
            for (const auto& r : prune_reports)
                out += r.layer_name + "," + r.method + "," + detail::num(r.target_sparsity) +
                       "," + detail::num(r.achieved_sparsity) + "," +
                       detail::num(r.reconstruction_error) + "\n";
        }
        return out;
    }

    std::string out = "| variant |";
    for (const auto& b : g.benchmarks) out += " " + b + " |";
    out += " AVG |\n|---|";
    for (std::size_t i = 0; i < g.benchmarks.size() + 1; ++i) out += "---|";
    out += "\n";
    for (std::size_t i = 0; i < g.variants.size(); ++i) {
        out += "| " + g.variants[i] + " |";
        for (const auto& b : g.benchmarks) {
            auto it = g.cells.at(g.variants[i]).find(b);
            out += it != g.cells.at(g.variants[i]).end() ? " " + detail::num(it->second) + " |"
                                                         : " |";
        }
        out += " " + detail::num(g.avg[i]) + " |\n";
    }
    if (!prune_reports.empty()) {
        out += "\n| layer | method | target | achieved | recon_error |\n|---|---|---|---|---|\n";
        for (const auto& r : prune_reports)
            out += "| " + r.layer_name + " | " + r.method + " | " + detail::num(r.target_sparsity) +
                   " | " + detail::num(r.achieved_sparsity) + " | " +
                   detail::num(r.reconstruction_error) + " |\n";
    }
    return out;
}

} // namespace ssgr::evalh
