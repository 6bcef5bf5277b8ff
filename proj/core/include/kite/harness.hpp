#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kite/dataset.hpp"
#include "kite/generate.hpp"
#include "kite/model.hpp"

namespace kite {

struct SampleMetrics {
    std::string id;
    double rouge1 = 0.0;
    double rouge2 = 0.0;
    double rouge_l = 0.0;
    double token_f1 = 0.0;
    std::string prediction;
};

struct MetricReport {
    std::vector<SampleMetrics> per_sample;
    double mean_rouge1 = 0.0;
    double mean_rouge2 = 0.0;
    double mean_rouge_l = 0.0;
    double mean_token_f1 = 0.0;

    void compute_means();
};

enum class EvalVariant : std::uint8_t { Baseline = 0, Retrieval = 1 };

std::string variant_name(EvalVariant v);

// Knobs shared by eval and the context-length sweep. Retention is given as
// fractions of S so one setting applies across restricted context lengths.
struct EvalOptions {
    EvalVariant variant = EvalVariant::Retrieval;
    double alpha_q_frac = 0.4;
    double alpha_kv_frac = 0.4;
    std::optional<std::size_t> alpha_q_abs;   // override the fractions
    std::optional<std::size_t> alpha_kv_abs;
    std::size_t k = 0;  // 0 -> S
    std::size_t max_new_tokens = 16;
    std::optional<TokenId> stop_token;
    std::size_t chunk_len = 0;
    std::size_t stride = 0;
    bool staleness_updates = true;
    PrefixMaskMode prefix_mask = PrefixMaskMode::Bidirectional;
    bool use_qa_template = true;  // wrap questions in Article/Question/Answer
};

GenerationConfig make_generation_config(const ModelConfig& config,
                                        const EvalOptions& options);

// Generates a prediction for every sample (byte tokenizer) and scores it
// against the references. Per-sample work is dispatched across workers; the
// report order is the sample order regardless of worker count.
MetricReport run_eval(const Weights& weights, const ModelConfig& config,
                      const std::vector<Sample>& samples,
                      const EvalOptions& options);

struct SweepRow {
    std::size_t context_length = 0;
    EvalVariant variant = EvalVariant::Baseline;
    MetricReport report;
};

// Restricted-context comparison: re-runs the evaluation with S clamped to
// each length, for each requested variant. Lengths must be ascending and at
// most the model's context length.
std::vector<SweepRow> context_length_sweep(const Weights& weights,
                                           const ModelConfig& config,
                                           const std::vector<Sample>& samples,
                                           const std::vector<std::size_t>& lengths,
                                           const std::vector<EvalVariant>& variants,
                                           const EvalOptions& options);

struct CoverageRow {
    std::size_t context_length = 0;
    double percent_outside = 0.0;  // samples whose earliest evidence is beyond L
};

// Percentage of samples whose minimum evidence position exceeds each length.
std::vector<CoverageRow> evidence_coverage(const std::vector<Sample>& samples,
                                           const std::vector<std::size_t>& lengths);

// ---------------------------------------------------------------------------
//  Hyperparameter search
// ---------------------------------------------------------------------------

struct SweepEvaluation {
    std::string config;
    double score = 0.0;
};

struct LayerPatternResult {
    std::vector<std::size_t> pattern;
    double score = 0.0;
    std::vector<SweepEvaluation> trace;
};

struct RetentionSweepResult {
    std::size_t alpha_q = 0;
    std::size_t alpha_kv = 0;
    double score = 0.0;
    std::vector<SweepEvaluation> trace;
};

using LayerPatternScorer =
    std::function<double(const std::vector<std::size_t>& pattern)>;
using RetentionScorer =
    std::function<double(std::size_t alpha_q, std::size_t alpha_kv)>;

// Greedy layer-pattern search: best singleton first, then expand the
// incumbent by one layer before or after at distances 1, 2 and 4 until no
// candidate strictly improves the score or the pattern reaches max_size.
LayerPatternResult tune_layer_pattern(const LayerPatternScorer& scorer,
                                      std::size_t n_layers,
                                      std::size_t max_size = 3);

// Grid sweep over alpha_q, alpha_kv in {0.05, 0.10, ..., 1.0} x S (duplicates
// after rounding deduped); ties broken by smaller alpha_q then alpha_kv.
RetentionSweepResult tune_retention(const RetentionScorer& scorer,
                                    std::size_t context_length);

// ---------------------------------------------------------------------------
//  Output files & parallelism
// ---------------------------------------------------------------------------

// Worker count for per-sample dispatch: KITE_WORKERS when set, otherwise the
// hardware concurrency.
std::size_t worker_count();

// Deterministic indexed parallel map; exceptions from workers are rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// CSV with one row per sample plus a final "mean" row.
void write_metric_report_csv(const MetricReport& report, const std::string& path);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);
void write_coverage_csv(const std::vector<CoverageRow>& rows,
                        const std::string& path);

// Shortest round-trip decimal representation (stable across runs).
std::string format_double(double value);

}  // namespace kite
