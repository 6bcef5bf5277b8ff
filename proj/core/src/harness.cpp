#include "kite/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "kite/errors.hpp"
#include "kite/metrics.hpp"
#include "kite/tokenizer.hpp"

namespace kite {

void MetricReport::compute_means() {
    mean_rouge1 = mean_rouge2 = mean_rouge_l = mean_token_f1 = 0.0;
    if (per_sample.empty()) return;
    for (const auto& s : per_sample) {
        mean_rouge1 += s.rouge1;
        mean_rouge2 += s.rouge2;
        mean_rouge_l += s.rouge_l;
        mean_token_f1 += s.token_f1;
    }
    const double n = static_cast<double>(per_sample.size());
    mean_rouge1 /= n;
    mean_rouge2 /= n;
    mean_rouge_l /= n;
    mean_token_f1 /= n;
}

std::string variant_name(EvalVariant v) {
    return v == EvalVariant::Baseline ? "baseline" : "retrieval";
}

// ---------------------------------------------------------------------------
//  Parallel dispatch
// ---------------------------------------------------------------------------

std::size_t worker_count() {
    if (const char* env = std::getenv("KITE_WORKERS")) {
        std::size_t value = 0;
        const auto end = env + std::string_view(env).size();
        if (std::from_chars(env, end, value).ec == std::errc{} && value >= 1) {
            return value;
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(n, 1));
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto body = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) break;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(body);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
//  Evaluation runner
// ---------------------------------------------------------------------------

GenerationConfig make_generation_config(const ModelConfig& config,
                                        const EvalOptions& options) {
    const std::size_t s = config.context_length;
    GenerationConfig gen;
    gen.max_new_tokens = options.max_new_tokens;
    gen.stop_token = options.stop_token;
    gen.chunk_len = options.chunk_len;
    gen.stride = options.stride;
    gen.staleness_updates = options.staleness_updates;
    const auto alpha = [s](double frac) {
        const double scaled = frac * static_cast<double>(s);
        const auto rounded = static_cast<std::size_t>(scaled + 0.5);
        return std::min(rounded, s);
    };
    const std::size_t alpha_q =
        options.alpha_q_abs.value_or(alpha(options.alpha_q_frac));
    const std::size_t alpha_kv =
        options.alpha_kv_abs.value_or(alpha(options.alpha_kv_frac));
    gen.retention = RetentionConfig::from_alphas(alpha_q, alpha_kv, s, options.k);
    gen.retention.prefix_mask = options.prefix_mask;
    if (options.use_qa_template) {
        const ByteTokenizer tokenizer;
        gen.prompt_template.article_prefix = tokenizer.encode("Article:\n");
        gen.prompt_template.question_prefix = tokenizer.encode("\nQuestion:\n");
        gen.prompt_template.answer_prefix = tokenizer.encode("\nAnswer:\n");
    }
    return gen;
}

MetricReport run_eval(const Weights& weights, const ModelConfig& config,
                      const std::vector<Sample>& samples,
                      const EvalOptions& options) {
    ModelConfig run_config = config;
    if (options.variant == EvalVariant::Baseline) {
        run_config.cross_attn_layers.clear();
    }
    if (run_config.vocab_size < ByteTokenizer::kVocabSize) {
        throw ConfigError("run_eval: byte tokenizer needs vocab_size >= 256");
    }
    const GenerationConfig gen = make_generation_config(run_config, options);
    const ByteTokenizer tokenizer;

    MetricReport report;
    report.per_sample.resize(samples.size());
    parallel_for(samples.size(), [&](std::size_t i) {
        const Sample& sample = samples[i];
        const std::vector<TokenId> doc = tokenizer.encode(sample.document);
        std::optional<std::vector<TokenId>> question;
        if (sample.question) question = tokenizer.encode(*sample.question);
        const GenerationResult result =
            generate(weights, run_config, doc, gen, question);

        SampleMetrics m;
        m.id = sample.id;
        m.prediction = tokenizer.decode(result.tokens);
        m.rouge1 = rouge_n_multi(m.prediction, sample.references, 1);
        m.rouge2 = rouge_n_multi(m.prediction, sample.references, 2);
        m.rouge_l = rouge_l_multi(m.prediction, sample.references);
        m.token_f1 = token_f1(m.prediction, sample.references);
        report.per_sample[i] = std::move(m);
    });
    report.compute_means();
    return report;
}

std::vector<SweepRow> context_length_sweep(const Weights& weights,
                                           const ModelConfig& config,
                                           const std::vector<Sample>& samples,
                                           const std::vector<std::size_t>& lengths,
                                           const std::vector<EvalVariant>& variants,
                                           const EvalOptions& options) {
    if (!std::is_sorted(lengths.begin(), lengths.end())) {
        throw ConfigError("context_length_sweep: lengths must be ascending");
    }
    std::vector<SweepRow> rows;
    for (std::size_t length : lengths) {
        if (length < 2 || length > config.context_length) {
            throw ConfigError("context_length_sweep: length " +
                              std::to_string(length) +
                              " outside [2, model context " +
                              std::to_string(config.context_length) + "]");
        }
        ModelConfig restricted = config;
        restricted.context_length = length;
        for (EvalVariant variant : variants) {
            EvalOptions run_options = options;
            run_options.variant = variant;
            SweepRow row;
            row.context_length = length;
            row.variant = variant;
            row.report = run_eval(weights, restricted, samples, run_options);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::vector<CoverageRow> evidence_coverage(const std::vector<Sample>& samples,
                                           const std::vector<std::size_t>& lengths) {
    if (samples.empty()) {
        throw ConfigError("evidence_coverage: no samples");
    }
    std::vector<std::size_t> min_positions;
    min_positions.reserve(samples.size());
    for (const auto& s : samples) {
        if (!s.evidence_positions || s.evidence_positions->empty()) {
            throw SchemaError("sample '" + s.id + "' lacks evidence_positions");
        }
        min_positions.push_back(*std::min_element(s.evidence_positions->begin(),
                                                  s.evidence_positions->end()));
    }
    std::vector<CoverageRow> rows;
    for (std::size_t length : lengths) {
        const auto outside = std::count_if(
            min_positions.begin(), min_positions.end(),
            [length](std::size_t p) { return p > length; });
        rows.push_back({length, 100.0 * static_cast<double>(outside) /
                                    static_cast<double>(samples.size())});
    }
    return rows;
}

// ---------------------------------------------------------------------------
//  Hyperparameter search
// ---------------------------------------------------------------------------

namespace {

std::string pattern_str(const std::vector<std::size_t>& pattern) {
    std::string out = "{";
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(pattern[i]);
    }
    return out + "}";
}

}  // namespace

LayerPatternResult tune_layer_pattern(const LayerPatternScorer& scorer,
                                      std::size_t n_layers,
                                      std::size_t max_size) {
    if (n_layers == 0) {
        throw ConfigError("tune_layer_pattern: n_layers must be >= 1");
    }
    if (max_size == 0 || max_size > 3) {
        throw ConfigError("tune_layer_pattern: max_size must be in [1, 3]");
    }
    LayerPatternResult result;

    // Stage 1: best singleton, first index wins ties.
    for (std::size_t l = 0; l < n_layers; ++l) {
        const std::vector<std::size_t> pattern{l};
        const double score = scorer(pattern);
        result.trace.push_back({pattern_str(pattern), score});
        if (l == 0 || score > result.score) {
            result.pattern = pattern;
            result.score = score;
        }
    }

    // Expansion: add one layer after or before the incumbent at distances
    // 1, 2, 4 (in that order), keeping only strict improvements.
    while (result.pattern.size() < max_size) {
        std::vector<std::vector<std::size_t>> candidates;
        const std::size_t lo = result.pattern.front();
        const std::size_t hi = result.pattern.back();
        for (std::size_t dist : {std::size_t{1}, std::size_t{2}, std::size_t{4}}) {
            if (hi + dist < n_layers) {
                auto c = result.pattern;
                c.push_back(hi + dist);
                std::sort(c.begin(), c.end());
                candidates.push_back(std::move(c));
            }
            if (lo >= dist) {
                auto c = result.pattern;
                c.push_back(lo - dist);
                std::sort(c.begin(), c.end());
                candidates.push_back(std::move(c));
            }
        }
        bool improved = false;
        std::vector<std::size_t> best_pattern;
        double best_score = result.score;
        for (const auto& candidate : candidates) {
            const double score = scorer(candidate);
            result.trace.push_back({pattern_str(candidate), score});
            if (score > best_score) {
                best_score = score;
                best_pattern = candidate;
                improved = true;
            }
        }
        if (!improved) break;
        result.pattern = best_pattern;
        result.score = best_score;
    }
    return result;
}

RetentionSweepResult tune_retention(const RetentionScorer& scorer,
                                    std::size_t context_length) {
    // Grid values i/20 * S for i = 1..20, rounded half-up, deduped.
    std::vector<std::size_t> alphas;
    for (std::size_t i = 1; i <= 20; ++i) {
        const std::size_t alpha = (i * context_length + 10) / 20;
        if (alphas.empty() || alphas.back() != alpha) {
            alphas.push_back(alpha);
        }
    }
    RetentionSweepResult result;
    bool first = true;
    for (std::size_t aq : alphas) {
        for (std::size_t akv : alphas) {
            const double score = scorer(aq, akv);
            result.trace.push_back({"(" + std::to_string(aq) + "," +
                                        std::to_string(akv) + ")",
                                    score});
            if (first || score > result.score) {
                result.alpha_q = aq;
                result.alpha_kv = akv;
                result.score = score;
                first = false;
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
//  Output files
// ---------------------------------------------------------------------------

std::string format_double(double value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace {

std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

}  // namespace

void write_metric_report_csv(const MetricReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << "id,rouge1,rouge2,rougeL,token_f1,prediction\n";
    for (const auto& s : report.per_sample) {
        f << csv_escape(s.id) << ',' << format_double(s.rouge1) << ','
          << format_double(s.rouge2) << ',' << format_double(s.rouge_l) << ','
          << format_double(s.token_f1) << ',' << csv_escape(s.prediction) << '\n';
    }
    f << "mean," << format_double(report.mean_rouge1) << ','
      << format_double(report.mean_rouge2) << ','
      << format_double(report.mean_rouge_l) << ','
      << format_double(report.mean_token_f1) << ",\n";
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << "context_length,variant,rouge1,rouge2,rougeL,token_f1\n";
    for (const auto& row : rows) {
        f << row.context_length << ',' << variant_name(row.variant) << ','
          << format_double(row.report.mean_rouge1) << ','
          << format_double(row.report.mean_rouge2) << ','
          << format_double(row.report.mean_rouge_l) << ','
          << format_double(row.report.mean_token_f1) << '\n';
    }
}

void write_coverage_csv(const std::vector<CoverageRow>& rows,
                        const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << "context_length,percent_min_evidence_outside\n";
    for (const auto& row : rows) {
        f << row.context_length << ',' << format_double(row.percent_outside)
          << '\n';
    }
}

}  // namespace kite
