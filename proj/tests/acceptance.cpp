// Acceptance suite: every criterion below runs at its stated tolerance and
// prints one [PASS]/[FAIL] line. The process exits nonzero if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "cli.hpp"
#include "kite/chunk.hpp"
#include "kite/fusion.hpp"
#include "kite/generate.hpp"
#include "kite/harness.hpp"
#include "kite/metrics.hpp"
#include "support.hpp"

using namespace kite;
using Clock = std::chrono::steady_clock;

namespace {

struct Failure {
    std::string reason;
};

void require(bool condition, const std::string& reason) {
    if (!condition) throw Failure{reason};
}

// --------------------------------------------------------------------------
// 1. Degenerate equivalence: cross-attention with alpha = S reproduces
//    baseline greedy generation token-for-token; logits within 1e-6.
// --------------------------------------------------------------------------
void criterion_degenerate_equivalence() {
    const auto start = Clock::now();
    ModelConfig c;
    c.n_layers = 4;
    c.n_heads = 4;
    c.d_model = 64;
    c.d_head = 16;
    c.d_ff = 128;
    c.vocab_size = 256;
    c.context_length = 32;
    c.cross_attn_layers = {2};
    c.seed = 42;
    c.validate();
    const Weights w = init_weights(c);

    ModelConfig baseline_config = c;
    baseline_config.cross_attn_layers.clear();

    std::mt19937 rng(20240817);
    std::uniform_int_distribution<std::size_t> len_dist(8, 96);
    for (int doc_i = 0; doc_i < 20; ++doc_i) {
        const auto doc = test::random_tokens(rng, len_dist(rng), c.vocab_size);

        GenerationConfig gen;
        gen.max_new_tokens = 12;
        gen.record_step_logits = true;
        gen.retention = RetentionConfig::from_alphas(
            c.context_length, c.context_length, c.context_length);

        const auto fused = generate(w, c, doc, gen);
        const auto plain = generate(w, baseline_config, doc, gen);

        require(fused.tokens == plain.tokens,
                "token mismatch on document " + std::to_string(doc_i));
        require(fused.step_logits.size() == plain.step_logits.size(),
                "step count mismatch");
        for (std::size_t s = 0; s < fused.step_logits.size(); ++s) {
            for (std::size_t v = 0; v < c.vocab_size; ++v) {
                require(std::abs(fused.step_logits[s][v] -
                                 plain.step_logits[s][v]) <= 1e-6f,
                        "logit deviation above 1e-6 at step " + std::to_string(s));
            }
        }
    }
    const double elapsed =
        std::chrono::duration<double>(Clock::now() - start).count();
    require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + "s >= 60s");
}

// --------------------------------------------------------------------------
// 2. Retrieval exactness: 500 random instances against a brute-force scan.
// --------------------------------------------------------------------------
void criterion_retrieval_exactness() {
    const auto start = Clock::now();
    std::mt19937 rng(5417);
    const std::vector<std::size_t> dims{8, 16, 24, 32, 48, 64};
    std::uniform_int_distribution<std::size_t> size_dist(1, 512);
    std::uniform_real_distribution<float> val(-1.0f, 1.0f);

    for (int instance = 0; instance < 500; ++instance) {
        const std::size_t d = dims[rng() % dims.size()];
        std::vector<std::size_t> head_choices;
        for (std::size_t h : {1, 2, 4}) {
            if (d % h == 0 && (d / h) % 2 == 0) head_choices.push_back(h);
        }
        const std::size_t n_heads = head_choices[rng() % head_choices.size()];
        const std::size_t n = size_dist(rng);
        std::uniform_int_distribution<std::size_t> k_dist(1, n + 4);
        const std::size_t k = k_dist(rng);

        LayerIndex idx(0, d);
        for (std::size_t i = 0; i < n; ++i) {
            IndexEntry e;
            e.vector.resize(d);
            for (auto& x : e.vector) x = val(rng);
            e.position = i;
            idx.append(std::move(e));
        }
        const Matrix w_q = test::random_matrix(rng, d, d);
        const Matrix w_k = test::random_matrix(rng, d, d);
        std::vector<float> query(d);
        for (auto& x : query) x = val(rng);

        const auto hits = idx.search(query, w_q, w_k, n_heads, k);

        // brute force: rank by (score desc, position asc)
        const std::size_t dh = d / n_heads;
        std::vector<std::pair<double, std::size_t>> scored;
        for (std::size_t e = 0; e < n; ++e) {
            double total = 0.0;
            for (std::size_t h = 0; h < n_heads; ++h) {
                for (std::size_t cdim = 0; cdim < dh; ++cdim) {
                    double qp = 0.0, kp = 0.0;
                    for (std::size_t i = 0; i < d; ++i) {
                        qp += static_cast<double>(query[i]) *
                              w_q.at(i, h * dh + cdim);
                        kp += static_cast<double>(idx.entry(e).vector[i]) *
                              w_k.at(i, h * dh + cdim);
                    }
                    total += qp * kp;
                }
            }
            scored.emplace_back(total, e);
        }
        std::sort(scored.begin(), scored.end(),
                  [](const auto& a, const auto& b) {
                      if (a.first != b.first) return a.first > b.first;
                      return a.second < b.second;
                  });
        const std::size_t keep = std::min(k, n);
        require(hits.size() == keep, "result size mismatch");
        for (std::size_t i = 0; i < keep; ++i) {
            require(hits[keep - 1 - i].entry_id == scored[i].second,
                    "instance " + std::to_string(instance) +
                        ": id mismatch at rank " + std::to_string(i));
        }
    }
    const double elapsed =
        std::chrono::duration<double>(Clock::now() - start).count();
    require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + "s >= 60s");
}

// --------------------------------------------------------------------------
// 3. Chunk coverage over 1000 random (doc_len, C, stride) triples.
// --------------------------------------------------------------------------
void criterion_chunk_coverage() {
    std::mt19937 rng(90210);
    std::uniform_int_distribution<std::size_t> doc_dist(1, 2000);
    std::uniform_int_distribution<std::size_t> chunk_dist(1, 96);
    std::size_t failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t doc_len = doc_dist(rng);
        const std::size_t chunk = chunk_dist(rng);
        std::uniform_int_distribution<std::size_t> stride_dist(1, chunk);
        const std::size_t stride = stride_dist(rng);
        const ChunkPlan plan = plan_chunks(doc_len, chunk, stride, chunk);
        std::vector<int> counts(doc_len, 0);
        for (const auto& spec : plan.chunks) {
            if (spec.end <= spec.start || spec.store_from < spec.start ||
                spec.store_from >= spec.end ||
                spec.end - spec.start > chunk) {
                ++failures;
                continue;
            }
            for (std::size_t p = spec.store_from; p < spec.end; ++p) {
                ++counts[p];
            }
        }
        for (int count : counts) {
            if (count != 1) {
                ++failures;
                break;
            }
        }
    }
    require(failures == 0, std::to_string(failures) + " of 1000 plans failed");
}

// --------------------------------------------------------------------------
// 4. Index growth law: size = chunk entries + g with staleness on; constant
//    with staleness off. Exact equality for g in {1, 10, 100}.
// --------------------------------------------------------------------------
void criterion_index_growth() {
    ModelConfig c;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 16;
    c.d_head = 8;
    c.d_ff = 32;
    c.vocab_size = 64;
    c.context_length = 16;
    c.cross_attn_layers = {1};
    c.seed = 7;
    c.validate();
    const Weights w = init_weights(c);
    std::mt19937 rng(11);
    const auto doc = test::random_tokens(rng, 40, c.vocab_size);

    for (std::size_t g : {std::size_t{1}, std::size_t{10}, std::size_t{100}}) {
        GenerationConfig gen;
        gen.max_new_tokens = g;
        gen.retention = RetentionConfig::from_alphas(8, 8, 16);
        const auto with = generate(w, c, doc, gen);
        require(with.tokens.size() == g, "did not generate g tokens");
        require(with.state.indices.at(1).size() == doc.size() + g,
                "staleness on: size != chunks + " + std::to_string(g));
        gen.staleness_updates = false;
        const auto without = generate(w, c, doc, gen);
        require(without.state.indices.at(1).size() == doc.size(),
                "staleness off: size changed at g = " + std::to_string(g));
    }
}

// --------------------------------------------------------------------------
// 5. Fusion length law: all 400 grid configurations at S = 40 preserve
//    |h_q| = |h_kv| = S exactly.
// --------------------------------------------------------------------------
void criterion_fusion_length_law() {
    const std::size_t s = 40;
    std::mt19937 rng(13);
    RetrievedSet retrieved;
    retrieved.states = test::random_matrix(rng, s, 8);
    retrieved.positions.resize(s);
    std::iota(retrieved.positions.begin(), retrieved.positions.end(), 1000);
    retrieved.scores.resize(s);
    std::iota(retrieved.scores.begin(), retrieved.scores.end(), 0.0);
    const Matrix h_ca = test::random_matrix(rng, s, 8);

    std::size_t configs = 0;
    for (std::size_t i = 1; i <= 20; ++i) {
        for (std::size_t j = 1; j <= 20; ++j) {
            const std::size_t aq = (i * s + 10) / 20;
            const std::size_t akv = (j * s + 10) / 20;
            const auto r = RetentionConfig::from_alphas(aq, akv, s);
            const FusedBlock block = fuse(retrieved, h_ca, r, s);
            require(block.h_q.rows() == s,
                    "h_q length " + std::to_string(block.h_q.rows()) +
                        " at alpha_q " + std::to_string(aq));
            require(block.h_kv.rows() == s,
                    "h_kv length " + std::to_string(block.h_kv.rows()) +
                        " at alpha_kv " + std::to_string(akv));
            ++configs;
        }
    }
    require(configs == 400, "expected 400 configurations");
}

// --------------------------------------------------------------------------
// 6. Tuner reproduction with planted optima; deterministic across 5 runs.
// --------------------------------------------------------------------------
void criterion_tuner_reproduction() {
    const auto layer_scorer = [](const std::vector<std::size_t>& pattern) {
        double score = 0.0;
        for (std::size_t l : pattern) {
            if (l == 20 || l == 22 || l == 24) score += 1.0;
        }
        return score;
    };
    const std::size_t s = 40;
    const auto retention_scorer = [s](std::size_t aq, std::size_t akv) {
        const double dq = static_cast<double>(aq) - 0.4 * static_cast<double>(s);
        const double dkv = static_cast<double>(akv) - 0.4 * static_cast<double>(s);
        return -(dq * dq + dkv * dkv);
    };

    const auto first_layers = tune_layer_pattern(layer_scorer, 32);
    const auto first_retention = tune_retention(retention_scorer, s);
    require(first_layers.pattern == std::vector<std::size_t>{20, 22, 24},
            "layer pattern != {20,22,24}");
    require(first_retention.alpha_q == 16 && first_retention.alpha_kv == 16,
            "retention != (0.4S, 0.4S)");

    for (int run = 1; run < 5; ++run) {
        const auto layers = tune_layer_pattern(layer_scorer, 32);
        const auto retention = tune_retention(retention_scorer, s);
        require(layers.pattern == first_layers.pattern, "layer result drifted");
        require(layers.trace.size() == first_layers.trace.size(),
                "layer trace drifted");
        for (std::size_t i = 0; i < layers.trace.size(); ++i) {
            require(layers.trace[i].config == first_layers.trace[i].config &&
                        layers.trace[i].score == first_layers.trace[i].score,
                    "layer trace entry drifted");
        }
        require(retention.alpha_q == first_retention.alpha_q &&
                    retention.alpha_kv == first_retention.alpha_kv,
                "retention result drifted");
        require(retention.trace.size() == first_retention.trace.size(),
                "retention trace drifted");
        for (std::size_t i = 0; i < retention.trace.size(); ++i) {
            require(retention.trace[i].config ==
                            first_retention.trace[i].config &&
                        retention.trace[i].score == first_retention.trace[i].score,
                    "retention trace entry drifted");
        }
    }
}

// --------------------------------------------------------------------------
// 7. Metric correctness: hand-derived fixtures at 1e-9; evidence coverage
//    on the synthetic four-sample fixture.
// --------------------------------------------------------------------------
void criterion_metric_correctness() {
    require(std::abs(token_f1("a b c", {"b c d"}) - 2.0 / 3.0) < 1e-9,
            "token F1 bag fixture");
    require(std::abs(token_f1("x", {"y", "x z"}) - 2.0 / 3.0) < 1e-9,
            "token F1 max-over-references fixture");
    require(std::abs(token_f1("same text", {"same text"}) - 1.0) < 1e-9,
            "token F1 identity");
    require(std::abs(rouge_n("the cat sat", "the cat ran", 1) - 2.0 / 3.0) < 1e-9,
            "ROUGE-1 fixture");
    require(std::abs(rouge_n("the cat sat", "the cat ran", 2) - 1.0 / 2.0) < 1e-9,
            "ROUGE-2 fixture");
    require(std::abs(rouge_l("a b c d", "a x b y c") - 2.0 / 3.0) < 1e-9,
            "ROUGE-L fixture");

    std::vector<Sample> samples(4);
    const std::size_t mins[4] = {500, 1500, 3000, 9000};
    for (std::size_t i = 0; i < 4; ++i) {
        samples[i].id = "s" + std::to_string(i);
        samples[i].document = "d";
        samples[i].references = {"r"};
        samples[i].evidence_positions = std::vector<std::size_t>{mins[i]};
    }
    const auto rows = evidence_coverage(samples, {1024, 2048, 4096, 8192});
    const double want[4] = {75.0, 50.0, 25.0, 25.0};
    for (std::size_t i = 0; i < 4; ++i) {
        require(std::abs(rows[i].percent_outside - want[i]) < 1e-9,
                "coverage at L = " + std::to_string(rows[i].context_length));
    }
}

// --------------------------------------------------------------------------
// 8. Mechanism usefulness: on the 100-sample needle corpus with the
//    hand-constructed copy weights, retrieval beats baseline token F1 by
//    at least 0.2 absolute.
// --------------------------------------------------------------------------
void criterion_needle_retrieval() {
    const auto start = Clock::now();
    const test::NeedleModel m = test::build_needle_model();
    const auto samples = test::build_needle_corpus(m, 100, 8675309);

    EvalOptions options;
    options.max_new_tokens = 1;
    options.use_qa_template = false;
    const auto rows = context_length_sweep(
        m.weights, m.config, samples, {m.config.context_length},
        {EvalVariant::Baseline, EvalVariant::Retrieval}, options);
    const double baseline = rows[0].report.mean_token_f1;
    const double retrieval = rows[1].report.mean_token_f1;
    require(retrieval - baseline >= 0.2,
            "gap " + std::to_string(retrieval - baseline) + " < 0.2 (baseline " +
                std::to_string(baseline) + ", retrieval " +
                std::to_string(retrieval) + ")");
    const double elapsed =
        std::chrono::duration<double>(Clock::now() - start).count();
    require(elapsed < 300.0, "runtime " + std::to_string(elapsed) + "s >= 300s");
}

// --------------------------------------------------------------------------
// 9. Determinism: the full pipeline (init -> chunk -> generate -> eval)
//    writes bitwise-identical CSV outputs across two runs.
// --------------------------------------------------------------------------
void criterion_pipeline_determinism() {
    const auto read_bytes = [](const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        require(f.good(), "missing output " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    const auto run_pipeline = [&](const test::ScratchDir& dir) {
        const std::string weights = dir.file("w.bin");
        const std::string data = dir.file("data.jsonl");
        std::vector<Sample> samples(3);
        samples[0] = {"s0", "alpha beta gamma delta epsilon", std::nullopt,
                      {"alpha beta"}, {}};
        samples[1] = {"s1", "the quick brown fox jumps over the lazy dog",
                      std::nullopt, {"fox"}, {}};
        samples[2] = {"s2", "pack my box with five dozen liquor jugs",
                      std::nullopt, {"box"}, {}};
        write_jsonl(samples, data);

        const std::vector<std::string> init_args{
            "kite", "init-weights", "--n_layers", "2", "--n_heads", "2",
            "--d_model", "16", "--d_head", "8", "--d_ff", "32",
            "--vocab_size", "256", "--context_length", "16",
            "--cross_attn_layers", "1", "--seed", "99", "--out", weights};
        const std::vector<std::string> eval_args{
            "kite", "eval", "--weights", weights, "--data", data,
            "--max_new_tokens", "4", "--out_csv", dir.file("report.csv"),
            "--out_json", dir.file("report.json")};
        const std::vector<std::string> sweep_args{
            "kite", "sweep-context", "--weights", weights, "--data", data,
            "--lengths", "8,16", "--max_new_tokens", "3", "--out_csv",
            dir.file("sweep.csv")};
        // run_cli prints summaries; keep the criterion output clean
        std::stringstream discard;
        std::streambuf* saved = std::cout.rdbuf(discard.rdbuf());
        int rc = 0;
        std::string failed_cmd;
        for (const auto& args : {init_args, eval_args, sweep_args}) {
            std::vector<const char*> argv;
            for (const auto& a : args) argv.push_back(a.c_str());
            rc = run_cli(static_cast<int>(argv.size()), argv.data());
            if (rc != 0) {
                failed_cmd = args[1];
                break;
            }
        }
        std::cout.rdbuf(saved);
        require(rc == 0, "pipeline command failed: " + failed_cmd);
        return std::vector<std::string>{read_bytes(dir.file("report.csv")),
                                        read_bytes(dir.file("report.json")),
                                        read_bytes(dir.file("sweep.csv")),
                                        read_bytes(weights)};
    };

    const test::ScratchDir dir_a;
    const test::ScratchDir dir_b;
    const auto a = run_pipeline(dir_a);
    const auto b = run_pipeline(dir_b);
    const char* names[] = {"report.csv", "report.json", "sweep.csv", "weights"};
    for (std::size_t i = 0; i < a.size(); ++i) {
        require(a[i] == b[i],
                std::string(names[i]) + " differs between runs");
        require(!a[i].empty(), std::string(names[i]) + " is empty");
    }
}

struct Criterion {
    int id;
    std::string name;
    std::function<void()> body;
};

}  // namespace

int main() {
    std::cout.setf(std::ios::unitbuf);  // stream results as they finish
    const std::vector<Criterion> criteria{
        {1, "degenerate equivalence (alpha = S reproduces baseline)",
         criterion_degenerate_equivalence},
        {2, "retrieval exactness vs full-scan oracle (500 instances)",
         criterion_retrieval_exactness},
        {3, "chunk coverage (1000 random plans, exactly-once storage)",
         criterion_chunk_coverage},
        {4, "index growth law (staleness on/off, g in {1,10,100})",
         criterion_index_growth},
        {5, "fusion length law (400 grid configs at S = 40)",
         criterion_fusion_length_law},
        {6, "tuner reproduction (planted {20,22,24} and (0.4S, 0.4S))",
         criterion_tuner_reproduction},
        {7, "metric correctness (hand-derived fixtures, coverage table)",
         criterion_metric_correctness},
        {8, "mechanism usefulness (needle corpus, +0.2 token F1)",
         criterion_needle_retrieval},
        {9, "pipeline determinism (bitwise-identical outputs)",
         criterion_pipeline_determinism},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = Clock::now();
        std::string verdict = "[PASS]";
        std::string detail;
        try {
            criterion.body();
        } catch (const Failure& f) {
            verdict = "[FAIL]";
            detail = " : " + f.reason;
            ++failures;
        } catch (const std::exception& e) {
            verdict = "[FAIL]";
            detail = std::string(" : unexpected error: ") + e.what();
            ++failures;
        }
        const double elapsed =
            std::chrono::duration<double>(Clock::now() - start).count();
        char timing[32];
        std::snprintf(timing, sizeof(timing), " (%.2fs)", elapsed);
        std::cout << verdict << " " << criterion.id << ". " << criterion.name
                  << timing << detail << '\n';
    }
    if (failures > 0) {
        std::cout << failures << " of " << criteria.size()
                  << " criteria failed\n";
        return 1;
    }
    std::cout << "all " << criteria.size() << " criteria passed\n";
    return 0;
}
