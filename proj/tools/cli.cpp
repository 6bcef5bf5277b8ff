#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "kite/errors.hpp"
#include "kite/generate.hpp"
#include "kite/harness.hpp"
#include "kite/tokenizer.hpp"

namespace kite {

namespace {

using nlohmann::json;

// Predictions from random-weight models can contain arbitrary bytes, so
// invalid UTF-8 is replaced rather than rejected when dumping JSON.
std::string dump_json(const json& obj, int indent = -1) {
    return obj.dump(indent, ' ', false, json::error_handler_t::replace);
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

// `--config file` supplies flat key=value pairs whose keys mirror the flag
// names. The file is expanded into ordinary flags before parsing; flags
// given explicitly on the command line win over the file.
std::vector<std::string> expand_config_args(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);

    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
            args.erase(args.begin() + i, args.begin() + i + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + i);
            break;
        }
    }
    if (config_path.empty()) return args;

    std::ifstream f(config_path);
    if (!f) throw Error("cannot open config file " + config_path);
    const auto given = [&args](const std::string& flag) {
        for (const auto& a : args) {
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        }
        return false;
    };
    std::string line;
    while (std::getline(f, line)) {
        const auto comment = line.find('#');
        if (comment != std::string::npos) line.resize(comment);
        const std::string entry = trim(line);
        if (entry.empty()) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config file " + config_path +
                              ": expected key=value, got '" + entry + "'");
        }
        const std::string key = trim(entry.substr(0, eq));
        const std::string value = trim(entry.substr(eq + 1));
        const std::string flag = "--" + key;
        if (!given(flag)) {
            args.push_back(flag + "=" + value);
        }
    }
    return args;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << text;
}

// Shared flag bundles -------------------------------------------------------

struct ModelFlags {
    std::size_t n_layers = 4;
    std::size_t n_heads = 4;
    std::size_t d_model = 64;
    std::size_t d_head = 16;
    std::size_t d_ff = 128;
    std::size_t vocab_size = 256;
    std::size_t context_length = 32;
    float rope_base = 10000.0f;
    std::vector<std::size_t> cross_attn_layers{2};
    std::uint64_t seed = 1234;

    ModelConfig to_config() const {
        ModelConfig c;
        c.n_layers = n_layers;
        c.n_heads = n_heads;
        c.d_model = d_model;
        c.d_head = d_head;
        c.d_ff = d_ff;
        c.vocab_size = vocab_size;
        c.context_length = context_length;
        c.rope_base = rope_base;
        c.cross_attn_layers = cross_attn_layers;
        c.seed = seed;
        c.validate();
        return c;
    }
};

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
    cmd->add_option("--n_layers", f.n_layers, "Number of decoder layers");
    cmd->add_option("--n_heads", f.n_heads, "Attention heads per layer");
    cmd->add_option("--d_model", f.d_model, "Residual stream width");
    cmd->add_option("--d_head", f.d_head, "Per-head width (d_model / n_heads)");
    cmd->add_option("--d_ff", f.d_ff, "Feed-forward hidden width");
    cmd->add_option("--vocab_size", f.vocab_size, "Vocabulary size");
    cmd->add_option("--context_length", f.context_length, "Context length S");
    cmd->add_option("--rope_base", f.rope_base, "Rotary embedding base");
    cmd->add_option("--cross_attn_layers", f.cross_attn_layers,
                    "Cross-attention layer indices (at most 3)")
        ->delimiter(',');
    cmd->add_option("--seed", f.seed, "Initialization seed");
}

struct EvalFlags {
    std::string weights_path;
    std::string data_path;
    std::string mode = "retrieval";
    std::int64_t alpha_q = -1;   // absolute token counts; -1 = use fraction
    std::int64_t alpha_kv = -1;
    double alpha_q_frac = 0.4;
    double alpha_kv_frac = 0.4;
    std::size_t k = 0;
    std::size_t max_new_tokens = 16;
    std::int64_t stop_token = -1;
    std::size_t chunk_len = 0;
    std::size_t stride = 0;
    bool staleness = true;
    std::string prefix_mask = "bidirectional";
    std::vector<std::size_t> layers;  // optional override of the stored set

    EvalOptions to_options() const {
        EvalOptions o;
        if (mode == "baseline") {
            o.variant = EvalVariant::Baseline;
        } else if (mode == "retrieval") {
            o.variant = EvalVariant::Retrieval;
        } else {
            throw ConfigError("mode must be 'baseline' or 'retrieval'");
        }
        if (alpha_q >= 0) o.alpha_q_abs = static_cast<std::size_t>(alpha_q);
        if (alpha_kv >= 0) o.alpha_kv_abs = static_cast<std::size_t>(alpha_kv);
        o.alpha_q_frac = alpha_q_frac;
        o.alpha_kv_frac = alpha_kv_frac;
        o.k = k;
        o.max_new_tokens = max_new_tokens;
        if (stop_token >= 0) o.stop_token = static_cast<TokenId>(stop_token);
        o.chunk_len = chunk_len;
        o.stride = stride;
        o.staleness_updates = staleness;
        if (prefix_mask == "causal") {
            o.prefix_mask = PrefixMaskMode::CausalByPosition;
        } else if (prefix_mask != "bidirectional") {
            throw ConfigError("prefix_mask_mode must be 'bidirectional' or 'causal'");
        }
        return o;
    }
};

void add_retention_flags(CLI::App* cmd, EvalFlags& f) {
    cmd->add_option("--alpha_q", f.alpha_q, "alpha_q in tokens (-1 = use fraction)");
    cmd->add_option("--alpha_kv", f.alpha_kv,
                    "alpha_kv in tokens (-1 = use fraction)");
    cmd->add_option("--alpha_q_frac", f.alpha_q_frac, "alpha_q as fraction of S");
    cmd->add_option("--alpha_kv_frac", f.alpha_kv_frac,
                    "alpha_kv as fraction of S");
    cmd->add_option("--k", f.k, "Neighbors retrieved per step (0 = S)");
    cmd->add_option("--max_new_tokens", f.max_new_tokens, "Generation limit");
    cmd->add_option("--stop_token", f.stop_token, "Stop token id (-1 = none)");
    cmd->add_option("--chunk_len", f.chunk_len, "Chunk length (0 = S)");
    cmd->add_option("--stride", f.stride, "Chunk stride (0 = S/2)");
    cmd->add_flag("--staleness,!--no-staleness", f.staleness,
                  "Per-step index updates");
    cmd->add_option("--prefix_mask_mode", f.prefix_mask,
                    "bidirectional or causal");
    cmd->add_option("--layers", f.layers,
                    "Override the stored cross-attention layer set")
        ->delimiter(',');
}

void add_eval_flags(CLI::App* cmd, EvalFlags& f, bool with_mode = true) {
    cmd->add_option("--weights", f.weights_path, "Weight file")->required();
    cmd->add_option("--data", f.data_path, "JSONL dataset")->required();
    if (with_mode) {
        cmd->add_option("--mode", f.mode, "baseline or retrieval");
    }
    add_retention_flags(cmd, f);
}

std::pair<Weights, ModelConfig> load_model(const EvalFlags& f) {
    auto [weights, config] = load_weights(f.weights_path);
    if (!f.layers.empty()) {
        config.cross_attn_layers = f.layers;
        config.validate();
    }
    return {std::move(weights), std::move(config)};
}

json report_to_json(const MetricReport& report) {
    json rows = json::array();
    for (const auto& s : report.per_sample) {
        rows.push_back({{"id", s.id},
                        {"rouge1", s.rouge1},
                        {"rouge2", s.rouge2},
                        {"rougeL", s.rouge_l},
                        {"token_f1", s.token_f1},
                        {"prediction", s.prediction}});
    }
    return {{"samples", rows},
            {"mean",
             {{"rouge1", report.mean_rouge1},
              {"rouge2", report.mean_rouge2},
              {"rougeL", report.mean_rouge_l},
              {"token_f1", report.mean_token_f1}}}};
}

// Subcommand bodies ---------------------------------------------------------

int cmd_init_weights(const ModelFlags& flags, const std::string& out_path) {
    const ModelConfig config = flags.to_config();
    const Weights weights = init_weights(config);
    save_weights(weights, config, out_path);
    std::cout << "wrote " << out_path << " (n_layers " << config.n_layers
              << ", d_model " << config.d_model << ", vocab "
              << config.vocab_size << ", S " << config.context_length << ")\n";
    return 0;
}

int cmd_generate(const EvalFlags& flags, const std::string& document_path,
                 const std::string& question, const std::string& out_path) {
    auto [weights, config] = load_model(flags);
    const EvalOptions options = flags.to_options();
    ModelConfig run_config = config;
    if (options.variant == EvalVariant::Baseline) {
        run_config.cross_attn_layers.clear();
    }
    GenerationConfig gen = make_generation_config(run_config, options);

    const ByteTokenizer tokenizer;
    const std::vector<TokenId> doc = tokenizer.encode(read_text_file(document_path));
    std::optional<std::vector<TokenId>> q;
    if (!question.empty()) q = tokenizer.encode(question);

    const GenerationResult result = generate(weights, run_config, doc, gen, q);
    const std::string text = tokenizer.decode(result.tokens);

    json record;
    record["token_ids"] = result.tokens;
    record["text"] = text;
    if (out_path.empty()) {
        std::cout << dump_json(record) << '\n';
    } else {
        write_text_file(out_path, dump_json(record) + "\n");
        std::cout << "wrote " << out_path << " (" << result.tokens.size()
                  << " tokens)\n";
    }
    return 0;
}

int cmd_eval(const EvalFlags& flags, const std::string& out_csv,
             const std::string& out_json) {
    auto [weights, config] = load_model(flags);
    const std::vector<Sample> samples = load_jsonl(flags.data_path);
    const MetricReport report =
        run_eval(weights, config, samples, flags.to_options());
    if (!out_csv.empty()) write_metric_report_csv(report, out_csv);
    if (!out_json.empty()) write_text_file(out_json, dump_json(report_to_json(report), 2) + "\n");
    std::cout << "samples " << report.per_sample.size() << "  rouge1 "
              << format_double(report.mean_rouge1) << "  rouge2 "
              << format_double(report.mean_rouge2) << "  rougeL "
              << format_double(report.mean_rouge_l) << "  token_f1 "
              << format_double(report.mean_token_f1) << '\n';
    return 0;
}

int cmd_sweep_context(const EvalFlags& flags, std::vector<std::size_t> lengths,
                      const std::vector<std::string>& variant_names,
                      const std::string& out_csv, const std::string& out_json) {
    auto [weights, config] = load_model(flags);
    const std::vector<Sample> samples = load_jsonl(flags.data_path);
    std::vector<EvalVariant> variants;
    for (const auto& name : variant_names) {
        if (name == "baseline") variants.push_back(EvalVariant::Baseline);
        else if (name == "retrieval") variants.push_back(EvalVariant::Retrieval);
        else throw ConfigError("unknown variant '" + name + "'");
    }
    if (lengths.empty()) lengths.push_back(config.context_length);
    const auto rows = context_length_sweep(weights, config, samples, lengths,
                                           variants, flags.to_options());
    if (!out_csv.empty()) write_sweep_csv(rows, out_csv);
    if (!out_json.empty()) {
        json arr = json::array();
        for (const auto& row : rows) {
            arr.push_back({{"context_length", row.context_length},
                           {"variant", variant_name(row.variant)},
                           {"report", report_to_json(row.report)}});
        }
        write_text_file(out_json, dump_json(arr, 2) + "\n");
    }
    for (const auto& row : rows) {
        std::cout << row.context_length << "  " << variant_name(row.variant)
                  << "  rouge1 " << format_double(row.report.mean_rouge1)
                  << "  token_f1 " << format_double(row.report.mean_token_f1)
                  << '\n';
    }
    return 0;
}

double metric_of(const MetricReport& report, const std::string& metric) {
    if (metric == "token_f1") return report.mean_token_f1;
    if (metric == "rouge1") return report.mean_rouge1;
    if (metric == "rouge2") return report.mean_rouge2;
    if (metric == "rougeL") return report.mean_rouge_l;
    throw ConfigError("unknown metric '" + metric + "'");
}

void write_trace_csv(const std::vector<SweepEvaluation>& trace,
                     const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw Error("cannot open " + path + " for writing");
    f << "config,score\n";
    for (const auto& e : trace) {
        f << '"' << e.config << "\"," << format_double(e.score) << '\n';
    }
}

int cmd_tune_layers(const EvalFlags& flags, const std::string& metric,
                    std::size_t max_size, const std::string& out_json,
                    const std::string& out_trace) {
    auto [weights, config] = load_model(flags);
    const std::vector<Sample> samples = load_jsonl(flags.data_path);
    const EvalOptions options = flags.to_options();

    const auto scorer = [&](const std::vector<std::size_t>& pattern) {
        ModelConfig candidate = config;
        candidate.cross_attn_layers = pattern;
        candidate.validate();
        EvalOptions run = options;
        run.variant = EvalVariant::Retrieval;
        return metric_of(run_eval(weights, candidate, samples, run), metric);
    };
    const LayerPatternResult result =
        tune_layer_pattern(scorer, config.n_layers, max_size);

    json summary = {{"pattern", result.pattern}, {"score", result.score}};
    if (!out_json.empty()) write_text_file(out_json, dump_json(summary, 2) + "\n");
    if (!out_trace.empty()) write_trace_csv(result.trace, out_trace);
    std::cout << "best pattern {";
    for (std::size_t i = 0; i < result.pattern.size(); ++i) {
        std::cout << (i ? "," : "") << result.pattern[i];
    }
    std::cout << "}  " << metric << " " << format_double(result.score) << '\n';
    return 0;
}

int cmd_tune_retention(const EvalFlags& flags, const std::string& metric,
                       const std::string& out_json, const std::string& out_trace) {
    auto [weights, config] = load_model(flags);
    const std::vector<Sample> samples = load_jsonl(flags.data_path);
    const EvalOptions options = flags.to_options();
    const double s = static_cast<double>(config.context_length);

    const auto scorer = [&](std::size_t alpha_q, std::size_t alpha_kv) {
        EvalOptions run = options;
        run.variant = EvalVariant::Retrieval;
        run.alpha_q_frac = static_cast<double>(alpha_q) / s;
        run.alpha_kv_frac = static_cast<double>(alpha_kv) / s;
        return metric_of(run_eval(weights, config, samples, run), metric);
    };
    const RetentionSweepResult result =
        tune_retention(scorer, config.context_length);

    json summary = {{"alpha_q", result.alpha_q},
                    {"alpha_kv", result.alpha_kv},
                    {"score", result.score}};
    if (!out_json.empty()) write_text_file(out_json, dump_json(summary, 2) + "\n");
    if (!out_trace.empty()) write_trace_csv(result.trace, out_trace);
    std::cout << "best alpha_q " << result.alpha_q << "  alpha_kv "
              << result.alpha_kv << "  " << metric << " "
              << format_double(result.score) << '\n';
    return 0;
}

int cmd_evidence_coverage(const std::string& data_path,
                          const std::vector<std::size_t>& lengths,
                          const std::string& out_csv,
                          const std::string& out_json) {
    const std::vector<Sample> samples = load_jsonl(data_path);
    const auto rows = evidence_coverage(samples, lengths);
    if (!out_csv.empty()) write_coverage_csv(rows, out_csv);
    if (!out_json.empty()) {
        json arr = json::array();
        for (const auto& row : rows) {
            arr.push_back({{"context_length", row.context_length},
                           {"percent_min_evidence_outside", row.percent_outside}});
        }
        write_text_file(out_json, dump_json(arr, 2) + "\n");
    }
    for (const auto& row : rows) {
        std::cout << "> " << row.context_length << ": "
                  << format_double(row.percent_outside) << "%\n";
    }
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"kite: decoder-only transformer inference with "
                 "retrieval-fused cross-attention"};
    app.require_subcommand(1);

    ModelFlags model_flags;
    EvalFlags eval_flags;
    std::string config_file;  // expanded before parsing; shown in help
    std::string out_path;
    std::string out_csv;
    std::string out_json;
    std::string document_path;
    std::string question;
    std::string metric = "token_f1";
    std::size_t max_size = 3;
    std::vector<std::size_t> lengths;
    std::vector<std::string> variant_names{"baseline", "retrieval"};

    auto* init = app.add_subcommand("init-weights",
                                    "Create a deterministic weight file");
    add_model_flags(init, model_flags);
    init->add_option("--out", out_path, "Output weight file")->required();
    init->add_option("--config", config_file, "Key=value config file");

    auto* gen = app.add_subcommand("generate",
                                   "Two-pass generation over one document");
    gen->add_option("--weights", eval_flags.weights_path, "Weight file")
        ->required();
    gen->add_option("--mode", eval_flags.mode, "baseline or retrieval");
    add_retention_flags(gen, eval_flags);
    gen->add_option("--document", document_path, "Input text file")->required();
    gen->add_option("--question", question, "Optional question string");
    gen->add_option("--out", out_path, "Output JSONL record (stdout if empty)");
    gen->add_option("--config", config_file, "Key=value config file");

    auto* eval = app.add_subcommand("eval", "Generate and score a JSONL dataset");
    add_eval_flags(eval, eval_flags);
    eval->add_option("--out_csv", out_csv, "Per-sample metrics CSV");
    eval->add_option("--out_json", out_json, "Metrics JSON");
    eval->add_option("--config", config_file, "Key=value config file");

    auto* sweep = app.add_subcommand(
        "sweep-context", "Compare variants across restricted context lengths");
    add_eval_flags(sweep, eval_flags, /*with_mode=*/false);
    sweep->add_option("--lengths", lengths, "Ascending context lengths")
        ->delimiter(',');
    sweep->add_option("--variants", variant_names, "baseline,retrieval")
        ->delimiter(',');
    sweep->add_option("--out_csv", out_csv, "Plot-ready CSV");
    sweep->add_option("--out_json", out_json, "Full reports JSON");
    sweep->add_option("--config", config_file, "Key=value config file");

    auto* tune_l = app.add_subcommand("tune-layers",
                                      "Greedy cross-attention layer search");
    add_eval_flags(tune_l, eval_flags, /*with_mode=*/false);
    tune_l->add_option("--metric", metric, "token_f1|rouge1|rouge2|rougeL");
    tune_l->add_option("--max_size", max_size, "Pattern size limit (<= 3)");
    tune_l->add_option("--out_json", out_json, "Chosen pattern JSON");
    tune_l->add_option("--out_trace_csv", out_csv, "Search trace CSV");
    tune_l->add_option("--config", config_file, "Key=value config file");

    auto* tune_r = app.add_subcommand("tune-retention",
                                      "Grid sweep over retention sizes");
    add_eval_flags(tune_r, eval_flags, /*with_mode=*/false);
    tune_r->add_option("--metric", metric, "token_f1|rouge1|rouge2|rougeL");
    tune_r->add_option("--out_json", out_json, "Chosen alphas JSON");
    tune_r->add_option("--out_trace_csv", out_csv, "Search trace CSV");
    tune_r->add_option("--config", config_file, "Key=value config file");

    auto* cover = app.add_subcommand(
        "evidence-coverage", "Share of answers with evidence beyond each length");
    cover->add_option("--data", eval_flags.data_path, "JSONL dataset")->required();
    cover->add_option("--lengths", lengths, "Context lengths")
        ->delimiter(',')
        ->required();
    cover->add_option("--out_csv", out_csv, "Coverage CSV");
    cover->add_option("--out_json", out_json, "Coverage JSON");
    cover->add_option("--config", config_file, "Key=value config file");

    std::vector<std::string> expanded;
    try {
        expanded = expand_config_args(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    std::vector<const char*> expanded_argv{argc > 0 ? argv[0] : "kite"};
    for (const auto& a : expanded) expanded_argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(expanded_argv.size()), expanded_argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (init->parsed()) return cmd_init_weights(model_flags, out_path);
        if (gen->parsed()) {
            return cmd_generate(eval_flags, document_path, question, out_path);
        }
        if (eval->parsed()) return cmd_eval(eval_flags, out_csv, out_json);
        if (sweep->parsed()) {
            return cmd_sweep_context(eval_flags, lengths, variant_names, out_csv,
                                     out_json);
        }
        if (tune_l->parsed()) {
            return cmd_tune_layers(eval_flags, metric, max_size, out_json, out_csv);
        }
        if (tune_r->parsed()) {
            return cmd_tune_retention(eval_flags, metric, out_json, out_csv);
        }
        if (cover->parsed()) {
            return cmd_evidence_coverage(eval_flags.data_path, lengths, out_csv,
                                         out_json);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

}  // namespace kite
