// Command-line front end: wires configuration, backends, and the pipeline
// stages (ingest -> prepare -> run -> report) together.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iterex/backends.hpp"
#include "iterex/ingest.hpp"
#include "iterex/loop.hpp"
#include "iterex/metrics.hpp"
#include "iterex/report.hpp"
#include "iterex/types.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitDataError = 1;
constexpr int kExitBackendError = 2;
constexpr int kExitConfigError = 3;

struct CliError : std::runtime_error {
    CliError(int code, const std::string& message)
        : std::runtime_error(message), exit_code(code) {}
    int exit_code;
};

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CliError(kExitDataError, "cannot open input: " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw CliError(kExitDataError, "cannot open output: " + path);
    return out;
}

std::string read_file(const std::string& path) {
    auto in = open_input(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

iterex::ingest::ParseResult load_dataset(const std::string& path,
                                         const std::string& format,
                                         const std::string& columns_path) {
    auto in = open_input(path);
    if (format == "jsonl")
        return iterex::ingest::parse_dataset(in, iterex::ingest::DatasetFormat::Jsonl);
    if (format == "csv") {
        if (columns_path.empty())
            throw CliError(kExitConfigError, "csv format requires --columns");
        auto map = iterex::ingest::csv_column_map_from_json(read_file(columns_path));
        return iterex::ingest::parse_dataset(in, iterex::ingest::DatasetFormat::Csv, map);
    }
    throw CliError(kExitConfigError, "unknown format: " + format);
}

void print_issues(const std::vector<iterex::ingest::ParseIssue>& issues) {
    for (const auto& issue : issues)
        std::cerr << "warning: line " << issue.line << ": " << issue.message << "\n";
}

// ---- run configuration ----

struct RunConfig {
    iterex::LoopConfig loop;
    iterex::backends::BackendDescriptor generator;
    iterex::backends::BackendDescriptor evaluator;
    std::optional<iterex::backends::BackendDescriptor> embeddings;
    int remote_max_inflight = 8;
};

iterex::backends::BackendDescriptor descriptor_from_json(const json& j,
                                                         const std::string& role) {
    iterex::backends::BackendDescriptor d;
    d.id = j.value("id", role);
    d.kind = iterex::backends::backend_kind_from_string(
        j.at("kind").get<std::string>());
    d.endpoint = j.value("url", "");
    d.model = j.value("model", "");
    d.api_key_env = j.value("api_key_env", "");
    d.script_path = j.value("script", "");
    d.retry.max_attempts = j.value("max_attempts", 3);
    d.retry.backoff_base = std::chrono::milliseconds(j.value("backoff_ms", 250));
    d.input_token_limit = j.value("input_token_limit", 8000L);
    d.seed = j.value("seed", 0L);
    d.embedding_dim = j.value("dim", 32);
    return d;
}

RunConfig run_config_from_file(const std::string& path) {
    std::ifstream config_in(path);
    if (!config_in)
        throw CliError(kExitConfigError, "cannot open config: " + path);
    std::ostringstream config_buf;
    config_buf << config_in.rdbuf();
    json j = json::parse(config_buf.str(), nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw CliError(kExitConfigError, "config is not a json object: " + path);
    // script fixtures are looked up relative to the config file
    const fs::path config_dir = fs::path(path).parent_path();
    auto resolve_script = [&config_dir](iterex::backends::BackendDescriptor& d) {
        if (!d.script_path.empty() && fs::path(d.script_path).is_relative())
            d.script_path = (config_dir / d.script_path).string();
    };
    try {
        RunConfig config;
        config.loop.iterations = j.value("iterations", 6);
        config.loop.history_mode =
            iterex::history_mode_from_string(j.value("history_mode", "recent_only"));
        config.loop.retry_limit = j.value("retry_limit", 1);
        config.loop.concurrency = j.value("concurrency", 1);
        if (j.contains("generation")) {
            const auto& g = j["generation"];
            config.loop.generation.temperature = g.value("temperature", 0.0);
            config.loop.generation.max_output_tokens = g.value("max_output_tokens", 512);
            if (g.contains("seed")) config.loop.generation.seed = g["seed"].get<long>();
        }
        config.generator = descriptor_from_json(j.at("generator"), "generator");
        config.evaluator = descriptor_from_json(j.at("evaluator"), "evaluator");
        resolve_script(config.generator);
        resolve_script(config.evaluator);
        if (j.contains("embeddings"))
            config.embeddings = descriptor_from_json(j["embeddings"], "embeddings");
        config.remote_max_inflight = j.value("remote_max_inflight", 8);
        config.loop.generator_id = config.generator.id;
        config.loop.evaluator_id = config.evaluator.id;
        if (config.loop.iterations < 1)
            throw CliError(kExitConfigError, "iterations must be >= 1");
        if (config.loop.retry_limit < 0)
            throw CliError(kExitConfigError, "retry_limit must be >= 0");
        if (config.loop.concurrency < 1)
            throw CliError(kExitConfigError, "concurrency must be >= 1");
        if (config.loop.generation.temperature < 0.0)
            throw CliError(kExitConfigError, "temperature must be >= 0");
        if (config.loop.generation.max_output_tokens < 1)
            throw CliError(kExitConfigError, "max_output_tokens must be >= 1");
        return config;
    } catch (const CliError&) {
        throw;
    } catch (const std::exception& e) {
        throw CliError(kExitConfigError, std::string("config error: ") + e.what());
    }
}

// ---- subcommands ----

int cmd_ingest(const std::string& input, const std::string& format,
               const std::string& columns, const std::string& output,
               bool strict) {
    auto parsed = load_dataset(input, format, columns);
    print_issues(parsed.issues);

    auto out = open_output(output);
    for (const auto& mcq : parsed.mcqs)
        out << iterex::ingest::mcq_to_canonical_json(mcq) << "\n";
    if (!out) throw CliError(kExitDataError, "write failed: " + output);

    std::cout << parsed.mcqs.size() << " records, " << parsed.issues.size()
              << " warnings\n";
    if (strict && !parsed.issues.empty()) return kExitDataError;
    return kExitOk;
}

void print_stats(const std::vector<iterex::Mcq>& mcqs, bool by_subject) {
    auto print_block = [](const std::string& name,
                          const std::vector<iterex::Mcq>& subset) {
        const auto stats = iterex::ingest::dataset_stats(subset);
        std::cout << name << "\n"
                  << "  # MCQs:          " << stats.n_mcqs << "\n"
                  << "  # Ratings:       " << stats.total_ratings << "\n"
                  << "  # Ratings/MCQ:   " << stats.ratings_per_mcq << "\n"
                  << "  Avg exp length:  " << stats.avg_explanation_words << "\n";
    };
    if (by_subject) {
        std::map<std::string, std::vector<iterex::Mcq>> groups;
        for (const auto& mcq : mcqs) groups[mcq.subject.value_or("(none)")].push_back(mcq);
        for (const auto& [subject, subset] : groups) print_block(subject, subset);
    }
    print_block("All subjects", mcqs);
}

int cmd_prepare(const std::string& input, const std::string& task,
                const std::string& output, const std::string& filtered_output,
                bool stats, bool by_subject) {
    auto parsed = load_dataset(input, "jsonl", "");
    print_issues(parsed.issues);

    std::vector<iterex::Mcq> kept;
    long count = 0;
    if (task == "generation") {
        kept = iterex::ingest::filter_for_generation(parsed.mcqs);
        auto out = open_output(output);
        auto meta = open_output(output + ".meta.txt");
        count = iterex::ingest::export_finetune_generation(kept, out, meta);
    } else if (task == "evaluation") {
        kept = iterex::ingest::filter_for_evaluation(parsed.mcqs);
        auto out = open_output(output);
        count = iterex::ingest::export_finetune_evaluation(kept, out);
    } else {
        throw CliError(kExitConfigError, "--task must be generation or evaluation");
    }

    if (!filtered_output.empty()) {
        auto out = open_output(filtered_output);
        for (const auto& mcq : kept)
            out << iterex::ingest::mcq_to_canonical_json(mcq) << "\n";
    }
    if (stats && !kept.empty()) print_stats(kept, by_subject);
    std::cout << count << " records exported (" << parsed.mcqs.size()
              << " in, " << kept.size() << " kept)\n";
    return kExitOk;
}

int cmd_run(const std::string& dataset_path, const std::string& config_path,
            const std::string& out_path, std::optional<int> concurrency,
            std::optional<int> iterations, std::optional<std::string> history_mode) {
    auto config = run_config_from_file(config_path);
    if (concurrency) config.loop.concurrency = *concurrency;
    if (iterations) config.loop.iterations = *iterations;
    if (history_mode)
        config.loop.history_mode = iterex::history_mode_from_string(*history_mode);

    auto parsed = load_dataset(dataset_path, "jsonl", "");
    print_issues(parsed.issues);

    iterex::backends::set_remote_inflight_limit(config.remote_max_inflight);
    auto generator = iterex::backends::make_text_backend(config.generator);
    auto evaluator = iterex::backends::make_text_backend(config.evaluator);
    std::unique_ptr<iterex::backends::EmbeddingBackend> embedder;
    if (config.embeddings)
        embedder = iterex::backends::make_embedding_backend(*config.embeddings);

    iterex::loop::TraceSink sink(out_path);
    iterex::loop::RunSummary summary;
    iterex::loop::run_dataset(parsed.mcqs, config.loop, *generator, *evaluator,
                              embedder.get(), &sink, &summary);

    std::cout << summary.completed << " completed, " << summary.skipped
              << " skipped (resume), " << summary.failed << " failed\n";
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& trace_paths,
               const std::string& format, bool histogram, bool baseline,
               const std::string& out_path) {
    std::vector<iterex::AggregateReport> reports;
    for (const auto& path : trace_paths) {
        auto in = open_input(path);
        std::vector<iterex::RunTrace> traces;
        std::string line;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                traces.push_back(iterex::loop::trace_from_json(line));
            } catch (const std::exception& e) {
                throw CliError(kExitDataError,
                               path + ": bad trace line: " + e.what());
            }
        }
        const std::string label = fs::path(path).stem().string();
        try {
            reports.push_back(baseline
                                  ? iterex::report::aggregate_baseline(traces, label)
                                  : iterex::report::aggregate(traces, label));
        } catch (const std::invalid_argument& e) {
            throw CliError(kExitDataError, path + ": " + e.what());
        }
    }

    const auto table_format = format == "csv" ? iterex::report::TableFormat::Csv
                                              : iterex::report::TableFormat::Markdown;
    const std::string table =
        iterex::report::render_table(reports, table_format, histogram);
    if (out_path.empty()) {
        std::cout << table;
    } else {
        auto out = open_output(out_path);
        out << table;
    }
    return kExitOk;
}

int cmd_eval_metrics(const std::string& candidates_path,
                     const std::string& references_path,
                     const std::string& out_path, long embedding_seed,
                     int embedding_dim) {
    auto read_lines = [](const std::string& path) {
        auto in = open_input(path);
        std::vector<std::string> lines;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            lines.push_back(line);
        }
        return lines;
    };
    const auto candidates = read_lines(candidates_path);
    const auto references = read_lines(references_path);
    if (candidates.size() != references.size())
        throw CliError(kExitDataError,
                       "candidate/reference line counts differ: " +
                           std::to_string(candidates.size()) + " vs " +
                           std::to_string(references.size()));

    iterex::backends::MockEmbeddingBackend embedder(embedding_seed, embedding_dim);
    std::ostringstream csv;
    csv << "index,bleu,embed_precision,embed_recall,embed_f1\n";
    for (size_t i = 0; i < candidates.size(); ++i) {
        const double bleu = iterex::metrics::bleu(candidates[i], references[i]);
        double precision = 0.0, recall = 0.0, f1 = 0.0;
        if (!iterex::metrics::tokenize(candidates[i]).empty() &&
            !iterex::metrics::tokenize(references[i]).empty()) {
            std::vector<std::vector<double>> cand, ref;
            for (auto& [t, v] : embedder.embed_tokens(candidates[i]))
                cand.push_back(std::move(v));
            for (auto& [t, v] : embedder.embed_tokens(references[i]))
                ref.push_back(std::move(v));
            const auto result = iterex::metrics::embedding_f1(cand, ref);
            precision = result.precision;
            recall = result.recall;
            f1 = result.f1;
        }
        csv << (i + 1) << "," << bleu << "," << precision << "," << recall << ","
            << f1 << "\n";
    }
    if (out_path.empty()) {
        std::cout << csv.str();
    } else {
        auto out = open_output(out_path);
        out << csv.str();
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative MCQ explanation enhancement toolkit"};
    app.require_subcommand(1);

    // ingest
    std::string in_input, in_format = "jsonl", in_columns, in_output;
    bool in_strict = false;
    auto* ingest = app.add_subcommand("ingest", "Parse and validate a dataset");
    ingest->add_option("--input", in_input, "Input dataset path")->required();
    ingest->add_option("--format", in_format, "Input format: jsonl or csv");
    ingest->add_option("--columns", in_columns, "CSV column map (json file)");
    ingest->add_option("--output", in_output, "Canonical jsonl output path")->required();
    ingest->add_flag("--strict", in_strict, "Exit nonzero on any record error");

    // prepare
    std::string pr_input, pr_task, pr_output, pr_filtered;
    bool pr_stats = false, pr_by_subject = false;
    auto* prepare =
        app.add_subcommand("prepare", "Filter a dataset and export fine-tune records");
    prepare->add_option("--input", pr_input, "Canonical dataset jsonl")->required();
    prepare->add_option("--task", pr_task, "generation or evaluation")->required();
    prepare->add_option("--output", pr_output, "Fine-tune jsonl output path")->required();
    prepare->add_option("--filtered", pr_filtered,
                        "Optional path for the filtered canonical dataset");
    prepare->add_flag("--stats", pr_stats, "Print dataset statistics");
    prepare->add_flag("--by-subject", pr_by_subject,
                      "Break statistics down per subject tag");

    // run
    std::string rn_dataset, rn_config, rn_out;
    std::optional<int> rn_concurrency, rn_iterations;
    std::optional<std::string> rn_history;
    auto* run = app.add_subcommand("run", "Run the enhancement loop over a dataset");
    run->add_option("--dataset", rn_dataset, "Canonical dataset jsonl")->required();
    run->add_option("--config", rn_config, "Run configuration (json file)")->required();
    run->add_option("--out", rn_out, "Trace sink jsonl path")->required();
    run->add_option("--concurrency", rn_concurrency, "Override config concurrency");
    run->add_option("--iterations", rn_iterations, "Override config iteration count K");
    run->add_option("--history-mode", rn_history,
                    "Override config history mode: recent_only or all_history");

    // report
    std::vector<std::string> rp_traces;
    std::string rp_format = "markdown", rp_out;
    bool rp_histogram = false, rp_baseline = false;
    auto* report = app.add_subcommand("report", "Aggregate trace files into tables");
    report->add_option("traces", rp_traces, "Trace jsonl file(s)")->required();
    report->add_option("--format", rp_format, "markdown or csv");
    report->add_flag("--histogram", rp_histogram, "Emit iteration histograms");
    report->add_flag("--baseline", rp_baseline,
                     "Report first-iteration metrics only");
    report->add_option("--out", rp_out, "Write to file instead of stdout");

    // eval-metrics
    std::string em_candidates, em_references, em_out;
    long em_seed = 0;
    int em_dim = 32;
    auto* eval_metrics = app.add_subcommand(
        "eval-metrics", "Score candidate/reference text pairs to csv");
    eval_metrics->add_option("--candidates", em_candidates, "One candidate per line")
        ->required();
    eval_metrics->add_option("--references", em_references, "One reference per line")
        ->required();
    eval_metrics->add_option("--out", em_out, "Output csv path (default stdout)");
    eval_metrics->add_option("--embedding-seed", em_seed, "Mock embedding seed");
    eval_metrics->add_option("--embedding-dim", em_dim, "Mock embedding dimension");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(ingest))
            return cmd_ingest(in_input, in_format, in_columns, in_output, in_strict);
        if (app.got_subcommand(prepare))
            return cmd_prepare(pr_input, pr_task, pr_output, pr_filtered, pr_stats,
                               pr_by_subject);
        if (app.got_subcommand(run))
            return cmd_run(rn_dataset, rn_config, rn_out, rn_concurrency,
                           rn_iterations, rn_history);
        if (app.got_subcommand(report))
            return cmd_report(rp_traces, rp_format, rp_histogram, rp_baseline, rp_out);
        if (app.got_subcommand(eval_metrics))
            return cmd_eval_metrics(em_candidates, em_references, em_out, em_seed,
                                    em_dim);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code;
    } catch (const iterex::backends::BackendError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == iterex::backends::BackendErrorKind::Config
                   ? kExitConfigError
                   : kExitBackendError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDataError;
    }
    return kExitOk;
}
