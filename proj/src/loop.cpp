#include "iterex/loop.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <thread>

#include "iterex/metrics.hpp"
#include "json.hpp"

namespace iterex::loop {

using nlohmann::json;

std::string trace_to_json(const RunTrace& trace) {
    json j;
    j["schema_version"] = kTraceSchemaVersion;
    j["mcq_id"] = trace.mcq_id;
    j["history_mode"] = to_string(trace.history_mode);
    if (trace.reference_explanation)
        j["reference_explanation"] = *trace.reference_explanation;
    if (trace.selected_index) j["selected_index"] = *trace.selected_index;
    if (trace.failure) j["failure"] = *trace.failure;
    json records = json::array();
    for (const auto& r : trace.records) {
        json rec;
        rec["index"] = r.index;
        rec["prompt"] = r.prompt;
        rec["generated_explanation"] = r.generated_explanation;
        rec["rating"] = r.rating;
        if (r.bleu) rec["bleu"] = *r.bleu;
        if (r.embed_f1) rec["embed_f1"] = *r.embed_f1;
        if (r.normalized_avg) rec["normalized_avg"] = *r.normalized_avg;
        records.push_back(std::move(rec));
    }
    j["records"] = std::move(records);
    return j.dump();
}

RunTrace trace_from_json(const std::string& json_line) {
    json j = json::parse(json_line);
    if (j.value("schema_version", 0) != kTraceSchemaVersion)
        throw std::runtime_error("unsupported trace schema_version");
    RunTrace trace;
    trace.mcq_id = j.at("mcq_id").get<std::string>();
    trace.history_mode = history_mode_from_string(j.at("history_mode").get<std::string>());
    if (j.contains("reference_explanation"))
        trace.reference_explanation = j["reference_explanation"].get<std::string>();
    if (j.contains("selected_index"))
        trace.selected_index = j["selected_index"].get<int>();
    if (j.contains("failure")) trace.failure = j["failure"].get<std::string>();
    int expected_index = 1;
    for (const auto& rec : j.at("records")) {
        IterationRecord r;
        r.index = rec.at("index").get<int>();
        if (r.index != expected_index++)
            throw std::runtime_error("trace records are not consecutive from 1");
        r.prompt = rec.at("prompt").get<std::string>();
        r.generated_explanation = rec.at("generated_explanation").get<std::string>();
        r.rating = rec.at("rating").get<double>();
        if (rec.contains("bleu")) r.bleu = rec["bleu"].get<double>();
        if (rec.contains("embed_f1")) r.embed_f1 = rec["embed_f1"].get<double>();
        if (rec.contains("normalized_avg"))
            r.normalized_avg = rec["normalized_avg"].get<double>();
        trace.records.push_back(std::move(r));
    }
    return trace;
}

TraceSink::TraceSink(const std::string& path) : path_(path) {
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        existing_ids_.insert(trace_from_json(line).mcq_id);
    }
}

void TraceSink::append(const RunTrace& trace) {
    std::lock_guard lock(mutex_);
    std::ofstream out(path_, std::ios::app);
    if (!out) throw std::runtime_error("trace sink: cannot open " + path_);
    out << trace_to_json(trace) << "\n";
    out.flush();
    if (!out) throw std::runtime_error("trace sink: write failed on " + path_);
    existing_ids_.insert(trace.mcq_id);
}

int select_best(const RunTrace& trace) {
    if (trace.records.empty())
        throw std::invalid_argument("select_best: trace has no records");
    const bool use_normalized = std::any_of(
        trace.records.begin(), trace.records.end(),
        [](const IterationRecord& r) { return r.normalized_avg.has_value(); });

    int best_index = 0;
    double best_score = -1.0;
    for (const auto& record : trace.records) {
        double score;
        if (use_normalized) {
            if (!record.normalized_avg) continue;
            score = *record.normalized_avg;
        } else {
            score = record.rating;
        }
        if (best_index == 0 || score > best_score) {
            best_index = record.index;
            best_score = score;
        }
    }
    return best_index;
}

RunTrace run_question(const Mcq& mcq, const LoopConfig& config,
                      backends::TextBackend& generator,
                      backends::TextBackend& evaluator,
                      backends::EmbeddingBackend* embedder) {
    RunTrace trace;
    trace.mcq_id = mcq.id;
    trace.history_mode = config.history_mode;
    trace.reference_explanation = mcq.explanation;

    // Reference embeddings are iteration-invariant; compute them once.
    std::vector<std::vector<double>> reference_vectors;
    if (mcq.explanation && embedder) {
        try {
            for (auto& [token, vec] : embedder->embed_tokens(*mcq.explanation))
                reference_vectors.push_back(std::move(vec));
        } catch (const std::exception& e) {
            trace.failure = std::string("reference embedding: ") + e.what();
            return trace;
        }
    }

    std::vector<std::pair<std::string, double>> history;
    for (int k = 1; k <= config.iterations; ++k) {
        try {
            prompts::PromptText prompt;
            if (k == 1) {
                prompt = prompts::render_generation_initial(mcq);
            } else if (config.history_mode == HistoryMode::RecentOnly) {
                prompt = prompts::render_generation_refine_recent(
                    mcq, history.back().first, history.back().second);
            } else {
                prompt = prompts::render_generation_refine_history(mcq, history);
            }

            backends::CallContext gen_ctx{mcq.id, k, backends::CallKind::Generator};
            const std::string explanation =
                generator.generate(prompt, config.generation, gen_ctx);
            const double rating = backends::evaluate_explanation(
                evaluator, mcq, explanation, config.generation,
                config.retry_limit, k);

            IterationRecord record;
            record.index = k;
            record.prompt = prompt.text;
            record.generated_explanation = explanation;
            record.rating = rating;
            if (mcq.explanation) {
                record.bleu = metrics::bleu(explanation, *mcq.explanation);
                if (embedder) {
                    std::vector<std::vector<double>> candidate_vectors;
                    for (auto& [token, vec] : embedder->embed_tokens(explanation))
                        candidate_vectors.push_back(std::move(vec));
                    record.embed_f1 =
                        metrics::embedding_f1(candidate_vectors, reference_vectors).f1;
                    record.normalized_avg = metrics::normalized_average(
                        {rating, *record.bleu, *record.embed_f1});
                }
            }
            trace.records.push_back(std::move(record));
            history.emplace_back(explanation, rating);
        } catch (const std::exception& e) {
            trace.failure =
                "iteration " + std::to_string(k) + ": " + e.what();
            break;
        }
    }

    if (!trace.records.empty()) trace.selected_index = select_best(trace);
    return trace;
}

std::vector<RunTrace> run_dataset(const std::vector<Mcq>& mcqs,
                                  const LoopConfig& config,
                                  backends::TextBackend& generator,
                                  backends::TextBackend& evaluator,
                                  backends::EmbeddingBackend* embedder,
                                  TraceSink* sink, RunSummary* summary) {
    RunSummary local_summary;

    std::vector<const Mcq*> pending;
    for (const auto& mcq : mcqs) {
        if (sink && sink->existing_ids().count(mcq.id)) {
            ++local_summary.skipped;
            continue;
        }
        pending.push_back(&mcq);
    }

    const size_t n = pending.size();
    std::vector<std::optional<RunTrace>> results(n);

    std::atomic<size_t> next_task{0};
    std::atomic<bool> abort{false};
    std::mutex flush_mutex;
    size_t flush_cursor = 0;
    std::exception_ptr sink_error;

    // Flushes traces to the sink in input order as soon as every earlier
    // question has completed, so the sink is both incremental and
    // concurrency-invariant.
    auto flush_ready = [&] {
        std::lock_guard lock(flush_mutex);
        while (flush_cursor < n && results[flush_cursor].has_value()) {
            if (sink) {
                try {
                    sink->append(*results[flush_cursor]);
                } catch (...) {
                    sink_error = std::current_exception();
                    abort.store(true);
                    return;
                }
            }
            ++flush_cursor;
        }
    };

    auto worker = [&] {
        while (!abort.load()) {
            const size_t index = next_task.fetch_add(1);
            if (index >= n) break;
            results[index] =
                run_question(*pending[index], config, generator, evaluator, embedder);
            flush_ready();
        }
    };

    const size_t worker_count =
        std::min<size_t>(std::max(config.concurrency, 1), std::max<size_t>(n, 1));
    std::vector<std::thread> threads;
    threads.reserve(worker_count);
    for (size_t i = 0; i < worker_count; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    if (sink_error) std::rethrow_exception(sink_error);

    std::vector<RunTrace> traces;
    traces.reserve(n);
    for (auto& result : results) {
        if (!result) continue;  // only possible when a sink error aborted the run
        if (result->failed())
            ++local_summary.failed;
        else
            ++local_summary.completed;
        traces.push_back(std::move(*result));
    }
    if (summary) *summary = local_summary;
    return traces;
}

}  // namespace iterex::loop
