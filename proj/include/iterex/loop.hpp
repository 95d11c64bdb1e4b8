#pragma once

#include <mutex>
#include <string>
#include <unordered_set>
#include <vector>

#include "iterex/backends.hpp"
#include "iterex/types.hpp"

namespace iterex::loop {

inline constexpr int kTraceSchemaVersion = 1;

// One-line JSON encoding of a trace (schema_version field included).
std::string trace_to_json(const RunTrace& trace);
RunTrace trace_from_json(const std::string& json_line);

// Append-only jsonl sink. On open, existing lines are scanned so reruns can
// skip already-completed questions.
class TraceSink {
  public:
    explicit TraceSink(const std::string& path);

    const std::unordered_set<std::string>& existing_ids() const {
        return existing_ids_;
    }
    // Serialized across workers; throws on write failure.
    void append(const RunTrace& trace);

  private:
    std::string path_;
    std::unordered_set<std::string> existing_ids_;
    std::mutex mutex_;
};

// Runs the generate -> evaluate -> feed-back cycle for one question.
// Iteration 1 uses the initial prompt; later iterations embed the previous
// explanation and score (recent-only) or the whole history. When the question
// carries a student-written explanation it becomes the reference for BLEU and
// embedding-F1, and the normalized average is recorded per iteration. A
// backend failure truncates the run: completed records are kept and the
// diagnostic is stored on the trace.
RunTrace run_question(const Mcq& mcq, const LoopConfig& config,
                      backends::TextBackend& generator,
                      backends::TextBackend& evaluator,
                      backends::EmbeddingBackend* embedder = nullptr);

// Index of the record with the highest normalized average, earliest index on
// ties. Falls back to the highest rating when no record has a normalized
// average (no reference explanation was available). Throws on empty traces.
int select_best(const RunTrace& trace);

struct RunSummary {
    long completed = 0;
    long skipped = 0;  // ids already present in the sink
    long failed = 0;   // traces that carry a failure diagnostic
};

// Processes questions with a bounded worker pool. Traces are emitted in input
// order regardless of the concurrency limit, so runs over deterministic
// backends produce byte-identical sinks. Per-question failures are recorded
// on their trace and do not abort the run; sink write failures do.
std::vector<RunTrace> run_dataset(const std::vector<Mcq>& mcqs,
                                  const LoopConfig& config,
                                  backends::TextBackend& generator,
                                  backends::TextBackend& evaluator,
                                  backends::EmbeddingBackend* embedder = nullptr,
                                  TraceSink* sink = nullptr,
                                  RunSummary* summary = nullptr);

}  // namespace iterex::loop
