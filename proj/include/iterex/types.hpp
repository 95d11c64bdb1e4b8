#pragma once

#include <optional>
#include <string>
#include <vector>

namespace iterex {

// One learnersourced multiple-choice question as exported from the platform.
// Ratings are stored as averaged reals on the 0..5 scale; integrality of the
// underlying student votes is not enforced.
struct Mcq {
    std::string id;
    std::string stem;
    std::string answer;
    std::vector<std::string> distractors;  // 1..4 entries
    std::optional<std::string> explanation;
    std::optional<double> avg_rating;      // absent when num_ratings == 0
    long num_ratings = 0;
    std::optional<std::string> subject;

    bool operator==(const Mcq&) const = default;
};

// Returns the list of violated invariants; empty means the record is valid.
std::vector<std::string> validate_mcq(const Mcq& candidate);

enum class HistoryMode {
    RecentOnly,  // refinement prompt carries only the previous iteration
    AllHistory,  // refinement prompt carries every previous iteration
};

std::string to_string(HistoryMode mode);
HistoryMode history_mode_from_string(const std::string& name);

// One completed turn of the enhancement loop.
struct IterationRecord {
    int index = 1;  // 1-based
    std::string prompt;
    std::string generated_explanation;
    double rating = 0.0;                  // parsed evaluator score, 0..5
    std::optional<double> bleu;           // 0..100, present when a reference exists
    std::optional<double> embed_f1;       // -100..100
    std::optional<double> normalized_avg; // 0..1, present iff bleu and embed_f1 are

    bool operator==(const IterationRecord&) const = default;
};

// Full loop history for one question plus the selected-best index.
struct RunTrace {
    std::string mcq_id;
    HistoryMode history_mode = HistoryMode::RecentOnly;
    std::vector<IterationRecord> records;       // indices consecutive 1..n
    std::optional<int> selected_index;          // absent only when no record completed
    std::optional<std::string> reference_explanation;
    std::optional<std::string> failure;         // diagnostic when the run truncated

    bool failed() const { return failure.has_value(); }
    bool operator==(const RunTrace&) const = default;
};

struct GenParams {
    double temperature = 0.0;
    int max_output_tokens = 512;
    std::optional<long> seed;
};

struct LoopConfig {
    int iterations = 6;  // K; six matches the reported iteration histograms
    HistoryMode history_mode = HistoryMode::RecentOnly;
    std::string generator_id = "generator";
    std::string evaluator_id = "evaluator";
    GenParams generation;
    int retry_limit = 1;    // R: evaluation re-asks after an unparseable rating
    int concurrency = 1;    // worker pool width across questions
};

// Dataset-level roll-up of selected iterations (one table row).
struct AggregateReport {
    std::string label;
    long n_questions = 0;       // non-failed traces
    long n_failed = 0;
    double avg_iteration_step = 0.0;
    double avg_rating = 0.0;
    double avg_bleu = 0.0;
    double avg_embed_f1 = 0.0;
    std::vector<long> histogram;  // histogram[i] = traces whose best was iteration i+1

    bool operator==(const AggregateReport&) const = default;
};

}  // namespace iterex
