#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "iterex/types.hpp"

namespace iterex::ingest {

struct DatasetStats {
    long n_mcqs = 0;
    long total_ratings = 0;
    double ratings_per_mcq = 0.0;
    double avg_explanation_words = 0.0;  // over questions that have one
};

struct FineTuneRecord {
    std::string instruction;
    std::string input;
    std::string output;
};

struct ParseIssue {
    size_t line = 0;  // 1-based line number in the input stream
    std::string message;
};

struct ParseResult {
    std::vector<Mcq> mcqs;
    std::vector<ParseIssue> issues;
};

enum class DatasetFormat { Jsonl, Csv };

// Maps canonical fields onto CSV column headers. Distractor cells that are
// empty are skipped; an empty explanation cell means "no explanation".
struct CsvColumnMap {
    std::string id;
    std::string stem;
    std::string answer;
    std::vector<std::string> distractors;
    std::string explanation;  // optional: empty string = column not mapped
    std::string avg_rating;
    std::string num_ratings;
    std::string subject;      // optional
};

CsvColumnMap csv_column_map_from_json(const std::string& json_text);

// Canonical one-object-per-line encoding. avg_rating is omitted when absent,
// explanation is serialized as null when absent.
std::string mcq_to_canonical_json(const Mcq& mcq);
Mcq mcq_from_canonical_json(const std::string& json_line);

// Reads a whole dataset. Well-formed rows become validated Mcqs; malformed
// rows are reported with their line number and never silently dropped.
// Throws on an unreadable stream or, for CSV, a mapped column that is missing
// from the header.
ParseResult parse_dataset(std::istream& in, DatasetFormat format,
                          const std::optional<CsvColumnMap>& columns = std::nullopt);

// Maximal whitespace-separated tokens.
long word_count(const std::string& text);

// True iff the stem embeds an image marker: "<img" (any case) or "![".
bool detect_image(const std::string& stem);

// Training-set quality gate: rating >= 3.0, explanation longer than 10 words,
// no image in the stem, at least 10 ratings.
std::vector<Mcq> filter_for_generation(const std::vector<Mcq>& mcqs);

// Evaluator-set gate: explanation present, at least 10 ratings, no image.
// High- and low-rated questions are both retained.
std::vector<Mcq> filter_for_evaluation(const std::vector<Mcq>& mcqs);

// Throws std::invalid_argument on an empty list.
DatasetStats dataset_stats(const std::vector<Mcq>& mcqs);

// One jsonl record per question (instruction/input/output). The metadata
// stream receives the fixed training hyperparameters for external trainers.
// Returns the record count.
long export_finetune_generation(const std::vector<Mcq>& mcqs,
                                std::ostream& records_out,
                                std::ostream& metadata_out);

long export_finetune_evaluation(const std::vector<Mcq>& mcqs,
                                std::ostream& records_out);

}  // namespace iterex::ingest
