#pragma once

#include <string>
#include <vector>

#include "iterex/backends.hpp"
#include "iterex/types.hpp"

namespace iterex::report {

// Rolls non-failed traces up into one table row: mean selected iteration,
// means of the selected records' metrics, and the selected-index histogram.
// Failed traces are excluded from every average and counted in n_failed.
// Throws when no usable trace exists.
AggregateReport aggregate(const std::vector<RunTrace>& traces,
                          const std::string& label = "");

// First-iteration-only view (the baseline rows of the results table):
// averages are taken over each trace's iteration-1 record.
AggregateReport aggregate_baseline(const std::vector<RunTrace>& traces,
                                   const std::string& label = "");

// Mean iteration index implied by a selected-index histogram.
double average_iteration_step(const std::vector<long>& histogram);

enum class TableFormat { Markdown, Csv };

// Fixed column order; markdown shows two decimals, csv keeps full precision.
// A failure-count column appears only when some report has failures. With
// with_histogram the metric columns are replaced by per-iteration counts.
std::string render_table(const std::vector<AggregateReport>& reports,
                         TableFormat format, bool with_histogram = false);

struct BenchmarkResidual {
    std::string mcq_id;
    std::string subject;
    double predicted = 0.0;
    double truth = 0.0;
};

struct SubjectMse {
    std::string subject;
    long n = 0;
    long failures = 0;
    double mse = 0.0;
};

struct BenchmarkResult {
    std::vector<SubjectMse> subjects;  // sorted by subject name
    std::vector<BenchmarkResidual> residuals;
    long total_failures = 0;
};

// Scores the evaluator against student-written explanations: each question's
// explanation is rated by the backend and compared to the ground-truth
// average rating, grouped by subject tag. Evaluation failures are excluded
// from the MSE and counted. Questions must carry both an explanation and a
// rating.
BenchmarkResult evaluator_benchmark(const std::vector<Mcq>& mcqs,
                                    backends::TextBackend& evaluator,
                                    const GenParams& params,
                                    int retry_limit = 1);

}  // namespace iterex::report
