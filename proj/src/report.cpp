#include "iterex/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include "iterex/metrics.hpp"

namespace iterex::report {

namespace {

std::string fixed2(double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", value);
    return buf;
}

std::string full_precision(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

struct MetricMeans {
    double rating = 0.0, bleu = 0.0, embed = 0.0;
    long rating_n = 0, bleu_n = 0, embed_n = 0;

    void add(const IterationRecord& record) {
        rating += record.rating;
        ++rating_n;
        if (record.bleu) {
            bleu += *record.bleu;
            ++bleu_n;
        }
        if (record.embed_f1) {
            embed += *record.embed_f1;
            ++embed_n;
        }
    }
    void finish() {
        if (rating_n) rating /= static_cast<double>(rating_n);
        if (bleu_n) bleu /= static_cast<double>(bleu_n);
        if (embed_n) embed /= static_cast<double>(embed_n);
    }
};

}  // namespace

double average_iteration_step(const std::vector<long>& histogram) {
    long total = 0;
    long weighted = 0;
    for (size_t i = 0; i < histogram.size(); ++i) {
        total += histogram[i];
        weighted += static_cast<long>(i + 1) * histogram[i];
    }
    if (total == 0)
        throw std::invalid_argument("average_iteration_step: empty histogram");
    return static_cast<double>(weighted) / static_cast<double>(total);
}

AggregateReport aggregate(const std::vector<RunTrace>& traces,
                          const std::string& label) {
    AggregateReport report;
    report.label = label;

    long selected_sum = 0;
    MetricMeans means;
    for (const auto& trace : traces) {
        if (trace.failed()) {
            ++report.n_failed;
            continue;
        }
        if (!trace.selected_index || trace.records.empty())
            throw std::invalid_argument("aggregate: non-failed trace without selection");
        const int selected = *trace.selected_index;
        ++report.n_questions;
        selected_sum += selected;
        // the histogram spans the full iteration budget, not just the
        // largest selected index, so trailing zero buckets survive
        if (trace.records.size() > report.histogram.size())
            report.histogram.resize(trace.records.size(), 0);
        ++report.histogram[static_cast<size_t>(selected - 1)];
        means.add(trace.records[static_cast<size_t>(selected - 1)]);
    }
    if (report.n_questions == 0)
        throw std::invalid_argument("aggregate: no usable traces");

    means.finish();
    report.avg_iteration_step =
        static_cast<double>(selected_sum) / static_cast<double>(report.n_questions);
    report.avg_rating = means.rating;
    report.avg_bleu = means.bleu;
    report.avg_embed_f1 = means.embed;
    return report;
}

AggregateReport aggregate_baseline(const std::vector<RunTrace>& traces,
                                   const std::string& label) {
    AggregateReport report;
    report.label = label;

    MetricMeans means;
    for (const auto& trace : traces) {
        if (trace.failed() || trace.records.empty()) {
            ++report.n_failed;
            continue;
        }
        ++report.n_questions;
        means.add(trace.records.front());
    }
    if (report.n_questions == 0)
        throw std::invalid_argument("aggregate_baseline: no usable traces");

    means.finish();
    report.avg_iteration_step = 1.0;
    report.avg_rating = means.rating;
    report.avg_bleu = means.bleu;
    report.avg_embed_f1 = means.embed;
    report.histogram.assign(1, report.n_questions);
    return report;
}

std::string render_table(const std::vector<AggregateReport>& reports,
                         TableFormat format, bool with_histogram) {
    const bool show_failures = std::any_of(
        reports.begin(), reports.end(),
        [](const AggregateReport& r) { return r.n_failed > 0; });

    size_t histogram_width = 0;
    for (const auto& r : reports)
        histogram_width = std::max(histogram_width, r.histogram.size());

    std::vector<std::string> header;
    header.push_back("Models");
    if (with_histogram) {
        for (size_t i = 1; i <= histogram_width; ++i)
            header.push_back(std::to_string(i));
    } else {
        header.push_back("# Iteration Step");
        header.push_back("Avg Quality Rating Score");
        header.push_back("Avg BLEU Score");
        header.push_back("Avg BERT Score");
    }
    if (show_failures) header.push_back("Failed");

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : reports) {
        std::vector<std::string> row;
        row.push_back(r.label);
        const bool full = format == TableFormat::Csv;
        if (with_histogram) {
            for (size_t i = 0; i < histogram_width; ++i) {
                const long count = i < r.histogram.size() ? r.histogram[i] : 0;
                row.push_back(std::to_string(count));
            }
        } else {
            row.push_back(full ? full_precision(r.avg_iteration_step)
                               : fixed2(r.avg_iteration_step));
            row.push_back(full ? full_precision(r.avg_rating) : fixed2(r.avg_rating));
            row.push_back(full ? full_precision(r.avg_bleu) : fixed2(r.avg_bleu));
            row.push_back(full ? full_precision(r.avg_embed_f1)
                               : fixed2(r.avg_embed_f1));
        }
        if (show_failures) row.push_back(std::to_string(r.n_failed));
        rows.push_back(std::move(row));
    }

    std::ostringstream out;
    if (format == TableFormat::Csv) {
        auto emit = [&out](const std::vector<std::string>& cells) {
            for (size_t i = 0; i < cells.size(); ++i) {
                if (i) out << ",";
                out << cells[i];
            }
            out << "\n";
        };
        emit(header);
        for (const auto& row : rows) emit(row);
    } else {
        auto emit = [&out](const std::vector<std::string>& cells) {
            out << "|";
            for (const auto& cell : cells) out << " " << cell << " |";
            out << "\n";
        };
        emit(header);
        std::vector<std::string> rule(header.size(), "---");
        emit(rule);
        for (const auto& row : rows) emit(row);
    }
    return out.str();
}

BenchmarkResult evaluator_benchmark(const std::vector<Mcq>& mcqs,
                                    backends::TextBackend& evaluator,
                                    const GenParams& params, int retry_limit) {
    BenchmarkResult result;
    struct Accumulator {
        std::vector<double> predicted;
        std::vector<double> truth;
        long failures = 0;
    };
    std::map<std::string, Accumulator> by_subject;

    for (const auto& mcq : mcqs) {
        if (!mcq.explanation || !mcq.avg_rating)
            throw std::invalid_argument(
                "evaluator_benchmark: question " + mcq.id +
                " lacks an explanation or a ground-truth rating");
        const std::string subject = mcq.subject.value_or("(none)");
        auto& acc = by_subject[subject];
        try {
            const double predicted = backends::evaluate_explanation(
                evaluator, mcq, *mcq.explanation, params, retry_limit);
            acc.predicted.push_back(predicted);
            acc.truth.push_back(*mcq.avg_rating);
            result.residuals.push_back(
                {mcq.id, subject, predicted, *mcq.avg_rating});
        } catch (const backends::BackendError&) {
            ++acc.failures;
            ++result.total_failures;
        }
    }

    for (const auto& [subject, acc] : by_subject) {
        SubjectMse entry;
        entry.subject = subject;
        entry.n = static_cast<long>(acc.predicted.size());
        entry.failures = acc.failures;
        entry.mse = acc.predicted.empty()
                        ? 0.0
                        : metrics::mse(acc.predicted, acc.truth);
        result.subjects.push_back(std::move(entry));
    }
    return result;
}

}  // namespace iterex::report
