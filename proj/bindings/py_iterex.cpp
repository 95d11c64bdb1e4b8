#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "iterex/backends.hpp"
#include "iterex/ingest.hpp"
#include "iterex/loop.hpp"
#include "iterex/metrics.hpp"
#include "iterex/prompts.hpp"
#include "iterex/report.hpp"
#include "iterex/types.hpp"

namespace py = pybind11;
using namespace iterex;

namespace {

// Runs the full loop for one question using the deterministic rule-based
// generator/evaluator and hash-projected embeddings; network-free.
RunTrace run_question_with_heuristic_mocks(const Mcq& mcq, int iterations,
                                           const std::string& history_mode,
                                           long embedding_seed,
                                           int embedding_dim) {
    LoopConfig config;
    config.iterations = iterations;
    config.history_mode = history_mode_from_string(history_mode);
    backends::HeuristicMockBackend generator("generator");
    backends::HeuristicMockBackend evaluator("evaluator");
    backends::MockEmbeddingBackend embedder(embedding_seed, embedding_dim);
    return loop::run_question(mcq, config, generator, evaluator, &embedder);
}

}  // namespace

PYBIND11_MODULE(_iterex, m) {
    m.doc() = "Iterative MCQ explanation enhancement toolkit";

    py::register_exception<backends::BackendError>(m, "BackendError");

    py::class_<Mcq>(m, "Mcq")
        .def(py::init([](std::string id, std::string stem, std::string answer,
                         std::vector<std::string> distractors,
                         std::optional<std::string> explanation,
                         std::optional<double> avg_rating, long num_ratings,
                         std::optional<std::string> subject) {
                 Mcq mcq;
                 mcq.id = std::move(id);
                 mcq.stem = std::move(stem);
                 mcq.answer = std::move(answer);
                 mcq.distractors = std::move(distractors);
                 mcq.explanation = std::move(explanation);
                 mcq.avg_rating = avg_rating;
                 mcq.num_ratings = num_ratings;
                 mcq.subject = std::move(subject);
                 return mcq;
             }),
             py::arg("id"), py::arg("stem"), py::arg("answer"),
             py::arg("distractors"), py::arg("explanation") = std::nullopt,
             py::arg("avg_rating") = std::nullopt, py::arg("num_ratings") = 0,
             py::arg("subject") = std::nullopt)
        .def_readwrite("id", &Mcq::id)
        .def_readwrite("stem", &Mcq::stem)
        .def_readwrite("answer", &Mcq::answer)
        .def_readwrite("distractors", &Mcq::distractors)
        .def_readwrite("explanation", &Mcq::explanation)
        .def_readwrite("avg_rating", &Mcq::avg_rating)
        .def_readwrite("num_ratings", &Mcq::num_ratings)
        .def_readwrite("subject", &Mcq::subject);

    py::class_<IterationRecord>(m, "IterationRecord")
        .def_readonly("index", &IterationRecord::index)
        .def_readonly("prompt", &IterationRecord::prompt)
        .def_readonly("generated_explanation", &IterationRecord::generated_explanation)
        .def_readonly("rating", &IterationRecord::rating)
        .def_readonly("bleu", &IterationRecord::bleu)
        .def_readonly("embed_f1", &IterationRecord::embed_f1)
        .def_readonly("normalized_avg", &IterationRecord::normalized_avg);

    py::class_<RunTrace>(m, "RunTrace")
        .def_readonly("mcq_id", &RunTrace::mcq_id)
        .def_readonly("records", &RunTrace::records)
        .def_readonly("selected_index", &RunTrace::selected_index)
        .def_readonly("reference_explanation", &RunTrace::reference_explanation)
        .def_readonly("failure", &RunTrace::failure);

    py::class_<ingest::DatasetStats>(m, "DatasetStats")
        .def_readonly("n_mcqs", &ingest::DatasetStats::n_mcqs)
        .def_readonly("total_ratings", &ingest::DatasetStats::total_ratings)
        .def_readonly("ratings_per_mcq", &ingest::DatasetStats::ratings_per_mcq)
        .def_readonly("avg_explanation_words",
                      &ingest::DatasetStats::avg_explanation_words);

    py::class_<AggregateReport>(m, "AggregateReport")
        .def_readonly("label", &AggregateReport::label)
        .def_readonly("n_questions", &AggregateReport::n_questions)
        .def_readonly("n_failed", &AggregateReport::n_failed)
        .def_readonly("avg_iteration_step", &AggregateReport::avg_iteration_step)
        .def_readonly("avg_rating", &AggregateReport::avg_rating)
        .def_readonly("avg_bleu", &AggregateReport::avg_bleu)
        .def_readonly("avg_embed_f1", &AggregateReport::avg_embed_f1)
        .def_readonly("histogram", &AggregateReport::histogram);

    // core types
    m.def("validate_mcq", &validate_mcq, py::arg("mcq"),
          "List of violated invariants; empty means valid");

    // ingest
    m.def("word_count", &ingest::word_count, py::arg("text"));
    m.def("detect_image", &ingest::detect_image, py::arg("stem"));
    m.def("filter_for_generation", &ingest::filter_for_generation, py::arg("mcqs"));
    m.def("filter_for_evaluation", &ingest::filter_for_evaluation, py::arg("mcqs"));
    m.def("dataset_stats", &ingest::dataset_stats, py::arg("mcqs"));
    m.def("mcq_to_canonical_json", &ingest::mcq_to_canonical_json, py::arg("mcq"));
    m.def("mcq_from_canonical_json", &ingest::mcq_from_canonical_json,
          py::arg("json_line"));

    // prompts
    m.attr("GENERATION_INSTRUCTION") = prompts::kGenerationInstruction;
    m.attr("EVALUATION_INSTRUCTION") = prompts::kEvaluationInstruction;
    m.def(
        "render_generation_initial",
        [](const Mcq& mcq) { return prompts::render_generation_initial(mcq).text; },
        py::arg("mcq"));
    m.def(
        "render_generation_refine_recent",
        [](const Mcq& mcq, const std::string& prev_explanation, double prev_score) {
            return prompts::render_generation_refine_recent(mcq, prev_explanation,
                                                            prev_score)
                .text;
        },
        py::arg("mcq"), py::arg("prev_explanation"), py::arg("prev_score"));
    m.def(
        "render_generation_refine_history",
        [](const Mcq& mcq, const std::vector<std::pair<std::string, double>>& history) {
            return prompts::render_generation_refine_history(mcq, history).text;
        },
        py::arg("mcq"), py::arg("history"));
    m.def(
        "render_evaluation",
        [](const Mcq& mcq, const std::string& explanation) {
            return prompts::render_evaluation(mcq, explanation).text;
        },
        py::arg("mcq"), py::arg("explanation"));

    // metrics
    m.def("tokenize", &metrics::tokenize, py::arg("text"));
    m.def("bleu", &metrics::bleu, py::arg("candidate"), py::arg("reference"));
    m.def(
        "embedding_f1",
        [](const std::vector<std::vector<double>>& candidate,
           const std::vector<std::vector<double>>& reference) {
            const auto result = metrics::embedding_f1(candidate, reference);
            return py::make_tuple(result.precision, result.recall, result.f1);
        },
        py::arg("candidate"), py::arg("reference"),
        "Greedy-matching (precision, recall, f1), each scaled by 100");
    m.def("mse", &metrics::mse, py::arg("predictions"), py::arg("truths"));
    m.def(
        "normalize_triple",
        [](double rating, double bleu, double embed_f1) {
            const auto n = metrics::normalize_triple({rating, bleu, embed_f1});
            return py::make_tuple(n[0], n[1], n[2]);
        },
        py::arg("rating"), py::arg("bleu"), py::arg("embed_f1"));
    m.def(
        "normalized_average",
        [](double rating, double bleu, double embed_f1) {
            return metrics::normalized_average({rating, bleu, embed_f1});
        },
        py::arg("rating"), py::arg("bleu"), py::arg("embed_f1"));

    // backends
    m.def("parse_rating", &backends::parse_rating, py::arg("model_output"));
    m.def(
        "embed_tokens_mock",
        [](const std::string& text, long seed, int dim) {
            backends::MockEmbeddingBackend backend(seed, dim);
            return backend.embed_tokens(text);
        },
        py::arg("text"), py::arg("seed") = 0, py::arg("dim") = 32,
        "Deterministic hash-projected unit-norm token embeddings");

    // loop + report
    m.def("select_best", &loop::select_best, py::arg("trace"));
    m.def("trace_to_json", &loop::trace_to_json, py::arg("trace"));
    m.def("trace_from_json", &loop::trace_from_json, py::arg("json_line"));
    m.def("run_question_with_heuristic_mocks", &run_question_with_heuristic_mocks,
          py::arg("mcq"), py::arg("iterations") = 6,
          py::arg("history_mode") = "recent_only", py::arg("embedding_seed") = 0,
          py::arg("embedding_dim") = 32);
    m.def("aggregate", &report::aggregate, py::arg("traces"), py::arg("label") = "");
    m.def("average_iteration_step", &report::average_iteration_step,
          py::arg("histogram"));
    m.def(
        "render_table",
        [](const std::vector<AggregateReport>& reports, const std::string& format,
           bool with_histogram) {
            return report::render_table(reports,
                                        format == "csv"
                                            ? report::TableFormat::Csv
                                            : report::TableFormat::Markdown,
                                        with_histogram);
        },
        py::arg("reports"), py::arg("format") = "markdown",
        py::arg("with_histogram") = false);
}
