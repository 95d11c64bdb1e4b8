#include <algorithm>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "iterex/ingest.hpp"
#include "iterex/prompts.hpp"
#include "json.hpp"

using namespace iterex;

namespace {

std::ifstream open_testdata(const std::string& name) {
    std::ifstream in(std::string(ITEREX_TESTDATA_DIR) + "/" + name);
    REQUIRE_MESSAGE(in.good(), "missing fixture: " << name);
    return in;
}

std::string read_testdata(const std::string& name) {
    auto in = open_testdata(name);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<Mcq> load_filter_fixture() {
    auto in = open_testdata("filter_fixture.jsonl");
    const auto result = ingest::parse_dataset(in, ingest::DatasetFormat::Jsonl);
    REQUIRE(result.issues.empty());
    REQUIRE(result.mcqs.size() == 20);
    return result.mcqs;
}

Mcq simple_mcq(const std::string& id, double rating, long num_ratings,
               const std::string& explanation) {
    Mcq mcq;
    mcq.id = id;
    mcq.stem = "Stem?";
    mcq.answer = "A";
    mcq.distractors = {"B"};
    if (!explanation.empty()) mcq.explanation = explanation;
    if (num_ratings > 0) mcq.avg_rating = rating;
    mcq.num_ratings = num_ratings;
    return mcq;
}

const std::string kElevenWords =
    "one two three four five six seven eight nine ten eleven";

}  // namespace

TEST_SUITE("ingest") {

TEST_CASE("jsonl fixture parses fully") {
    auto in = open_testdata("dataset_valid.jsonl");
    const auto result = ingest::parse_dataset(in, ingest::DatasetFormat::Jsonl);
    CHECK(result.mcqs.size() == 3);
    CHECK(result.issues.empty());
    CHECK(result.mcqs[0].id == "q1");
    CHECK_FALSE(result.mcqs[1].explanation.has_value());
    CHECK(result.mcqs[2].subject == "biology");
}

TEST_CASE("canonical serialization reproduces the fixture bytes") {
    auto in = open_testdata("dataset_valid.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        const Mcq mcq = ingest::mcq_from_canonical_json(line);
        CHECK(ingest::mcq_to_canonical_json(mcq) == line);
    }
}

TEST_CASE("a row missing its answer is reported with the line number") {
    auto in = open_testdata("dataset_mixed.jsonl");
    const auto result = ingest::parse_dataset(in, ingest::DatasetFormat::Jsonl);
    CHECK(result.mcqs.size() == 2);
    REQUIRE(result.issues.size() == 1);
    CHECK(result.issues[0].line == 2);
}

TEST_CASE("empty stream yields empty output without errors") {
    std::istringstream empty;
    const auto result = ingest::parse_dataset(empty, ingest::DatasetFormat::Jsonl);
    CHECK(result.mcqs.empty());
    CHECK(result.issues.empty());
}

TEST_CASE("duplicate ids are rejected") {
    std::istringstream in(
        R"({"answer":"A","avg_rating":3.0,"distractors":["B"],"explanation":null,"id":"dup","num_ratings":10,"stem":"S?"}
{"answer":"A","avg_rating":3.0,"distractors":["B"],"explanation":null,"id":"dup","num_ratings":10,"stem":"S?"})");
    const auto result = ingest::parse_dataset(in, ingest::DatasetFormat::Jsonl);
    CHECK(result.mcqs.size() == 1);
    REQUIRE(result.issues.size() == 1);
    CHECK(result.issues[0].line == 2);
}

TEST_CASE("malformed json lines are flagged, not dropped silently") {
    std::istringstream in("{not json}\n");
    const auto result = ingest::parse_dataset(in, ingest::DatasetFormat::Jsonl);
    CHECK(result.mcqs.empty());
    REQUIRE(result.issues.size() == 1);
    CHECK(result.issues[0].line == 1);
}

TEST_CASE("csv parsing honors the column map") {
    const auto map = ingest::csv_column_map_from_json(read_testdata("columns_map.json"));
    auto in = open_testdata("dataset.csv");
    const auto result = ingest::parse_dataset(in, ingest::DatasetFormat::Csv, map);
    REQUIRE(result.issues.empty());
    REQUIRE(result.mcqs.size() == 3);
    CHECK(result.mcqs[0].distractors == std::vector<std::string>{"Nucleus", "Ribosome"});
    CHECK(result.mcqs[1].stem == "Water moves, by which process?");
    CHECK(result.mcqs[1].explanation ==
          "Water follows the solute gradient, crossing the membrane.");
    CHECK(result.mcqs[2].explanation == std::nullopt);
    CHECK(result.mcqs[2].num_ratings == 7);
}

TEST_CASE("csv with a missing mapped column throws") {
    auto map = ingest::csv_column_map_from_json(read_testdata("columns_map.json"));
    map.avg_rating = "no_such_column";
    auto in = open_testdata("dataset.csv");
    CHECK_THROWS_WITH_AS(
        ingest::parse_dataset(in, ingest::DatasetFormat::Csv, map),
        "missing mapped column: no_such_column", std::runtime_error);
}

TEST_CASE("word_count counts maximal whitespace-separated tokens") {
    CHECK(ingest::word_count("a b  c") == 3);
    CHECK(ingest::word_count("") == 0);
    CHECK(ingest::word_count(" x ") == 1);
    CHECK(ingest::word_count(kElevenWords) == 11);
}

TEST_CASE("detect_image spots html and markdown markers") {
    CHECK(ingest::detect_image("See <img src=x.png> here"));
    CHECK(ingest::detect_image("See <IMG SRC=X.PNG> here"));
    CHECK(ingest::detect_image("Look at ![plot](p.png)"));
    CHECK_FALSE(ingest::detect_image("A plain text stem with no markup"));
}

TEST_CASE("generation filter boundary cases") {
    const auto kept_at_three =
        ingest::filter_for_generation({simple_mcq("a", 3.0, 12, kElevenWords)});
    CHECK(kept_at_three.size() == 1);  // "3 or higher" is inclusive

    CHECK(ingest::filter_for_generation({simple_mcq("b", 2.99, 12, kElevenWords)})
              .empty());
    CHECK(ingest::filter_for_generation(
              {simple_mcq("c", 3.5, 12,
                          "one two three four five six seven eight nine ten")})
              .empty());  // exactly 10 words is out
    CHECK(ingest::filter_for_generation({simple_mcq("d", 3.5, 9, kElevenWords)})
              .empty());
}

TEST_CASE("evaluation filter keeps low-rated questions") {
    const auto kept =
        ingest::filter_for_evaluation({simple_mcq("a", 1.5, 15, "an explanation")});
    CHECK(kept.size() == 1);
    CHECK(ingest::filter_for_evaluation({simple_mcq("b", 4.0, 15, "")}).empty());
    CHECK(ingest::filter_for_evaluation({simple_mcq("c", 4.0, 9, "text")}).empty());
}

TEST_CASE("filter fixture: exactly the seven qualifying questions survive") {
    const auto mcqs = load_filter_fixture();
    const auto generation = ingest::filter_for_generation(mcqs);
    std::vector<std::string> ids;
    for (const auto& mcq : generation) ids.push_back(mcq.id);
    CHECK(ids == std::vector<std::string>{"f01", "f02", "f03", "f04", "f05", "f06",
                                          "f07"});
}

TEST_CASE("generation output is a subset of evaluation output") {
    const auto mcqs = load_filter_fixture();
    const auto generation = ingest::filter_for_generation(mcqs);
    const auto evaluation = ingest::filter_for_evaluation(mcqs);
    CHECK(evaluation.size() == 12);
    for (const auto& g : generation) {
        const bool found = std::any_of(evaluation.begin(), evaluation.end(),
                                       [&](const Mcq& e) { return e.id == g.id; });
        CHECK_MESSAGE(found, "generation-kept " << g.id << " missing from evaluation");
    }
}

TEST_CASE("filters are idempotent") {
    const auto mcqs = load_filter_fixture();
    const auto gen_once = ingest::filter_for_generation(mcqs);
    CHECK(ingest::filter_for_generation(gen_once) == gen_once);
    const auto eval_once = ingest::filter_for_evaluation(mcqs);
    CHECK(ingest::filter_for_evaluation(eval_once) == eval_once);
}

TEST_CASE("dataset_stats reproduces published ratings-per-question ratios") {
    auto synthesize = [](long n, long total) {
        std::vector<Mcq> mcqs;
        const long base = total / n;
        const long remainder = total % n;
        for (long i = 0; i < n; ++i) {
            auto mcq = simple_mcq("s" + std::to_string(i), 3.0,
                                  base + (i < remainder ? 1 : 0), "w");
            mcqs.push_back(std::move(mcq));
        }
        return ingest::dataset_stats(mcqs);
    };
    CHECK(synthesize(2311, 57585).ratings_per_mcq == doctest::Approx(24.91).epsilon(0.0005));
    CHECK(synthesize(2789, 271524).ratings_per_mcq == doctest::Approx(97.35).epsilon(0.0005));

    const auto single = ingest::dataset_stats({simple_mcq("x", 3.0, 10, "w")});
    CHECK(single.ratings_per_mcq == 10.0);
    CHECK(single.total_ratings == 10);
    CHECK_THROWS(ingest::dataset_stats({}));
}

TEST_CASE("dataset_stats averages explanation words over explained questions") {
    const auto stats = ingest::dataset_stats(
        {simple_mcq("a", 3.0, 10, "one two three"), simple_mcq("b", 3.0, 10, ""),
         simple_mcq("c", 3.0, 10, "one")});
    CHECK(stats.avg_explanation_words == doctest::Approx(2.0));
}

TEST_CASE("generation export carries the instruction and input block") {
    const auto mcqs = load_filter_fixture();
    const auto kept = ingest::filter_for_generation(mcqs);
    std::ostringstream records, metadata;
    const long count = ingest::export_finetune_generation(kept, records, metadata);
    CHECK(count == 7);

    std::istringstream lines(records.str());
    std::string line;
    long seen = 0;
    while (std::getline(lines, line)) {
        ++seen;
        CHECK(line.find(prompts::kGenerationInstruction) != std::string::npos);
        CHECK(line.find("\\\"instruction\\\"") == std::string::npos);
    }
    CHECK(seen == count);
    CHECK(metadata.str().find("learning_rate=2e-05") != std::string::npos);
    CHECK(metadata.str().find("epochs=5") != std::string::npos);
    CHECK(metadata.str().find("batch_size=1") != std::string::npos);
    CHECK(metadata.str().find("max_sequence_length=512") != std::string::npos);
    CHECK(metadata.str().find("warmup_ratio=0.03") != std::string::npos);
}

TEST_CASE("generation export of an empty list still writes metadata") {
    std::ostringstream records, metadata;
    CHECK(ingest::export_finetune_generation({}, records, metadata) == 0);
    CHECK(records.str().empty());
    CHECK_FALSE(metadata.str().empty());
}

TEST_CASE("generation export input has one line per distractor") {
    auto mcq = simple_mcq("two", 3.5, 12, kElevenWords);
    mcq.distractors = {"D1", "D2"};
    std::ostringstream records, metadata;
    ingest::export_finetune_generation({mcq}, records, metadata);
    const auto parsed = nlohmann::json::parse(records.str());
    const std::string input = parsed.at("input");
    CHECK(input.find("Distractor 1: D1") != std::string::npos);
    CHECK(input.find("Distractor 2: D2") != std::string::npos);
    CHECK(input.find("Distractor 3") == std::string::npos);
    CHECK(parsed.at("output") == kElevenWords);
}

TEST_CASE("evaluation export formats the rating with two decimals") {
    auto mcq = simple_mcq("e1", 4.2, 15, "some words");
    std::ostringstream records;
    CHECK(ingest::export_finetune_evaluation({mcq}, records) == 1);
    const auto parsed = nlohmann::json::parse(records.str());
    CHECK(parsed.at("output") == "4.20");
    CHECK(parsed.at("instruction") == prompts::kEvaluationInstruction);
    CHECK(std::string(parsed.at("input")).find("Explanation: some words") !=
          std::string::npos);
}

TEST_CASE("evaluation export keeps zero-rated questions") {
    auto mcq = simple_mcq("e2", 0.0, 10, "low but explained");
    mcq.avg_rating = 0.0;
    std::ostringstream records;
    CHECK(ingest::export_finetune_evaluation({mcq}, records) == 1);
    CHECK(nlohmann::json::parse(records.str()).at("output") == "0.00");

    std::ostringstream none;
    CHECK(ingest::export_finetune_evaluation({}, none) == 0);
    CHECK(none.str().empty());
}

}  // TEST_SUITE
