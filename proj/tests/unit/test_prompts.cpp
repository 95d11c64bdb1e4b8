#include <fstream>
#include <sstream>

#include "doctest.h"
#include "iterex/prompts.hpp"

using namespace iterex;

namespace {

Mcq snapshot_mcq() {
    Mcq mcq;
    mcq.id = "fx1";
    mcq.stem = "What is the powerhouse of the cell?";
    mcq.answer = "Mitochondria";
    mcq.distractors = {"Nucleus", "Ribosome", "Golgi apparatus"};
    mcq.explanation = "The mitochondria produce most of the cell's ATP supply.";
    mcq.avg_rating = 4.1;
    mcq.num_ratings = 25;
    return mcq;
}

std::string read_golden(const std::string& name) {
    const std::string path =
        std::string(ITEREX_TESTDATA_DIR) + "/prompts/" + name;
    std::ifstream in(path, std::ios::binary);
    REQUIRE_MESSAGE(in.good(), "missing golden file: " << path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

TEST_SUITE("prompts") {

TEST_CASE("generation initial matches the golden snapshot byte for byte") {
    const auto prompt = prompts::render_generation_initial(snapshot_mcq());
    CHECK(prompt.text == read_golden("generation_initial.golden.txt"));
}

TEST_CASE("refine recent matches the golden snapshot") {
    const auto prompt = prompts::render_generation_refine_recent(
        snapshot_mcq(), "Mitochondria create energy for the cell", 3.5);
    CHECK(prompt.text == read_golden("refine_recent.golden.txt"));
}

TEST_CASE("refine history matches the golden snapshot") {
    const auto prompt = prompts::render_generation_refine_history(
        snapshot_mcq(),
        {{"Mitochondria create energy for the cell", 3.5},
         {"Mitochondria are organelles that generate ATP through respiration",
          4.0}});
    CHECK(prompt.text == read_golden("refine_history.golden.txt"));
}

TEST_CASE("evaluation matches the golden snapshot") {
    const auto mcq = snapshot_mcq();
    const auto prompt = prompts::render_evaluation(mcq, *mcq.explanation);
    CHECK(prompt.text == read_golden("evaluation.golden.txt"));
}

TEST_CASE("instruction sentences appear verbatim") {
    const auto mcq = snapshot_mcq();
    const auto initial = prompts::render_generation_initial(mcq);
    CHECK(initial.text.rfind(prompts::kGenerationInstruction, 0) == 0);

    const auto refined =
        prompts::render_generation_refine_recent(mcq, "E1", 3.5);
    CHECK(refined.text.find(prompts::kGenerationInstruction) != std::string::npos);
    CHECK(refined.text.find("3.50 and E1") != std::string::npos);

    const auto evaluation = prompts::render_evaluation(mcq, "E");
    CHECK(evaluation.text.rfind(prompts::kEvaluationInstruction, 0) == 0);
    CHECK(evaluation.text.find("\nExplanation: E") != std::string::npos);
}

TEST_CASE("refinement prompts end with the closing sentence") {
    const auto mcq = snapshot_mcq();
    const std::string closing = prompts::kRefineClosing;
    for (const auto& text :
         {prompts::render_generation_refine_recent(mcq, "E1", 3.5).text,
          prompts::render_generation_refine_history(mcq, {{"E1", 3.5}, {"E2", 4.0}})
              .text}) {
        REQUIRE(text.size() >= closing.size());
        CHECK(text.substr(text.size() - closing.size()) == closing);
    }
}

TEST_CASE("distractor lines follow the stored order and count") {
    auto mcq = snapshot_mcq();
    mcq.distractors = {"A", "B", "C", "D"};
    const auto text = prompts::render_generation_initial(mcq).text;
    size_t count = 0;
    size_t pos = 0;
    while ((pos = text.find("Distractor ", pos)) != std::string::npos) {
        ++count;
        pos += 1;
    }
    CHECK(count == 4);
    CHECK(text.find("Distractor 1: A") < text.find("Distractor 2: B"));
    CHECK(text.find("Distractor 3: C") < text.find("Distractor 4: D"));
}

TEST_CASE("rendering is deterministic") {
    const auto mcq = snapshot_mcq();
    CHECK(prompts::render_generation_initial(mcq).text ==
          prompts::render_generation_initial(mcq).text);
    CHECK(prompts::render_evaluation(mcq, "E").text ==
          prompts::render_evaluation(mcq, "E").text);
}

TEST_CASE("a single-entry history renders identically to recent-only") {
    const auto mcq = snapshot_mcq();
    CHECK(prompts::render_generation_refine_history(mcq, {{"E1", 3.5}}).text ==
          prompts::render_generation_refine_recent(mcq, "E1", 3.5).text);
}

TEST_CASE("prompt length grows with history length") {
    const auto mcq = snapshot_mcq();
    std::vector<std::pair<std::string, double>> history;
    size_t previous = 0;
    for (int i = 1; i <= 6; ++i) {
        history.emplace_back("Explanation number " + std::to_string(i), 3.0 + i * 0.1);
        const auto text = prompts::render_generation_refine_history(mcq, history).text;
        CHECK(text.size() > previous);
        previous = text.size();
    }
}

TEST_CASE("empty inputs are rejected") {
    const auto mcq = snapshot_mcq();
    CHECK_THROWS(prompts::render_generation_refine_recent(mcq, "", 3.5));
    CHECK_THROWS(prompts::render_generation_refine_history(mcq, {}));
    CHECK_THROWS(prompts::render_evaluation(mcq, ""));
}

TEST_CASE("scores substitute with two decimals") {
    CHECK(prompts::format_score(3.5) == "3.50");
    CHECK(prompts::format_score(0.0) == "0.00");
    CHECK(prompts::format_score(4.125) == "4.12");  // round-half-even via printf
}

}  // TEST_SUITE
