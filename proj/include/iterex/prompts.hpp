#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iterex/types.hpp"

namespace iterex::prompts {

// Instruction sentences used verbatim in every rendered prompt.
inline constexpr const char* kGenerationInstruction =
    "As an explanation generation expert, can you generate an explanation for "
    "the given input?";
inline constexpr const char* kEvaluationInstruction =
    "As an explanation evaluation expert, can you generate the quality rating "
    "score for the given input?";
inline constexpr const char* kRefineClosing =
    "Please generate a better explanation.";

enum class RoleTag { Generation, Evaluation };

struct PromptText {
    std::string text;
    RoleTag role_tag = RoleTag::Generation;
    std::optional<HistoryMode> history_mode;  // set on refinement prompts
};

// Scores are substituted into prompts with two decimals ("3.50").
std::string format_score(double score);

// Labeled-lines serialization of the question itself:
//   Question: <stem>
//   Correct Answer: <answer>
//   Distractor 1: <d1> ... one line per stored distractor
std::string render_input_block(const Mcq& mcq);

// Instruction line followed by the input block. No trailing newline.
PromptText render_generation_initial(const Mcq& mcq);

// Initial prompt plus one refinement sentence carrying the previous score and
// explanation, closed by the standard sentence. Used from iteration 2 on in
// recent-only mode.
PromptText render_generation_refine_recent(const Mcq& mcq,
                                           const std::string& prev_explanation,
                                           double prev_score);

// All-history variant: one refinement sentence per past iteration, oldest
// first, closed once. A single-entry history renders byte-identical to the
// recent-only form.
PromptText render_generation_refine_history(
    const Mcq& mcq,
    const std::vector<std::pair<std::string, double>>& history);

// Evaluation instruction, input block, and an "Explanation:" line.
PromptText render_evaluation(const Mcq& mcq, const std::string& explanation);

}  // namespace iterex::prompts
