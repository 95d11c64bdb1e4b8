#include "iterex/prompts.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace iterex::prompts {

std::string format_score(double score) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", score);
    return buf;
}

std::string render_input_block(const Mcq& mcq) {
    std::ostringstream out;
    out << "Question: " << mcq.stem << "\n";
    out << "Correct Answer: " << mcq.answer;
    for (size_t i = 0; i < mcq.distractors.size(); ++i)
        out << "\nDistractor " << (i + 1) << ": " << mcq.distractors[i];
    return out.str();
}

namespace {

std::string refinement_sentence(const std::string& explanation, double score) {
    return "Your previous evaluation score and generation explanation was " +
           format_score(score) + " and " + explanation + ".";
}

}  // namespace

PromptText render_generation_initial(const Mcq& mcq) {
    PromptText prompt;
    prompt.role_tag = RoleTag::Generation;
    prompt.text = std::string(kGenerationInstruction) + "\n" + render_input_block(mcq);
    return prompt;
}

PromptText render_generation_refine_recent(const Mcq& mcq,
                                           const std::string& prev_explanation,
                                           double prev_score) {
    if (prev_explanation.empty())
        throw std::invalid_argument("refine prompt: previous explanation is empty");
    PromptText prompt;
    prompt.role_tag = RoleTag::Generation;
    prompt.history_mode = HistoryMode::RecentOnly;
    prompt.text = render_generation_initial(mcq).text + "\n" +
                  refinement_sentence(prev_explanation, prev_score) + " " +
                  kRefineClosing;
    return prompt;
}

PromptText render_generation_refine_history(
    const Mcq& mcq,
    const std::vector<std::pair<std::string, double>>& history) {
    if (history.empty())
        throw std::invalid_argument("refine prompt: history is empty");
    PromptText prompt;
    prompt.role_tag = RoleTag::Generation;
    prompt.history_mode = HistoryMode::AllHistory;
    std::string text = render_generation_initial(mcq).text;
    for (const auto& [explanation, score] : history) {
        if (explanation.empty())
            throw std::invalid_argument("refine prompt: history entry is empty");
        text += "\n" + refinement_sentence(explanation, score);
    }
    text += std::string(" ") + kRefineClosing;
    prompt.text = std::move(text);
    return prompt;
}

PromptText render_evaluation(const Mcq& mcq, const std::string& explanation) {
    if (explanation.empty())
        throw std::invalid_argument("evaluation prompt: explanation is empty");
    PromptText prompt;
    prompt.role_tag = RoleTag::Evaluation;
    prompt.text = std::string(kEvaluationInstruction) + "\n" +
                  render_input_block(mcq) + "\nExplanation: " + explanation;
    return prompt;
}

}  // namespace iterex::prompts
