#include "iterex/types.hpp"

#include <stdexcept>

namespace iterex {

std::vector<std::string> validate_mcq(const Mcq& candidate) {
    std::vector<std::string> errors;
    if (candidate.id.empty())
        errors.push_back("id: must be non-empty");
    if (candidate.stem.empty())
        errors.push_back("stem: missing");
    if (candidate.answer.empty())
        errors.push_back("answer: missing");
    if (candidate.distractors.empty() || candidate.distractors.size() > 4)
        errors.push_back("distractor count: must be between 1 and 4, got " +
                         std::to_string(candidate.distractors.size()));
    if (candidate.avg_rating) {
        double r = *candidate.avg_rating;
        if (!(r >= 0.0 && r <= 5.0))
            errors.push_back("rating out of range: " + std::to_string(r) +
                             " not in [0,5]");
    }
    if (candidate.num_ratings < 0)
        errors.push_back("num_ratings: must be non-negative");
    if (candidate.num_ratings == 0 && candidate.avg_rating)
        errors.push_back("rating present without any ratings");
    return errors;
}

std::string to_string(HistoryMode mode) {
    switch (mode) {
        case HistoryMode::RecentOnly: return "recent_only";
        case HistoryMode::AllHistory: return "all_history";
    }
    return "recent_only";
}

HistoryMode history_mode_from_string(const std::string& name) {
    if (name == "recent_only") return HistoryMode::RecentOnly;
    if (name == "all_history") return HistoryMode::AllHistory;
    throw std::invalid_argument("unknown history mode: " + name);
}

}  // namespace iterex
