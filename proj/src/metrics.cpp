#include "iterex/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

namespace iterex::metrics {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (unsigned char c : text) {
        if (std::isspace(c)) {
            flush();
        } else if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else {
            // every punctuation character becomes its own token
            flush();
            tokens.push_back(std::string(1, static_cast<char>(c)));
        }
    }
    flush();
    return tokens;
}

namespace {

constexpr double kEpsilon = 1e-9;

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::vector<std::string> gram(tokens.begin() + i, tokens.begin() + i + n);
        ++counts[std::move(gram)];
    }
    return counts;
}

}  // namespace

double bleu(const std::string& candidate, const std::string& reference) {
    const auto cand = tokenize(candidate);
    const auto ref = tokenize(reference);
    if (cand.empty()) return 0.0;

    double log_precision_sum = 0.0;
    for (size_t n = 1; n <= 4; ++n) {
        const auto cand_counts = count_ngrams(cand, n);
        const auto ref_counts = count_ngrams(ref, n);
        double total = 0.0;
        double matched = 0.0;
        for (const auto& [gram, count] : cand_counts) {
            total += static_cast<double>(count);
            auto it = ref_counts.find(gram);
            if (it != ref_counts.end())
                matched += static_cast<double>(std::min(count, it->second));
        }
        double precision;
        if (total == 0.0) {
            // candidate shorter than n; treat as a vanishing precision
            precision = kEpsilon;
        } else {
            if (matched == 0.0) matched = kEpsilon;
            precision = matched / total;
        }
        log_precision_sum += std::log(precision);
    }
    double geo_mean = std::exp(log_precision_sum / 4.0);

    const double c = static_cast<double>(cand.size());
    const double r = static_cast<double>(ref.size());
    const double brevity = (c < r) ? std::exp(1.0 - r / c) : 1.0;

    return 100.0 * geo_mean * brevity;
}

F1Result embedding_f1(const std::vector<std::vector<double>>& candidate,
                      const std::vector<std::vector<double>>& reference) {
    if (candidate.empty() || reference.empty())
        throw std::invalid_argument("embedding_f1: empty token embedding list");
    const size_t dim = candidate.front().size();
    for (const auto& v : candidate)
        if (v.size() != dim)
            throw std::invalid_argument("embedding_f1: dimension mismatch in candidate");
    for (const auto& v : reference)
        if (v.size() != dim)
            throw std::invalid_argument("embedding_f1: dimension mismatch between lists");

    auto dot = [dim](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (size_t i = 0; i < dim; ++i) s += a[i] * b[i];
        return s;
    };
    auto best_against = [&](const std::vector<double>& v,
                            const std::vector<std::vector<double>>& pool) {
        double best = -1.0;
        for (const auto& other : pool) best = std::max(best, dot(v, other));
        return best;
    };

    double precision = 0.0;
    for (const auto& v : candidate) precision += best_against(v, reference);
    precision /= static_cast<double>(candidate.size());

    double recall = 0.0;
    for (const auto& v : reference) recall += best_against(v, candidate);
    recall /= static_cast<double>(reference.size());

    double f1 = 0.0;
    if (precision > 0.0 && recall > 0.0)
        f1 = 2.0 * precision * recall / (precision + recall);

    return F1Result{precision * 100.0, recall * 100.0, f1 * 100.0};
}

double mse(const std::vector<double>& predictions,
           const std::vector<double>& truths) {
    if (predictions.empty())
        throw std::invalid_argument("mse: empty input");
    if (predictions.size() != truths.size())
        throw std::invalid_argument("mse: length mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - truths[i];
        sum += d * d;
    }
    return sum / static_cast<double>(predictions.size());
}

std::array<double, 3> normalize_triple(const MetricTriple& triple) {
    return {
        triple.rating / 5.0,
        triple.bleu / 100.0,
        std::max(triple.embed_f1, 0.0) / 100.0,
    };
}

double normalized_average(const MetricTriple& triple) {
    const auto n = normalize_triple(triple);
    return (n[0] + n[1] + n[2]) / 3.0;
}

}  // namespace iterex::metrics
