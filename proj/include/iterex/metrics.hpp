#pragma once

#include <array>
#include <string>
#include <vector>

namespace iterex::metrics {

// Per-iteration raw scores on their native scales.
struct MetricTriple {
    double rating = 0.0;    // 0..5
    double bleu = 0.0;      // 0..100
    double embed_f1 = 0.0;  // -100..100
};

struct F1Result {
    double precision = 0.0;  // scaled to -100..100
    double recall = 0.0;
    double f1 = 0.0;
};

// Lowercases, splits on whitespace, and breaks each punctuation character out
// into its own token ("A,B" -> [a, ",", b]).
std::vector<std::string> tokenize(const std::string& text);

// Sentence-level BLEU-4 against a single reference, on a 0..100 scale.
// Modified n-gram precisions for n = 1..4 with zero match counts replaced by
// 1e-9, geometric mean, times brevity penalty exp(1 - r/c) when the candidate
// is shorter than the reference. Empty candidate scores 0.
double bleu(const std::string& candidate, const std::string& reference);

// Greedy-matching similarity over token embeddings: precision is the mean of
// each candidate token's best cosine against the reference tokens, recall the
// converse, f1 their harmonic mean (0 unless both are positive). All values
// scaled by 100; no baseline rescaling is applied. Vectors must be unit-norm
// and share one dimension.
F1Result embedding_f1(const std::vector<std::vector<double>>& candidate,
                      const std::vector<std::vector<double>>& reference);

double mse(const std::vector<double>& predictions,
           const std::vector<double>& truths);

// Maps a triple onto [0,1]^3: rating/5, bleu/100, max(embed_f1,0)/100.
std::array<double, 3> normalize_triple(const MetricTriple& triple);

// Unweighted mean of the normalized components; the loop's selection score.
double normalized_average(const MetricTriple& triple);

}  // namespace iterex::metrics
