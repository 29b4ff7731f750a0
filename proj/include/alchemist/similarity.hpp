#pragma once

#include <set>
#include <string>
#include <vector>

namespace alchemist {

/// Lowercases, strips punctuation, and splits on whitespace.
std::vector<std::string> normalize_tokens(const std::string& text);

/// The set of word-level n-grams of the normalized token sequence, each
/// rendered as tokens joined by a single space.
std::set<std::string> ngram_set(const std::vector<std::string>& tokens, int n);

/// Word-level n-gram Jaccard similarity. Symmetric; 1.0 for identical
/// non-empty token sequences of length >= n; 0.0 when either side has no
/// n-grams.
double ngram_jaccard(const std::string& a, const std::string& b, int n);

/// Standard cosine similarity. Throws DimensionMismatch / ZeroVector.
double embedding_cosine(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace alchemist
