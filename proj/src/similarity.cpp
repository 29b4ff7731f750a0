#include "alchemist/similarity.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

#include "alchemist/errors.hpp"

namespace alchemist {

std::vector<std::string> normalize_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char raw : text) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (std::isalnum(c) || c == '_' || c >= 0x80) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else {
            if (!cur.empty()) tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

std::set<std::string> ngram_set(const std::vector<std::string>& tokens, int n) {
    std::set<std::string> grams;
    if (n < 1 || static_cast<int>(tokens.size()) < n) return grams;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string g = tokens[i];
        for (size_t j = 1; j < static_cast<size_t>(n); ++j) {
            g += ' ';
            g += tokens[i + j];
        }
        grams.insert(std::move(g));
    }
    return grams;
}

double ngram_jaccard(const std::string& a, const std::string& b, int n) {
    if (n < 1) throw PipelineError("ngram_jaccard requires n >= 1");
    auto ga = ngram_set(normalize_tokens(a), n);
    auto gb = ngram_set(normalize_tokens(b), n);
    if (ga.empty() || gb.empty()) return 0.0;
    size_t inter = 0;
    auto ia = ga.begin();
    auto ib = gb.begin();
    while (ia != ga.end() && ib != gb.end()) {
        if (*ia == *ib) {
            ++inter;
            ++ia;
            ++ib;
        } else if (*ia < *ib) {
            ++ia;
        } else {
            ++ib;
        }
    }
    size_t uni = ga.size() + gb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double embedding_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw ZeroVector();
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace alchemist
