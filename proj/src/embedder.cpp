#include "alchemist/embedder.hpp"

#include <cmath>
#include <stdexcept>

#include "alchemist/errors.hpp"

namespace alchemist {

std::vector<double> HashingEmbedder::embed(const std::string& text) {
    std::vector<double> v(dim_, 0.0);
    if (text.size() < 3) {
        v[0] = 1.0;
        return v;
    }
    for (size_t i = 0; i + 3 <= text.size(); ++i) {
        // FNV-1a over the trigram
        uint64_t h = 1469598103934665603ull;
        for (size_t j = 0; j < 3; ++j) {
            h ^= static_cast<unsigned char>(text[i + j]);
            h *= 1099511628211ull;
        }
        v[h % dim_] += 1.0;
    }
    double norm = 0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm > 0)
        for (double& x : v) x /= norm;
    else
        v[0] = 1.0;
    return v;
}

std::vector<double> FixtureEmbedder::embed(const std::string& text) {
    auto it = table_.find(text);
    if (it == table_.end()) throw PipelineError("fixture embedder has no vector for text");
    return it->second;
}

}  // namespace alchemist
