#pragma once

#include <map>
#include <string>
#include <vector>

namespace alchemist {

/// Minimal text-embedding capability. Real deployments back this with an
/// embedding service; tests use the deterministic mocks below.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual size_t dim() const = 0;
    virtual std::string id() const = 0;
};

/// Deterministic offline embedder: hashed character trigram counts,
/// L2-normalized. Similar texts land near each other, which is all the
/// pipeline tests need.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(size_t dim = 16) : dim_(dim) {}
    std::vector<double> embed(const std::string& text) override;
    size_t dim() const override { return dim_; }
    std::string id() const override { return "hashing-trigram-" + std::to_string(dim_); }

private:
    size_t dim_;
};

/// Test double returning scripted vectors per exact text.
class FixtureEmbedder : public Embedder {
public:
    FixtureEmbedder(std::map<std::string, std::vector<double>> table, size_t dim)
        : table_(std::move(table)), dim_(dim) {}
    std::vector<double> embed(const std::string& text) override;
    size_t dim() const override { return dim_; }
    std::string id() const override { return "fixture"; }

private:
    std::map<std::string, std::vector<double>> table_;
    size_t dim_;
};

}  // namespace alchemist
