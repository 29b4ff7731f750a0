#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "alchemist/embedder.hpp"
#include "alchemist/sample.hpp"

namespace alchemist {

/// The three similarity signals for one (sample, reference) pair. A metric is
/// absent when its channel could not run (no embedder, unparseable code).
struct SimilarityScores {
    double ngram_jaccard = 0.0;
    std::optional<double> embedding_cosine;
    std::optional<double> ast_edit_norm;
    std::string reference_id;
};

struct FlaggedSample {
    std::string sample_id;
    SimilarityScores scores;
    std::string triggering_metric;  // "ngram" | "ast" | "cosine"
};

struct DecontamConfig {
    int jaccard_ngram = 10;          // word n-gram size for the jaccard score
    int index_ngram = 3;             // smaller n for candidate generation recall
    double jaccard_threshold = 0.6;  // flag when >=
    double ast_threshold = 0.15;     // flag when normalized tree distance <=
    double cosine_threshold = 0.90;  // flag when >=
    size_t max_posting = 200;        // n-grams with longer posting lists are skipped
};

struct ContaminationReport {
    std::vector<FlaggedSample> flagged;   // sorted by sample id
    double removal_fraction = 0.0;        // |flagged unique| / |corpus|
    DecontamConfig thresholds;
    std::map<std::string, long> channel_counts;  // triggering metric -> count
    bool cosine_channel_active = false;
    std::string notes;
};

/// Benchmark reference item: JSONL keys id, prompt, canonical_solution.
struct ReferenceItem {
    std::string id;
    std::string prompt;
    std::string canonical_solution;
};

std::vector<ReferenceItem> load_references(const std::filesystem::path& path);

/// Inverted word n-gram index used for candidate generation: a pair is scored
/// only when it shares at least one indexed n-gram (or is embedding-shortlisted).
class NgramIndex {
public:
    NgramIndex(int n, size_t max_posting) : n_(n), max_posting_(max_posting) {}
    void add(int doc, const std::string& text);
    std::vector<int> candidates(const std::string& text) const;  // sorted, deduped
    int n() const { return n_; }

private:
    int n_;
    size_t max_posting_;
    std::map<std::string, std::vector<int>> postings_;
};

struct DecontamResult {
    Corpus clean;
    ContaminationReport report;
};

/// Flags corpus samples too similar to any reference under the disjunctive
/// three-channel rule and removes them from the clean output. The cosine
/// channel runs only when an embedder is supplied.
DecontamResult decontaminate(const Corpus& corpus, const std::vector<ReferenceItem>& references,
                             Embedder* embedder, const DecontamConfig& config = {});

struct DedupConfig {
    int ngram = 10;
    double jaccard_threshold = 0.9;  // near-duplicate when pairwise jaccard >=
    size_t max_posting = 200;
};

struct DuplicateCluster {
    std::vector<std::string> member_ids;  // sorted; first entry is the survivor
};

struct DedupResult {
    Corpus deduped;
    std::vector<DuplicateCluster> clusters;  // only clusters of size >= 2
};

/// Collapses near-duplicate clusters (pairwise jaccard over instruction +
/// response) to one representative each: the lowest id survives.
DedupResult dedup(const Corpus& corpus, const DedupConfig& config = {});

std::string contamination_report_to_json(const ContaminationReport& report);

}  // namespace alchemist
