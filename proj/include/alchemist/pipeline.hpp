#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "alchemist/corpus_io.hpp"
#include "alchemist/decontam.hpp"
#include "alchemist/gateway.hpp"
#include "alchemist/quality.hpp"
#include "alchemist/sample.hpp"

namespace alchemist {

struct SourceSpec {
    std::string name;
    std::filesystem::path path;  // resolved against the config file's directory
    std::string format = kFormatInstructionOutput;
};

struct AlchemizeConfig {
    double ratio = 0.05;
    std::string strategy = "augment";  // augment | replace
    bool per_source = false;
    int max_retries = 3;
    int max_words = 50;
};

struct SynthConfig {
    long evolution_count = 0;
    long filtering_limit = -1;  // -1: every mappable reject becomes a task
    long review_count = 0;
    std::string id_prefix = "synth";
};

struct ProviderSpec {
    std::string kind = "mock";  // mock | http
    std::string endpoint;
    std::string model;
};

struct MixWeights {
    double main = 1.0;
    double evolved = 1.0;
    double tasks = 1.0;
    bool shuffle = true;
};

struct AnalysisConfig {
    std::string cpd_mode = "joint";  // joint | conditional
    long cpd_limit = 50;             // samples scored by the cpd subcommand
    std::filesystem::path failure_log;
};

/// One declarative file describes the whole dataset build. Relative paths in
/// the file resolve against its own directory, so a config travels with its
/// fixtures.
struct PipelineConfig {
    uint64_t seed = 0;
    std::string tokenizer = kDefaultTokenizer;
    std::filesystem::path output_dir;
    std::vector<SourceSpec> sources;

    FilterConfig filter;
    std::string clarity_judge = "none";  // none | gateway

    bool dedup_enabled = true;
    DedupConfig dedup;

    std::filesystem::path references_path;  // empty: decontamination skipped
    DecontamConfig decontam;
    int embedder_dim = 0;  // >0 activates the hashing embedder cosine channel

    AlchemizeConfig alchemize;
    SynthConfig synth;
    ProviderSpec provider;
    GatewayConfig gateway;
    MixWeights mix_weights;
    AnalysisConfig analysis;

    bool dry_run = false;        // force the mock provider regardless of `provider`
    std::string snapshot;        // config file content as parsed, canonical dump
};

/// Parses and validates. Throws ConfigInvalid carrying the dotted key path of
/// the first offending entry; unknown keys are rejected.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct StageCounts {
    long ingested = 0;
    long skipped_lines = 0;
    long removed_by_clean = 0;
    long recycled_by_clean = 0;
    long deduped_away = 0;
    long removed_by_decontam = 0;
    long kept = 0;  // main corpus after clean + dedup + decontam
    long customized = 0;
    long evolved = 0;
    long degenerate_evolutions = 0;
    long tasks = 0;
    long final_count = 0;
};

/// Reproducibility record of a build. Deliberately contains no timestamps or
/// machine paths: two runs of the same config and seed serialize identically.
struct MixManifest {
    uint64_t seed = 0;
    std::string tokenizer;
    StageCounts counts;
    std::map<std::string, long> per_source_counts;  // of the final corpus
    std::map<std::string, long> per_source_tokens;
    long token_total = 0;
    double fraction_customized = 0.0;
    double fraction_task = 0.0;
    double fraction_customized_plus_task = 0.0;
    std::map<std::string, double> per_source_fractions;  // sum to 1 +- rounding
    bool conservation_holds = false;
    std::map<std::string, std::string> stage_stamps;
    std::string config_snapshot;
};

std::string manifest_to_json(const MixManifest& manifest);
MixManifest manifest_from_json(const std::string& text);

/// ingested = kept + removed_by_clean + recycled_by_clean + deduped_away +
/// removed_by_decontam. Recycled samples leave the main flow, so they are an
/// outflow term even though the filter does not call them "removed".
bool conservation_holds(const StageCounts& counts);

/// Concatenates the datasets (a weight below 1 keeps a seeded sample of
/// round(weight * n) items), then seeded-shuffles when asked. Weights must be
/// non-negative; an empty result throws EmptyMix. Deterministic in
/// (input order, weights, seed).
Corpus mix(const std::vector<std::pair<Corpus, double>>& datasets, uint64_t seed,
           bool shuffle = true);

/// Stage names in execution order:
/// ingest, clean, decontam, alchemize, synth, mix, stats.
const std::vector<std::string>& pipeline_stages();

/// Runs one named stage. Inputs come from the previous stages' checkpoint
/// files under <output_dir>/checkpoints; outputs are written atomically.
/// Throws StageFailure (original cause in the message) leaving prior
/// checkpoints untouched.
void run_stage(const PipelineConfig& config, const std::string& stage);

/// Runs every stage from `from_stage` (default: the whole pipeline) and
/// returns the manifest the stats stage wrote. Any checkpoints the skipped
/// stages left behind are reused, which is what makes partial reruns
/// reproduce identical downstream output.
MixManifest run_pipeline(const PipelineConfig& config, const std::string& from_stage = "ingest");

/// The gateway the orchestrated stages use: mock provider when configured or
/// when dry_run is set, HTTP otherwise.
std::unique_ptr<Gateway> make_gateway(const PipelineConfig& config);

}  // namespace alchemist
