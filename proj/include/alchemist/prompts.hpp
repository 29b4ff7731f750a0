#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "alchemist/gateway.hpp"
#include "alchemist/sample.hpp"

namespace alchemist {

struct PromptTemplate {
    std::string system;
    std::string body;  // slots: {instruction} {response} {language} {max_words}
    int max_retries = 3;
    int max_words = 50;
};

PromptTemplate default_prompt_template();

struct PromptRecord {
    std::string sample_id;
    std::string prompt_text;
    std::string customized_instruction;  // prompt_text fused with the original instruction
    std::string strategy = "augment";    // augment | replace
    bool validation_pass = false;
    std::vector<std::string> validation_reasons;  // fail reasons, most recent attempt last
    int retries = 0;                              // regeneration attempts after the first
};

/// "{prompt_text}\n\n{instruction}": the original instruction stays a verbatim
/// substring so customizations remain auditable.
std::string fuse_instruction(const std::string& prompt_text, const std::string& instruction);

/// Language with the most code characters across the sample's blocks;
/// "code" when nothing is recognized.
std::string dominant_language(const Sample& sample);

/// Exactly round(ratio * |corpus|) ids by seeded uniform sampling without
/// replacement. Deterministic in (corpus order, ratio, seed) and stable across
/// platforms (explicit rejection sampling over mt19937_64).
std::set<std::string> select_candidates(const Corpus& corpus, double ratio, uint64_t seed);

/// Per-source variant: round(ratio * |source slice|) from each source.
std::set<std::string> select_candidates_per_source(const Corpus& corpus, double ratio,
                                                   uint64_t seed);

/// Asks the gateway for a hindsight instruction prefix describing the
/// response, then validates word count and language mention. Failed attempts
/// are retried with the rejection reason folded into the request, up to
/// template.max_retries; a record that never validates is returned with
/// validation_pass=false and is skipped by apply_customization.
PromptRecord generate_alchemist_prompt(const Sample& sample, Gateway& gateway,
                                       const PromptTemplate& tpl = default_prompt_template(),
                                       const std::string& strategy = "augment");

/// augment: originals retained, customized copies appended with id suffix
/// "::alch" and source "alchemist". replace: customized samples substitute the
/// originals in place. Both set alchemist_prompt, fuse the instruction, leave
/// the response untouched, and refresh derived fields. Records that failed
/// validation are skipped. Throws UnknownSampleId for a passing record whose
/// sample is absent.
Corpus apply_customization(const Corpus& corpus, const std::vector<PromptRecord>& records,
                           const std::string& strategy);

void save_prompt_records(const std::vector<PromptRecord>& records,
                         const std::filesystem::path& path);
std::vector<PromptRecord> load_prompt_records(const std::filesystem::path& path);

}  // namespace alchemist
