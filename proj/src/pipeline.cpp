#include "alchemist/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "alchemist/analysis.hpp"
#include "alchemist/corpus_io.hpp"
#include "alchemist/errors.hpp"
#include "alchemist/hash.hpp"
#include "alchemist/prompts.hpp"
#include "alchemist/task_synth.hpp"

namespace alchemist {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string join_path(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

void check_known(const ordered_json& obj, const std::string& prefix,
                 std::initializer_list<const char*> keys) {
    std::set<std::string> allowed;
    for (const char* k : keys) allowed.insert(k);
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigInvalid(join_path(prefix, it.key()), "unknown key");
}

const ordered_json kEmptyObject = ordered_json::object();

const ordered_json& section(const ordered_json& obj, const char* key, const std::string& prefix) {
    if (!obj.contains(key)) return kEmptyObject;
    const auto& v = obj.at(key);
    if (!v.is_object()) throw ConfigInvalid(join_path(prefix, key), "expected an object");
    return v;
}

double num_or(const ordered_json& obj, const char* key, double def, const std::string& prefix) {
    if (!obj.contains(key)) return def;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigInvalid(join_path(prefix, key), "expected a number");
    return v.get<double>();
}

long int_or(const ordered_json& obj, const char* key, long def, const std::string& prefix) {
    if (!obj.contains(key)) return def;
    const auto& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigInvalid(join_path(prefix, key), "expected an integer");
    return v.get<long>();
}

bool bool_or(const ordered_json& obj, const char* key, bool def, const std::string& prefix) {
    if (!obj.contains(key)) return def;
    const auto& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigInvalid(join_path(prefix, key), "expected a boolean");
    return v.get<bool>();
}

std::string str_or(const ordered_json& obj, const char* key, const std::string& def,
                   const std::string& prefix) {
    if (!obj.contains(key)) return def;
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ConfigInvalid(join_path(prefix, key), "expected a string");
    return v.get<std::string>();
}

void require_unit(double v, const std::string& path) {
    if (v < 0.0 || v > 1.0) throw ConfigInvalid(path, "must be within [0, 1]");
}

void require_non_negative(double v, const std::string& path) {
    if (v < 0.0) throw ConfigInvalid(path, "must be non-negative");
}

void require_positive(double v, const std::string& path) {
    if (v <= 0.0) throw ConfigInvalid(path, "must be positive");
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
}

// Rejection sampling keeps index selection identical across platforms.
uint64_t bounded_rand(std::mt19937_64& rng, uint64_t bound) {
    const uint64_t span = std::numeric_limits<uint64_t>::max() -
                          std::numeric_limits<uint64_t>::max() % bound;
    uint64_t x;
    do {
        x = rng();
    } while (x >= span);
    return x % bound;
}

// First k slots of a Fisher-Yates shuffle, returned in original corpus order.
std::vector<size_t> pick_indices(size_t n, size_t k, std::mt19937_64& rng) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    k = std::min(k, n);
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + static_cast<size_t>(bounded_rand(rng, n - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

uint64_t stage_seed(const PipelineConfig& cfg, const char* label) {
    return cfg.seed ^ fnv1a64(label);
}

fs::path ckpt_dir(const PipelineConfig& cfg) { return cfg.output_dir / "checkpoints"; }
fs::path ckpt(const PipelineConfig& cfg, const char* name) { return ckpt_dir(cfg) / name; }

ordered_json counts_to_json(const StageCounts& c) {
    ordered_json j;
    j["ingested"] = c.ingested;
    j["skipped_lines"] = c.skipped_lines;
    j["removed_by_clean"] = c.removed_by_clean;
    j["recycled_by_clean"] = c.recycled_by_clean;
    j["deduped_away"] = c.deduped_away;
    j["removed_by_decontam"] = c.removed_by_decontam;
    j["kept"] = c.kept;
    j["customized"] = c.customized;
    j["evolved"] = c.evolved;
    j["degenerate_evolutions"] = c.degenerate_evolutions;
    j["tasks"] = c.tasks;
    j["final_count"] = c.final_count;
    return j;
}

StageCounts counts_from_json(const ordered_json& j) {
    StageCounts c;
    c.ingested = j.value("ingested", 0L);
    c.skipped_lines = j.value("skipped_lines", 0L);
    c.removed_by_clean = j.value("removed_by_clean", 0L);
    c.recycled_by_clean = j.value("recycled_by_clean", 0L);
    c.deduped_away = j.value("deduped_away", 0L);
    c.removed_by_decontam = j.value("removed_by_decontam", 0L);
    c.kept = j.value("kept", 0L);
    c.customized = j.value("customized", 0L);
    c.evolved = j.value("evolved", 0L);
    c.degenerate_evolutions = j.value("degenerate_evolutions", 0L);
    c.tasks = j.value("tasks", 0L);
    c.final_count = j.value("final_count", 0L);
    return c;
}

struct StageState {
    StageCounts counts;
    std::map<std::string, std::string> stamps;
};

StageState load_state(const PipelineConfig& cfg) {
    StageState state;
    std::ifstream in(ckpt(cfg, "counts.json"));
    if (!in) return state;
    std::stringstream ss;
    ss << in.rdbuf();
    auto j = ordered_json::parse(ss.str());
    state.counts = counts_from_json(j.value("counts", ordered_json::object()));
    const ordered_json stamps = j.value("stamps", ordered_json::object());
    for (const auto& [k, v] : stamps.items()) state.stamps[k] = v.get<std::string>();
    return state;
}

void save_state(const PipelineConfig& cfg, const StageState& state) {
    ordered_json j;
    j["counts"] = counts_to_json(state.counts);
    j["stamps"] = state.stamps;
    atomic_write_file(ckpt(cfg, "counts.json"), j.dump(2));
}

// Scores like "Clarity: 7" out of the judge tag's reply; unparseable replies
// pass the sample rather than inventing a low score.
int parse_clarity(const std::string& text, int fallback) {
    auto lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    auto pos = lower.find("clarity");
    if (pos == std::string::npos) return fallback;
    pos = lower.find_first_of("0123456789", pos);
    if (pos == std::string::npos) return fallback;
    int score = 0;
    while (pos < lower.size() && std::isdigit(static_cast<unsigned char>(lower[pos])))
        score = score * 10 + (lower[pos++] - '0');
    return score <= 10 ? score : fallback;
}

void write_stage_outputs(const PipelineConfig& cfg, const Corpus& final_corpus) {
    save_corpus(final_corpus, cfg.output_dir / "dataset.jsonl");
    write_instruction_output_jsonl(final_corpus, cfg.output_dir / "dataset.instruction_output.jsonl");
    write_chat_messages_jsonl(final_corpus, cfg.output_dir / "dataset.messages.jsonl");
}

void stage_ingest(const PipelineConfig& cfg, StageState& state) {
    Corpus corpus;
    long skipped = 0;
    std::set<std::string> seen;
    for (const auto& src : cfg.sources) {
        auto [part, stats] = load_dataset(src.path, src.name, src.format, cfg.tokenizer);
        skipped += static_cast<long>(stats.skips.size());
        for (auto& s : part) {
            if (!seen.insert(s.id).second) {
                // cross-source id collisions get a stable namespaced id
                const std::string stem = src.name + "/" + s.id;
                s.id = stem;
                long bump = 2;
                while (!seen.insert(s.id).second) s.id = stem + "#" + std::to_string(bump++);
            }
            corpus.push_back(std::move(s));
        }
    }
    save_corpus(corpus, ckpt(cfg, "ingest.jsonl"));
    state.counts.ingested = static_cast<long>(corpus.size());
    state.counts.skipped_lines = skipped;
}

void stage_clean(const PipelineConfig& cfg, StageState& state) {
    Corpus corpus = load_corpus(ckpt(cfg, "ingest.jsonl"), cfg.tokenizer);
    std::unique_ptr<Gateway> gw;
    ClarityJudge judge;
    if (cfg.clarity_judge == "gateway") {
        gw = make_gateway(cfg);
        int fallback = cfg.filter.clarity_threshold;
        judge = [&gw, fallback](const Sample& s) {
            auto req = simple_request("Rate the clarity of this answer from 0 to 10.\n"
                                      "Reply with \"Clarity: N\".\nInstruction:\n" +
                                          s.instruction + "\nResponse:\n" + s.response,
                                      "judge");
            return parse_clarity(gw->complete(req), fallback);
        };
    }

    std::vector<std::pair<Sample, QualityVerdict>> verdicts;
    verdicts.reserve(corpus.size());
    for (auto& s : corpus) {
        auto v = classify_quality(s, cfg.filter, judge);
        verdicts.emplace_back(std::move(s), std::move(v));
    }
    auto part = apply_removal_policy(verdicts);

    Corpus removed, recycled;
    std::string verdict_lines;
    for (const auto& [s, v] : part.removed) {
        removed.push_back(s);
        verdict_lines += verdict_to_json(s.id, v) + "\n";
    }
    for (const auto& [s, v] : part.recycled) {
        recycled.push_back(s);
        verdict_lines += verdict_to_json(s.id, v) + "\n";
    }
    save_corpus(part.kept, ckpt(cfg, "clean.jsonl"));
    save_corpus(removed, ckpt(cfg, "removed.jsonl"));
    save_corpus(recycled, ckpt(cfg, "recycled.jsonl"));
    atomic_write_file(ckpt(cfg, "verdicts.jsonl"), verdict_lines);

    state.counts.removed_by_clean = static_cast<long>(removed.size());
    state.counts.recycled_by_clean = static_cast<long>(recycled.size());
}

void stage_decontam(const PipelineConfig& cfg, StageState& state) {
    Corpus corpus = load_corpus(ckpt(cfg, "clean.jsonl"), cfg.tokenizer);

    long before = static_cast<long>(corpus.size());
    ordered_json clusters = ordered_json::array();
    if (cfg.dedup_enabled) {
        auto result = dedup(corpus, cfg.dedup);
        for (const auto& cluster : result.clusters) clusters.push_back(cluster.member_ids);
        corpus = std::move(result.deduped);
    }
    state.counts.deduped_away = before - static_cast<long>(corpus.size());
    ordered_json dedup_report;
    dedup_report["clusters"] = clusters;
    atomic_write_file(ckpt(cfg, "dedup_clusters.json"), dedup_report.dump(2));

    before = static_cast<long>(corpus.size());
    if (!cfg.references_path.empty()) {
        auto references = load_references(cfg.references_path);
        std::unique_ptr<Embedder> embedder;
        if (cfg.embedder_dim > 0)
            embedder = std::make_unique<HashingEmbedder>(static_cast<size_t>(cfg.embedder_dim));
        auto result = decontaminate(corpus, references, embedder.get(), cfg.decontam);
        atomic_write_file(ckpt(cfg, "decontam_report.json"),
                          contamination_report_to_json(result.report));
        corpus = std::move(result.clean);
    } else {
        atomic_write_file(ckpt(cfg, "decontam_report.json"),
                          R"({"flagged": [], "notes": "no references configured"})");
    }
    state.counts.removed_by_decontam = before - static_cast<long>(corpus.size());

    save_corpus(corpus, ckpt(cfg, "decontam.jsonl"));
    state.counts.kept = static_cast<long>(corpus.size());
}

void stage_alchemize(const PipelineConfig& cfg, StageState& state) {
    Corpus corpus = load_corpus(ckpt(cfg, "decontam.jsonl"), cfg.tokenizer);
    uint64_t seed = stage_seed(cfg, "alchemize");
    auto ids = cfg.alchemize.per_source
                   ? select_candidates_per_source(corpus, cfg.alchemize.ratio, seed)
                   : select_candidates(corpus, cfg.alchemize.ratio, seed);

    PromptTemplate tpl = default_prompt_template();
    tpl.max_retries = cfg.alchemize.max_retries;
    tpl.max_words = cfg.alchemize.max_words;

    std::vector<PromptRecord> records;
    if (!ids.empty()) {
        auto gw = make_gateway(cfg);
        for (const auto& s : corpus)
            if (ids.count(s.id))
                records.push_back(generate_alchemist_prompt(s, *gw, tpl, cfg.alchemize.strategy));
    }
    Corpus customized = apply_customization(corpus, records, cfg.alchemize.strategy);

    save_corpus(customized, ckpt(cfg, "alchemize.jsonl"));
    save_prompt_records(records, cfg.output_dir / "prompt_records.jsonl");
    state.counts.customized = static_cast<long>(
        std::count_if(records.begin(), records.end(),
                      [](const PromptRecord& r) { return r.validation_pass; }));
}

void stage_synth(const PipelineConfig& cfg, StageState& state) {
    Corpus originals = load_corpus(ckpt(cfg, "decontam.jsonl"), cfg.tokenizer);
    std::vector<TaskRecord> records;
    Corpus evolved;
    long degenerate = 0;

    std::unique_ptr<Gateway> gw;
    auto gateway = [&]() -> Gateway& {
        if (!gw) gw = make_gateway(cfg);
        return *gw;
    };

    if (cfg.synth.evolution_count > 0) {
        std::vector<size_t> eligible;
        for (size_t i = 0; i < originals.size(); ++i)
            if (!originals[i].instruction.empty()) eligible.push_back(i);
        std::mt19937_64 rng(stage_seed(cfg, "synth-evolve"));
        auto picks = pick_indices(eligible.size(),
                                  static_cast<size_t>(cfg.synth.evolution_count), rng);
        int caller = 0;
        for (size_t p : picks) {
            const Sample& original = originals[eligible[p]];
            try {
                Sample ev = evolve_instruction(original, gateway(), caller);
                records.push_back(synth_instruction_evolution_task(original, ev));
                evolved.push_back(std::move(ev));
            } catch (const DegenerateEvolution&) {
                ++degenerate;
            }
            ++caller;
        }
    }

    if (cfg.synth.filtering_limit != 0) {
        std::map<std::string, QualityVerdict> verdicts;
        std::ifstream in(ckpt(cfg, "verdicts.jsonl"));
        std::string line;
        while (in && std::getline(in, line)) {
            if (line.empty()) continue;
            auto [id, verdict] = verdict_from_json(line);
            verdicts.emplace(std::move(id), std::move(verdict));
        }
        Corpus rejects = load_corpus(ckpt(cfg, "removed.jsonl"), cfg.tokenizer);
        Corpus recycled = load_corpus(ckpt(cfg, "recycled.jsonl"), cfg.tokenizer);
        rejects.insert(rejects.end(), recycled.begin(), recycled.end());
        long made = 0;
        for (const auto& s : rejects) {
            if (cfg.synth.filtering_limit > 0 && made >= cfg.synth.filtering_limit) break;
            auto it = verdicts.find(s.id);
            if (it == verdicts.end()) continue;
            try {
                records.push_back(synth_data_filtering_task(s, it->second));
                ++made;
            } catch (const UnmappableFlag&) {
                // rejects outside the four-category scheme are not task material
            }
        }
    }

    if (cfg.synth.review_count > 0) {
        std::vector<size_t> eligible;
        for (size_t i = 0; i < originals.size(); ++i)
            if (!originals[i].code_blocks.empty()) eligible.push_back(i);
        std::mt19937_64 rng(stage_seed(cfg, "synth-review"));
        auto picks =
            pick_indices(eligible.size(), static_cast<size_t>(cfg.synth.review_count), rng);
        for (size_t p : picks) {
            const Sample& original = originals[eligible[p]];
            try {
                auto review = synth_code_review(original, gateway());
                if (review.selected) records.push_back(make_review_task(original, review));
            } catch (const ParseFailure&) {
                // an unparseable reviewer is a lost task, not a failed stage
            }
        }
    }

    Corpus tasks = tasks_to_corpus(records, cfg.synth.id_prefix);
    save_corpus(evolved, ckpt(cfg, "synth_evolved.jsonl"));
    save_corpus(tasks, ckpt(cfg, "synth_tasks.jsonl"));
    state.counts.evolved = static_cast<long>(evolved.size());
    state.counts.degenerate_evolutions = degenerate;
    state.counts.tasks = static_cast<long>(tasks.size());
}

void stage_mix(const PipelineConfig& cfg, StageState& state) {
    Corpus main_part = load_corpus(ckpt(cfg, "alchemize.jsonl"), cfg.tokenizer);
    Corpus evolved = load_corpus(ckpt(cfg, "synth_evolved.jsonl"), cfg.tokenizer);
    Corpus tasks = load_corpus(ckpt(cfg, "synth_tasks.jsonl"), cfg.tokenizer);

    Corpus final_corpus = mix({{std::move(main_part), cfg.mix_weights.main},
                               {std::move(evolved), cfg.mix_weights.evolved},
                               {std::move(tasks), cfg.mix_weights.tasks}},
                              stage_seed(cfg, "mix"), cfg.mix_weights.shuffle);

    save_corpus(final_corpus, ckpt(cfg, "mix.jsonl"));
    write_stage_outputs(cfg, final_corpus);
    state.counts.final_count = static_cast<long>(final_corpus.size());
}

void stage_stats(const PipelineConfig& cfg, StageState& state) {
    Corpus final_corpus = load_corpus(ckpt(cfg, "mix.jsonl"), cfg.tokenizer);
    atomic_write_file(cfg.output_dir / "stats.json",
                      corpus_stats_to_json(corpus_stats(final_corpus)));

    MixManifest manifest;
    manifest.seed = cfg.seed;
    manifest.tokenizer = cfg.tokenizer;
    manifest.counts = state.counts;
    manifest.stage_stamps = state.stamps;
    manifest.stage_stamps["stats"] = "stats/1";  // this stage is stamped only after it returns
    manifest.config_snapshot = cfg.snapshot;

    long customized = 0, task = 0;
    for (const auto& s : final_corpus) {
        ++manifest.per_source_counts[s.source];
        manifest.per_source_tokens[s.source] += s.token_estimate;
        manifest.token_total += s.token_estimate;
        if (s.alchemist_prompt) ++customized;
        if (s.source == "task") ++task;
    }
    long n = static_cast<long>(final_corpus.size());
    if (n > 0) {
        manifest.fraction_customized = static_cast<double>(customized) / n;
        manifest.fraction_task = static_cast<double>(task) / n;
        manifest.fraction_customized_plus_task = static_cast<double>(customized + task) / n;
        for (const auto& [source, count] : manifest.per_source_counts)
            manifest.per_source_fractions[source] = static_cast<double>(count) / n;
    }
    manifest.conservation_holds = conservation_holds(state.counts);

    atomic_write_file(cfg.output_dir / "manifest.json", manifest_to_json(manifest));

    ordered_json training;
    training["learning_rate"] = 1e-4;
    training["epochs"] = 2;
    training["batch_size"] = 2;
    training["sequence_length"] = 8192;
    training["note"] = "inert metadata for downstream trainers; nothing here is executed";
    atomic_write_file(cfg.output_dir / "training_config.json", training.dump(2));
}

}  // namespace

PipelineConfig load_pipeline_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid(path.string(), "cannot open config file");
    std::stringstream ss;
    ss << in.rdbuf();
    ordered_json j;
    try {
        j = ordered_json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigInvalid(path.string(), std::string("not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigInvalid(path.string(), "config root must be an object");

    check_known(j, "", {"seed", "tokenizer", "output_dir", "sources", "filter", "dedup",
                        "decontam", "alchemist", "tasks", "provider", "gateway", "mix",
                        "analysis"});

    PipelineConfig cfg;
    cfg.snapshot = j.dump(2);
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

    long seed = int_or(j, "seed", 0, "");
    if (seed < 0) throw ConfigInvalid("seed", "must be non-negative");
    cfg.seed = static_cast<uint64_t>(seed);

    cfg.tokenizer = str_or(j, "tokenizer", kDefaultTokenizer, "");
    try {
        estimate_tokens("probe line", cfg.tokenizer);
    } catch (const TokenizerUnavailable&) {
        throw ConfigInvalid("tokenizer", "unknown tokenizer id: " + cfg.tokenizer);
    }

    std::string out_dir = str_or(j, "output_dir", "", "");
    if (out_dir.empty()) throw ConfigInvalid("output_dir", "required");
    cfg.output_dir = resolve(base, out_dir);

    if (!j.contains("sources") || !j.at("sources").is_array() || j.at("sources").empty())
        throw ConfigInvalid("sources", "required non-empty array");
    size_t si = 0;
    for (const auto& s : j.at("sources")) {
        std::string prefix = "sources[" + std::to_string(si++) + "]";
        if (!s.is_object()) throw ConfigInvalid(prefix, "expected an object");
        check_known(s, prefix, {"name", "path", "format"});
        SourceSpec spec;
        spec.name = str_or(s, "name", "", prefix);
        if (spec.name.empty()) throw ConfigInvalid(prefix + ".name", "required");
        std::string sp = str_or(s, "path", "", prefix);
        if (sp.empty()) throw ConfigInvalid(prefix + ".path", "required");
        spec.path = resolve(base, sp);
        spec.format = str_or(s, "format", kFormatInstructionOutput, prefix);
        if (spec.format != kFormatInstructionOutput && spec.format != kFormatMessages &&
            spec.format != kFormatCanonical)
            throw ConfigInvalid(prefix + ".format", "unknown format: " + spec.format);
        cfg.sources.push_back(std::move(spec));
    }

    {
        const auto& f = section(j, "filter", "");
        check_known(f, "filter",
                    {"min_response_chars", "max_response_chars", "min_code_fraction",
                     "prose_prefix_cap", "run_executor", "timeout_seconds", "isolate_network",
                     "clarity_threshold", "clarity_judge"});
        cfg.filter.min_response_chars =
            int_or(f, "min_response_chars", cfg.filter.min_response_chars, "filter");
        require_non_negative(static_cast<double>(cfg.filter.min_response_chars),
                             "filter.min_response_chars");
        cfg.filter.max_response_chars =
            int_or(f, "max_response_chars", cfg.filter.max_response_chars, "filter");
        if (cfg.filter.max_response_chars < cfg.filter.min_response_chars)
            throw ConfigInvalid("filter.max_response_chars", "must be >= min_response_chars");
        cfg.filter.min_code_fraction =
            num_or(f, "min_code_fraction", cfg.filter.min_code_fraction, "filter");
        require_unit(cfg.filter.min_code_fraction, "filter.min_code_fraction");
        cfg.filter.prose_prefix_cap =
            int_or(f, "prose_prefix_cap", cfg.filter.prose_prefix_cap, "filter");
        require_non_negative(static_cast<double>(cfg.filter.prose_prefix_cap),
                             "filter.prose_prefix_cap");
        cfg.filter.run_executor = bool_or(f, "run_executor", cfg.filter.run_executor, "filter");
        cfg.filter.limits.timeout_seconds =
            num_or(f, "timeout_seconds", cfg.filter.limits.timeout_seconds, "filter");
        require_positive(cfg.filter.limits.timeout_seconds, "filter.timeout_seconds");
        cfg.filter.limits.isolate_network =
            bool_or(f, "isolate_network", cfg.filter.limits.isolate_network, "filter");
        cfg.filter.clarity_threshold =
            static_cast<int>(int_or(f, "clarity_threshold", cfg.filter.clarity_threshold, "filter"));
        if (cfg.filter.clarity_threshold < 0 || cfg.filter.clarity_threshold > 10)
            throw ConfigInvalid("filter.clarity_threshold", "must be within [0, 10]");
        cfg.clarity_judge = str_or(f, "clarity_judge", cfg.clarity_judge, "filter");
        if (cfg.clarity_judge != "none" && cfg.clarity_judge != "gateway")
            throw ConfigInvalid("filter.clarity_judge", "must be \"none\" or \"gateway\"");
    }

    {
        const auto& d = section(j, "dedup", "");
        check_known(d, "dedup", {"enabled", "ngram", "jaccard_threshold", "max_posting"});
        cfg.dedup_enabled = bool_or(d, "enabled", cfg.dedup_enabled, "dedup");
        cfg.dedup.ngram = static_cast<int>(int_or(d, "ngram", cfg.dedup.ngram, "dedup"));
        require_positive(cfg.dedup.ngram, "dedup.ngram");
        cfg.dedup.jaccard_threshold =
            num_or(d, "jaccard_threshold", cfg.dedup.jaccard_threshold, "dedup");
        require_unit(cfg.dedup.jaccard_threshold, "dedup.jaccard_threshold");
        cfg.dedup.max_posting =
            static_cast<size_t>(int_or(d, "max_posting", static_cast<long>(cfg.dedup.max_posting),
                                       "dedup"));
        require_positive(static_cast<double>(cfg.dedup.max_posting), "dedup.max_posting");
    }

    {
        const auto& d = section(j, "decontam", "");
        check_known(d, "decontam",
                    {"references", "jaccard_ngram", "index_ngram", "jaccard_threshold",
                     "ast_threshold", "cosine_threshold", "max_posting", "embedder_dim"});
        cfg.references_path = resolve(base, str_or(d, "references", "", "decontam"));
        cfg.decontam.jaccard_ngram =
            static_cast<int>(int_or(d, "jaccard_ngram", cfg.decontam.jaccard_ngram, "decontam"));
        require_positive(cfg.decontam.jaccard_ngram, "decontam.jaccard_ngram");
        cfg.decontam.index_ngram =
            static_cast<int>(int_or(d, "index_ngram", cfg.decontam.index_ngram, "decontam"));
        require_positive(cfg.decontam.index_ngram, "decontam.index_ngram");
        cfg.decontam.jaccard_threshold =
            num_or(d, "jaccard_threshold", cfg.decontam.jaccard_threshold, "decontam");
        require_unit(cfg.decontam.jaccard_threshold, "decontam.jaccard_threshold");
        cfg.decontam.ast_threshold =
            num_or(d, "ast_threshold", cfg.decontam.ast_threshold, "decontam");
        require_unit(cfg.decontam.ast_threshold, "decontam.ast_threshold");
        cfg.decontam.cosine_threshold =
            num_or(d, "cosine_threshold", cfg.decontam.cosine_threshold, "decontam");
        require_unit(cfg.decontam.cosine_threshold, "decontam.cosine_threshold");
        cfg.decontam.max_posting = static_cast<size_t>(
            int_or(d, "max_posting", static_cast<long>(cfg.decontam.max_posting), "decontam"));
        require_positive(static_cast<double>(cfg.decontam.max_posting), "decontam.max_posting");
        cfg.embedder_dim = static_cast<int>(int_or(d, "embedder_dim", 0, "decontam"));
        require_non_negative(cfg.embedder_dim, "decontam.embedder_dim");
    }

    {
        const auto& a = section(j, "alchemist", "");
        check_known(a, "alchemist", {"ratio", "strategy", "per_source", "max_retries", "max_words"});
        cfg.alchemize.ratio = num_or(a, "ratio", cfg.alchemize.ratio, "alchemist");
        require_unit(cfg.alchemize.ratio, "alchemist.ratio");
        cfg.alchemize.strategy = str_or(a, "strategy", cfg.alchemize.strategy, "alchemist");
        if (cfg.alchemize.strategy != "augment" && cfg.alchemize.strategy != "replace")
            throw ConfigInvalid("alchemist.strategy", "must be \"augment\" or \"replace\"");
        cfg.alchemize.per_source = bool_or(a, "per_source", cfg.alchemize.per_source, "alchemist");
        cfg.alchemize.max_retries =
            static_cast<int>(int_or(a, "max_retries", cfg.alchemize.max_retries, "alchemist"));
        require_non_negative(cfg.alchemize.max_retries, "alchemist.max_retries");
        cfg.alchemize.max_words =
            static_cast<int>(int_or(a, "max_words", cfg.alchemize.max_words, "alchemist"));
        require_positive(cfg.alchemize.max_words, "alchemist.max_words");
    }

    {
        const auto& t = section(j, "tasks", "");
        check_known(t, "tasks", {"evolution_count", "filtering_limit", "review_count", "id_prefix"});
        cfg.synth.evolution_count = int_or(t, "evolution_count", cfg.synth.evolution_count, "tasks");
        require_non_negative(static_cast<double>(cfg.synth.evolution_count),
                             "tasks.evolution_count");
        cfg.synth.filtering_limit = int_or(t, "filtering_limit", cfg.synth.filtering_limit, "tasks");
        if (cfg.synth.filtering_limit < -1)
            throw ConfigInvalid("tasks.filtering_limit", "must be >= -1 (-1 means unlimited)");
        cfg.synth.review_count = int_or(t, "review_count", cfg.synth.review_count, "tasks");
        require_non_negative(static_cast<double>(cfg.synth.review_count), "tasks.review_count");
        cfg.synth.id_prefix = str_or(t, "id_prefix", cfg.synth.id_prefix, "tasks");
        if (cfg.synth.id_prefix.empty()) throw ConfigInvalid("tasks.id_prefix", "required");
    }

    {
        const auto& p = section(j, "provider", "");
        check_known(p, "provider", {"kind", "endpoint", "model"});
        cfg.provider.kind = str_or(p, "kind", cfg.provider.kind, "provider");
        if (cfg.provider.kind != "mock" && cfg.provider.kind != "http")
            throw ConfigInvalid("provider.kind", "must be \"mock\" or \"http\"");
        cfg.provider.endpoint = str_or(p, "endpoint", "", "provider");
        cfg.provider.model = str_or(p, "model", "", "provider");
        if (cfg.provider.kind == "http" && cfg.provider.endpoint.empty())
            throw ConfigInvalid("provider.endpoint", "required for the http provider");
    }

    {
        const auto& g = section(j, "gateway", "");
        check_known(g, "gateway",
                    {"cache_dir", "max_retries", "backoff_initial_seconds", "backoff_max_seconds",
                     "request_budget", "max_in_flight"});
        cfg.gateway.cache_dir = resolve(base, str_or(g, "cache_dir", "", "gateway"));
        cfg.gateway.max_retries =
            static_cast<int>(int_or(g, "max_retries", cfg.gateway.max_retries, "gateway"));
        require_non_negative(cfg.gateway.max_retries, "gateway.max_retries");
        cfg.gateway.backoff_initial_seconds = num_or(g, "backoff_initial_seconds",
                                                     cfg.gateway.backoff_initial_seconds, "gateway");
        require_non_negative(cfg.gateway.backoff_initial_seconds,
                             "gateway.backoff_initial_seconds");
        cfg.gateway.backoff_max_seconds =
            num_or(g, "backoff_max_seconds", cfg.gateway.backoff_max_seconds, "gateway");
        if (cfg.gateway.backoff_max_seconds < cfg.gateway.backoff_initial_seconds)
            throw ConfigInvalid("gateway.backoff_max_seconds",
                                "must be >= backoff_initial_seconds");
        cfg.gateway.request_budget =
            int_or(g, "request_budget", cfg.gateway.request_budget, "gateway");
        if (cfg.gateway.request_budget < -1)
            throw ConfigInvalid("gateway.request_budget", "must be >= -1 (-1 means unlimited)");
        cfg.gateway.max_in_flight =
            static_cast<int>(int_or(g, "max_in_flight", cfg.gateway.max_in_flight, "gateway"));
        require_positive(cfg.gateway.max_in_flight, "gateway.max_in_flight");
    }

    {
        const auto& m = section(j, "mix", "");
        check_known(m, "mix", {"weights", "shuffle"});
        const auto& w = section(m, "weights", "mix");
        check_known(w, "mix.weights", {"main", "evolved", "tasks"});
        cfg.mix_weights.main = num_or(w, "main", cfg.mix_weights.main, "mix.weights");
        require_non_negative(cfg.mix_weights.main, "mix.weights.main");
        cfg.mix_weights.evolved = num_or(w, "evolved", cfg.mix_weights.evolved, "mix.weights");
        require_non_negative(cfg.mix_weights.evolved, "mix.weights.evolved");
        cfg.mix_weights.tasks = num_or(w, "tasks", cfg.mix_weights.tasks, "mix.weights");
        require_non_negative(cfg.mix_weights.tasks, "mix.weights.tasks");
        cfg.mix_weights.shuffle = bool_or(m, "shuffle", cfg.mix_weights.shuffle, "mix");
    }

    {
        const auto& a = section(j, "analysis", "");
        check_known(a, "analysis", {"cpd_mode", "cpd_limit", "failure_log"});
        cfg.analysis.cpd_mode = str_or(a, "cpd_mode", cfg.analysis.cpd_mode, "analysis");
        if (cfg.analysis.cpd_mode != "joint" && cfg.analysis.cpd_mode != "conditional")
            throw ConfigInvalid("analysis.cpd_mode", "must be \"joint\" or \"conditional\"");
        cfg.analysis.cpd_limit = int_or(a, "cpd_limit", cfg.analysis.cpd_limit, "analysis");
        require_non_negative(static_cast<double>(cfg.analysis.cpd_limit), "analysis.cpd_limit");
        cfg.analysis.failure_log = resolve(base, str_or(a, "failure_log", "", "analysis"));
    }

    return cfg;
}

bool conservation_holds(const StageCounts& c) {
    return c.ingested == c.kept + c.removed_by_clean + c.recycled_by_clean + c.deduped_away +
                             c.removed_by_decontam;
}

Corpus mix(const std::vector<std::pair<Corpus, double>>& datasets, uint64_t seed, bool shuffle) {
    if (datasets.empty()) throw EmptyMix();
    for (const auto& [corpus, weight] : datasets) {
        (void)corpus;
        if (weight < 0.0) throw PipelineError("mix weight must be non-negative");
    }

    std::mt19937_64 rng(seed);
    Corpus out;
    for (const auto& [corpus, weight] : datasets) {
        if (corpus.empty() || weight == 0.0) continue;
        if (weight >= 1.0) {
            out.insert(out.end(), corpus.begin(), corpus.end());
            continue;
        }
        size_t keep = static_cast<size_t>(
            std::llround(weight * static_cast<double>(corpus.size())));
        for (size_t i : pick_indices(corpus.size(), keep, rng)) out.push_back(corpus[i]);
    }
    if (out.empty()) throw EmptyMix();

    if (shuffle)
        for (size_t i = out.size(); i > 1; --i)
            std::swap(out[i - 1], out[static_cast<size_t>(bounded_rand(rng, i))]);
    return out;
}

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> kStages = {"ingest", "clean",  "decontam", "alchemize",
                                                     "synth",  "mix",    "stats"};
    return kStages;
}

std::unique_ptr<Gateway> make_gateway(const PipelineConfig& cfg) {
    std::shared_ptr<Provider> provider;
    if (cfg.dry_run || cfg.provider.kind == "mock") {
        provider = std::make_shared<MockProvider>();
    } else {
        HttpProviderConfig http;
        http.endpoint = cfg.provider.endpoint;
        http.model = cfg.provider.model;
        provider = std::make_shared<HttpProvider>(http);
    }
    return std::make_unique<Gateway>(std::move(provider), cfg.gateway);
}

void run_stage(const PipelineConfig& cfg, const std::string& stage) {
    const auto& stages = pipeline_stages();
    if (std::find(stages.begin(), stages.end(), stage) == stages.end())
        throw PipelineError("unknown stage: " + stage);

    fs::create_directories(ckpt_dir(cfg));
    StageState state = load_state(cfg);
    try {
        if (stage == "ingest")
            stage_ingest(cfg, state);
        else if (stage == "clean")
            stage_clean(cfg, state);
        else if (stage == "decontam")
            stage_decontam(cfg, state);
        else if (stage == "alchemize")
            stage_alchemize(cfg, state);
        else if (stage == "synth")
            stage_synth(cfg, state);
        else if (stage == "mix")
            stage_mix(cfg, state);
        else
            stage_stats(cfg, state);
    } catch (const StageFailure&) {
        throw;
    } catch (const std::exception& e) {
        throw StageFailure(stage, e.what());
    }
    state.stamps[stage] = stage + "/1";
    save_state(cfg, state);
}

MixManifest run_pipeline(const PipelineConfig& cfg, const std::string& from_stage) {
    const auto& stages = pipeline_stages();
    auto it = std::find(stages.begin(), stages.end(), from_stage);
    if (it == stages.end()) throw PipelineError("unknown stage: " + from_stage);
    for (; it != stages.end(); ++it) run_stage(cfg, *it);

    std::ifstream in(cfg.output_dir / "manifest.json");
    if (!in) throw StageFailure("stats", "manifest.json missing after the stats stage");
    std::stringstream ss;
    ss << in.rdbuf();
    return manifest_from_json(ss.str());
}

std::string manifest_to_json(const MixManifest& m) {
    ordered_json j;
    j["seed"] = m.seed;
    j["tokenizer"] = m.tokenizer;
    j["counts"] = counts_to_json(m.counts);
    ordered_json per_source = ordered_json::object();
    for (const auto& [source, count] : m.per_source_counts) {
        per_source[source]["samples"] = count;
        auto tokens = m.per_source_tokens.find(source);
        per_source[source]["tokens"] = tokens == m.per_source_tokens.end() ? 0 : tokens->second;
    }
    j["per_source"] = per_source;
    j["token_total"] = m.token_total;
    j["fractions"]["customized"] = m.fraction_customized;
    j["fractions"]["task"] = m.fraction_task;
    j["fractions"]["customized_plus_task"] = m.fraction_customized_plus_task;
    j["fractions"]["per_source"] = m.per_source_fractions;
    j["conservation_holds"] = m.conservation_holds;
    j["stages"] = m.stage_stamps;
    j["config"] = m.config_snapshot.empty() ? ordered_json::object()
                                            : ordered_json::parse(m.config_snapshot);
    return j.dump(2);
}

MixManifest manifest_from_json(const std::string& text) {
    auto j = ordered_json::parse(text);
    MixManifest m;
    m.seed = j.value("seed", uint64_t{0});
    m.tokenizer = j.value("tokenizer", "");
    m.counts = counts_from_json(j.value("counts", ordered_json::object()));
    const ordered_json per_source = j.value("per_source", ordered_json::object());
    for (const auto& [source, entry] : per_source.items()) {
        m.per_source_counts[source] = entry.value("samples", 0L);
        m.per_source_tokens[source] = entry.value("tokens", 0L);
    }
    m.token_total = j.value("token_total", 0L);
    const ordered_json fr = j.value("fractions", ordered_json::object());
    m.fraction_customized = fr.value("customized", 0.0);
    m.fraction_task = fr.value("task", 0.0);
    m.fraction_customized_plus_task = fr.value("customized_plus_task", 0.0);
    const ordered_json per_source_fr = fr.value("per_source", ordered_json::object());
    for (const auto& [source, v] : per_source_fr.items())
        m.per_source_fractions[source] = v.get<double>();
    m.conservation_holds = j.value("conservation_holds", false);
    const ordered_json stamps = j.value("stages", ordered_json::object());
    for (const auto& [stage, stamp] : stamps.items())
        m.stage_stamps[stage] = stamp.get<std::string>();
    if (j.contains("config")) m.config_snapshot = j.at("config").dump(2);
    return m;
}

}  // namespace alchemist
