#include "alchemist/prompts.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "alchemist/corpus_io.hpp"
#include "alchemist/errors.hpp"
#include "alchemist/hash.hpp"

namespace alchemist {

namespace {

// unbiased bound via rejection sampling; mt19937_64 output is standard-defined
// so selections replay identically everywhere
uint64_t bounded_rand(std::mt19937_64& rng, uint64_t bound) {
    if (bound == 0) return 0;
    uint64_t limit = std::numeric_limits<uint64_t>::max() -
                     std::numeric_limits<uint64_t>::max() % bound;
    uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

long word_count(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    long n = 0;
    while (in >> tok) ++n;
    return n;
}

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool mentions_language(const std::string& prompt_text, const std::string& language) {
    if (language == "code") return true;  // nothing recognizable to demand
    std::string haystack = lowercase(prompt_text);
    if (haystack.find(lowercase(language_display_name(language))) != std::string::npos)
        return true;
    return haystack.find(lowercase(language)) != std::string::npos;
}

std::string expand(std::string text, const std::map<std::string, std::string>& slots) {
    for (const auto& [slot, value] : slots) {
        std::string needle = "{" + slot + "}";
        size_t pos;
        while ((pos = text.find(needle)) != std::string::npos)
            text.replace(pos, needle.size(), value);
    }
    return text;
}

std::vector<std::string> validate_prompt(const std::string& prompt_text,
                                         const std::string& language, int max_words) {
    std::vector<std::string> reasons;
    long words = word_count(prompt_text);
    if (words == 0) reasons.push_back("empty prompt");
    if (words > max_words)
        reasons.push_back("word count " + std::to_string(words) + " exceeds " +
                          std::to_string(max_words));
    if (!mentions_language(prompt_text, language)) reasons.push_back("language not mentioned");
    return reasons;
}

std::set<std::string> select_from_indices(const Corpus& corpus, std::vector<size_t> indices,
                                          double ratio, std::mt19937_64& rng) {
    size_t k = static_cast<size_t>(
        std::lround(ratio * static_cast<double>(indices.size())));
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + static_cast<size_t>(bounded_rand(rng, indices.size() - i));
        std::swap(indices[i], indices[j]);
    }
    std::set<std::string> ids;
    for (size_t i = 0; i < k; ++i) ids.insert(corpus[indices[i]].id);
    return ids;
}

}  // namespace

PromptTemplate default_prompt_template() {
    PromptTemplate tpl;
    tpl.system =
        "You are an Alchemist: given an instruction/response pair, you write a short "
        "customization prefix for the instruction that describes the response in hindsight.";
    tpl.body =
        "Write one instruction prefix of at most {max_words} words. Name the response's "
        "programming language and one key characteristic (algorithm concept, style, or "
        "structure). Do not reveal the solution.\n"
        "Dominant language: {language}\n"
        "Instruction:\n{instruction}\n---\n"
        "Response:\n{response}\n---";
    return tpl;
}

std::string fuse_instruction(const std::string& prompt_text, const std::string& instruction) {
    return prompt_text + "\n\n" + instruction;
}

std::string dominant_language(const Sample& sample) {
    std::map<std::string, size_t> chars;
    for (const auto& block : sample.code_blocks)
        if (!block.language.empty() && block.language != "unknown")
            chars[block.language] += block.code.size();
    if (chars.empty()) return "code";
    auto best = chars.begin();
    for (auto it = chars.begin(); it != chars.end(); ++it)
        if (it->second > best->second) best = it;
    return best->first;
}

std::set<std::string> select_candidates(const Corpus& corpus, double ratio, uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw PipelineError("selection ratio must be in [0, 1]");
    std::vector<size_t> indices(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) indices[i] = i;
    std::mt19937_64 rng(seed);
    return select_from_indices(corpus, std::move(indices), ratio, rng);
}

std::set<std::string> select_candidates_per_source(const Corpus& corpus, double ratio,
                                                   uint64_t seed) {
    if (ratio < 0.0 || ratio > 1.0) throw PipelineError("selection ratio must be in [0, 1]");
    std::map<std::string, std::vector<size_t>> by_source;
    for (size_t i = 0; i < corpus.size(); ++i) by_source[corpus[i].source].push_back(i);
    std::set<std::string> ids;
    for (auto& [source, indices] : by_source) {
        std::mt19937_64 rng(seed ^ fnv1a64(source));
        auto picked = select_from_indices(corpus, std::move(indices), ratio, rng);
        ids.insert(picked.begin(), picked.end());
    }
    return ids;
}

PromptRecord generate_alchemist_prompt(const Sample& sample, Gateway& gateway,
                                       const PromptTemplate& tpl, const std::string& strategy) {
    if (sample.response.empty()) throw PipelineError("cannot customize an empty response");
    PromptRecord record;
    record.sample_id = sample.id;
    record.strategy = strategy;

    const std::string language = dominant_language(sample);
    std::map<std::string, std::string> slots = {
        {"instruction", sample.instruction},
        {"response", sample.response},
        {"language", language == "code" ? "code" : language_display_name(language)},
        {"max_words", std::to_string(tpl.max_words)},
    };
    std::string base_body = expand(tpl.body, slots);

    for (int attempt = 0; attempt <= tpl.max_retries; ++attempt) {
        ChatRequest request;
        request.system = tpl.system;
        request.tag = "alchemist";
        std::string body = base_body;
        if (attempt > 0 && !record.validation_reasons.empty())
            body += "\nPrevious draft rejected (" + record.validation_reasons.back() +
                    "). Write a new prefix of at most " + std::to_string(tpl.max_words) +
                    " words that names " + slots["language"] + ".";
        request.turns.push_back({"user", body});

        std::string text = gateway.complete(request);
        auto reasons = validate_prompt(text, language, tpl.max_words);
        if (reasons.empty()) {
            record.prompt_text = text;
            record.customized_instruction = fuse_instruction(text, sample.instruction);
            record.validation_pass = true;
            record.retries = attempt;
            return record;
        }
        for (auto& r : reasons) record.validation_reasons.push_back(std::move(r));
        record.retries = attempt;
    }
    record.validation_pass = false;
    record.validation_reasons.push_back(
        "validation exhausted after " + std::to_string(tpl.max_retries + 1) + " attempts");
    return record;
}

Corpus apply_customization(const Corpus& corpus, const std::vector<PromptRecord>& records,
                           const std::string& strategy) {
    if (strategy != "augment" && strategy != "replace")
        throw PipelineError("unknown customization strategy: " + strategy);
    std::map<std::string, size_t> index;
    for (size_t i = 0; i < corpus.size(); ++i) index[corpus[i].id] = i;

    Corpus out = corpus;
    for (const auto& record : records) {
        if (!record.validation_pass) continue;
        auto it = index.find(record.sample_id);
        if (it == index.end()) throw UnknownSampleId(record.sample_id);
        const Sample& original = corpus[it->second];

        Sample customized = original;
        customized.instruction = fuse_instruction(record.prompt_text, original.instruction);
        customized.alchemist_prompt = record.prompt_text;
        if (strategy == "augment") {
            customized.id = original.id + "::alch";
            customized.source = "alchemist";
            refresh_derived_fields(customized);
            out.push_back(std::move(customized));
        } else {
            refresh_derived_fields(customized);
            out[it->second] = std::move(customized);
        }
    }
    return out;
}

void save_prompt_records(const std::vector<PromptRecord>& records,
                         const std::filesystem::path& path) {
    std::string payload;
    for (const auto& r : records) {
        nlohmann::ordered_json j;
        j["sample_id"] = r.sample_id;
        j["prompt_text"] = r.prompt_text;
        j["customized_instruction"] = r.customized_instruction;
        j["strategy"] = r.strategy;
        j["validation"] = r.validation_pass ? "pass" : "fail";
        j["validation_reasons"] = r.validation_reasons;
        j["retries"] = r.retries;
        payload += j.dump();
        payload += '\n';
    }
    atomic_write_file(path, payload);
}

std::vector<PromptRecord> load_prompt_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open prompt records: " + path.string());
    std::vector<PromptRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        PromptRecord r;
        r.sample_id = j.at("sample_id").get<std::string>();
        r.prompt_text = j.at("prompt_text").get<std::string>();
        r.customized_instruction = j.value("customized_instruction", "");
        r.strategy = j.value("strategy", "augment");
        r.validation_pass = j.at("validation").get<std::string>() == "pass";
        if (j.contains("validation_reasons"))
            for (const auto& reason : j["validation_reasons"])
                r.validation_reasons.push_back(reason.get<std::string>());
        r.retries = j.value("retries", 0);
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace alchemist
