#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace alchemist {

/// One fenced code region inside a response.
struct CodeBlock {
    std::string language;   // fence tag if present, else detected, else "unknown"
    std::string code;       // text between the fences, without the fence lines
    long line_count = 0;    // newline-delimited line count of `code`
    size_t span_begin = 0;  // character offsets of the whole fenced region in the response
    size_t span_end = 0;
};

/// One instruction/response record. The unit flowing through every stage.
///
/// `code_blocks` and `languages` are derived from `response` and cached at
/// construction; `meta` is round-tripped untouched by every stage.
struct Sample {
    std::string id;
    std::string source;
    std::string instruction;
    std::string response;
    std::optional<std::string> alchemist_prompt;
    std::vector<CodeBlock> code_blocks;
    std::set<std::string> languages;
    long token_estimate = 0;
    std::map<std::string, std::string> meta;
};

using Corpus = std::vector<Sample>;

struct ExtractedBlocks {
    std::vector<CodeBlock> blocks;
    bool unterminated_fence = false;
};

/// Returns all triple-backtick fenced blocks in order of appearance.
/// An unterminated fence yields a block extending to end-of-text; the helper
/// overload reports that condition so callers can flag it in sample meta.
std::vector<CodeBlock> extract_code_blocks(const std::string& text);
ExtractedBlocks extract_code_blocks_ex(const std::string& text);

/// Fence tag if present (normalized), otherwise a keyword/syntax heuristic,
/// otherwise "unknown".
std::string detect_language(const CodeBlock& block);

/// Maps fence-tag aliases onto canonical tags ("py" -> "python", "c++" -> "cpp", ...).
std::string normalize_language_tag(const std::string& tag);

/// Human-readable name for a language tag ("cpp" -> "C++").
std::string language_display_name(const std::string& tag);

inline constexpr const char* kDefaultTokenizer = "whitespace-x1.3";

/// Deterministic token-count estimate for `text` under the named scheme.
/// The default scheme is whitespace-token count times 1.3, rounded.
/// Throws TokenizerUnavailable for unregistered ids.
long estimate_tokens(const std::string& text, const std::string& tokenizer_id = kDefaultTokenizer);

/// Registers an external counting scheme under `id` (pluggable tokenizers).
void register_tokenizer(const std::string& id, std::function<long(const std::string&)> count);

/// Builds a Sample and populates the derived fields (code blocks, languages,
/// token estimate). Sets meta["fence_warning"] when a fence is unterminated.
Sample make_sample(std::string id, std::string source, std::string instruction,
                   std::string response, const std::string& tokenizer_id = kDefaultTokenizer);

/// Recomputes the derived fields after a response/instruction edit.
void refresh_derived_fields(Sample& sample, const std::string& tokenizer_id = kDefaultTokenizer);

}  // namespace alchemist
