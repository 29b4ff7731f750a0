#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "alchemist/sample.hpp"

namespace alchemist {

struct SkipInfo {
    long line = 0;        // 1-based line number in the input file
    std::string reason;
};

struct LoadStats {
    long loaded = 0;
    std::vector<SkipInfo> skips;
};

/// Input formats accepted by load_dataset.
///   jsonl-instruction-output : {"instruction": ..., "output": ..., "id"?, "meta"?}
///   jsonl-messages           : {"messages": [{"role","content"}...]} where the last
///                              user turn is the instruction and the last assistant
///                              turn is the response
inline constexpr const char* kFormatInstructionOutput = "jsonl-instruction-output";
inline constexpr const char* kFormatMessages = "jsonl-messages";
inline constexpr const char* kFormatCanonical = "jsonl-canonical";

/// Streams samples out of `path` into `sink`, one per valid input record.
/// Malformed records are skipped and counted; bounded memory (line at a time).
/// Throws UnknownFormat for format ids outside the table above.
LoadStats load_dataset_stream(const std::filesystem::path& path, const std::string& source,
                              const std::string& format,
                              const std::function<void(Sample&&)>& sink,
                              const std::string& tokenizer_id = kDefaultTokenizer);

/// Convenience wrapper collecting the stream into a Corpus.
std::pair<Corpus, LoadStats> load_dataset(const std::filesystem::path& path,
                                          const std::string& source, const std::string& format,
                                          const std::string& tokenizer_id = kDefaultTokenizer);

/// Canonical on-disk record: JSONL with keys id, source, instruction, response,
/// alchemist_prompt (nullable), languages, token_estimate, meta. Code blocks are
/// derived and therefore not serialized.
std::string sample_to_canonical_json(const Sample& sample);
Sample sample_from_canonical_json(const std::string& line,
                                  const std::string& tokenizer_id = kDefaultTokenizer);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path,
                   const std::string& tokenizer_id = kDefaultTokenizer);

/// Trainer exports. Both are common fine-tuning inputs; the chat-messages form
/// wraps each record as user/assistant turns (plus a system turn when the
/// sample carries meta["system"]).
void write_instruction_output_jsonl(const Corpus& corpus, const std::filesystem::path& path);
void write_chat_messages_jsonl(const Corpus& corpus, const std::filesystem::path& path);

/// Write-temp-then-rename. All stage checkpoints go through this.
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace alchemist
