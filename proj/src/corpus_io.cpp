#include "alchemist/corpus_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "alchemist/errors.hpp"

namespace alchemist {

using nlohmann::json;

namespace {

std::string meta_value_to_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();  // non-string extras are preserved as their JSON text
}

std::string derive_id(const std::filesystem::path& path, const std::string& source, long line) {
    std::ostringstream os;
    os << source << "-" << path.stem().string() << "-" << line;
    return os.str();
}

Sample sample_from_instruction_output(const json& rec, const std::filesystem::path& path,
                                      const std::string& source, long line,
                                      const std::string& tokenizer_id) {
    if (!rec.contains("instruction") || !rec["instruction"].is_string())
        throw std::runtime_error("missing string field 'instruction'");
    if (!rec.contains("output") || !rec["output"].is_string())
        throw std::runtime_error("missing string field 'output'");
    std::string id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>()
                                                                 : derive_id(path, source, line);
    Sample s = make_sample(id, source, rec["instruction"].get<std::string>(),
                           rec["output"].get<std::string>(), tokenizer_id);
    if (rec.contains("meta") && rec["meta"].is_object()) {
        for (auto& [k, v] : rec["meta"].items()) s.meta[k] = meta_value_to_string(v);
    }
    for (auto& [k, v] : rec.items()) {
        if (k == "instruction" || k == "output" || k == "id" || k == "meta") continue;
        s.meta[k] = meta_value_to_string(v);
    }
    return s;
}

Sample sample_from_messages(const json& rec, const std::filesystem::path& path,
                            const std::string& source, long line,
                            const std::string& tokenizer_id) {
    if (!rec.contains("messages") || !rec["messages"].is_array())
        throw std::runtime_error("missing array field 'messages'");
    std::string instruction, response, system;
    for (const auto& turn : rec["messages"]) {
        if (!turn.is_object() || !turn.contains("role") || !turn.contains("content") ||
            !turn["role"].is_string() || !turn["content"].is_string())
            throw std::runtime_error("malformed message turn");
        const std::string role = turn["role"].get<std::string>();
        const std::string content = turn["content"].get<std::string>();
        if (role == "user") instruction = content;        // last user turn wins
        else if (role == "assistant") response = content; // last assistant turn wins
        else if (role == "system") system = content;
    }
    if (instruction.empty() && response.empty())
        throw std::runtime_error("no user/assistant turns");
    std::string id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>()
                                                                 : derive_id(path, source, line);
    Sample s = make_sample(id, source, instruction, response, tokenizer_id);
    if (!system.empty()) s.meta["system"] = system;
    if (rec.contains("meta") && rec["meta"].is_object()) {
        for (auto& [k, v] : rec["meta"].items()) s.meta[k] = meta_value_to_string(v);
    }
    return s;
}

}  // namespace

LoadStats load_dataset_stream(const std::filesystem::path& path, const std::string& source,
                              const std::string& format,
                              const std::function<void(Sample&&)>& sink,
                              const std::string& tokenizer_id) {
    enum class Fmt { InstructionOutput, Messages, Canonical };
    Fmt fmt;
    if (format == kFormatInstructionOutput) fmt = Fmt::InstructionOutput;
    else if (format == kFormatMessages) fmt = Fmt::Messages;
    else if (format == kFormatCanonical) fmt = Fmt::Canonical;
    else throw UnknownFormat(format);

    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open dataset file: " + path.string());

    LoadStats stats;
    std::string raw;
    long line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;  // blank line
        try {
            if (fmt == Fmt::Canonical) {
                Sample s = sample_from_canonical_json(raw, tokenizer_id);
                if (s.source.empty()) s.source = source;
                sink(std::move(s));
            } else {
                json rec = json::parse(raw);
                if (!rec.is_object()) throw std::runtime_error("record is not a JSON object");
                Sample s = fmt == Fmt::InstructionOutput
                               ? sample_from_instruction_output(rec, path, source, line_no,
                                                                tokenizer_id)
                               : sample_from_messages(rec, path, source, line_no, tokenizer_id);
                sink(std::move(s));
            }
            ++stats.loaded;
        } catch (const std::exception& e) {
            stats.skips.push_back({line_no, e.what()});
        }
    }
    return stats;
}

std::pair<Corpus, LoadStats> load_dataset(const std::filesystem::path& path,
                                          const std::string& source, const std::string& format,
                                          const std::string& tokenizer_id) {
    Corpus corpus;
    LoadStats stats = load_dataset_stream(
        path, source, format, [&](Sample&& s) { corpus.push_back(std::move(s)); }, tokenizer_id);
    return {std::move(corpus), std::move(stats)};
}

std::string sample_to_canonical_json(const Sample& sample) {
    json rec;
    rec["id"] = sample.id;
    rec["source"] = sample.source;
    rec["instruction"] = sample.instruction;
    rec["response"] = sample.response;
    rec["alchemist_prompt"] =
        sample.alchemist_prompt ? json(*sample.alchemist_prompt) : json(nullptr);
    rec["languages"] = json::array();
    for (const auto& l : sample.languages) rec["languages"].push_back(l);
    rec["token_estimate"] = sample.token_estimate;
    rec["meta"] = json::object();
    for (const auto& [k, v] : sample.meta) rec["meta"][k] = v;
    return rec.dump();
}

Sample sample_from_canonical_json(const std::string& line, const std::string& tokenizer_id) {
    json rec = json::parse(line);
    if (!rec.is_object()) throw std::runtime_error("record is not a JSON object");
    for (const char* key : {"id", "source", "instruction", "response"}) {
        if (!rec.contains(key) || !rec[key].is_string())
            throw std::runtime_error(std::string("missing string field '") + key + "'");
    }
    Sample s = make_sample(rec["id"].get<std::string>(), rec["source"].get<std::string>(),
                           rec["instruction"].get<std::string>(),
                           rec["response"].get<std::string>(), tokenizer_id);
    if (rec.contains("alchemist_prompt") && rec["alchemist_prompt"].is_string())
        s.alchemist_prompt = rec["alchemist_prompt"].get<std::string>();
    if (rec.contains("meta") && rec["meta"].is_object()) {
        for (auto& [k, v] : rec["meta"].items()) s.meta[k] = meta_value_to_string(v);
    }
    return s;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    std::string buf;
    for (const auto& s : corpus) {
        buf += sample_to_canonical_json(s);
        buf += '\n';
    }
    atomic_write_file(path, buf);
}

Corpus load_corpus(const std::filesystem::path& path, const std::string& tokenizer_id) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open corpus file: " + path.string());
    Corpus corpus;
    std::string raw;
    while (std::getline(in, raw)) {
        if (raw.empty()) continue;
        corpus.push_back(sample_from_canonical_json(raw, tokenizer_id));
    }
    return corpus;
}

void write_instruction_output_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
    std::string buf;
    for (const auto& s : corpus) {
        json rec;
        rec["id"] = s.id;
        rec["instruction"] = s.instruction;
        rec["output"] = s.response;
        buf += rec.dump();
        buf += '\n';
    }
    atomic_write_file(path, buf);
}

void write_chat_messages_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
    std::string buf;
    for (const auto& s : corpus) {
        json msgs = json::array();
        auto sys = s.meta.find("system");
        if (sys != s.meta.end())
            msgs.push_back({{"role", "system"}, {"content", sys->second}});
        msgs.push_back({{"role", "user"}, {"content", s.instruction}});
        msgs.push_back({{"role", "assistant"}, {"content", s.response}});
        json rec;
        rec["id"] = s.id;
        rec["messages"] = msgs;
        buf += rec.dump();
        buf += '\n';
    }
    atomic_write_file(path, buf);
}

void atomic_write_file(const std::filesystem::path& path, const std::string& contents) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw PipelineError("cannot write file: " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw PipelineError("short write: " + tmp.string());
    }
    fs::rename(tmp, path);
}

}  // namespace alchemist
