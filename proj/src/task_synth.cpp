#include "alchemist/task_synth.hpp"

#include <algorithm>
#include <json.hpp>
#include <regex>

#include "alchemist/corpus_io.hpp"
#include "alchemist/errors.hpp"

namespace alchemist {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

struct LabelSpan {
    size_t label_start = std::string::npos;  // where the label word begins
    size_t value_start = std::string::npos;  // right after the colon
};

// case-insensitive search for "<label>:"
LabelSpan find_label(const std::string& text, const std::string& label, size_t from = 0) {
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return s;
    };
    std::string haystack = lower(text);
    std::string needle = lower(label);
    size_t pos = haystack.find(needle, from);
    while (pos != std::string::npos) {
        size_t after = pos + needle.size();
        while (after < haystack.size() && (haystack[after] == ' ' || haystack[after] == '\t'))
            ++after;
        if (after < haystack.size() && haystack[after] == ':') return {pos, after + 1};
        pos = haystack.find(needle, pos + 1);
    }
    return {};
}

bool parse_score(const std::string& text, const std::string& label, int& out) {
    size_t pos = find_label(text, label).value_start;
    if (pos == std::string::npos) return false;
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    size_t end = pos;
    while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos) return false;
    try {
        out = std::stoi(text.substr(pos, end - pos));
    } catch (const std::exception&) {
        return false;
    }
    return out >= 0 && out <= 10;
}

bool parse_review_text(const std::string& text, ReviewRecord& review) {
    if (!parse_score(text, "correctness", review.correctness)) return false;
    if (!parse_score(text, "clarity", review.clarity)) return false;

    size_t sug = find_label(text, "suggestions").value_start;
    if (sug == std::string::npos) return false;
    LabelSpan refined = find_label(text, "refined code", sug);
    if (refined.value_start == std::string::npos || refined.label_start < sug) return false;
    review.suggestions = trim(text.substr(sug, refined.label_start - sug));
    while (!review.suggestions.empty() &&
           (review.suggestions.back() == ',' || review.suggestions.back() == ';'))
        review.suggestions.pop_back();

    std::string refined_raw = trim(text.substr(refined.value_start));
    auto blocks = extract_code_blocks(refined_raw);
    review.refined_code = blocks.empty() ? refined_raw : blocks.front().code;
    if (review.refined_code.empty()) return false;
    return true;
}

std::string evolve_request_body(const std::string& template_text, const std::string& instruction,
                                const std::string& feedback) {
    std::string body = template_text + "\nTask:\n" + instruction + "\n---\nEvolved task:";
    if (!feedback.empty()) body += "\n" + feedback;
    return body;
}

}  // namespace

std::string task_kind_name(TaskKind kind) {
    switch (kind) {
        case TaskKind::InstructionEvolution: return "InstructionEvolution";
        case TaskKind::DataFiltering: return "DataFiltering";
        case TaskKind::CodeReview: return "CodeReview";
    }
    return "InstructionEvolution";
}

bool review_selected(int correctness, int clarity) {
    double avg = (correctness + clarity) / 2.0;
    return avg > 8.0 || avg < 6.0 || std::min(correctness, clarity) <= 4;
}

const std::vector<std::string>& evolution_templates() {
    static const std::vector<std::string> templates = {
        "Rewrite the following task by adding explicit constraints that narrow the space of "
        "valid solutions.",
        "Rewrite the following task to raise its algorithmic complexity, for example by "
        "tightening performance requirements.",
        "Rewrite the following task so it additionally demands a step-by-step explanation of "
        "the approach.",
    };
    return templates;
}

Sample evolve_instruction(const Sample& sample, Gateway& gateway, int template_index,
                          int max_retries) {
    if (sample.instruction.empty()) throw PipelineError("cannot evolve an empty instruction");
    const auto& templates = evolution_templates();
    const std::string& tpl =
        templates[static_cast<size_t>(template_index) % templates.size()];

    std::string evolved_text;
    std::string feedback;
    bool accepted = false;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        ChatRequest request;
        request.tag = "evolve";
        request.turns.push_back({"user", evolve_request_body(tpl, sample.instruction, feedback)});
        evolved_text = trim(gateway.complete(request));
        if (evolved_text.size() > sample.instruction.size() &&
            evolved_text != sample.instruction) {
            accepted = true;
            break;
        }
        feedback = "The previous rewrite was not strictly longer than the task; produce a "
                   "more demanding variant that extends it.";
    }
    if (!accepted)
        throw DegenerateEvolution("no strictly longer rewrite after " +
                                  std::to_string(max_retries + 1) + " attempts for " + sample.id);

    ChatRequest answer;
    answer.tag = "evolve";
    answer.turns.push_back(
        {"user", "Solve the following task. Include code.\nTask:\n" + evolved_text + "\n---"});
    std::string response = gateway.complete(answer);

    Sample evolved = make_sample(sample.id + "::evol", "evolcode", evolved_text, response);
    evolved.meta["evolved_from"] = sample.id;
    evolved.meta["evolution_template"] = std::to_string(
        static_cast<size_t>(template_index) % templates.size());
    return evolved;
}

TaskRecord synth_instruction_evolution_task(const Sample& original, const Sample& evolved) {
    if (original.instruction == evolved.instruction)
        throw DegenerateEvolution("evolved instruction is identical for " + original.id);
    TaskRecord record;
    record.kind = TaskKind::InstructionEvolution;
    record.origin_ids = {original.id, evolved.id};
    record.instruction =
        "Transform the following programming task into a more complex variant, then explain "
        "what the transformation changed.\n\nOriginal task:\n" +
        original.instruction;

    std::string explanation;
    if (evolved.instruction.rfind(original.instruction, 0) == 0) {
        std::string added = trim(evolved.instruction.substr(original.instruction.size()));
        explanation = "It keeps the original wording and appends further requirements: \"" +
                      added + "\"";
    } else {
        explanation =
            "It rephrases the task and adds requirements that the original left open, so a "
            "correct answer must satisfy strictly more conditions.";
    }
    record.response = evolved.instruction + "\n\nWhat changed: " + explanation;
    return record;
}

char data_filter_category(const QualityVerdict& verdict) {
    // removal-grade (a), (b) outrank recycle-grade (c), (d); listing order within grade
    static const std::vector<std::pair<QualityFlag, char>> priority = {
        {QualityFlag::TooShortNoCode, 'a'},
        {QualityFlag::CompileFailure, 'b'},
        {QualityFlag::PoorClarity, 'c'},
        {QualityFlag::NotFunctionForm, 'd'},
    };
    for (const auto& [flag, letter] : priority)
        if (verdict.flags.count(flag)) return letter;
    std::string names;
    for (QualityFlag f : verdict.flags) names += quality_flag_name(f) + " ";
    throw UnmappableFlag("no category for flags: " + (names.empty() ? "(none)" : names));
}

TaskRecord synth_data_filtering_task(const Sample& rejected, const QualityVerdict& verdict) {
    char letter = data_filter_category(verdict);
    static const std::map<char, QualityFlag> back = {
        {'a', QualityFlag::TooShortNoCode},
        {'b', QualityFlag::CompileFailure},
        {'c', QualityFlag::PoorClarity},
        {'d', QualityFlag::NotFunctionForm},
    };
    TaskRecord record;
    record.kind = TaskKind::DataFiltering;
    record.origin_ids = {rejected.id};
    record.instruction =
        "The following instruction/response pair was rejected during dataset cleaning. "
        "Classify it into one of the four categories:\n"
        "(a) the response is excessively brief and lacks code\n"
        "(b) the code fails to compile or fails its test cases\n"
        "(c) the response shows poor clarity or inconsistency\n"
        "(d) the response is not in the requested function form\n\n"
        "Instruction:\n" +
        rejected.instruction + "\n\nResponse:\n" + rejected.response;
    auto it = verdict.evidence.find(back.at(letter));
    std::string rationale =
        it != verdict.evidence.end() && !it->second.empty() ? it->second : "rule matched";
    record.response = std::string("(") + letter + "): " + rationale;
    return record;
}

ReviewRecord synth_code_review(const Sample& sample, Gateway& gateway, int max_retries) {
    if (sample.code_blocks.empty())
        throw PipelineError("code review needs at least one code block: " + sample.id);

    const std::string base =
        "Review the following code. Reply with exactly these labeled lines:\n"
        "Correctness: <0-10>\nClarity: <0-10>\nSuggestions: <one or two sentences>\n"
        "Refined code: <the improved code>\n\nCode:\n" +
        sample.response;

    std::string feedback;
    for (int attempt = 0; attempt <= max_retries; ++attempt) {
        ChatRequest request;
        request.tag = "review";
        request.turns.push_back({"user", feedback.empty() ? base : base + "\n" + feedback});
        std::string text = gateway.complete(request);
        ReviewRecord review;
        if (parse_review_text(text, review)) {
            review.selected = review_selected(review.correctness, review.clarity);
            return review;
        }
        feedback = "The previous reply did not follow the labeled-line format; answer again "
                   "with all four labels.";
    }
    throw ParseFailure("review output unparseable after " + std::to_string(max_retries + 1) +
                       " attempts for " + sample.id);
}

TaskRecord make_review_task(const Sample& sample, const ReviewRecord& review) {
    TaskRecord record;
    record.kind = TaskKind::CodeReview;
    record.origin_ids = {sample.id};
    record.instruction =
        "Review the following code: score its correctness and clarity from 0 to 10, give "
        "improvement suggestions, and present the refined code.\n\nCode:\n" +
        sample.response;
    record.response = "Correctness: " + std::to_string(review.correctness) +
                      "\nClarity: " + std::to_string(review.clarity) +
                      "\nSuggestions: " + review.suggestions + "\nRefined code:\n```\n" +
                      review.refined_code + (review.refined_code.ends_with('\n') ? "" : "\n") +
                      "```";
    return record;
}

Corpus tasks_to_corpus(const std::vector<TaskRecord>& records, const std::string& id_prefix) {
    static const std::map<TaskKind, std::string> short_names = {
        {TaskKind::InstructionEvolution, "evol"},
        {TaskKind::DataFiltering, "filter"},
        {TaskKind::CodeReview, "review"},
    };
    Corpus corpus;
    std::map<TaskKind, long> counters;
    for (const auto& record : records) {
        if (record.origin_ids.empty())
            throw PipelineError("task record without origin ids");
        long n = counters[record.kind]++;
        Sample s = make_sample(
            id_prefix + "-" + short_names.at(record.kind) + "-" + std::to_string(n), "task",
            record.instruction, record.response);
        s.meta["kind"] = task_kind_name(record.kind);
        nlohmann::json origins = record.origin_ids;
        s.meta["origin_ids"] = origins.dump();
        corpus.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace alchemist
