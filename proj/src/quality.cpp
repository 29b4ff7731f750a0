#include "alchemist/quality.hpp"

#include <json.hpp>
#include <regex>

#include "alchemist/errors.hpp"
#include "alchemist/tree_edit.hpp"

namespace alchemist {

namespace {

const std::map<QualityFlag, std::string> kFlagNames = {
    {QualityFlag::TooShortNoCode, "TooShortNoCode"},
    {QualityFlag::CompileFailure, "CompileFailure"},
    {QualityFlag::TestCaseFailure, "TestCaseFailure"},
    {QualityFlag::PoorClarity, "PoorClarity"},
    {QualityFlag::NotFunctionForm, "NotFunctionForm"},
    {QualityFlag::NotebookForm, "NotebookForm"},
    {QualityFlag::ExcessiveProse, "ExcessiveProse"},
    {QualityFlag::TooLong, "TooLong"},
    {QualityFlag::InsufficientCode, "InsufficientCode"},
};

bool mentions_function_request(const std::string& instruction) {
    static const std::regex pattern(R"(\b(function|def|method)\b)", std::regex::icase);
    return std::regex_search(instruction, pattern);
}

// Function definition in any block: "def" for python, "function" or a
// name(args) { ... } shape for brace languages. Control-flow keywords are
// excluded from the name(args){ shape so plain if/for bodies do not count.
bool defines_function(const Sample& sample) {
    static const std::regex brace_def(
        R"(\b(?!(?:if|for|while|switch|catch|return)\b)[A-Za-z_]\w*\s*\([^()]*\)\s*\{)");
    static const std::regex arrow_def(R"(=>)");
    static const std::regex py_def(R"(\bdef\s+[A-Za-z_]\w*\s*\()");
    static const std::regex fn_kw(R"(\b(function|fn|func)\b)");
    for (const auto& block : sample.code_blocks) {
        if (std::regex_search(block.code, py_def)) return true;
        if (std::regex_search(block.code, fn_kw)) return true;
        if (std::regex_search(block.code, brace_def)) return true;
        if (std::regex_search(block.code, arrow_def)) return true;
    }
    return false;
}

bool looks_like_notebook(const std::string& response) {
    static const std::regex cell_marker(R"(^\s*(In\s*\[\d*\]|Out\s*\[\d*\])\s*:)");
    std::istringstream in(response);
    std::string line;
    while (std::getline(in, line))
        if (std::regex_search(line, cell_marker)) return true;
    if (response.find("\"nbformat\"") != std::string::npos) return true;
    size_t first = response.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && response[first] == '{' &&
        response.find("\"cells\"") != std::string::npos)
        return true;
    return false;
}

long prose_chars_before_first_block(const Sample& sample) {
    if (sample.code_blocks.empty()) return 0;
    return static_cast<long>(sample.code_blocks.front().span_begin);
}

long code_chars(const Sample& sample) {
    long total = 0;
    for (const auto& b : sample.code_blocks) total += static_cast<long>(b.code.size());
    return total;
}

std::vector<std::string> tests_from_meta(const Sample& sample) {
    auto it = sample.meta.find("tests");
    if (it == sample.meta.end()) return {};
    std::vector<std::string> tests;
    try {
        auto parsed = nlohmann::json::parse(it->second);
        if (parsed.is_array())
            for (const auto& t : parsed)
                if (t.is_string()) tests.push_back(t.get<std::string>());
    } catch (const nlohmann::json::exception&) {
        // malformed test metadata is treated as no tests
    }
    return tests;
}

std::string first_line(const std::string& text) {
    size_t nl = text.find('\n');
    std::string line = nl == std::string::npos ? text : text.substr(0, nl);
    return line.size() > 200 ? line.substr(0, 200) : line;
}

}  // namespace

std::string quality_flag_name(QualityFlag flag) { return kFlagNames.at(flag); }

QualityFlag quality_flag_from_name(const std::string& name) {
    for (const auto& [flag, n] : kFlagNames)
        if (n == name) return flag;
    throw PipelineError("unknown quality flag: " + name);
}

std::string disposition_name(Disposition d) {
    switch (d) {
        case Disposition::Keep: return "Keep";
        case Disposition::Remove: return "Remove";
        case Disposition::Recycle: return "Recycle";
    }
    return "Keep";
}

QualityVerdict make_verdict(std::set<QualityFlag> flags,
                            std::map<QualityFlag, std::string> evidence,
                            std::vector<std::string> notes) {
    QualityVerdict v;
    v.flags = std::move(flags);
    v.evidence = std::move(evidence);
    v.notes = std::move(notes);
    for (QualityFlag f : v.flags)
        if (v.evidence[f].empty()) v.evidence[f] = quality_flag_name(f);
    bool remove = v.flags.count(QualityFlag::TooShortNoCode) ||
                  v.flags.count(QualityFlag::CompileFailure) ||
                  v.flags.count(QualityFlag::TestCaseFailure);
    if (remove)
        v.disposition = Disposition::Remove;
    else if (!v.flags.empty())
        v.disposition = Disposition::Recycle;
    else
        v.disposition = Disposition::Keep;
    return v;
}

QualityVerdict classify_quality(const Sample& sample, const FilterConfig& config,
                                const ClarityJudge& judge) {
    std::set<QualityFlag> flags;
    std::map<QualityFlag, std::string> evidence;
    std::vector<std::string> notes;

    long response_len = static_cast<long>(sample.response.size());
    if (response_len < config.min_response_chars && sample.code_blocks.empty()) {
        flags.insert(QualityFlag::TooShortNoCode);
        evidence[QualityFlag::TooShortNoCode] =
            "response is " + std::to_string(response_len) + " chars with no code block";
    }
    if (response_len > config.max_response_chars) {
        flags.insert(QualityFlag::TooLong);
        evidence[QualityFlag::TooLong] = "response is " + std::to_string(response_len) +
                                         " chars, cap " +
                                         std::to_string(config.max_response_chars);
    }
    if (!sample.code_blocks.empty()) {
        long prefix = prose_chars_before_first_block(sample);
        if (prefix > config.prose_prefix_cap) {
            flags.insert(QualityFlag::ExcessiveProse);
            evidence[QualityFlag::ExcessiveProse] =
                std::to_string(prefix) + " prose chars before the first code block";
        }
    }
    if (config.min_code_fraction > 0.0 && response_len >= config.min_response_chars) {
        double fraction =
            response_len == 0 ? 0.0 : static_cast<double>(code_chars(sample)) / response_len;
        if (fraction < config.min_code_fraction) {
            flags.insert(QualityFlag::InsufficientCode);
            evidence[QualityFlag::InsufficientCode] =
                "code fraction " + std::to_string(fraction) + " below configured minimum";
        }
    }
    if (looks_like_notebook(sample.response)) {
        flags.insert(QualityFlag::NotebookForm);
        evidence[QualityFlag::NotebookForm] = "notebook cell markers or notebook JSON detected";
    }
    if (!sample.code_blocks.empty() && mentions_function_request(sample.instruction) &&
        !defines_function(sample)) {
        flags.insert(QualityFlag::NotFunctionForm);
        evidence[QualityFlag::NotFunctionForm] =
            "instruction asks for a function but no definition was found in the code";
    }

    if (config.run_executor) {
        std::vector<std::string> tests = tests_from_meta(sample);
        const CodeBlock* test_target = nullptr;
        for (const auto& block : sample.code_blocks) {
            if (!executor_registered(block.language)) {
                notes.push_back("executor unavailable for " + block.language +
                                ": compile/test flags withheld");
                continue;
            }
            ExecutionResult check = execute_code(block, {}, config.limits);
            if (check.status == RunStatus::CompileError) {
                flags.insert(QualityFlag::CompileFailure);
                evidence[QualityFlag::CompileFailure] =
                    check.exit_info + ": " + first_line(check.stderr_excerpt);
            } else if (check.status == RunStatus::Timeout) {
                notes.push_back("compile check timed out for a " + block.language +
                                " block: flag withheld");
            } else if (check.status == RunStatus::Success && !tests.empty()) {
                if (!test_target || block.code.size() > test_target->code.size())
                    test_target = &block;
            }
        }
        if (test_target && !flags.count(QualityFlag::CompileFailure)) {
            ExecutionResult run = execute_code(*test_target, tests, config.limits);
            if (run.status == RunStatus::TestFailure || run.status == RunStatus::RuntimeError ||
                run.status == RunStatus::Timeout) {
                flags.insert(QualityFlag::TestCaseFailure);
                evidence[QualityFlag::TestCaseFailure] = run_status_name(run.status) + " (" +
                                                         run.exit_info + "): " +
                                                         first_line(run.stderr_excerpt);
            }
        }
    }

    if (judge) {
        int score = judge(sample);
        if (score < config.clarity_threshold) {
            flags.insert(QualityFlag::PoorClarity);
            evidence[QualityFlag::PoorClarity] =
                "judge clarity " + std::to_string(score) + " below threshold " +
                std::to_string(config.clarity_threshold);
        }
    }

    return make_verdict(std::move(flags), std::move(evidence), std::move(notes));
}

PartitionResult apply_removal_policy(
    const std::vector<std::pair<Sample, QualityVerdict>>& verdicts) {
    PartitionResult result;
    for (const auto& [sample, verdict] : verdicts) {
        switch (verdict.disposition) {
            case Disposition::Keep: result.kept.push_back(sample); break;
            case Disposition::Remove: result.removed.emplace_back(sample, verdict); break;
            case Disposition::Recycle: result.recycled.emplace_back(sample, verdict); break;
        }
    }
    return result;
}

std::string verdict_to_json(const std::string& sample_id, const QualityVerdict& verdict) {
    nlohmann::ordered_json j;
    j["id"] = sample_id;
    j["disposition"] = disposition_name(verdict.disposition);
    auto flags = nlohmann::json::array();
    auto evidence = nlohmann::json::object();
    for (QualityFlag f : verdict.flags) {
        flags.push_back(quality_flag_name(f));
        evidence[quality_flag_name(f)] = verdict.evidence.at(f);
    }
    j["flags"] = flags;
    j["evidence"] = evidence;
    j["notes"] = verdict.notes;
    return j.dump();
}

std::pair<std::string, QualityVerdict> verdict_from_json(const std::string& json_line) {
    auto j = nlohmann::json::parse(json_line);
    std::set<QualityFlag> flags;
    std::map<QualityFlag, std::string> evidence;
    for (const auto& name : j.at("flags")) {
        QualityFlag f = quality_flag_from_name(name.get<std::string>());
        flags.insert(f);
        evidence[f] = j.at("evidence").value(name.get<std::string>(), "");
    }
    std::vector<std::string> notes;
    if (j.contains("notes"))
        for (const auto& n : j["notes"]) notes.push_back(n.get<std::string>());
    QualityVerdict v = make_verdict(std::move(flags), std::move(evidence), std::move(notes));
    return {j.at("id").get<std::string>(), v};
}

}  // namespace alchemist
