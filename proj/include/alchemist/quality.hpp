#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "alchemist/executor.hpp"
#include "alchemist/sample.hpp"

namespace alchemist {

enum class QualityFlag {
    TooShortNoCode,
    CompileFailure,
    TestCaseFailure,
    PoorClarity,
    NotFunctionForm,
    NotebookForm,
    ExcessiveProse,
    TooLong,
    InsufficientCode,
};

std::string quality_flag_name(QualityFlag flag);
QualityFlag quality_flag_from_name(const std::string& name);

enum class Disposition { Keep, Remove, Recycle };

std::string disposition_name(Disposition d);

struct QualityVerdict {
    std::set<QualityFlag> flags;
    std::map<QualityFlag, std::string> evidence;  // non-empty entry for every set flag
    Disposition disposition = Disposition::Keep;
    std::vector<std::string> notes;  // withheld-flag explanations (e.g. no executor)
};

/// Builds a verdict and derives the disposition from the flags:
/// Remove iff any of {TooShortNoCode, CompileFailure, TestCaseFailure} is set,
/// Recycle iff not Remove and flags nonempty, Keep otherwise.
QualityVerdict make_verdict(std::set<QualityFlag> flags,
                            std::map<QualityFlag, std::string> evidence,
                            std::vector<std::string> notes = {});

struct FilterConfig {
    long min_response_chars = 120;    // brief iff shorter than this AND zero code blocks
    long max_response_chars = 20000;  // TooLong beyond this
    double min_code_fraction = 0.0;   // InsufficientCode below this; 0 disables the rule
    long prose_prefix_cap = 1500;     // ExcessiveProse beyond this many chars before first block
    bool run_executor = true;         // compile/test checks for languages with executors
    ExecLimits limits;
    int clarity_threshold = 5;  // PoorClarity when judge score falls below this
};

/// Clarity judge: scores a sample 0..10. PoorClarity is evaluated only when a
/// judge is supplied, so the default filter is a pure function of
/// (sample, config).
using ClarityJudge = std::function<int(const Sample&)>;

/// Applies the deterministic rules, runs registered executors over code blocks
/// (tests come from sample.meta["tests"], a JSON array of assertion lines),
/// and consults the judge for clarity when one is given. A language without a
/// registered executor withholds the compile/test flags and records a note.
QualityVerdict classify_quality(const Sample& sample, const FilterConfig& config = {},
                                const ClarityJudge& judge = nullptr);

struct PartitionResult {
    Corpus kept;
    std::vector<std::pair<Sample, QualityVerdict>> removed;
    std::vector<std::pair<Sample, QualityVerdict>> recycled;
};

/// Partitions by disposition. Exhaustive and disjoint:
/// |kept| + |removed| + |recycled| = |input|.
PartitionResult apply_removal_policy(const std::vector<std::pair<Sample, QualityVerdict>>& verdicts);

std::string verdict_to_json(const std::string& sample_id, const QualityVerdict& verdict);
std::pair<std::string, QualityVerdict> verdict_from_json(const std::string& json_line);

}  // namespace alchemist
