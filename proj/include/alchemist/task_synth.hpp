#pragma once

#include <string>
#include <vector>

#include "alchemist/gateway.hpp"
#include "alchemist/quality.hpp"
#include "alchemist/sample.hpp"

namespace alchemist {

enum class TaskKind { InstructionEvolution, DataFiltering, CodeReview };

std::string task_kind_name(TaskKind kind);

struct TaskRecord {
    TaskKind kind = TaskKind::InstructionEvolution;
    std::string instruction;
    std::string response;
    std::vector<std::string> origin_ids;  // non-empty
};

struct ReviewRecord {
    int correctness = 0;  // 0..10
    int clarity = 0;      // 0..10
    std::string suggestions;
    std::string refined_code;
    bool selected = false;
};

/// Selection rule over review scores: avg > 8, avg < 6, or either score <= 4.
/// Boundaries on the averages are exclusive.
bool review_selected(int correctness, int clarity);

/// The fixed evolution template set: add constraints, raise complexity,
/// demand explanation. Callers rotate through indices for round-robin use.
const std::vector<std::string>& evolution_templates();

/// Asks the gateway (tag "evolve") to rewrite the instruction using the given
/// template, regenerating with feedback while the result is not strictly
/// longer than the original, then generates a fresh response for the evolved
/// instruction. The result carries id "<orig>::evol", source "evolcode", and
/// meta keys evolved_from / evolution_template. Throws DegenerateEvolution
/// when no attempt produces a longer instruction.
Sample evolve_instruction(const Sample& sample, Gateway& gateway, int template_index,
                          int max_retries = 3);

/// Comprehension task (i): present the original instruction, ask for a more
/// complex variant plus an account of the differences. The response embeds the
/// evolved instruction verbatim. Throws DegenerateEvolution when the two
/// instructions are identical.
TaskRecord synth_instruction_evolution_task(const Sample& original, const Sample& evolved);

/// Category letter for a reject under the fixed mapping {TooShortNoCode→a,
/// CompileFailure→b, PoorClarity→c, NotFunctionForm→d}, priority a>b>c>d.
/// Throws UnmappableFlag when no verdict flag maps.
char data_filter_category(const QualityVerdict& verdict);

/// Comprehension task (ii): present the rejected pair and the four category
/// options; the response names the mapped category with a rationale drawn
/// from the verdict evidence.
TaskRecord synth_data_filtering_task(const Sample& rejected, const QualityVerdict& verdict);

/// Comprehension task (iii): score and refine code. Sends the review template
/// (tag "review") and parses the labeled-line reply; unparseable replies are
/// retried with feedback up to max_retries, then ParseFailure.
ReviewRecord synth_code_review(const Sample& sample, Gateway& gateway, int max_retries = 3);

/// Renders a selected review as a task record.
TaskRecord make_review_task(const Sample& sample, const ReviewRecord& review);

/// Task records as corpus samples with source "task" and ids
/// "<prefix>-<kind>-<n>"; kind and origin ids land in meta.
Corpus tasks_to_corpus(const std::vector<TaskRecord>& records, const std::string& id_prefix);

}  // namespace alchemist
