#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "alchemist/embedder.hpp"
#include "alchemist/gateway.hpp"
#include "alchemist/sample.hpp"

namespace alchemist {

/// Equal-width numeric histogram. Bin i covers [edges[i], edges[i+1]); the
/// last bin is closed on the right so the maximum lands inside.
struct NumericHistogram {
    std::vector<double> edges;  // bins + 1 entries
    std::vector<long> counts;   // bins entries
    long total = 0;
};

NumericHistogram make_histogram(const std::vector<double>& values, int bins = 20);

struct CorpusStats {
    std::map<std::string, long> source_histogram;
    std::map<std::string, long> language_histogram;  // dominant language per sample
    NumericHistogram description_length_histogram;   // prose chars outside code blocks
    NumericHistogram code_lines_histogram;           // code lines summed per sample
    long token_total = 0;
    long sample_count = 0;
};

/// Prose characters of the response, excluding fenced code block spans.
long prose_chars(const Sample& sample);
long code_lines(const Sample& sample);

CorpusStats corpus_stats(const Corpus& corpus);
std::string corpus_stats_to_json(const CorpusStats& stats);

struct CPDRecord {
    std::string sample_id;
    double ppl_joint = 0.0;     // first perplexity term (see mode)
    double ppl_response = 0.0;  // perplexity of the response alone
    double cpd = 0.0;           // ppl_joint - ppl_response
    std::string mode = "joint";
};

/// exp(-(1/N) * sum(logprobs)). Throws InsufficientData on an empty array.
double perplexity(const std::vector<double>& logprobs);

/// mode "joint": first term is the perplexity over every token of
/// instruction ⊕ response (the literal reading). mode "conditional": first
/// term is the perplexity of the response tokens conditioned on the
/// instruction prefix. ppl_response is always unconditioned.
CPDRecord compute_cpd(const Sample& sample, Gateway& gateway, const std::string& mode = "joint");

/// Gaussian-kernel density over the CPD values: 512 evenly spaced points.
/// Bandwidth defaults to Silverman's rule. The grid spans [min-4h, max+4h];
/// 4h rather than the usual 3h keeps the trapezoidal integral within 1e-3 of
/// one even when every value coincides. Throws InsufficientData below 2
/// records.
std::vector<std::pair<double, double>> cpd_density(const std::vector<CPDRecord>& records,
                                                   std::optional<double> bandwidth = {});

double silverman_bandwidth(std::vector<double> values);

void write_density_csv(const std::vector<std::pair<double, double>>& curve,
                       const std::filesystem::path& path);

struct FailureRecord {
    std::string id;
    std::string response;
    std::string exec_output;
    std::string test_status;  // "passed" | "failed" | free text
};

std::vector<FailureRecord> load_failure_log(const std::filesystem::path& path);

extern const std::vector<std::string> kErrorCategories;

/// First match wins: NoCode (no code block), Timeout (timeout marker),
/// SyntaxError/NameError/ValueError/TypeError (exception name in the output),
/// WrongAnswer (assertion failure or failed test status), OtherException.
std::string categorize_failure(const FailureRecord& record);

struct ErrorCaseTally {
    std::map<std::string, long> counts;  // every category key present
    long total = 0;
};

ErrorCaseTally categorize_errors(const std::vector<FailureRecord>& records);
std::string tally_to_json(const ErrorCaseTally& tally);

/// Row-per-sample embedding matrix (CSV with a header) plus an id sidecar,
/// one id per line, for external projection tools.
void export_embeddings(const Corpus& corpus, Embedder* embedder,
                       const std::filesystem::path& matrix_path,
                       const std::filesystem::path& ids_path);

}  // namespace alchemist
