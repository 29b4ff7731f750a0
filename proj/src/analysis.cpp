#include "alchemist/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "alchemist/corpus_io.hpp"
#include "alchemist/errors.hpp"
#include "alchemist/prompts.hpp"

namespace alchemist {

namespace {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool contains_ci(const std::string& haystack, const std::string& needle) {
    auto it = std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end(),
                          [](char a, char b) {
                              return std::tolower(static_cast<unsigned char>(a)) ==
                                     std::tolower(static_cast<unsigned char>(b));
                          });
    return it != haystack.end();
}

nlohmann::ordered_json histogram_to_json(const NumericHistogram& h) {
    nlohmann::ordered_json j;
    j["edges"] = h.edges;
    j["counts"] = h.counts;
    j["total"] = h.total;
    return j;
}

}  // namespace

NumericHistogram make_histogram(const std::vector<double>& values, int bins) {
    NumericHistogram h;
    if (bins < 1) throw PipelineError("histogram needs at least one bin");
    if (values.empty()) {
        h.edges.assign(static_cast<size_t>(bins) + 1, 0.0);
        h.counts.assign(static_cast<size_t>(bins), 0);
        return h;
    }
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (lo == hi) hi = lo + 1.0;  // degenerate spread still yields valid bins
    h.edges.resize(static_cast<size_t>(bins) + 1);
    for (int i = 0; i <= bins; ++i)
        h.edges[static_cast<size_t>(i)] = lo + (hi - lo) * i / bins;
    h.counts.assign(static_cast<size_t>(bins), 0);
    for (double v : values) {
        int bin = static_cast<int>((v - lo) / (hi - lo) * bins);
        bin = std::clamp(bin, 0, bins - 1);
        ++h.counts[static_cast<size_t>(bin)];
    }
    h.total = static_cast<long>(values.size());
    return h;
}

long prose_chars(const Sample& sample) {
    long code_span = 0;
    for (const auto& b : sample.code_blocks)
        code_span += static_cast<long>(b.span_end - b.span_begin);
    return static_cast<long>(sample.response.size()) - code_span;
}

long code_lines(const Sample& sample) {
    long lines = 0;
    for (const auto& b : sample.code_blocks) lines += b.line_count;
    return lines;
}

CorpusStats corpus_stats(const Corpus& corpus) {
    CorpusStats stats;
    stats.sample_count = static_cast<long>(corpus.size());
    std::vector<double> lengths, lines;
    lengths.reserve(corpus.size());
    lines.reserve(corpus.size());
    for (const auto& s : corpus) {
        ++stats.source_histogram[s.source];
        std::string lang = dominant_language(s);
        ++stats.language_histogram[lang == "code" ? "none" : lang];
        lengths.push_back(static_cast<double>(prose_chars(s)));
        lines.push_back(static_cast<double>(code_lines(s)));
        stats.token_total += s.token_estimate;
    }
    stats.description_length_histogram = make_histogram(lengths);
    stats.code_lines_histogram = make_histogram(lines);
    return stats;
}

std::string corpus_stats_to_json(const CorpusStats& stats) {
    nlohmann::ordered_json j;
    j["sample_count"] = stats.sample_count;
    j["token_total"] = stats.token_total;
    j["sources"] = stats.source_histogram;
    j["languages"] = stats.language_histogram;
    j["description_length"] = histogram_to_json(stats.description_length_histogram);
    j["code_lines"] = histogram_to_json(stats.code_lines_histogram);
    return j.dump(2);
}

double perplexity(const std::vector<double>& logprobs) {
    if (logprobs.empty()) throw InsufficientData("perplexity of an empty token sequence");
    double sum = 0.0;
    for (double lp : logprobs) sum += lp;
    return std::exp(-sum / static_cast<double>(logprobs.size()));
}

CPDRecord compute_cpd(const Sample& sample, Gateway& gateway, const std::string& mode) {
    if (mode != "joint" && mode != "conditional")
        throw PipelineError("unknown cpd mode: " + mode);
    if (sample.response.empty())
        throw PipelineError("cpd needs a non-empty response: " + sample.id);

    CPDRecord record;
    record.sample_id = sample.id;
    record.mode = mode;

    if (mode == "joint") {
        auto joint = gateway.score_logprobs("", sample.instruction + "\n" + sample.response);
        record.ppl_joint = perplexity(joint.logprobs);
    } else {
        auto conditioned = gateway.score_logprobs(sample.instruction, sample.response);
        std::vector<double> continuation(conditioned.logprobs.begin() +
                                             static_cast<long>(conditioned.boundary),
                                         conditioned.logprobs.end());
        record.ppl_joint = perplexity(continuation);
    }
    auto alone = gateway.score_logprobs("", sample.response);
    record.ppl_response = perplexity(alone.logprobs);
    record.cpd = record.ppl_joint - record.ppl_response;
    return record;
}

double silverman_bandwidth(std::vector<double> values) {
    size_t n = values.size();
    if (n < 2) throw InsufficientData("bandwidth needs at least 2 values");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / static_cast<double>(n - 1));

    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        double idx = q * static_cast<double>(n - 1);
        size_t lo = static_cast<size_t>(idx);
        size_t hi = std::min(lo + 1, n - 1);
        double frac = idx - static_cast<double>(lo);
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    double iqr = quantile(0.75) - quantile(0.25);

    double spread = std::min(sd, iqr / 1.34);
    if (spread <= 0.0) spread = sd > 0.0 ? sd : 1e-3;  // identical values still get a width
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

std::vector<std::pair<double, double>> cpd_density(const std::vector<CPDRecord>& records,
                                                   std::optional<double> bandwidth) {
    if (records.size() < 2)
        throw InsufficientData("density needs at least 2 records, got " +
                               std::to_string(records.size()));
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(r.cpd);

    double h = bandwidth ? *bandwidth : silverman_bandwidth(values);
    if (h <= 0.0) throw PipelineError("bandwidth must be positive");

    double lo = *std::min_element(values.begin(), values.end()) - 4.0 * h;
    double hi = *std::max_element(values.begin(), values.end()) + 4.0 * h;
    const int points = 512;
    const double norm = 1.0 / (static_cast<double>(values.size()) * h * std::sqrt(2.0 * M_PI));

    std::vector<std::pair<double, double>> curve;
    curve.reserve(points);
    for (int i = 0; i < points; ++i) {
        double x = lo + (hi - lo) * i / (points - 1);
        double density = 0.0;
        for (double v : values) {
            double z = (x - v) / h;
            density += std::exp(-0.5 * z * z);
        }
        curve.emplace_back(x, density * norm);
    }
    return curve;
}

void write_density_csv(const std::vector<std::pair<double, double>>& curve,
                       const std::filesystem::path& path) {
    std::string payload = "x,density\n";
    for (const auto& [x, d] : curve) payload += format_double(x) + "," + format_double(d) + "\n";
    atomic_write_file(path, payload);
}

std::vector<FailureRecord> load_failure_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open failure log: " + path.string());
    std::vector<FailureRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        FailureRecord r;
        r.id = j.value("id", "");
        r.response = j.value("response", "");
        r.exec_output = j.value("exec_output", "");
        r.test_status = j.value("test_status", "");
        records.push_back(std::move(r));
    }
    return records;
}

const std::vector<std::string> kErrorCategories = {
    "SyntaxError", "NameError",  "ValueError", "TypeError",
    "OtherException", "WrongAnswer", "Timeout", "NoCode",
};

std::string categorize_failure(const FailureRecord& record) {
    if (extract_code_blocks(record.response).empty()) return "NoCode";
    if (contains_ci(record.exec_output, "timeout")) return "Timeout";
    for (const std::string named : {"SyntaxError", "NameError", "ValueError", "TypeError"})
        if (record.exec_output.find(named) != std::string::npos) return named;
    if (record.exec_output.find("AssertionError") != std::string::npos ||
        record.test_status == "failed")
        return "WrongAnswer";
    return "OtherException";
}

ErrorCaseTally categorize_errors(const std::vector<FailureRecord>& records) {
    ErrorCaseTally tally;
    for (const auto& category : kErrorCategories) tally.counts[category] = 0;
    for (const auto& r : records) {
        ++tally.counts[categorize_failure(r)];
        ++tally.total;
    }
    return tally;
}

std::string tally_to_json(const ErrorCaseTally& tally) {
    nlohmann::ordered_json j;
    j["total"] = tally.total;
    j["counts"] = tally.counts;
    return j.dump(2);
}

void export_embeddings(const Corpus& corpus, Embedder* embedder,
                       const std::filesystem::path& matrix_path,
                       const std::filesystem::path& ids_path) {
    if (!embedder) throw EmbedderUnavailable();
    size_t dim = embedder->dim();
    std::string header;
    for (size_t i = 0; i < dim; ++i) header += (i ? "," : "") + ("e" + std::to_string(i));
    std::string matrix = header + "\n";
    std::string ids;
    for (const auto& s : corpus) {
        auto v = embedder->embed(s.instruction + "\n" + s.response);
        if (v.size() != dim) throw DimensionMismatch(dim, v.size());
        for (size_t i = 0; i < dim; ++i) matrix += (i ? "," : "") + format_double(v[i]);
        matrix += "\n";
        ids += s.id + "\n";
    }
    atomic_write_file(matrix_path, matrix);
    atomic_write_file(ids_path, ids);
}

}  // namespace alchemist
