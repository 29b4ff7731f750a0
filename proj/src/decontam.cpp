#include "alchemist/decontam.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>

#include <json.hpp>

#include "alchemist/errors.hpp"
#include "alchemist/similarity.hpp"
#include "alchemist/tree_edit.hpp"

namespace alchemist {

using nlohmann::json;

std::vector<ReferenceItem> load_references(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw PipelineError("cannot open references file: " + path.string());
    std::vector<ReferenceItem> refs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec = json::parse(line);
        ReferenceItem item;
        item.id = rec.at("id").get<std::string>();
        item.prompt = rec.at("prompt").get<std::string>();
        item.canonical_solution = rec.at("canonical_solution").get<std::string>();
        refs.push_back(std::move(item));
    }
    return refs;
}

void NgramIndex::add(int doc, const std::string& text) {
    for (const auto& g : ngram_set(normalize_tokens(text), n_)) {
        auto& plist = postings_[g];
        if (plist.size() <= max_posting_) plist.push_back(doc);
    }
}

std::vector<int> NgramIndex::candidates(const std::string& text) const {
    std::set<int> hits;
    for (const auto& g : ngram_set(normalize_tokens(text), n_)) {
        auto it = postings_.find(g);
        if (it == postings_.end()) continue;
        if (it->second.size() > max_posting_) continue;  // too common to be a signal
        hits.insert(it->second.begin(), it->second.end());
    }
    return {hits.begin(), hits.end()};
}

namespace {

std::string sample_full_text(const Sample& s) { return s.instruction + "\n" + s.response; }
std::string reference_full_text(const ReferenceItem& r) {
    return r.prompt + "\n" + r.canonical_solution;
}

// Minimum normalized tree distance between any sample code block and the
// reference solution. Absent when nothing parses or the sample has no code.
std::optional<double> best_ast_score(const Sample& s, const ReferenceItem& ref) {
    std::optional<double> best;
    for (const auto& block : s.code_blocks) {
        const std::string lang = block.language == "unknown" ? "python" : block.language;
        try {
            TreeEditResult r = ast_edit_distance(block.code, ref.canonical_solution, lang);
            if (!best || r.normalized < *best) best = r.normalized;
        } catch (const ParseFailure&) {
            // channel absent for this block
        }
    }
    return best;
}

}  // namespace

DecontamResult decontaminate(const Corpus& corpus, const std::vector<ReferenceItem>& references,
                             Embedder* embedder, const DecontamConfig& config) {
    DecontamResult out;
    out.report.thresholds = config;
    out.report.cosine_channel_active = embedder != nullptr;
    if (!embedder) out.report.notes = "cosine channel skipped: no embedder configured";

    NgramIndex index(config.index_ngram, config.max_posting);
    for (size_t r = 0; r < references.size(); ++r)
        index.add(static_cast<int>(r), reference_full_text(references[r]));

    std::vector<std::vector<double>> ref_vecs;
    if (embedder) {
        ref_vecs.reserve(references.size());
        for (const auto& r : references) ref_vecs.push_back(embedder->embed(reference_full_text(r)));
    }

    std::vector<FlaggedSample> flagged;
    for (const auto& s : corpus) {
        const std::string text = sample_full_text(s);
        std::set<int> cand;
        for (int c : index.candidates(text)) cand.insert(c);

        std::vector<double> svec;
        if (embedder) {
            svec = embedder->embed(text);
            for (size_t r = 0; r < references.size(); ++r) {
                if (embedding_cosine(svec, ref_vecs[r]) >= config.cosine_threshold)
                    cand.insert(static_cast<int>(r));
            }
        }

        std::optional<FlaggedSample> hit;
        for (int r : cand) {
            const ReferenceItem& ref = references[static_cast<size_t>(r)];
            SimilarityScores sc;
            sc.reference_id = ref.id;
            sc.ngram_jaccard = ngram_jaccard(text, reference_full_text(ref), config.jaccard_ngram);
            sc.ast_edit_norm = best_ast_score(s, ref);
            if (embedder) sc.embedding_cosine = embedding_cosine(svec, ref_vecs[static_cast<size_t>(r)]);

            std::string trigger;
            if (sc.ngram_jaccard >= config.jaccard_threshold) trigger = "ngram";
            else if (sc.ast_edit_norm && *sc.ast_edit_norm <= config.ast_threshold) trigger = "ast";
            else if (sc.embedding_cosine && *sc.embedding_cosine >= config.cosine_threshold)
                trigger = "cosine";
            if (!trigger.empty()) {
                hit = FlaggedSample{s.id, sc, trigger};
                break;
            }
        }
        if (hit) {
            out.report.channel_counts[hit->triggering_metric] += 1;
            flagged.push_back(std::move(*hit));
        } else {
            out.clean.push_back(s);
        }
    }

    std::sort(flagged.begin(), flagged.end(),
              [](const FlaggedSample& a, const FlaggedSample& b) { return a.sample_id < b.sample_id; });
    out.report.flagged = std::move(flagged);
    out.report.removal_fraction =
        corpus.empty() ? 0.0
                       : static_cast<double>(out.report.flagged.size()) /
                             static_cast<double>(corpus.size());
    return out;
}

DedupResult dedup(const Corpus& corpus, const DedupConfig& config) {
    const size_t n = corpus.size();
    std::vector<std::string> texts(n);
    for (size_t i = 0; i < n; ++i) texts[i] = corpus[i].instruction + "\n" + corpus[i].response;

    NgramIndex index(config.ngram, config.max_posting);
    for (size_t i = 0; i < n; ++i) index.add(static_cast<int>(i), texts[i]);

    // Union-find over near-duplicate pairs.
    std::vector<size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<size_t(size_t)> find = [&](size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };

    for (size_t i = 0; i < n; ++i) {
        for (int j : index.candidates(texts[i])) {
            size_t sj = static_cast<size_t>(j);
            if (sj <= i) continue;
            if (ngram_jaccard(texts[i], texts[sj], config.ngram) >= config.jaccard_threshold) {
                size_t ra = find(i), rb = find(sj);
                if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
            }
        }
    }

    std::map<size_t, std::vector<size_t>> groups;
    for (size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);

    DedupResult out;
    for (auto& [root, members] : groups) {
        // Lowest id survives (stable tie-break).
        size_t survivor = members.front();
        for (size_t m : members)
            if (corpus[m].id < corpus[survivor].id) survivor = m;
        if (members.size() >= 2) {
            DuplicateCluster cluster;
            cluster.member_ids.push_back(corpus[survivor].id);
            for (size_t m : members)
                if (m != survivor) cluster.member_ids.push_back(corpus[m].id);
            std::sort(cluster.member_ids.begin() + 1, cluster.member_ids.end());
            out.clusters.push_back(std::move(cluster));
        }
        members.assign(1, survivor);
    }
    std::set<size_t> survivors;
    for (const auto& [root, members] : groups) survivors.insert(members.front());
    for (size_t i = 0; i < n; ++i)
        if (survivors.count(i)) out.deduped.push_back(corpus[i]);
    std::sort(out.clusters.begin(), out.clusters.end(),
              [](const DuplicateCluster& a, const DuplicateCluster& b) {
                  return a.member_ids.front() < b.member_ids.front();
              });
    return out;
}

std::string contamination_report_to_json(const ContaminationReport& report) {
    json j;
    j["thresholds"] = {{"jaccard_ngram", report.thresholds.jaccard_ngram},
                       {"index_ngram", report.thresholds.index_ngram},
                       {"jaccard_threshold", report.thresholds.jaccard_threshold},
                       {"ast_threshold", report.thresholds.ast_threshold},
                       {"cosine_threshold", report.thresholds.cosine_threshold}};
    j["removal_fraction"] = report.removal_fraction;
    j["cosine_channel_active"] = report.cosine_channel_active;
    if (!report.notes.empty()) j["notes"] = report.notes;
    j["channel_counts"] = json::object();
    for (const auto& [k, v] : report.channel_counts) j["channel_counts"][k] = v;
    j["flagged"] = json::array();
    for (const auto& f : report.flagged) {
        json e;
        e["sample_id"] = f.sample_id;
        e["reference_id"] = f.scores.reference_id;
        e["triggering_metric"] = f.triggering_metric;
        e["ngram_jaccard"] = f.scores.ngram_jaccard;
        if (f.scores.ast_edit_norm) e["ast_edit_norm"] = *f.scores.ast_edit_norm;
        if (f.scores.embedding_cosine) e["embedding_cosine"] = *f.scores.embedding_cosine;
        j["flagged"].push_back(std::move(e));
    }
    return j.dump(2);
}

}  // namespace alchemist
