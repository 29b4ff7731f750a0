// Release gate for the curation pipeline. Each criterion below prints exactly
// one PASS/FAIL line; the process exit code is the number of failures, so a
// zero exit means the build meets the contract. Checks are written against
// independent oracles (brute-force recomputation, hand-built fixtures, header
// arithmetic), never against the library's own intermediate values.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "alchemist/analysis.hpp"
#include "alchemist/corpus_io.hpp"
#include "alchemist/decontam.hpp"
#include "alchemist/errors.hpp"
#include "alchemist/gateway.hpp"
#include "alchemist/pipeline.hpp"
#include "alchemist/prompts.hpp"
#include "alchemist/quality.hpp"
#include "alchemist/similarity.hpp"
#include "alchemist/task_synth.hpp"
#include "alchemist/tree_edit.hpp"

using namespace alchemist;
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Pinned tolerances. These are the contract, not implementation details.
constexpr double kJaccardTol = 1e-12;      // metric vs brute-force oracle
constexpr double kCpdZeroTol = 1e-9;       // cpd under a uniform scorer
constexpr double kPplTol = 1e-9;           // perplexity vs re-implementation
constexpr double kDensityIntegralTol = 1e-3;
constexpr double kCompositionTarget = 0.08;  // customized+task share of the mix
constexpr double kCompositionSlack = 0.005;

using Problems = std::vector<std::string>;

void fail(Problems& problems, const std::string& msg) { problems.push_back(msg); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    if (!in) return "<unreadable: " + p.string() + ">";
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path temp_dir(const std::string& stem) {
    auto dir = fs::temp_directory_path() / ("alch_accept_" + stem);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// ---------------------------------------------------------------------------
// shared generators

Corpus big_corpus(int n, const std::string& source = "main") {
    Corpus corpus;
    corpus.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::string t = std::to_string(i);
        std::string id = "big-" + std::string(6 - std::min<size_t>(6, t.size()), '0') + t;
        corpus.push_back(make_sample(
            id, source, "Compute value " + t + " for the nightly report, batch " + t + ".",
            "Take route " + t + " with a single pass.\n```python\ndef f" + t +
                "(x):\n    return x + " + t + "\n```\nRun " + t + " stays linear."));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// [1] customization ratio fidelity

void check_ratio_fidelity(Problems& problems) {
    Corpus corpus = big_corpus(10000);
    auto ids = select_candidates(corpus, 0.05, 7);
    if (ids.size() != 500)
        fail(problems, "selected " + std::to_string(ids.size()) + " ids, want exactly 500");

    Gateway gateway(std::make_shared<MockProvider>());
    std::vector<PromptRecord> records;
    for (const auto& s : corpus)
        if (ids.count(s.id)) records.push_back(generate_alchemist_prompt(s, gateway));

    auto count_customized = [](const Corpus& c) {
        long n = 0;
        for (const auto& s : c)
            if (s.alchemist_prompt) ++n;
        return n;
    };

    Corpus augmented = apply_customization(corpus, records, "augment");
    if (augmented.size() != 10500)
        fail(problems, "augment produced " + std::to_string(augmented.size()) + ", want 10500");
    long customized = count_customized(augmented);
    if (customized != 500)
        fail(problems, "augment customized " + std::to_string(customized) + ", want exactly 500");

    Corpus replaced = apply_customization(corpus, records, "replace");
    if (replaced.size() != 10000)
        fail(problems, "replace produced " + std::to_string(replaced.size()) + ", want 10000");
    customized = count_customized(replaced);
    if (customized != 500)
        fail(problems, "replace customized " + std::to_string(customized) + ", want exactly 500");
}

// ---------------------------------------------------------------------------
// [2] review selection truth table

void check_review_truth_table(Problems& problems) {
    long checked = 0;
    for (int correctness = 0; correctness <= 10; ++correctness) {
        for (int clarity = 0; clarity <= 10; ++clarity) {
            double avg = (correctness + clarity) / 2.0;
            bool want = avg > 8.0 || avg < 6.0 || correctness <= 4 || clarity <= 4;
            bool got = review_selected(correctness, clarity);
            ++checked;
            if (got != want)
                fail(problems, "scores (" + std::to_string(correctness) + ", " +
                                   std::to_string(clarity) + "): got " +
                                   (got ? "selected" : "skipped") + ", want " +
                                   (want ? "selected" : "skipped"));
        }
    }
    if (checked != 121) fail(problems, "truth table covered " + std::to_string(checked) + "/121");
}

// ---------------------------------------------------------------------------
// [3] contamination recall and precision

// Five structurally distinct solution shapes, far enough apart that nothing
// cross-matches between shapes. Every shape ends with the same boolean tail,
// whose keyword run survives identifier renaming and keeps the renamed clones
// retrievable. The renamed variant of a shape is node-for-node identical to
// the original, with every identifier substituted.
std::string bench_solution(int k, bool renamed) {
    const std::string t = std::to_string(k);
    auto pick = [&](const char* a, const char* b) { return std::string(renamed ? b : a); };
    switch (k % 5) {
        case 0: {
            auto fn = pick("scan_runs_", "tally_segments_") + t;
            auto text = pick("text", "blob"), lim = pick("limit", "cap");
            auto runs = pick("runs", "hits"), cur = pick("current", "span");
            auto ch = pick("chr", "sym");
            return "def " + fn + "(" + text + ", " + lim + "):\n" +
                   "    " + runs + " = 0\n" +
                   "    " + cur + " = 0\n" +
                   "    for " + ch + " in " + text + ":\n" +
                   "        if " + ch + ".isdigit():\n" +
                   "            " + cur + " = " + cur + " + 1\n" +
                   "        else:\n" +
                   "            if " + cur + " > " + lim + ":\n" +
                   "                " + runs + " = " + runs + " + 1\n" +
                   "            " + cur + " = 0\n" +
                   "    if " + runs + " > 0:\n" +
                   "        return True\n" +
                   "    return False\n";
        }
        case 1: {
            auto fn = pick("pick_vowels_", "gather_openers_") + t;
            auto words = pick("words", "entries"), cap = pick("cap", "quota");
            auto chosen = pick("chosen", "picked"), idx = pick("index", "cursor");
            auto word = pick("word", "entry");
            return "def " + fn + "(" + words + ", " + cap + "):\n" +
                   "    " + chosen + " = []\n" +
                   "    " + idx + " = 0\n" +
                   "    while " + idx + " < len(" + words + "):\n" +
                   "        " + word + " = " + words + "[" + idx + "]\n" +
                   "        if " + word + "[0] in \"aeiou\":\n" +
                   "            " + chosen + ".append(" + word + ")\n" +
                   "        " + idx + " = " + idx + " + 1\n" +
                   "    if len(" + chosen + ") > " + cap + ":\n" +
                   "        return True\n" +
                   "    return False\n";
        }
        case 2: {
            auto fn = pick("tally_kinds_", "bucket_counts_") + t;
            auto items = pick("items", "rows"), floor_n = pick("floor_n", "base");
            auto bag = pick("bag", "box"), item = pick("item", "row");
            auto kind = pick("kind", "tag"), best = pick("best", "top");
            return "def " + fn + "(" + items + ", " + floor_n + "):\n" +
                   "    " + bag + " = {}\n" +
                   "    for " + item + " in " + items + ":\n" +
                   "        " + kind + " = " + item + ".split(\":\")[0]\n" +
                   "        if " + kind + " in " + bag + ":\n" +
                   "            " + bag + "[" + kind + "] = " + bag + "[" + kind + "] + 1\n" +
                   "        else:\n" +
                   "            " + bag + "[" + kind + "] = 1\n" +
                   "    " + best + " = 0\n" +
                   "    for " + kind + " in " + bag + ":\n" +
                   "        if " + bag + "[" + kind + "] > " + best + ":\n" +
                   "            " + best + " = " + bag + "[" + kind + "]\n" +
                   "    if " + best + " > " + floor_n + ":\n" +
                   "        return True\n" +
                   "    return False\n";
        }
        case 3: {
            auto fn = pick("has_pair_gap_", "any_close_pair_") + t;
            auto values = pick("values", "points"), width = pick("width", "spanlim");
            auto i = pick("i", "p"), j = pick("j", "q");
            auto left = pick("left", "first_v"), right = pick("right", "second_v");
            auto gap = pick("gap", "delta");
            return "def " + fn + "(" + values + ", " + width + "):\n" +
                   "    for " + i + ", " + left + " in enumerate(" + values + "):\n" +
                   "        for " + j + ", " + right + " in enumerate(" + values + "):\n" +
                   "            if " + i + " != " + j + ":\n" +
                   "                " + gap + " = abs(" + left + " - " + right + ")\n" +
                   "                if " + gap + " < " + width + ":\n" +
                   "                    return True\n" +
                   "    return False\n";
        }
        default: {
            auto fn = pick("spread_report_", "window_extent_") + t;
            auto readings = pick("readings", "samples"), bound = pick("bound", "edge");
            auto low = pick("low", "floor_v"), high = pick("high", "peak");
            auto value = pick("value", "item"), span = pick("span", "range_v");
            return "def " + fn + "(" + readings + ", " + bound + "):\n" +
                   "    " + low + " = " + readings + "[0]\n" +
                   "    " + high + " = " + readings + "[0]\n" +
                   "    for " + value + " in " + readings + ":\n" +
                   "        if " + value + " < " + low + ":\n" +
                   "            " + low + " = " + value + "\n" +
                   "        if " + value + " > " + high + ":\n" +
                   "            " + high + " = " + value + "\n" +
                   "    " + span + " = " + high + " - " + low + "\n" +
                   "    if " + span + " >= " + bound + ":\n" +
                   "        return True\n" +
                   "    return False\n";
        }
    }
}

std::string bench_prompt(int k) {
    const std::string t = std::to_string(k);
    switch (k % 5) {
        case 0:
            return "Benchmark item " + t +
                   ": given a report string, scan it once and decide whether it contains a run "
                   "of consecutive digit characters strictly longer than the limit " + t +
                   "; runs reset on any non-digit character and the answer is a boolean.";
        case 1:
            return "Benchmark item " + t +
                   ": given a list of lowercase words and a quota, collect the words whose "
                   "first character is a vowel and decide whether strictly more than " + t +
                   " of them qualify; keep the scan to a single pass and answer with a "
                   "boolean.";
        case 2:
            return "Benchmark item " + t +
                   ": each row is a string with a kind prefix before a colon; tally how many "
                   "rows each kind contributes and decide whether the densest kind strictly "
                   "beats the floor " + t +
                   "; ties do not count and the answer is a boolean.";
        case 3:
            return "Benchmark item " + t +
                   ": given a list of numeric readings and a width, decide whether any two "
                   "distinct readings sit closer together than the width " + t +
                   "; readings may repeat, order does not matter, and the answer is a boolean.";
        default:
            return "Benchmark item " + t +
                   ": given a window of numeric samples, track the running minimum and maximum "
                   "in one pass, measure their spread, and decide whether it reaches the "
                   "bound " + t + "; the answer is a boolean.";
    }
}

std::string renamed_instruction(int k) {
    const std::string t = std::to_string(k);
    switch (k % 5) {
        case 0:
            return "Count digit stretches inside a blob and say whether one beats the cap, "
                   "item " + t + ".";
        case 1:
            return "From the entry list keep vowel-led entries and say whether the picks top "
                   "the quota, item " + t + ".";
        case 2:
            return "Group ledger rows by tag and say whether the fullest bucket clears the "
                   "base, item " + t + ".";
        case 3:
            return "Say whether a pair of points lands within the span limit, item " + t + ".";
        default:
            return "Compute the washout range of the sample window and say if it hits the "
                   "edge, item " + t + ".";
    }
}

void check_contamination_recall(Problems& problems) {
    std::vector<ReferenceItem> refs;
    for (int k = 0; k < 10; ++k) {
        ReferenceItem ref;
        ref.id = "bench/" + std::to_string(k);
        ref.prompt = bench_prompt(k);
        ref.canonical_solution = bench_solution(k, false);
        refs.push_back(std::move(ref));
    }

    Corpus corpus;
    std::set<std::string> planted;
    for (int k = 0; k < 5; ++k) {  // verbatim copies, expected on the ngram channel
        std::string id = "plant-verbatim-" + std::to_string(k);
        planted.insert(id);
        corpus.push_back(make_sample(id, "crawl", refs[k].prompt,
                                     "Solution:\n```python\n" + refs[k].canonical_solution +
                                         "```\n"));
    }
    for (int k = 5; k < 10; ++k) {  // renamed identifiers, expected on the ast channel
        std::string id = "plant-renamed-" + std::to_string(k);
        planted.insert(id);
        corpus.push_back(make_sample(
            id, "crawl", renamed_instruction(k),
            "One pass suffices.\n```python\n" + bench_solution(k, true) + "```\n"));
    }
    for (int i = 0; i < 100; ++i) {  // clean: tiny loop-free bodies, far from any reference
        std::string t = std::to_string(i);
        corpus.push_back(make_sample(
            "clean-" + t, "crawl",
            "Task " + t + ": fold the mk" + t + " totals into one figure for the vq" + t +
                " ledger.",
            "Direct arithmetic keeps mk" + t + " flat.\n```python\ndef fold_" + t +
                "(a, b):\n    return a * " + std::to_string(i % 9 + 2) + " + b - " + t +
                "\n```\nNo loops needed for vq" + t + "."));
    }

    auto result = decontaminate(corpus, refs, nullptr, DecontamConfig{});
    std::set<std::string> flagged;
    for (const auto& f : result.report.flagged) {
        flagged.insert(f.sample_id);
        if (f.sample_id.rfind("plant-verbatim-", 0) == 0 && f.triggering_metric != "ngram")
            fail(problems, f.sample_id + " tripped " + f.triggering_metric + ", want ngram");
        if (f.sample_id.rfind("plant-renamed-", 0) == 0 && f.triggering_metric != "ast")
            fail(problems, f.sample_id + " tripped " + f.triggering_metric + ", want ast");
    }
    for (const auto& id : planted)
        if (!flagged.count(id)) fail(problems, "planted contaminant not flagged: " + id);
    for (const auto& id : flagged)
        if (!planted.count(id)) fail(problems, "clean sample falsely flagged: " + id);
    if (result.clean.size() != 100)
        fail(problems, "kept " + std::to_string(result.clean.size()) + " samples, want 100");
}

// ---------------------------------------------------------------------------
// [4] similarity metric oracles

double jaccard_oracle(const std::string& a, const std::string& b, int n) {
    auto grams = [&](const std::string& text) {
        auto toks = normalize_tokens(text);
        std::set<std::vector<std::string>> out;
        if (static_cast<int>(toks.size()) >= n)
            for (size_t i = 0; i + n <= toks.size(); ++i)
                out.insert(std::vector<std::string>(toks.begin() + i, toks.begin() + i + n));
        return out;
    };
    auto ga = grams(a), gb = grams(b);
    if (ga.empty() || gb.empty()) return 0.0;
    size_t inter = 0;
    for (const auto& g : ga) inter += gb.count(g);
    return static_cast<double>(inter) / static_cast<double>(ga.size() + gb.size() - inter);
}

std::string random_text(std::mt19937_64& rng, int max_words) {
    static const std::vector<std::string> vocab = {
        "def", "return", "x",    "y",   "sum",  "list", "for", "in",
        "if",  "else",   "data", "val", "node", "tree", "map", "key"};
    std::string s;
    int n = static_cast<int>(rng() % (max_words + 1));
    for (int i = 0; i < n; ++i) {
        s += vocab[rng() % vocab.size()];
        s += rng() % 5 == 0 ? "\n" : " ";
    }
    return s;
}

std::vector<int> postorder(const ParseTree& t) {
    std::vector<int> out;
    if (t.empty()) return out;
    std::vector<std::pair<int, size_t>> stack = {{t.root(), 0}};
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        const auto& children = t.node(node).children;
        if (next_child < children.size()) {
            int child = children[next_child++];
            stack.push_back({child, 0});
        } else {
            out.push_back(node);
            stack.pop_back();
        }
    }
    return out;
}

bool is_ancestor(const ParseTree& t, int anc, int node) {
    for (int cur = t.node(node).parent; cur != -1; cur = t.node(cur).parent)
        if (cur == anc) return true;
    return false;
}

// Exhaustive minimum over all valid Tai mappings: postorder-monotone pairing
// that preserves the ancestor relation. Unmapped nodes cost 1 each, mapped
// pairs with differing labels cost 1. Feasible for trees up to 5 nodes.
long ted_oracle(const ParseTree& a, const ParseTree& b) {
    auto pa = postorder(a);
    auto pb = postorder(b);
    int na = static_cast<int>(pa.size());
    int nb = static_cast<int>(pb.size());
    long best = na + nb;
    for (unsigned ma = 0; ma < (1u << na); ++ma) {
        std::vector<int> sa;
        for (int i = 0; i < na; ++i)
            if (ma & (1u << i)) sa.push_back(i);
        for (unsigned mb = 0; mb < (1u << nb); ++mb) {
            std::vector<int> sb;
            for (int j = 0; j < nb; ++j)
                if (mb & (1u << j)) sb.push_back(j);
            if (sb.size() != sa.size()) continue;
            bool valid = true;
            long relabels = 0;
            for (size_t t = 0; t < sa.size() && valid; ++t) {
                if (a.node(pa[sa[t]]).label != b.node(pb[sb[t]]).label) ++relabels;
                for (size_t u = t + 1; u < sa.size() && valid; ++u) {
                    bool anc_a = is_ancestor(a, pa[sa[u]], pa[sa[t]]);
                    bool anc_b = is_ancestor(b, pb[sb[u]], pb[sb[t]]);
                    if (anc_a != anc_b) valid = false;
                }
            }
            if (!valid) continue;
            long k = static_cast<long>(sa.size());
            best = std::min(best, (na - k) + (nb - k) + relabels);
        }
    }
    return best;
}

ParseTree random_tree(std::mt19937_64& rng, int max_nodes) {
    ParseTree t;
    int n = static_cast<int>(rng() % (max_nodes + 1));
    static const std::vector<std::string> labels = {"a", "b", "c"};
    for (int i = 0; i < n; ++i) {
        int parent = i == 0 ? -1 : static_cast<int>(rng() % i);
        t.add_node(labels[rng() % labels.size()], parent);
    }
    return t;
}

void check_metric_oracles(Problems& problems) {
    std::mt19937_64 rng(2024);
    for (int iter = 0; iter < 1000; ++iter) {
        int n = 1 + static_cast<int>(rng() % 4);
        std::string a = random_text(rng, 25);
        std::string b = random_text(rng, 25);
        double got = ngram_jaccard(a, b, n);
        double want = jaccard_oracle(a, b, n);
        if (std::fabs(got - want) > kJaccardTol) {
            fail(problems, "jaccard mismatch at pair " + std::to_string(iter) + ": got " +
                               std::to_string(got) + ", oracle " + std::to_string(want));
            break;
        }
    }

    for (int iter = 0; iter < 200; ++iter) {
        ParseTree a = random_tree(rng, 5);
        ParseTree b = random_tree(rng, 5);
        long got = tree_edit_distance(a, b);
        long want = ted_oracle(a, b);
        if (got != want) {
            fail(problems, "tree distance mismatch at pair " + std::to_string(iter) + ": got " +
                               std::to_string(got) + ", exhaustive " + std::to_string(want));
            break;
        }
    }

    for (int iter = 0; iter < 60; ++iter) {
        ParseTree a = random_tree(rng, 5);
        ParseTree b = random_tree(rng, 5);
        ParseTree c = random_tree(rng, 5);
        long ab = tree_edit_distance(a, b);
        long bc = tree_edit_distance(b, c);
        long ac = tree_edit_distance(a, c);
        if (tree_edit_distance(a, a) != 0) fail(problems, "identity axiom violated");
        if (ab != tree_edit_distance(b, a)) fail(problems, "symmetry axiom violated");
        if (ac > ab + bc) fail(problems, "triangle inequality violated at triple " +
                                             std::to_string(iter));
        if (ab < std::labs(static_cast<long>(a.size()) - static_cast<long>(b.size())))
            fail(problems, "size lower bound violated");
        if (!problems.empty()) break;
    }
}

// ---------------------------------------------------------------------------
// [5] quality disposition law

void check_disposition_law(Problems& problems) {
    using F = QualityFlag;
    const std::set<F> removal = {F::TooShortNoCode, F::CompileFailure, F::TestCaseFailure};
    const std::vector<std::set<F>> combos = {
        {},
        {F::TooShortNoCode},
        {F::CompileFailure},
        {F::TestCaseFailure},
        {F::PoorClarity},
        {F::NotFunctionForm},
        {F::NotebookForm},
        {F::ExcessiveProse},
        {F::TooLong},
        {F::InsufficientCode},
        {F::TooShortNoCode, F::PoorClarity},
        {F::CompileFailure, F::ExcessiveProse},
        {F::TestCaseFailure, F::NotebookForm, F::TooLong},
        {F::PoorClarity, F::NotFunctionForm},
        {F::ExcessiveProse, F::TooLong, F::InsufficientCode},
        {F::TooShortNoCode, F::CompileFailure, F::TestCaseFailure},
        {F::CompileFailure, F::PoorClarity, F::NotFunctionForm, F::NotebookForm},
        {F::NotebookForm, F::InsufficientCode},
        {F::TestCaseFailure, F::PoorClarity, F::ExcessiveProse},
        {F::NotFunctionForm, F::TooLong},
    };

    std::vector<std::pair<Sample, QualityVerdict>> verdicts;
    std::map<std::string, Disposition> want;
    for (int i = 0; i < 100; ++i) {
        const auto& flags = combos[static_cast<size_t>(i) % combos.size()];
        std::string id = "hl-" + std::to_string(i);
        std::map<F, std::string> evidence;
        for (F f : flags) evidence[f] = "hand label";
        auto verdict = make_verdict(flags, evidence);

        bool removed = false;
        for (F f : flags) removed = removed || removal.count(f) > 0;
        Disposition expect = removed               ? Disposition::Remove
                             : flags.empty()       ? Disposition::Keep
                                                   : Disposition::Recycle;
        if (verdict.disposition != expect)
            fail(problems, id + ": disposition " + disposition_name(verdict.disposition) +
                               ", want " + disposition_name(expect));
        want[id] = expect;
        verdicts.emplace_back(make_sample(id, "hand", "q " + id, "a " + id), verdict);
    }

    auto part = apply_removal_policy(verdicts);
    if (part.kept.size() + part.removed.size() + part.recycled.size() != 100)
        fail(problems, "partition sizes sum to " +
                           std::to_string(part.kept.size() + part.removed.size() +
                                          part.recycled.size()) +
                           ", want 100");
    for (const auto& s : part.kept)
        if (want.at(s.id) != Disposition::Keep) fail(problems, s.id + " wrongly kept");
    for (const auto& [s, v] : part.removed)
        if (want.at(s.id) != Disposition::Remove) fail(problems, s.id + " wrongly removed");
    for (const auto& [s, v] : part.recycled)
        if (want.at(s.id) != Disposition::Recycle) fail(problems, s.id + " wrongly recycled");

    // expected tallies from the combo table: 9 of 20 combos remove, 1 keeps
    if (part.removed.size() != 45)
        fail(problems, "removed " + std::to_string(part.removed.size()) + ", want 45");
    if (part.kept.size() != 5)
        fail(problems, "kept " + std::to_string(part.kept.size()) + ", want 5");
    if (part.recycled.size() != 50)
        fail(problems, "recycled " + std::to_string(part.recycled.size()) + ", want 50");
}

// ---------------------------------------------------------------------------
// [6] alignment diagnostics sanity

void check_diagnostics_sanity(Problems& problems) {
    auto provider = std::make_shared<MockProvider>();
    provider->set_uniform_vocab(100);
    Gateway gateway(provider);
    Sample s = make_sample("cpd-0", "main", "Sum the first nine integers without a loop.",
                           "Use the closed form.\n```python\nprint(9 * 10 // 2)\n```\nDone.");
    for (const std::string mode : {"joint", "conditional"}) {
        auto rec = compute_cpd(s, gateway, mode);
        if (std::fabs(rec.cpd) > kCpdZeroTol)
            fail(problems, "uniform scorer, mode " + mode + ": cpd " + std::to_string(rec.cpd) +
                               " exceeds " + std::to_string(kCpdZeroTol));
    }

    // perplexity against a long-double re-implementation on random logprobs
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> logp(-8.0, -0.05);
    for (int iter = 0; iter < 200; ++iter) {
        size_t n = 1 + rng() % 60;
        std::vector<double> lp(n);
        long double acc = 0.0L;
        for (auto& v : lp) {
            v = logp(rng);
            acc += static_cast<long double>(v);
        }
        double want = static_cast<double>(expl(-acc / static_cast<long double>(n)));
        double got = perplexity(lp);
        if (std::fabs(got - want) > kPplTol * std::max(1.0, std::fabs(want))) {
            fail(problems, "perplexity drift at trial " + std::to_string(iter) + ": got " +
                               std::to_string(got) + ", re-implementation " +
                               std::to_string(want));
            break;
        }
    }

    // the density estimate must integrate to one, degenerate spread included
    auto integral_of = [](const std::vector<std::pair<double, double>>& curve) {
        double area = 0.0;
        for (size_t i = 1; i < curve.size(); ++i)
            area += 0.5 * (curve[i].second + curve[i - 1].second) *
                    (curve[i].first - curve[i - 1].first);
        return area;
    };
    std::normal_distribution<double> noise(0.0, 1.7);
    std::vector<CPDRecord> spread, flat;
    for (int i = 0; i < 200; ++i) {
        CPDRecord r;
        r.sample_id = "d-" + std::to_string(i);
        r.cpd = noise(rng);
        spread.push_back(r);
        r.cpd = 0.25;
        flat.push_back(r);
    }
    for (const auto* records : {&spread, &flat}) {
        double area = integral_of(cpd_density(*records));
        if (std::fabs(area - 1.0) > kDensityIntegralTol)
            fail(problems,
                 "density integral " + std::to_string(area) + " outside 1 +- " +
                     std::to_string(kDensityIntegralTol));
    }
}

// ---------------------------------------------------------------------------
// [7] end-to-end determinism

void check_determinism(Problems& problems) {
    auto load_fixture_config = [](const fs::path& out) {
        auto cfg = load_pipeline_config(fs::path(FIXTURES_DIR) / "pipeline_config.json");
        cfg.output_dir = out;
        return cfg;
    };
    auto out_a = temp_dir("det_a");
    auto out_b = temp_dir("det_b");
    auto manifest = run_pipeline(load_fixture_config(out_a));
    run_pipeline(load_fixture_config(out_b));

    for (const std::string name :
         {"dataset.jsonl", "dataset.instruction_output.jsonl", "dataset.messages.jsonl",
          "manifest.json", "stats.json", "training_config.json"}) {
        if (slurp(out_a / name) != slurp(out_b / name))
            fail(problems, "runs differ in " + name);
    }

    const auto& c = manifest.counts;
    long outflow = c.kept + c.removed_by_clean + c.recycled_by_clean + c.deduped_away +
                   c.removed_by_decontam;
    if (c.ingested != outflow)
        fail(problems, "conservation violated: ingested " + std::to_string(c.ingested) +
                           " != outflows " + std::to_string(outflow));
    if (!manifest.conservation_holds) fail(problems, "manifest reports conservation failure");
    if (c.ingested != 200)
        fail(problems, "fixture ingested " + std::to_string(c.ingested) + ", want 200");
    if (c.final_count != c.kept + c.customized + c.evolved + c.tasks)
        fail(problems, "final count does not decompose into kept+customized+evolved+tasks");

    fs::remove_all(out_a);
    fs::remove_all(out_b);
}

// ---------------------------------------------------------------------------
// [8] mixed dataset composition

void check_composition(Problems& problems) {
    auto dir = temp_dir("composition");
    save_corpus(big_corpus(10000), dir / "corpus.jsonl");

    ordered_json j;
    j["seed"] = 7;
    j["output_dir"] = "out";
    j["sources"] = ordered_json::array();
    j["sources"].push_back(
        {{"name", "main"}, {"path", "corpus.jsonl"}, {"format", "jsonl-canonical"}});
    j["filter"] = {{"run_executor", false}};
    j["alchemist"] = {{"ratio", 0.05}, {"strategy", "augment"}};
    j["tasks"] = {{"evolution_count", 400}, {"filtering_limit", 0}, {"review_count", 0}};
    j["provider"] = {{"kind", "mock"}};
    atomic_write_file(dir / "config.json", j.dump(2));

    auto manifest = run_pipeline(load_pipeline_config(dir / "config.json"));
    const auto& c = manifest.counts;
    if (c.kept != 10000) fail(problems, "kept " + std::to_string(c.kept) + ", want 10000");
    if (c.customized != 500)
        fail(problems, "customized " + std::to_string(c.customized) + ", want 500");
    if (c.evolved != 400) fail(problems, "evolved " + std::to_string(c.evolved) + ", want 400");
    if (c.tasks != 400) fail(problems, "task records " + std::to_string(c.tasks) + ", want 400");
    if (c.final_count != 11300)
        fail(problems, "final " + std::to_string(c.final_count) + ", want 11300");

    double share = manifest.fraction_customized_plus_task;
    if (std::fabs(share - kCompositionTarget) > kCompositionSlack)
        fail(problems, "customized+task share " + std::to_string(share) + " outside " +
                           std::to_string(kCompositionTarget) + " +- " +
                           std::to_string(kCompositionSlack));
    fs::remove_all(dir);
}

// ---------------------------------------------------------------------------
// [9] failure categorization agreement

void check_failure_categorization(Problems& problems) {
    const fs::path log = fs::path(FIXTURES_DIR) / "failure_log.jsonl";
    auto records = load_failure_log(log);

    // labels re-read independently of the loader
    std::map<std::string, std::string> labels;
    std::map<std::string, long> label_counts;
    std::ifstream in(log);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto rec = ordered_json::parse(line);
        std::string id = rec.at("id").get<std::string>();
        std::string label = rec.at("label").get<std::string>();
        labels[id] = label;
        label_counts[label] += 1;
    }
    if (records.size() != 50 || labels.size() != 50)
        fail(problems, "fixture holds " + std::to_string(records.size()) + " records, want 50");

    long agreed = 0;
    for (const auto& r : records) {
        std::string got = categorize_failure(r);
        auto it = labels.find(r.id);
        if (it == labels.end()) {
            fail(problems, "record without label: " + r.id);
            continue;
        }
        if (got == it->second)
            ++agreed;
        else
            fail(problems, r.id + ": categorized " + got + ", labeled " + it->second);
    }
    if (agreed != static_cast<long>(records.size()))
        fail(problems, std::to_string(agreed) + "/" + std::to_string(records.size()) +
                           " records agree, want 100%");

    auto tally = categorize_errors(records);
    if (tally.total != 50) fail(problems, "tally total " + std::to_string(tally.total));
    for (const auto& cat : kErrorCategories) {
        long want = label_counts.count(cat) ? label_counts[cat] : 0;
        if (tally.counts.at(cat) != want)
            fail(problems, "tally[" + cat + "] = " + std::to_string(tally.counts.at(cat)) +
                               ", labels say " + std::to_string(want));
    }
}

struct Criterion {
    std::string name;
    double budget_seconds;  // 0: report time only
    std::function<void(Problems&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"customization ratio fidelity", 10.0, check_ratio_fidelity},
        {"review selection truth table", 1.0, check_review_truth_table},
        {"contamination recall and precision", 30.0, check_contamination_recall},
        {"similarity metric oracles", 120.0, check_metric_oracles},
        {"quality disposition law", 0.0, check_disposition_law},
        {"alignment diagnostics sanity", 0.0, check_diagnostics_sanity},
        {"end-to-end determinism", 60.0, check_determinism},
        {"mixed dataset composition", 0.0, check_composition},
        {"failure categorization agreement", 0.0, check_failure_categorization},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto& criterion = criteria[i];
        Problems problems;
        auto start = std::chrono::steady_clock::now();
        try {
            criterion.run(problems);
        } catch (const std::exception& e) {
            problems.push_back(std::string("unhandled exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
        if (criterion.budget_seconds > 0 && secs > criterion.budget_seconds)
            problems.push_back("took " + std::to_string(secs) + "s, budget " +
                               std::to_string(criterion.budget_seconds) + "s");

        bool pass = problems.empty();
        std::printf("[%zu/%zu] %-36s %s (%.2fs)\n", i + 1, criteria.size(),
                    criterion.name.c_str(), pass ? "PASS" : "FAIL", secs);
        size_t shown = 0;
        for (const auto& p : problems) {
            if (shown++ == 8) {
                std::printf("        ... %zu more\n", problems.size() - 8);
                break;
            }
            std::printf("        %s\n", p.c_str());
        }
        if (!pass) ++failures;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
                criteria.size());
    return failures;
}
