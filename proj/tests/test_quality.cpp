#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "alchemist/errors.hpp"
#include "alchemist/executor.hpp"
#include "alchemist/quality.hpp"
#include "alchemist/sample.hpp"

using namespace alchemist;
namespace fs = std::filesystem;

namespace {

struct PythonExecutorScope {
    PythonExecutorScope() {
        unregister_all_executors();
        register_executor(python_executor_spec());
    }
    ~PythonExecutorScope() { unregister_all_executors(); }
};

CodeBlock py(const std::string& code) {
    CodeBlock b;
    b.language = "python";
    b.code = code;
    return b;
}

ExecLimits fast_limits() {
    ExecLimits limits;
    limits.timeout_seconds = 8.0;
    return limits;
}

Sample sample_with(const std::string& instruction, const std::string& response) {
    return make_sample("q", "test", instruction, response);
}

std::string long_prose(int chars) {
    std::string s;
    while (static_cast<int>(s.size()) < chars) s += "explanatory prose, at length. ";
    s.resize(chars);
    return s;
}

const std::string kGoodResponse =
    "The function walks the list once and doubles each element as it goes.\n"
    "```python\ndef double_all(xs):\n    return [x * 2 for x in xs]\n```\n"
    "The comprehension keeps it to one pass over the input list.";

}  // namespace

TEST_SUITE("quality") {

TEST_CASE("execute: valid snippet with no tests succeeds") {
    PythonExecutorScope scope;
    auto r = execute_code(py("a = 1\n"), {}, fast_limits());
    CHECK(r.status == RunStatus::Success);
}

TEST_CASE("execute: malformed syntax is a compile error") {
    PythonExecutorScope scope;
    auto r = execute_code(py("def f(: pass\n"), {}, fast_limits());
    CHECK(r.status == RunStatus::CompileError);
    CHECK_FALSE(r.stderr_excerpt.empty());
}

TEST_CASE("execute: correct vs buggy implementation under the same test") {
    PythonExecutorScope scope;
    std::vector<std::string> tests = {"assert add(2, 3) == 5"};
    auto good = execute_code(py("def add(a, b):\n    return a + b\n"), tests, fast_limits());
    CHECK(good.status == RunStatus::Success);
    auto bad = execute_code(py("def add(a, b):\n    return a - b\n"), tests, fast_limits());
    CHECK(bad.status == RunStatus::TestFailure);
    CHECK(bad.stderr_excerpt.find("AssertionError") != std::string::npos);
}

TEST_CASE("execute: non-assertion exception is a runtime error") {
    PythonExecutorScope scope;
    auto r = execute_code(py("def f():\n    raise ValueError('boom')\nf()\n"), {"assert True"},
                          fast_limits());
    CHECK(r.status == RunStatus::RuntimeError);
    CHECK(r.stderr_excerpt.find("ValueError") != std::string::npos);
}

TEST_CASE("execute: infinite loop hits the wall-clock limit") {
    PythonExecutorScope scope;
    ExecLimits limits;
    limits.timeout_seconds = 1.0;
    auto r = execute_code(py("while True:\n    pass\n"), {"assert True"}, limits);
    CHECK(r.status == RunStatus::Timeout);
    CHECK(r.exit_info.find("timeout") != std::string::npos);
    CHECK(r.wall_seconds < 8.0);  // killed promptly, not at process exit
}

TEST_CASE("execute: output beyond the cap is truncated") {
    PythonExecutorScope scope;
    ExecLimits limits;
    limits.timeout_seconds = 8.0;
    limits.max_output_bytes = 1024;
    auto r = execute_code(py("print('x' * 100000)\n"), {"assert True"}, limits);
    CHECK(r.status == RunStatus::Success);
    CHECK(r.output_truncated);
    CHECK(r.stdout_excerpt.size() <= 2000);
}

TEST_CASE("execute: compile-only mode skips the run step") {
    PythonExecutorScope scope;
    ExecLimits limits = fast_limits();
    limits.compile_only = true;
    // would fail its test if executed
    auto r = execute_code(py("def add(a, b):\n    return a - b\n"), {"assert add(2,3)==5"}, limits);
    CHECK(r.status == RunStatus::Success);
}

TEST_CASE("execute: unregistered language refuses") {
    PythonExecutorScope scope;
    CodeBlock b;
    b.language = "cobol";
    b.code = "DISPLAY 'HI'.";
    CHECK_THROWS_AS(execute_code(b, {}, fast_limits()), ExecutorUnavailable);
}

TEST_CASE("execute: relative-path writes stay inside the sandbox (tripwire)") {
    PythonExecutorScope scope;
    fs::path tripwire = fs::current_path() / "tripwire.txt";
    {
        std::ofstream out(tripwire, std::ios::trunc);
        out << "pristine";
    }
    auto r = execute_code(
        py("with open('tripwire.txt', 'w') as f:\n    f.write('clobbered')\n"),
        {"assert True"}, fast_limits());
    CHECK(r.status == RunStatus::Success);
    std::ifstream in(tripwire);
    std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(contents == "pristine");
    fs::remove(tripwire);
}

TEST_CASE("execute: network namespace makes loopback unreachable") {
    PythonExecutorScope scope;
    // connect to a closed loopback port: ENETUNREACH (101) inside a fresh
    // netns where lo is down, ECONNREFUSED (111) on the host
    const std::string probe_code =
        "import socket\n"
        "try:\n"
        "    socket.create_connection(('127.0.0.1', 1), timeout=2)\n"
        "except OSError as e:\n"
        "    raise SystemExit(42 if e.errno == 101 else 43)\n"
        "raise SystemExit(44)\n";
    auto r = execute_code(py(probe_code), {"assert True"}, fast_limits());
    CHECK(r.status == RunStatus::RuntimeError);
    if (r.network_isolated)
        CHECK(r.exit_info == "exit 42");
    else
        CHECK(r.exit_info == "exit 43");
}

TEST_CASE("verdict: disposition law holds for every flag subset") {
    const std::vector<QualityFlag> all = {
        QualityFlag::TooShortNoCode, QualityFlag::CompileFailure, QualityFlag::TestCaseFailure,
        QualityFlag::PoorClarity,    QualityFlag::NotFunctionForm, QualityFlag::NotebookForm,
        QualityFlag::ExcessiveProse, QualityFlag::TooLong,         QualityFlag::InsufficientCode};
    for (unsigned mask = 0; mask < (1u << all.size()); ++mask) {
        std::set<QualityFlag> flags;
        for (size_t i = 0; i < all.size(); ++i)
            if (mask & (1u << i)) flags.insert(all[i]);
        auto v = make_verdict(flags, {});
        bool has_removal = flags.count(QualityFlag::TooShortNoCode) ||
                           flags.count(QualityFlag::CompileFailure) ||
                           flags.count(QualityFlag::TestCaseFailure);
        if (has_removal)
            CHECK(v.disposition == Disposition::Remove);
        else if (!flags.empty())
            CHECK(v.disposition == Disposition::Recycle);
        else
            CHECK(v.disposition == Disposition::Keep);
        for (QualityFlag f : v.flags) CHECK_FALSE(v.evidence.at(f).empty());
    }
}

TEST_CASE("classify: short response without code is removed") {
    PythonExecutorScope scope;
    auto v = classify_quality(sample_with("What does 6*7 equal?", "42"));
    CHECK(v.flags.count(QualityFlag::TooShortNoCode) == 1);
    CHECK(v.disposition == Disposition::Remove);
}

TEST_CASE("classify: clean sample keeps") {
    PythonExecutorScope scope;
    auto v = classify_quality(sample_with("Double every element of a list.", kGoodResponse));
    CHECK(v.flags.empty());
    CHECK(v.disposition == Disposition::Keep);
}

TEST_CASE("classify: syntactically invalid code block is removed") {
    PythonExecutorScope scope;
    auto v = classify_quality(sample_with(
        "Write a loop.", "Sure, here you go.\n```python\nfor x in range(:\n    pass\n```\n" +
                             long_prose(120)));
    CHECK(v.flags.count(QualityFlag::CompileFailure) == 1);
    CHECK(v.disposition == Disposition::Remove);
}

TEST_CASE("classify: failing embedded tests are removed") {
    PythonExecutorScope scope;
    Sample s = sample_with("Implement add as a function.",
                           "Here is the implementation.\n```python\ndef add(a, b):\n    return a - b\n```\n" +
                               long_prose(80));
    s.meta["tests"] = R"(["assert add(2, 3) == 5"])";
    auto v = classify_quality(s);
    CHECK(v.flags.count(QualityFlag::TestCaseFailure) == 1);
    CHECK(v.disposition == Disposition::Remove);

    Sample ok = s;
    ok.response = "Here is the implementation.\n```python\ndef add(a, b):\n    return a + b\n```\n" +
                  long_prose(80);
    refresh_derived_fields(ok);
    auto v2 = classify_quality(ok);
    CHECK(v2.flags.count(QualityFlag::TestCaseFailure) == 0);
}

TEST_CASE("classify: function requested but code defines none") {
    PythonExecutorScope scope;
    auto v = classify_quality(sample_with(
        "Implement this as a function named solve.",
        "You can do it inline:\n```python\nresult = [x * 2 for x in data]\nprint(result)\n```\n" +
            long_prose(60)));
    CHECK(v.flags.count(QualityFlag::NotFunctionForm) == 1);
    CHECK(v.disposition == Disposition::Recycle);
}

TEST_CASE("classify: notebook transcripts are recycled") {
    PythonExecutorScope scope;
    auto v = classify_quality(sample_with(
        "Show the dataframe head.",
        "In [1]: df.head()\nOut[1]:    a  b\n0  1  2\n" + long_prose(120)));
    CHECK(v.flags.count(QualityFlag::NotebookForm) == 1);
    CHECK(v.disposition == Disposition::Recycle);
}

TEST_CASE("classify: excessive prose before the first code block") {
    PythonExecutorScope scope;
    auto v = classify_quality(
        sample_with("Sort a list.", long_prose(1600) + "\n```python\nxs.sort()\n```\n"));
    CHECK(v.flags.count(QualityFlag::ExcessiveProse) == 1);
    CHECK(v.disposition == Disposition::Recycle);
}

TEST_CASE("classify: oversized response is recycled, not removed") {
    PythonExecutorScope scope;
    auto v = classify_quality(
        sample_with("Explain sorting.", long_prose(25000) + "\n```python\nxs.sort()\n```\n"));
    CHECK(v.flags.count(QualityFlag::TooLong) == 1);
    CHECK(v.disposition == Disposition::Recycle);
}

TEST_CASE("classify: poor clarity fires only when a judge is supplied") {
    PythonExecutorScope scope;
    Sample s = sample_with("Double a list.", kGoodResponse);
    auto without = classify_quality(s);
    CHECK(without.flags.count(QualityFlag::PoorClarity) == 0);

    auto low_judge = [](const Sample&) { return 3; };
    auto v = classify_quality(s, {}, low_judge);
    CHECK(v.flags.count(QualityFlag::PoorClarity) == 1);
    CHECK(v.disposition == Disposition::Recycle);

    auto high_judge = [](const Sample&) { return 9; };
    auto v2 = classify_quality(s, {}, high_judge);
    CHECK(v2.flags.count(QualityFlag::PoorClarity) == 0);
}

TEST_CASE("classify: missing executor withholds compile flags with a note") {
    unregister_all_executors();
    auto v = classify_quality(sample_with(
        "Write broken python.",
        "Try this.\n```python\ndef f(: pass\n```\n" + long_prose(120)));
    CHECK(v.flags.count(QualityFlag::CompileFailure) == 0);
    REQUIRE_FALSE(v.notes.empty());
    CHECK(v.notes[0].find("executor unavailable") != std::string::npos);
    register_executor(python_executor_spec());
}

TEST_CASE("classify: deterministic without a judge") {
    PythonExecutorScope scope;
    Sample s = sample_with("Implement add as a function.",
                           "```python\ndef add(a, b):\n    return a + b\n```\n" + long_prose(100));
    auto a = classify_quality(s);
    auto b = classify_quality(s);
    CHECK(a.flags == b.flags);
    CHECK(a.disposition == b.disposition);
    CHECK(a.evidence == b.evidence);
}

TEST_CASE("policy: partitions are exhaustive and disjoint") {
    std::vector<std::pair<Sample, QualityVerdict>> verdicts;
    for (int i = 0; i < 10; ++i)
        verdicts.emplace_back(sample_with("q", "a"), make_verdict({}, {}));
    auto all_keep = apply_removal_policy(verdicts);
    CHECK(all_keep.kept.size() == 10);
    CHECK(all_keep.removed.empty());
    CHECK(all_keep.recycled.empty());

    verdicts.clear();
    verdicts.emplace_back(sample_with("a", "x"), make_verdict({QualityFlag::TooShortNoCode}, {}));
    verdicts.emplace_back(sample_with("b", "y"), make_verdict({QualityFlag::NotebookForm}, {}));
    verdicts.emplace_back(sample_with("c", "z"), make_verdict({}, {}));
    auto mixed = apply_removal_policy(verdicts);
    CHECK(mixed.kept.size() == 1);
    CHECK(mixed.removed.size() == 1);
    CHECK(mixed.recycled.size() == 1);
}

TEST_CASE("policy: mixed synthetic corpus matches the hand-labeled oracle") {
    PythonExecutorScope scope;
    FilterConfig config;
    config.run_executor = false;  // labels below only use the deterministic text rules
    std::vector<std::pair<Sample, QualityVerdict>> verdicts;
    long want_keep = 0, want_remove = 0, want_recycle = 0;
    std::mt19937_64 rng(99);
    for (int i = 0; i < 100; ++i) {
        Sample s;
        switch (i % 4) {
            case 0:  // clean
                s = sample_with("Task " + std::to_string(i), kGoodResponse);
                ++want_keep;
                break;
            case 1:  // short, no code
                s = sample_with("Task " + std::to_string(i), "ok");
                ++want_remove;
                break;
            case 2:  // notebook form
                s = sample_with("Task " + std::to_string(i),
                                "In [2]: run()\nOut[2]: 7\n" + long_prose(150));
                ++want_recycle;
                break;
            default:  // excessive prose
                s = sample_with("Task " + std::to_string(i),
                                long_prose(1700) + "\n```python\nx = 1\n```\n");
                ++want_recycle;
                break;
        }
        verdicts.emplace_back(s, classify_quality(s, config));
    }
    std::shuffle(verdicts.begin(), verdicts.end(), rng);
    auto r = apply_removal_policy(verdicts);
    CHECK(static_cast<long>(r.kept.size()) == want_keep);
    CHECK(static_cast<long>(r.removed.size()) == want_remove);
    CHECK(static_cast<long>(r.recycled.size()) == want_recycle);
    CHECK(r.kept.size() + r.removed.size() + r.recycled.size() == verdicts.size());
}

TEST_CASE("verdict json round-trip") {
    auto v = make_verdict({QualityFlag::NotebookForm, QualityFlag::TooLong},
                          {{QualityFlag::NotebookForm, "cell markers"},
                           {QualityFlag::TooLong, "30000 chars"}},
                          {"executor unavailable for cobol: compile/test flags withheld"});
    auto [id, back] = verdict_from_json(verdict_to_json("s-17", v));
    CHECK(id == "s-17");
    CHECK(back.flags == v.flags);
    CHECK(back.disposition == v.disposition);
    CHECK(back.evidence.at(QualityFlag::NotebookForm) == "cell markers");
    CHECK(back.notes == v.notes);
}

}  // TEST_SUITE
