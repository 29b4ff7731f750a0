#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "alchemist/sample.hpp"

namespace alchemist {

enum class RunStatus {
    Success,
    CompileError,
    RuntimeError,
    TestFailure,
    Timeout,
    ExecutorUnavailable,
};

std::string run_status_name(RunStatus status);

struct ExecutionResult {
    RunStatus status = RunStatus::Success;
    std::string stderr_excerpt;  // tail of captured stderr, where interpreters put tracebacks
    std::string exit_info;       // "exit 0", "signal 9", "timeout after 5s"
    std::string stdout_excerpt;
    bool output_truncated = false;
    double wall_seconds = 0.0;
    bool network_isolated = false;
};

struct ExecLimits {
    double timeout_seconds = 10.0;
    size_t max_output_bytes = 64 * 1024;
    bool isolate_network = true;  // best effort: runs in a detached network namespace when possible
    bool compile_only = false;    // dry-run: skip the run step even when tests are supplied
};

/// Subprocess command template for one language. "{file}" expands to the path
/// of the snippet written into a fresh scratch directory; the process runs
/// with that directory as its working directory, so relative-path writes from
/// executed code stay inside it. Empty run_argv means compile checks only.
struct ExecutorSpec {
    std::string language;
    std::string file_extension;
    std::vector<std::string> compile_argv;
    std::vector<std::string> run_argv;
};

void register_executor(const ExecutorSpec& spec);
void unregister_all_executors();
bool executor_registered(const std::string& language);

/// python3 with isolated mode (-I): py_compile for the check, direct run for
/// tests. The interpreter must be on PATH.
ExecutorSpec python_executor_spec();
bool python3_available();

/// Cap on concurrently running sandboxes (process-wide).
void set_executor_concurrency(int max_parallel);

/// Compile-checks the block, then, when tests are given and the check passed,
/// runs the code with the assertion lines appended. Throws ExecutorUnavailable
/// when no executor is registered for the block's language.
ExecutionResult execute_code(const CodeBlock& block, const std::vector<std::string>& tests = {},
                             const ExecLimits& limits = {});

struct RawRun {
    int exit_code = -1;
    bool timed_out = false;
    bool signaled = false;
    int signal_number = 0;
    std::string out;
    std::string err;
    bool truncated = false;
    double wall_seconds = 0.0;
    bool network_isolated = false;
};

/// Runs argv with the given working directory under the limits. Used by
/// execute_code; exposed so tests can exercise timeouts and output caps
/// directly.
RawRun run_subprocess(const std::vector<std::string>& argv, const std::filesystem::path& workdir,
                      const ExecLimits& limits);

}  // namespace alchemist
