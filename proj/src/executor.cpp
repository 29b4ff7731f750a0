#include "alchemist/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

#include "alchemist/errors.hpp"

namespace alchemist {

namespace {

namespace fs = std::filesystem;

std::mutex g_registry_mutex;
std::map<std::string, ExecutorSpec> g_executors;

// counting guard for the concurrent-sandbox cap
struct SandboxGate {
    std::mutex m;
    std::condition_variable cv;
    int limit = 8;
    int active = 0;

    void enter() {
        std::unique_lock<std::mutex> lock(m);
        cv.wait(lock, [&] { return active < limit; });
        ++active;
    }
    void leave() {
        {
            std::lock_guard<std::mutex> lock(m);
            --active;
        }
        cv.notify_one();
    }
};

SandboxGate& gate() {
    static SandboxGate g;
    return g;
}

struct GateScope {
    GateScope() { gate().enter(); }
    ~GateScope() { gate().leave(); }
};

struct ScratchDir {
    fs::path path;
    ScratchDir() {
        std::string tmpl = (fs::temp_directory_path() / "alch_exec_XXXXXX").string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (!mkdtemp(buf.data())) throw PipelineError("cannot create scratch directory");
        path = buf.data();
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

bool probe_unshare() {
    ExecLimits limits;
    limits.timeout_seconds = 5.0;
    limits.isolate_network = false;
    auto r = run_subprocess({"unshare", "-r", "-n", "true"}, fs::temp_directory_path(), limits);
    return !r.timed_out && !r.signaled && r.exit_code == 0;
}

bool unshare_available() {
    static bool available = probe_unshare();
    return available;
}

std::string tail(const std::string& s, size_t n) {
    return s.size() <= n ? s : s.substr(s.size() - n);
}

std::vector<std::string> expand_template(const std::vector<std::string>& argv,
                                         const std::string& file) {
    std::vector<std::string> out;
    out.reserve(argv.size());
    for (const auto& a : argv) {
        std::string piece = a;
        size_t pos;
        while ((pos = piece.find("{file}")) != std::string::npos)
            piece.replace(pos, 6, file);
        out.push_back(piece);
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

ExecutionResult from_raw(const RawRun& raw, const ExecLimits& limits, bool is_compile_step) {
    ExecutionResult result;
    result.stderr_excerpt = tail(raw.err, 2000);
    result.stdout_excerpt = tail(raw.out, 2000);
    result.output_truncated = raw.truncated;
    result.wall_seconds = raw.wall_seconds;
    result.network_isolated = raw.network_isolated;
    if (raw.timed_out) {
        result.status = RunStatus::Timeout;
        result.exit_info = "timeout after " + std::to_string(limits.timeout_seconds) + "s";
        return result;
    }
    if (raw.signaled) {
        result.status = is_compile_step ? RunStatus::CompileError : RunStatus::RuntimeError;
        result.exit_info = "signal " + std::to_string(raw.signal_number);
        return result;
    }
    result.exit_info = "exit " + std::to_string(raw.exit_code);
    if (raw.exit_code == 0) {
        result.status = RunStatus::Success;
    } else if (is_compile_step) {
        result.status = RunStatus::CompileError;
    } else if (raw.err.find("AssertionError") != std::string::npos) {
        result.status = RunStatus::TestFailure;
    } else {
        result.status = RunStatus::RuntimeError;
    }
    return result;
}

}  // namespace

std::string run_status_name(RunStatus status) {
    switch (status) {
        case RunStatus::Success: return "Success";
        case RunStatus::CompileError: return "CompileError";
        case RunStatus::RuntimeError: return "RuntimeError";
        case RunStatus::TestFailure: return "TestFailure";
        case RunStatus::Timeout: return "Timeout";
        case RunStatus::ExecutorUnavailable: return "ExecutorUnavailable";
    }
    return "Unknown";
}

void register_executor(const ExecutorSpec& spec) {
    std::lock_guard<std::mutex> lock(g_registry_mutex);
    g_executors[spec.language] = spec;
}

void unregister_all_executors() {
    std::lock_guard<std::mutex> lock(g_registry_mutex);
    g_executors.clear();
}

bool executor_registered(const std::string& language) {
    std::lock_guard<std::mutex> lock(g_registry_mutex);
    return g_executors.count(language) > 0;
}

ExecutorSpec python_executor_spec() {
    ExecutorSpec spec;
    spec.language = "python";
    spec.file_extension = ".py";
    spec.compile_argv = {"python3", "-I", "-m", "py_compile", "{file}"};
    spec.run_argv = {"python3", "-I", "{file}"};
    return spec;
}

bool python3_available() {
    ExecLimits limits;
    limits.timeout_seconds = 5.0;
    limits.isolate_network = false;
    auto r = run_subprocess({"python3", "-c", "pass"}, fs::temp_directory_path(), limits);
    return !r.timed_out && !r.signaled && r.exit_code == 0;
}

void set_executor_concurrency(int max_parallel) {
    if (max_parallel < 1) max_parallel = 1;
    {
        std::lock_guard<std::mutex> lock(gate().m);
        gate().limit = max_parallel;
    }
    gate().cv.notify_all();
}

RawRun run_subprocess(const std::vector<std::string>& argv, const fs::path& workdir,
                      const ExecLimits& limits) {
    RawRun result;
    std::vector<std::string> full = argv;
    if (limits.isolate_network && unshare_available()) {
        full.insert(full.begin(), {"unshare", "-r", "-n"});
        result.network_isolated = true;
    }

    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
        throw PipelineError("pipe creation failed");

    auto start = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) throw PipelineError("fork failed");

    if (pid == 0) {
        setpgid(0, 0);
        if (chdir(workdir.c_str()) != 0) _exit(126);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        int devnull = open("/dev/null", O_RDONLY);
        if (devnull >= 0) dup2(devnull, STDIN_FILENO);
        std::vector<char*> cargv;
        for (auto& a : full) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        execvp(cargv[0], cargv.data());
        _exit(127);
    }

    close(out_pipe[1]);
    close(err_pipe[1]);

    struct pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    std::string* sinks[2] = {&result.out, &result.err};
    bool open_fd[2] = {true, true};
    auto deadline = start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                std::chrono::duration<double>(limits.timeout_seconds));

    char buf[4096];
    while (open_fd[0] || open_fd[1]) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            kill(-pid, SIGKILL);
            kill(pid, SIGKILL);
            break;
        }
        int wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        fds[0].fd = open_fd[0] ? out_pipe[0] : -1;
        fds[1].fd = open_fd[1] ? err_pipe[0] : -1;
        int rc = poll(fds, 2, std::max(wait_ms, 1));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (rc == 0) continue;  // re-check deadline
        for (int i = 0; i < 2; ++i) {
            if (!open_fd[i] || fds[i].revents == 0) continue;
            ssize_t n = read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                size_t room = limits.max_output_bytes > sinks[i]->size()
                                  ? limits.max_output_bytes - sinks[i]->size()
                                  : 0;
                if (static_cast<size_t>(n) > room) {
                    result.truncated = true;
                    sinks[i]->append(buf, room);
                } else {
                    sinks[i]->append(buf, static_cast<size_t>(n));
                }
            } else {
                close(fds[i].fd);
                open_fd[i] = false;
            }
        }
    }
    if (open_fd[0]) close(out_pipe[0]);
    if (open_fd[1]) close(err_pipe[0]);

    int status = 0;
    waitpid(pid, &status, 0);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!result.timed_out) {
        if (WIFEXITED(status)) {
            result.exit_code = WEXITSTATUS(status);
        } else if (WIFSIGNALED(status)) {
            result.signaled = true;
            result.signal_number = WTERMSIG(status);
        }
    }
    return result;
}

ExecutionResult execute_code(const CodeBlock& block, const std::vector<std::string>& tests,
                             const ExecLimits& limits) {
    std::string language = block.language.empty() ? "unknown" : block.language;
    ExecutorSpec spec;
    {
        std::lock_guard<std::mutex> lock(g_registry_mutex);
        auto it = g_executors.find(language);
        if (it == g_executors.end()) throw ExecutorUnavailable(language);
        spec = it->second;
    }

    GateScope scope;
    ScratchDir scratch;
    fs::path code_file = scratch.path / ("snippet" + spec.file_extension);
    write_text(code_file, block.code);

    auto compile_raw =
        run_subprocess(expand_template(spec.compile_argv, code_file.string()), scratch.path, limits);
    ExecutionResult compile_result = from_raw(compile_raw, limits, true);
    if (compile_result.status != RunStatus::Success) return compile_result;
    if (tests.empty() || limits.compile_only || spec.run_argv.empty()) return compile_result;

    std::string with_tests = block.code;
    if (!with_tests.empty() && with_tests.back() != '\n') with_tests += '\n';
    for (const auto& t : tests) {
        with_tests += t;
        with_tests += '\n';
    }
    fs::path test_file = scratch.path / ("snippet_test" + spec.file_extension);
    write_text(test_file, with_tests);
    auto run_raw =
        run_subprocess(expand_template(spec.run_argv, test_file.string()), scratch.path, limits);
    return from_raw(run_raw, limits, false);
}

}  // namespace alchemist
