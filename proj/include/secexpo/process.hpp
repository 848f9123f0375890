// Minimal subprocess runner with stdout capture and a hard timeout (POSIX).
#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <string>
#include <vector>

#include "secexpo/common.hpp"

namespace secexpo {

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    bool spawn_failed = false;  // e.g. binary not found
    std::string output;         // stdout only
};

inline ProcessResult run_process(const std::vector<std::string>& argv,
                                 double timeout_s = 30.0) {
    if (argv.empty()) throw ConfigError("run_process: empty argv");
    int out_pipe[2];
    if (pipe(out_pipe) != 0) throw ToolError("run_process: pipe() failed");

    pid_t pid = fork();
    if (pid < 0) throw ToolError("run_process: fork() failed");
    if (pid == 0) {
        dup2(out_pipe[1], STDOUT_FILENO);
        if (int devnull = open("/dev/null", O_WRONLY); devnull >= 0)
            dup2(devnull, STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        std::vector<char*> cargv;
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);
        execvp(cargv[0], cargv.data());
        _exit(127);  // exec failed
    }
    close(out_pipe[1]);

    ProcessResult result;
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(timeout_s));
    char buf[4096];
    bool open = true;
    while (open) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                             deadline - std::chrono::steady_clock::now())
                             .count();
        if (remaining <= 0) {
            result.timed_out = true;
            kill(pid, SIGKILL);
            break;
        }
        pollfd pfd{out_pipe[0], POLLIN, 0};
        int rc = poll(&pfd, 1, static_cast<int>(remaining));
        if (rc <= 0) continue;
        ssize_t n = read(out_pipe[0], buf, sizeof(buf));
        if (n > 0)
            result.output.append(buf, static_cast<size_t>(n));
        else
            open = false;
    }
    close(out_pipe[0]);

    int status = 0;
    waitpid(pid, &status, 0);
    if (result.timed_out) {
        result.exit_code = -1;
    } else if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
        if (result.exit_code == 127) result.spawn_failed = true;
    } else {
        result.exit_code = -1;
    }
    return result;
}

}  // namespace secexpo
