#pragma once

#include <string>
#include <vector>

#include "mazefl/errors.hpp"

namespace mazefl::cli {

// A CLI child process failed or misbehaved.
struct SubprocessError : Error {
    explicit SubprocessError(const std::string& message)
        : Error("SubprocessError", message) {}
};

struct Child {
    pid_t pid = -1;
    int out_fd = -1;  // read end of the stdout pipe, -1 if inherited
};

// fork+exec; args[0] is the executable path. With pipe_stdout the
// child's stdout is captured on Child::out_fd; stderr is inherited.
Child spawn(const std::vector<std::string>& args, bool pipe_stdout);

// Reaps the child: exit status, or 128+signal when it was killed.
int wait_child(Child& child);

// Reads one '\n'-terminated line (returned without it). Throws
// SubprocessError on EOF or after timeout_s.
std::string read_line_fd(int fd, double timeout_s);

// Reads until EOF or timeout; returns what arrived.
std::string drain_fd(int fd, double timeout_s);

void close_fd(Child& child);

}  // namespace mazefl::cli
