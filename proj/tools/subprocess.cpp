#include "subprocess.hpp"

#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

namespace mazefl::cli {

namespace {

using Deadline = std::chrono::time_point<std::chrono::steady_clock,
                                         std::chrono::duration<double>>;

Deadline deadline_in(double seconds) {
    return std::chrono::steady_clock::now() +
           std::chrono::duration<double>(seconds);
}

double seconds_until(Deadline deadline) {
    return std::chrono::duration<double>(deadline -
                                         std::chrono::steady_clock::now())
        .count();
}

}  // namespace

Child spawn(const std::vector<std::string>& args, bool pipe_stdout) {
    if (args.empty()) {
        throw InvalidArgument("spawn needs at least an executable");
    }
    int fds[2] = {-1, -1};
    if (pipe_stdout && ::pipe(fds) < 0) {
        throw IoError(std::string("pipe: ") + std::strerror(errno));
    }
    pid_t pid = ::fork();
    if (pid < 0) {
        throw IoError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
        if (pipe_stdout) {
            ::dup2(fds[1], STDOUT_FILENO);
            ::close(fds[0]);
            ::close(fds[1]);
        }
        std::vector<char*> argv;
        argv.reserve(args.size() + 1);
        for (const std::string& a : args) {
            argv.push_back(const_cast<char*>(a.c_str()));
        }
        argv.push_back(nullptr);
        ::execv(argv[0], argv.data());
        ::_exit(127);
    }
    if (pipe_stdout) {
        ::close(fds[1]);
    }
    return {pid, pipe_stdout ? fds[0] : -1};
}

int wait_child(Child& child) {
    close_fd(child);
    int status = 0;
    for (;;) {
        if (::waitpid(child.pid, &status, 0) >= 0) {
            break;
        }
        if (errno != EINTR) {
            throw IoError(std::string("waitpid: ") + std::strerror(errno));
        }
    }
    child.pid = -1;
    if (WIFEXITED(status)) {
        return WEXITSTATUS(status);
    }
    if (WIFSIGNALED(status)) {
        return 128 + WTERMSIG(status);
    }
    return -1;
}

namespace {

// Returns false on EOF; throws on timeout/error.
bool read_byte(int fd, double timeout_s, char& c) {
    pollfd p{fd, POLLIN, 0};
    for (;;) {
        int r = ::poll(&p, 1, static_cast<int>(timeout_s * 1000.0));
        if (r > 0) {
            break;
        }
        if (r == 0) {
            throw SubprocessError("timed out reading from child");
        }
        if (errno != EINTR) {
            throw IoError(std::string("poll: ") + std::strerror(errno));
        }
    }
    ssize_t n = ::read(fd, &c, 1);
    if (n < 0) {
        throw IoError(std::string("read: ") + std::strerror(errno));
    }
    return n == 1;
}

}  // namespace

std::string read_line_fd(int fd, double timeout_s) {
    Deadline deadline = deadline_in(timeout_s);
    std::string line;
    char c = 0;
    for (;;) {
        double left = seconds_until(deadline);
        if (left <= 0.0) {
            throw SubprocessError("timed out reading from child");
        }
        if (!read_byte(fd, left, c)) {
            throw SubprocessError("child closed its output before a full line"
                                  " (got \"" + line + "\")");
        }
        if (c == '\n') {
            return line;
        }
        line.push_back(c);
    }
}

std::string drain_fd(int fd, double timeout_s) {
    Deadline deadline = deadline_in(timeout_s);
    std::string all;
    char c = 0;
    for (;;) {
        double left = seconds_until(deadline);
        if (left <= 0.0) {
            return all;
        }
        try {
            if (!read_byte(fd, left, c)) {
                return all;
            }
        } catch (const SubprocessError&) {
            return all;  // timeout: hand back what arrived
        }
        all.push_back(c);
    }
}

void close_fd(Child& child) {
    if (child.out_fd >= 0) {
        ::close(child.out_fd);
        child.out_fd = -1;
    }
}

}  // namespace mazefl::cli
