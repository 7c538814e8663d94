#include "openrgbt/transport.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "httplib.h"
#include "openrgbt/error.hpp"

namespace openrgbt {

ProcessTransport::ProcessTransport(std::string command, std::chrono::milliseconds timeout)
    : command_(std::move(command)), timeout_(timeout) {
    if (command_.empty()) {
        throw ConfigError("process transport needs a command");
    }
}

ProcessTransport::~ProcessTransport() { stop(); }

void ProcessTransport::start() {
    int fds[2];
    if (socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
        throw BackendError({}, std::string("socketpair: ") + std::strerror(errno), true);
    }
    const pid_t pid = fork();
    if (pid < 0) {
        close(fds[0]);
        close(fds[1]);
        throw BackendError({}, std::string("fork: ") + std::strerror(errno), true);
    }
    if (pid == 0) {
        dup2(fds[1], STDIN_FILENO);
        dup2(fds[1], STDOUT_FILENO);
        execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(fds[1]);
    fd_ = fds[0];
    pid_ = pid;
    buffer_.clear();
}

void ProcessTransport::stop() noexcept {
    if (fd_ >= 0) {
        close(fd_);
        fd_ = -1;
    }
    if (pid_ > 0) {
        // Closing the socket ends a well-behaved server; give it a moment.
        for (int i = 0; i < 50; ++i) {
            if (waitpid(pid_, nullptr, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
        }
        kill(pid_, SIGKILL);
        waitpid(pid_, nullptr, 0);
        pid_ = -1;
    }
}

std::string ProcessTransport::exchange(const std::string& request_id, const std::string& line) {
    if (fd_ < 0) {
        start();
    }
    auto fail = [&](const std::string& what) -> BackendError {
        stop();
        return BackendError(request_id, describe() + ": " + what, true);
    };

    std::string out = line;
    out.push_back('\n');
    std::size_t sent = 0;
    while (sent < out.size()) {
        const ssize_t n = send(fd_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) {
                continue;
            }
            throw fail(std::string("write failed: ") + std::strerror(errno));
        }
        sent += static_cast<std::size_t>(n);
    }

    const auto deadline = std::chrono::steady_clock::now() + timeout_;
    char chunk[65536];
    for (;;) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string reply = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return reply;
        }
        const auto remaining =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            throw fail("timed out after " + std::to_string(timeout_.count()) + " ms");
        }
        pollfd pfd{fd_, POLLIN, 0};
        const int ready = poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (ready < 0 && errno == EINTR) {
            continue;
        }
        if (ready < 0) {
            throw fail(std::string("poll failed: ") + std::strerror(errno));
        }
        if (ready == 0) {
            continue;
        }
        const ssize_t n = recv(fd_, chunk, sizeof(chunk), 0);
        if (n < 0 && errno == EINTR) {
            continue;
        }
        if (n <= 0) {
            throw fail("backend process closed the connection");
        }
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

HttpTransport::HttpTransport(std::string url, std::chrono::milliseconds timeout)
    : url_(std::move(url)), timeout_(timeout) {
    const auto scheme = url_.find("://");
    if (scheme == std::string::npos || url_.substr(0, scheme) != "http") {
        throw ConfigError("HTTP backend URL must start with http:// (got '" + url_ + "')");
    }
    const auto slash = url_.find('/', scheme + 3);
    origin_ = url_.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : url_.substr(slash);
}

std::string HttpTransport::exchange(const std::string& request_id, const std::string& line) {
    httplib::Client client(origin_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    auto res = client.Post(path_, line, "application/json");
    if (!res) {
        throw BackendError(request_id, url_ + ": " + httplib::to_string(res.error()), true);
    }
    if (res->status != 200) {
        throw BackendError(request_id, url_ + ": HTTP status " + std::to_string(res->status), true);
    }
    std::string body = res->body;
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) {
        body.pop_back();
    }
    return body;
}

std::unique_ptr<Transport> make_transport(const std::string& endpoint, std::chrono::milliseconds timeout) {
    if (endpoint.rfind("process:", 0) == 0) {
        return std::make_unique<ProcessTransport>(endpoint.substr(8), timeout);
    }
    if (endpoint.rfind("http://", 0) == 0) {
        return std::make_unique<HttpTransport>(endpoint, timeout);
    }
    throw ConfigError("unsupported backend endpoint '" + endpoint + "' (expected process:<cmd> or http://...)");
}

} // namespace openrgbt
