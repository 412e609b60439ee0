#pragma once

// Adapter for an out-of-process environment speaking newline-delimited JSON
// over the child's stdin/stdout.
//
//   -> {"op":"info"}
//   <- {"query_count":int,"retrieve_cost_hint":float,"generate_cost_hint":float,"space":[ParamSpec...]}
//   -> {"op":"retrieve","config":{...},"seed":int}
//   <- {"precision":float,"context_id":string,"cost":float}
//   -> {"op":"generate","config":{...},"context_id":string,"seed":int}
//   <- {"score":float,"cost":float}
//   -> {"op":"shutdown"}
//   <- {}

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "environment.hpp"
#include "json.hpp"

namespace dualcycle {

/// A child process with line-oriented pipes. Killed and reaped on destruction.
class ChildProcess {
 public:
  ChildProcess(const std::vector<std::string>& argv, const std::filesystem::path& working_dir) {
    if (argv.empty()) throw EnvironmentFault("external environment command is empty");
    ::signal(SIGPIPE, SIG_IGN);
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw EnvironmentFault(std::string("pipe: ") + std::strerror(errno));
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw EnvironmentFault(std::string("pipe: ") + std::strerror(errno));
    }
    // Reports exec failure back to the parent through a close-on-exec pipe.
    int exec_status[2];
    if (::pipe2(exec_status, O_CLOEXEC) != 0) throw EnvironmentFault(std::string("pipe: ") + std::strerror(errno));

    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    const std::string dir = working_dir.string();

    pid_ = ::fork();
    if (pid_ < 0) throw EnvironmentFault(std::string("fork: ") + std::strerror(errno));
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::close(exec_status[0]);
      if (!dir.empty() && ::chdir(dir.c_str()) != 0) {
        const int err = errno;
        [[maybe_unused]] auto n = ::write(exec_status[1], &err, sizeof err);
        ::_exit(127);
      }
      ::execvp(args[0], args.data());
      const int err = errno;
      [[maybe_unused]] auto n = ::write(exec_status[1], &err, sizeof err);
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::close(exec_status[1]);
    in_ = to_child[1];
    out_ = from_child[0];
    int err = 0;
    const auto n = ::read(exec_status[0], &err, sizeof err);
    ::close(exec_status[0]);
    if (n == static_cast<ssize_t>(sizeof err)) {
      reap(true);
      throw EnvironmentFault("cannot launch '" + argv[0] + "': " + std::strerror(err));
    }
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() { reap(true); }

  void write_line(const std::string& line) {
    std::string data = line + "\n";
    const char* p = data.data();
    std::size_t left = data.size();
    while (left > 0) {
      const auto n = ::write(in_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw EnvironmentFault("external environment closed its input (" + std::string(std::strerror(errno)) + ")" +
                               exit_note());
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
  }

  /// Next line from the child's stdout, without the newline.
  std::string read_line(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0)
        throw EnvironmentFault("timed out after " + std::to_string(timeout.count()) + " ms waiting for a reply");
      pollfd pfd{out_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1000)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw EnvironmentFault(std::string("poll: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[4096];
      const auto n = ::read(out_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw EnvironmentFault(std::string("read: ") + std::strerror(errno));
      }
      if (n == 0) throw EnvironmentFault("external environment closed its output" + exit_note());
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Closes stdin and waits briefly for a voluntary exit before killing.
  void reap(bool force) {
    if (pid_ <= 0) return;
    if (in_ >= 0) {
      ::close(in_);
      in_ = -1;
    }
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        break;
      }
      ::usleep(10000);
    }
    if (pid_ > 0 && force) {
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
      pid_ = -1;
    }
    if (out_ >= 0) {
      ::close(out_);
      out_ = -1;
    }
  }

 private:
  std::string exit_note() {
    if (pid_ <= 0) return {};
    int status = 0;
    for (int i = 0; i < 20; ++i) {
      if (::waitpid(pid_, &status, WNOHANG) == pid_) {
        pid_ = -1;
        if (WIFEXITED(status)) return "; child exited with status " + std::to_string(WEXITSTATUS(status));
        if (WIFSIGNALED(status)) return "; child killed by signal " + std::to_string(WTERMSIG(status));
        return "; child terminated";
      }
      ::usleep(5000);
    }
    return {};
  }

  pid_t pid_ = -1;
  int in_ = -1;
  int out_ = -1;
  std::string buffer_;
};

struct ExternalParams {
  std::vector<std::string> command;
  double timeout_s = 600.0;
  std::filesystem::path working_dir;
};

class ExternalEnvironment final : public Environment {
 public:
  explicit ExternalEnvironment(ExternalParams params)
      : params_(std::move(params)), child_(params_.command, params_.working_dir) {
    const auto reply = call({{"op", "info"}});
    try {
      info_.query_count = reply.at("query_count").get<std::size_t>();
      info_.retrieve_cost_hint = reply.at("retrieve_cost_hint").get<double>();
      info_.generate_cost_hint = reply.at("generate_cost_hint").get<double>();
      info_.space = space_from_json(reply.at("space"));
    } catch (const std::exception& e) {
      throw EnvironmentFault(std::string("malformed info reply: ") + e.what() + " in " + reply.dump());
    }
    if (!(info_.retrieve_cost_hint > 0.0) || !(info_.generate_cost_hint > 0.0))
      throw EnvironmentFault("info reply has non-positive cost hints");
  }

  ~ExternalEnvironment() override {
    try {
      if (alive_) {
        child_.write_line(nlohmann::json{{"op", "shutdown"}}.dump());
        child_.read_line(std::chrono::milliseconds(2000));
      }
    } catch (...) {
    }
    child_.reap(true);
  }

  const EnvironmentInfo& info() const override { return info_; }

  /// One request/response exchange. Any protocol violation is a fault.
  nlohmann::json call(const nlohmann::json& request) {
    if (!alive_) throw EnvironmentFault("external environment is no longer running");
    try {
      child_.write_line(request.dump());
      const auto timeout = std::chrono::milliseconds(static_cast<long long>(params_.timeout_s * 1000.0));
      const std::string line = child_.read_line(timeout);
      nlohmann::json reply;
      try {
        reply = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception&) {
        throw EnvironmentFault("unparseable reply from external environment: '" + line + "'");
      }
      if (!reply.is_object()) throw EnvironmentFault("reply is not a JSON object: '" + line + "'");
      if (reply.contains("error"))
        throw EnvironmentFault("external environment reported an error: " + reply["error"].dump());
      return reply;
    } catch (const EnvironmentFault&) {
      alive_ = false;
      throw;
    }
  }

 protected:
  RetrievalResult do_retrieve(const Configuration& phi, std::uint64_t run_seed) override {
    const auto reply = call({{"op", "retrieve"}, {"config", to_json(phi)}, {"seed", run_seed}});
    try {
      return {reply.at("context_id").get<std::string>(), reply.at("precision").get<double>(),
              reply.at("cost").get<double>()};
    } catch (const nlohmann::json::exception& e) {
      alive_ = false;
      throw EnvironmentFault(std::string("malformed retrieve reply: ") + e.what() + " in " + reply.dump());
    }
  }

  GenerationResult do_generate(const Configuration& theta, const std::string& handle,
                               std::uint64_t run_seed) override {
    const auto reply =
        call({{"op", "generate"}, {"config", to_json(theta)}, {"context_id", handle}, {"seed", run_seed}});
    try {
      return {reply.at("score").get<double>(), reply.at("cost").get<double>()};
    } catch (const nlohmann::json::exception& e) {
      alive_ = false;
      throw EnvironmentFault(std::string("malformed generate reply: ") + e.what() + " in " + reply.dump());
    }
  }

 private:
  ExternalParams params_;
  ChildProcess child_;
  EnvironmentInfo info_;
  bool alive_ = true;
};

}  // namespace dualcycle
