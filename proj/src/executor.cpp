#include "pentagent/executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <pty.h>
#include <signal.h>
#include <sys/ioctl.h>
#include <sys/wait.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "pentagent/llm_gateway.hpp"

namespace pentagent::exec {

using SteadyClock = std::chrono::steady_clock;

std::string CommandRecord::exit_marker() const {
  if (timed_out || !exit_code.has_value()) return "timeout";
  return "exit=" + std::to_string(*exit_code);
}

nlohmann::json command_record_to_json(const CommandRecord& record) {
  nlohmann::json j;
  j["id"] = record.id;
  j["command"] = record.command;
  j["stdout"] = record.stdout_text;
  j["stderr"] = record.stderr_text;
  if (record.exit_code) {
    j["exit_code"] = *record.exit_code;
  } else {
    j["exit_code"] = nullptr;
  }
  j["timed_out"] = record.timed_out;
  j["duration_ms"] = record.duration_ms;
  if (record.analysis) {
    j["analysis"] = *record.analysis;
  } else {
    j["analysis"] = nullptr;
  }
  j["timestamp"] = util::iso8601_utc(record.timestamp);
  return j;
}

CommandRecord command_record_from_json(const nlohmann::json& j) {
  CommandRecord record;
  record.id = j.value("id", 0);
  record.command = j.value("command", "");
  record.stdout_text = j.value("stdout", "");
  record.stderr_text = j.value("stderr", "");
  if (j.contains("exit_code") && !j["exit_code"].is_null()) {
    record.exit_code = j["exit_code"].get<int>();
  }
  record.timed_out = j.value("timed_out", false);
  record.duration_ms = j.value("duration_ms", 0LL);
  if (j.contains("analysis") && !j["analysis"].is_null()) {
    record.analysis = j["analysis"].get<std::string>();
  }
  return record;
}

namespace {

void scrub_environment(const std::vector<std::string>& names) {
  for (const std::string& name : names) {
    ::unsetenv(name.c_str());
  }
}

void set_nonblocking(int fd) {
  const int flags = ::fcntl(fd, F_GETFL, 0);
  ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
}

std::optional<int> exit_code_from_status(int status) {
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  if (WIFSIGNALED(status)) return 128 + WTERMSIG(status);
  return std::nullopt;
}

}  // namespace

CommandRecord run_command(const std::string& command, int timeout_s,
                          const ExecOptions& options) {
  CommandRecord record;
  record.command = command;
  record.timestamp = std::chrono::system_clock::now();

  int out_pipe[2];
  int err_pipe[2];
  if (::pipe(out_pipe) != 0) {
    throw ExecError("pipe() failed: " + std::string(std::strerror(errno)));
  }
  if (::pipe(err_pipe) != 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    throw ExecError("pipe() failed: " + std::string(std::strerror(errno)));
  }

  const auto started = SteadyClock::now();
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    throw ExecError("fork() failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    for (int fd : {out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    scrub_environment(options.scrub_env);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }

  ::setpgid(pid, pid);  // best effort; the child does the same
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  set_nonblocking(out_pipe[0]);
  set_nonblocking(err_pipe[0]);

  const auto deadline = started + std::chrono::seconds(timeout_s);
  bool out_open = true;
  bool err_open = true;
  char buf[4096];

  while (out_open || err_open) {
    if (SteadyClock::now() >= deadline) {
      record.timed_out = true;
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      break;
    }
    struct pollfd fds[2];
    nfds_t nfds = 0;
    if (out_open) fds[nfds++] = {out_pipe[0], POLLIN, 0};
    if (err_open) fds[nfds++] = {err_pipe[0], POLLIN, 0};
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - SteadyClock::now());
    const int wait_ms =
        static_cast<int>(std::max<long long>(0, std::min<long long>(remaining.count(), 100)));
    const int ready = ::poll(fds, nfds, wait_ms);
    if (ready <= 0) continue;
    for (nfds_t i = 0; i < nfds; ++i) {
      if (!(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t n = ::read(fds[i].fd, buf, sizeof(buf));
      const bool is_out = (fds[i].fd == out_pipe[0]);
      if (n > 0) {
        (is_out ? record.stdout_text : record.stderr_text).append(buf, static_cast<size_t>(n));
      } else if (n == 0 || (n < 0 && errno != EAGAIN && errno != EINTR)) {
        if (is_out) {
          out_open = false;
        } else {
          err_open = false;
        }
      }
    }
  }

  // Drain whatever arrived between the last poll and the kill.
  for (int fd : {out_pipe[0], err_pipe[0]}) {
    ssize_t n;
    while ((n = ::read(fd, buf, sizeof(buf))) > 0) {
      (fd == out_pipe[0] ? record.stdout_text : record.stderr_text)
          .append(buf, static_cast<size_t>(n));
    }
    ::close(fd);
  }

  int status = 0;
  ::waitpid(pid, &status, 0);
  record.duration_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           SteadyClock::now() - started)
                           .count();
  if (!record.timed_out) {
    record.exit_code = exit_code_from_status(status);
  }
  return record;
}

// ---------------------------------------------------------------------------
// Interactivity classification

namespace {

const std::set<std::string>& always_interactive_programs() {
  static const std::set<std::string> kPrograms = {
      "msfconsole", "smbclient", "ssh", "sftp", "ftp", "telnet", "sudo", "su",
  };
  return kPrograms;
}

const std::set<std::string>& bare_interactive_programs() {
  // Interactive only when started without arguments (REPLs and shells).
  static const std::set<std::string> kPrograms = {
      "sh", "bash", "zsh", "dash", "python", "python3", "irb", "mysql", "psql", "gdb",
  };
  return kPrograms;
}

std::string basename_of(std::string token) {
  if (const size_t slash = token.rfind('/'); slash != std::string::npos) {
    token = token.substr(slash + 1);
  }
  return token;
}

}  // namespace

Interactivity classify_interactivity(const std::string& command, llm::Gateway* gateway,
                                     bool llm_fallback) {
  std::vector<std::string> segments;
  std::string current;
  for (char c : command) {
    if (c == '|' || c == ';' || c == '&') {
      segments.push_back(current);
      current.clear();
    } else {
      current += c;
    }
  }
  segments.push_back(current);

  for (const std::string& segment : segments) {
    const std::vector<std::string> tokens = util::split_ws(segment);
    if (tokens.empty()) continue;
    const std::string program = basename_of(tokens[0]);
    if (always_interactive_programs().count(program) != 0) {
      return Interactivity::Interactive;
    }
    if (bare_interactive_programs().count(program) != 0) {
      if (tokens.size() == 1) return Interactivity::Interactive;
      for (size_t i = 1; i < tokens.size(); ++i) {
        if (tokens[i] == "-i") return Interactivity::Interactive;
      }
    }
  }

  if (llm_fallback && gateway != nullptr) {
    llm::CompletionRequest request;
    request.prompt = "Does the following shell command start an interactive program that "
                     "waits for keyboard input (answer exactly yes or no)?\n\n" +
                     command + "\n";
    request.max_output_tokens = 8;
    try {
      const llm::Completion completion = gateway->complete(request);
      if (util::contains_ci(completion.text, "yes")) return Interactivity::Interactive;
    } catch (const GatewayError&) {
      // fall through: unknown commands default to non-interactive
    }
  }
  return Interactivity::NonInteractive;
}

// ---------------------------------------------------------------------------
// Expect-style interactive sessions

std::string session_state_name(SessionState state) {
  switch (state) {
    case SessionState::Running:
      return "Running";
    case SessionState::Completed:
      return "Completed";
    case SessionState::TimedOut:
      return "TimedOut";
    case SessionState::Failed:
      return "Failed";
  }
  return "Unknown";
}

InteractiveSession run_interactive_script(const std::string& command,
                                          const std::vector<ExpectRule>& rules,
                                          int overall_timeout_s, const ExpectOptions& options) {
  if (rules.empty()) {
    throw std::invalid_argument("interactive script needs at least one expect rule");
  }
  std::vector<std::regex> compiled;
  compiled.reserve(rules.size());
  bool has_terminal = false;
  for (const ExpectRule& rule : rules) {
    try {
      compiled.emplace_back(rule.pattern);
    } catch (const std::regex_error& e) {
      throw std::invalid_argument("expect pattern '" + rule.pattern +
                                  "' does not compile: " + e.what());
    }
    has_terminal = has_terminal || rule.terminal;
  }
  if (!has_terminal) {
    throw std::invalid_argument("expect rule set has no terminal rule");
  }

  struct winsize ws {};
  ws.ws_row = options.rows;
  ws.ws_col = options.cols;

  int master = -1;
  const pid_t pid = ::forkpty(&master, nullptr, nullptr, &ws);
  if (pid < 0) {
    throw ExecError("forkpty() failed: " + std::string(std::strerror(errno)));
  }
  if (pid == 0) {
    scrub_environment(options.scrub_env);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }

  InteractiveSession session;
  session.poll_interval_ms = options.poll_interval_ms;

  std::mutex mu;
  std::condition_variable cv;
  std::string pending;      // bytes read but not yet moved into the transcript
  bool reader_eof = false;  // reader -> main: child side of the pty is gone
  bool stop_reader = false;  // main -> reader: session over, stand down

  std::thread reader([&] {
    char buf[4096];
    for (;;) {
      {
        std::lock_guard<std::mutex> lock(mu);
        if (stop_reader) break;
      }
      struct pollfd pfd {master, POLLIN, 0};
      const int ready = ::poll(&pfd, 1, 50);
      if (ready < 0 && errno == EINTR) continue;
      if (ready == 0) continue;
      if (ready > 0 && (pfd.revents & POLLIN)) {
        const ssize_t n = ::read(master, buf, sizeof(buf));
        if (n > 0) {
          std::lock_guard<std::mutex> lock(mu);
          pending.append(buf, static_cast<size_t>(n));
          cv.notify_all();
          continue;
        }
      }
      // poll error, EOF, or EIO: the child side of the pty is gone.
      std::lock_guard<std::mutex> lock(mu);
      reader_eof = true;
      cv.notify_all();
      break;
    }
  });

  const auto started = SteadyClock::now();
  const auto deadline = started + std::chrono::seconds(overall_timeout_s);
  size_t consumed = 0;

  std::unique_lock<std::mutex> lock(mu);
  while (session.state == SessionState::Running) {
    if (!pending.empty()) {
      session.transcript += pending;
      pending.clear();
      if (options.on_transcript) {
        const std::string snapshot = session.transcript;
        lock.unlock();
        options.on_transcript(snapshot);
        lock.lock();
      }
    }

    // Rules in declaration order against the unconsumed transcript; loop so
    // several rules can fire on one batch of output.
    bool matched = true;
    while (matched && session.state == SessionState::Running) {
      matched = false;
      for (size_t i = 0; i < rules.size(); ++i) {
        std::smatch m;
        const std::string window = session.transcript.substr(consumed);
        if (!std::regex_search(window, m, compiled[i])) continue;
        consumed += static_cast<size_t>(m.position(0) + m.length(0));
        if (!rules[i].send.empty()) {
          size_t written = 0;
          while (written < rules[i].send.size()) {
            const ssize_t n = ::write(master, rules[i].send.data() + written,
                                      rules[i].send.size() - written);
            if (n <= 0) break;
            written += static_cast<size_t>(n);
          }
        }
        if (rules[i].terminal) {
          session.state = SessionState::Completed;
        }
        matched = true;
        break;
      }
    }
    if (session.state != SessionState::Running) break;

    if (reader_eof && pending.empty()) {
      session.state = SessionState::Failed;  // child went away before a terminal match
      break;
    }
    if (SteadyClock::now() >= deadline) {
      session.state = SessionState::TimedOut;
      break;
    }

    const auto remaining =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - SteadyClock::now());
    const auto wait = std::min<std::chrono::milliseconds>(
        std::chrono::milliseconds(options.poll_interval_ms),
        std::max<std::chrono::milliseconds>(std::chrono::milliseconds(1), remaining));
    cv.wait_for(lock, wait);
  }

  // Absorb any output that raced with the state change.
  if (!pending.empty()) {
    session.transcript += pending;
    pending.clear();
    if (options.on_transcript) {
      const std::string snapshot = session.transcript;
      lock.unlock();
      options.on_transcript(snapshot);
      lock.lock();
    }
  }
  const bool child_side_closed = reader_eof;
  stop_reader = true;
  lock.unlock();

  ::kill(-pid, SIGKILL);
  ::kill(pid, SIGKILL);
  reader.join();
  ::close(master);
  int status = 0;
  ::waitpid(pid, &status, 0);
  // Only a child that finished on its own gets an exit code; sessions we
  // killed (terminal match or timeout) carry none.
  if (child_side_closed) {
    session.exit_code = exit_code_from_status(status);
  }
  return session;
}

}  // namespace pentagent::exec
