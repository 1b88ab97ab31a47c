#include "selfcon/oracle/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>
#include <sstream>

#include "selfcon/core/error.hpp"
#include "selfcon/core/numeric_text.hpp"

namespace selfcon::oracle {

using nlohmann::json;

namespace {

std::string num(double v) { return exact_decimal(v); }
std::string num(std::int64_t v) { return std::to_string(v); }

double real_field(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_string()) return parse_decimal(v.get<std::string>());
  if (v.is_number()) return v.get<double>();
  fail(ErrorKind::kProtocol, std::string("field '") + key + "' must be a decimal");
}

std::int64_t int_field(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    std::size_t used = 0;
    long long out = 0;
    try {
      out = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == s.size() && !s.empty()) return out;
  }
  fail(ErrorKind::kProtocol, std::string("field '") + key + "' must be an integer");
}

std::vector<TokenId> ids_field(const json& j, const char* key) {
  std::vector<TokenId> out;
  const auto& v = j.at(key);
  if (!v.is_array()) fail(ErrorKind::kProtocol, std::string("field '") + key + "' must be an array");
  for (const auto& e : v) {
    if (e.is_number_integer()) {
      out.push_back(e.get<TokenId>());
    } else if (e.is_string()) {
      out.push_back(static_cast<TokenId>(std::stoll(e.get<std::string>())));
    } else {
      fail(ErrorKind::kProtocol, std::string("field '") + key + "' must hold token ids");
    }
  }
  return out;
}

void write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorKind::kTransport, std::string("write failed: ") + std::strerror(errno));
    done += static_cast<std::size_t>(n);
  }
}

class FdReader {
 public:
  explicit FdReader(int fd) : fd_(fd) {}
  std::optional<std::string> read_line() {
    for (;;) {
      const auto pos = buffer_.find('\n');
      if (pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::read(fd_, chunk, sizeof chunk);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) {
        if (buffer_.empty()) return std::nullopt;
        std::string line = std::move(buffer_);
        buffer_.clear();
        return line;
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string buffer_;
};

class ProcessChannel final : public LineChannel {
 public:
  ProcessChannel(pid_t pid, int to_child, int from_child) : pid_(pid), to_child_(to_child), reader_(from_child),
                                                             from_child_(from_child) {}
  ~ProcessChannel() override {
    ::close(to_child_);
    ::close(from_child_);
    int status = 0;
    ::waitpid(pid_, &status, 0);
  }
  void write_line(const std::string& line) override { write_all(to_child_, line + "\n"); }
  std::optional<std::string> read_line() override { return reader_.read_line(); }

 private:
  pid_t pid_;
  int to_child_;
  FdReader reader_;
  int from_child_;
};

class SocketChannel final : public LineChannel {
 public:
  explicit SocketChannel(int fd) : fd_(fd), reader_(fd) {}
  ~SocketChannel() override { ::close(fd_); }
  void write_line(const std::string& line) override { write_all(fd_, line + "\n"); }
  std::optional<std::string> read_line() override { return reader_.read_line(); }

 private:
  int fd_;
  FdReader reader_;
};

json error_response(const json& id, ErrorKind kind, const std::string& message) {
  return {{"id", id}, {"error", {{"kind", std::string(to_string(kind))}, {"message", message}}}};
}

}  // namespace

json encode_capabilities(const OracleCapabilities& c) {
  return {{"can_logprob", c.can_logprob}, {"can_sample", c.can_sample},     {"can_gradient", c.can_gradient},
          {"can_embed", c.can_embed},     {"vocab_size", num(std::int64_t{c.vocab_size})},
          {"max_context", num(std::int64_t{c.max_context})},
          {"eos_id", num(std::int64_t{c.eos_id})}, {"pad_id", num(std::int64_t{c.pad_id})}};
}

OracleCapabilities decode_capabilities(const json& j) {
  OracleCapabilities c;
  c.can_logprob = j.at("can_logprob").get<bool>();
  c.can_sample = j.at("can_sample").get<bool>();
  c.can_gradient = j.at("can_gradient").get<bool>();
  c.can_embed = j.at("can_embed").get<bool>();
  c.vocab_size = static_cast<int>(int_field(j, "vocab_size"));
  c.max_context = static_cast<int>(int_field(j, "max_context"));
  c.eos_id = j.contains("eos_id") ? static_cast<TokenId>(int_field(j, "eos_id")) : 0;
  c.pad_id = j.contains("pad_id") ? static_cast<TokenId>(int_field(j, "pad_id")) : 0;
  c.validate();
  return c;
}

json encode_logprob(const LogProbResult& r) {
  json per = json::array();
  for (double v : r.per_token_logprob) per.push_back(num(v));
  return {{"per_token_logprob", per}, {"slp", num(r.slp)}};
}

LogProbResult decode_logprob(const json& j) {
  LogProbResult r;
  for (const auto& v : j.at("per_token_logprob")) {
    r.per_token_logprob.push_back(v.is_string() ? parse_decimal(v.get<std::string>()) : v.get<double>());
  }
  r.slp = real_field(j, "slp");
  double sum = 0.0;
  for (double v : r.per_token_logprob) {
    if (!(v <= 0.0)) fail(ErrorKind::kProtocol, "logprob response: positive or non-finite per-token value");
    sum += v;
  }
  if (std::abs(sum - r.slp) > 1e-9 * std::max(1.0, std::abs(sum))) {
    fail(ErrorKind::kProtocol, "logprob response: slp does not equal the per-token sum");
  }
  return r;
}

std::string handle_request(const Oracle& oracle, const std::string& line) {
  json id = nullptr;
  try {
    json req;
    try {
      req = json::parse(line);
    } catch (const json::parse_error& e) {
      return error_response(nullptr, ErrorKind::kProtocol, std::string("malformed JSON: ") + e.what()).dump();
    }
    if (!req.is_object()) return error_response(nullptr, ErrorKind::kProtocol, "request must be an object").dump();
    if (req.contains("id")) id = req.at("id");
    if (!req.contains("kind") || !req.at("kind").is_string()) {
      return error_response(id, ErrorKind::kProtocol, "missing request kind").dump();
    }
    const std::string kind = req.at("kind").get<std::string>();
    json result;
    if (kind == "capabilities") {
      // The protocol carries no embedding or gradient requests.
      auto caps = oracle.capabilities();
      caps.can_gradient = caps.can_embed = false;
      result = encode_capabilities(caps);
    } else if (kind == "logprob") {
      const auto prompt = ids_field(req, "prompt_ids");
      const auto cont = ids_field(req, "continuation_ids");
      const auto caps = oracle.capabilities();
      for (const auto& seq : {prompt, cont}) {
        for (TokenId t : seq) {
          if (t < 0 || t >= caps.vocab_size) fail(ErrorKind::kProtocol, "token id outside the vocabulary");
        }
      }
      if (static_cast<int>(prompt.size() + cont.size()) > caps.max_context) {
        fail(ErrorKind::kContextOverflow, "prompt + continuation exceed max_context");
      }
      result = encode_logprob(oracle.logprob(prompt, cont));
    } else if (kind == "sample") {
      const auto prompt = ids_field(req, "prompt_ids");
      const auto caps = oracle.capabilities();
      for (TokenId t : prompt) {
        if (t < 0 || t >= caps.vocab_size) fail(ErrorKind::kProtocol, "token id outside the vocabulary");
      }
      SampleParams p;
      if (req.contains("top_p")) p.top_p = real_field(req, "top_p");
      if (req.contains("temperature")) p.temperature = real_field(req, "temperature");
      if (req.contains("max_tokens")) p.max_tokens = static_cast<int>(int_field(req, "max_tokens"));
      if (req.contains("seed")) p.seed = static_cast<std::uint64_t>(int_field(req, "seed"));
      if (req.contains("greedy")) p.greedy = req.at("greedy").get<bool>();
      p.validate();
      result = {{"tokens", oracle.sample(prompt, p)}};
    } else {
      return error_response(id, ErrorKind::kProtocol, "unknown request kind '" + kind + "'").dump();
    }
    return json{{"id", id}, {"result", result}}.dump();
  } catch (const Error& e) {
    const ErrorKind kind = e.kind() == ErrorKind::kInvalidArgument ? ErrorKind::kProtocol : e.kind();
    return error_response(id, kind, e.what()).dump();
  } catch (const json::exception& e) {
    return error_response(id, ErrorKind::kProtocol, e.what()).dump();
  } catch (const std::exception& e) {
    return error_response(id, ErrorKind::kRefused, e.what()).dump();
  }
}

void serve_stream(const Oracle& oracle, int in_fd, int out_fd) {
  FdReader reader(in_fd);
  while (auto line = reader.read_line()) {
    if (line->empty()) continue;
    write_all(out_fd, handle_request(oracle, *line) + "\n");
  }
}

void serve_tcp(const Oracle& oracle, int port, int max_connections, const std::function<void(int)>& on_ready) {
  ::signal(SIGPIPE, SIG_IGN);
  const int server = ::socket(AF_INET, SOCK_STREAM, 0);
  if (server < 0) fail(ErrorKind::kTransport, "socket() failed");
  const int one = 1;
  ::setsockopt(server, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::bind(server, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(server, 8) != 0) {
    ::close(server);
    fail(ErrorKind::kTransport, std::string("cannot listen: ") + std::strerror(errno));
  }
  socklen_t len = sizeof addr;
  ::getsockname(server, reinterpret_cast<sockaddr*>(&addr), &len);
  if (on_ready) on_ready(ntohs(addr.sin_port));
  for (int served = 0; max_connections == 0 || served < max_connections; ++served) {
    const int client = ::accept(server, nullptr, nullptr);
    if (client < 0) {
      if (errno == EINTR) continue;
      break;
    }
    try {
      serve_stream(oracle, client, client);
    } catch (const Error&) {
      // Peer went away mid-response; keep serving others.
    }
    ::close(client);
  }
  ::close(server);
}

std::unique_ptr<LineChannel> spawn_process(const std::vector<std::string>& argv) {
  if (argv.empty()) fail(ErrorKind::kInvalidArgument, "spawn_process: empty command");
  ::signal(SIGPIPE, SIG_IGN);
  int to_child[2], from_child[2];
  if (::pipe(to_child) != 0 || ::pipe(from_child) != 0) fail(ErrorKind::kTransport, "pipe() failed");
  const pid_t pid = ::fork();
  if (pid < 0) fail(ErrorKind::kTransport, "fork() failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<ProcessChannel>(pid, to_child[1], from_child[0]);
}

std::unique_ptr<LineChannel> connect_tcp(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    fail(ErrorKind::kTransport, "cannot resolve " + host);
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd < 0 ? -1 : ::connect(fd, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc != 0) {
    if (fd >= 0) ::close(fd);
    fail(ErrorKind::kTransport, "cannot connect to " + host + ":" + std::to_string(port));
  }
  return std::make_unique<SocketChannel>(fd);
}

RemoteOracle::RemoteOracle(std::unique_ptr<LineChannel> channel, std::string label)
    : channel_(std::move(channel)), label_(std::move(label)) {}

std::string RemoteOracle::roundtrip(const std::string& line) const {
  std::lock_guard lock(mutex_);
  channel_->write_line(line);
  auto reply = channel_->read_line();
  if (!reply) fail(ErrorKind::kTransport, "remote oracle closed the connection");
  return *reply;
}

json RemoteOracle::call(json request) const {
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = std::to_string(next_id_++);
  }
  request["id"] = id;
  const std::string reply = roundtrip(request.dump());
  json resp;
  try {
    resp = json::parse(reply);
  } catch (const json::parse_error&) {
    fail(ErrorKind::kProtocol, "remote oracle sent malformed JSON");
  }
  if (!resp.is_object() || !resp.contains("id") || resp.at("id") != json(id)) {
    fail(ErrorKind::kProtocol, "remote oracle response id mismatch");
  }
  if (resp.contains("error")) {
    const auto& e = resp.at("error");
    fail(error_kind_from_string(e.value("kind", "")), "remote: " + e.value("message", ""));
  }
  if (!resp.contains("result")) fail(ErrorKind::kProtocol, "remote oracle response lacks a result");
  return resp.at("result");
}

OracleCapabilities RemoteOracle::capabilities() const {
  {
    std::lock_guard lock(mutex_);
    if (caps_) return *caps_;
  }
  auto caps = decode_capabilities(call({{"kind", "capabilities"}}));
  caps.can_gradient = caps.can_embed = false;
  std::lock_guard lock(mutex_);
  caps_ = caps;
  return caps;
}

LogProbResult RemoteOracle::logprob(std::span<const TokenId> prompt, std::span<const TokenId> continuation) const {
  require(capabilities().can_logprob, "can_logprob", *this);
  try {
    return decode_logprob(call({{"kind", "logprob"},
                                {"prompt_ids", std::vector<TokenId>(prompt.begin(), prompt.end())},
                                {"continuation_ids", std::vector<TokenId>(continuation.begin(), continuation.end())}}));
  } catch (const json::exception& e) {
    fail(ErrorKind::kProtocol, std::string("logprob response: ") + e.what());
  }
}

std::vector<TokenId> RemoteOracle::sample(std::span<const TokenId> prompt, const SampleParams& params) const {
  require(capabilities().can_sample, "can_sample", *this);
  params.validate();
  try {
    const auto r = call({{"kind", "sample"},
                         {"prompt_ids", std::vector<TokenId>(prompt.begin(), prompt.end())},
                         {"top_p", num(params.top_p)},
                         {"temperature", num(params.temperature)},
                         {"max_tokens", num(std::int64_t{params.max_tokens})},
                         {"seed", std::to_string(params.seed)},
                         {"greedy", params.greedy}});
    return ids_field(r, "tokens");
  } catch (const json::exception& e) {
    fail(ErrorKind::kProtocol, std::string("sample response: ") + e.what());
  }
}

std::unique_ptr<RemoteOracle> open_remote(const std::string& address) {
  const std::string stdio = "remote:stdio:";
  const std::string tcp = "remote:tcp:";
  if (address.rfind(stdio, 0) == 0) {
    std::istringstream in(address.substr(stdio.size()));
    std::vector<std::string> argv;
    for (std::string part; in >> part;) argv.push_back(part);
    return std::make_unique<RemoteOracle>(spawn_process(argv), address);
  }
  if (address.rfind(tcp, 0) == 0) {
    const std::string rest = address.substr(tcp.size());
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) fail(ErrorKind::kInvalidArgument, "remote address needs host:port");
    return std::make_unique<RemoteOracle>(connect_tcp(rest.substr(0, colon), std::stoi(rest.substr(colon + 1))),
                                          address);
  }
  fail(ErrorKind::kInvalidArgument, "unknown remote oracle address '" + address + "'");
}

}  // namespace selfcon::oracle
