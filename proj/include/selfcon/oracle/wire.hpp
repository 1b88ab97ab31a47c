#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "selfcon/oracle/oracle.hpp"

namespace selfcon::oracle {

// Line-delimited JSON protocol. Requests carry "id" and "kind"
// (capabilities | logprob | sample); responses echo "id" and hold either
// "result" or "error": {"kind", "message"}. Real-valued and scalar integer
// fields are decimal strings; token ids travel as integer arrays.

nlohmann::json encode_capabilities(const OracleCapabilities& caps);
OracleCapabilities decode_capabilities(const nlohmann::json& j);
nlohmann::json encode_logprob(const LogProbResult& r);
LogProbResult decode_logprob(const nlohmann::json& j);

/// Handles one request line and returns the response line (never throws for
/// malformed input; those become "bad_request" errors).
std::string handle_request(const Oracle& oracle, const std::string& line);

/// Serves requests from `in_fd` to `out_fd` until end of input.
void serve_stream(const Oracle& oracle, int in_fd, int out_fd);
/// Listens on 127.0.0.1:port (0 = ephemeral); calls `on_ready` with the bound
/// port, then serves connections one request at a time each. Returns after
/// `max_connections` connections have closed (0 = forever).
void serve_tcp(const Oracle& oracle, int port, int max_connections,
               const std::function<void(int)>& on_ready = {});

/// Bidirectional line channel.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(const std::string& line) = 0;
  /// nullopt at end of stream.
  virtual std::optional<std::string> read_line() = 0;
};

/// Spawns `argv` and talks to it over its standard streams.
std::unique_ptr<LineChannel> spawn_process(const std::vector<std::string>& argv);
std::unique_ptr<LineChannel> connect_tcp(const std::string& host, int port);

/// Client side of the protocol; calls are serialized over one channel.
class RemoteOracle final : public Oracle {
 public:
  explicit RemoteOracle(std::unique_ptr<LineChannel> channel, std::string label = "remote");

  OracleCapabilities capabilities() const override;
  std::string id() const override { return label_; }
  LogProbResult logprob(std::span<const TokenId> prompt, std::span<const TokenId> continuation) const override;
  std::vector<TokenId> sample(std::span<const TokenId> prompt, const SampleParams& params) const override;

  /// Sends a raw request line and returns the raw response (for contract tests).
  std::string roundtrip(const std::string& line) const;

 private:
  nlohmann::json call(nlohmann::json request) const;

  std::unique_ptr<LineChannel> channel_;
  std::string label_;
  mutable std::mutex mutex_;
  mutable std::uint64_t next_id_ = 1;
  mutable std::optional<OracleCapabilities> caps_;
};

/// "remote:stdio:<command...>" or "remote:tcp:<host>:<port>".
std::unique_ptr<RemoteOracle> open_remote(const std::string& address);

}  // namespace selfcon::oracle
