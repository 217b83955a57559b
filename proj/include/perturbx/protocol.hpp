#pragma once

// Newline-delimited JSON wire protocol for external models.
//
//   client -> server  {"type":"hello","protocol":1}
//   server -> client  {"type":"hello","protocol":1,"spec":{"input":[H,W,C],"n_classes":K,
//                      "output_semantics":"probabilities","identity":"...","tolerance":0.0}}
//   client -> server  {"type":"predict","id":7,"n":N,"space":"normalized_zero_mean",
//                      "data":"<base64 float32 LE, (N,H,W,C) row-major>"}
//   server -> client  {"type":"scores","id":7,"n":N,"n_classes":K,
//                      "data":"<base64 float32 LE, (N,K) row-major>"}
//   server -> client  {"type":"error","id":7,"message":"..."}   (instead of scores)
//
// One message per line; requests are answered strictly in order.

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <sys/types.h>

#include "perturbx/model.hpp"
#include "perturbx/serialize.hpp"

namespace perturbx {

inline constexpr int kProtocolVersion = 1;

Json spec_to_json(const PredictorSpec& spec);
PredictorSpec spec_from_json(const Json& j);

std::string encode_client_hello();
std::string encode_server_hello(const PredictorSpec& spec);
std::string encode_predict(std::uint64_t id, std::span<const Image> images);
std::string encode_scores(std::uint64_t id, const std::vector<ScoreVector>& scores, int n_classes);
std::string encode_error(std::uint64_t id, const std::string& message);

/// Decodes a predict payload into images of the given spec's shape.
std::vector<Image> decode_predict(const Json& message, const PredictorSpec& spec);

/// Line-oriented byte stream over a pair of file descriptors.
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd, bool owns_fds);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  void write_line(const std::string& line);
  /// Throws TransportError(timeout) when nothing arrives in time and
  /// TransportError(io) on EOF.
  std::string read_line(std::chrono::milliseconds timeout);
  /// Returns nullopt on clean EOF.
  std::optional<std::string> read_line_blocking();

  void close_write();

 private:
  bool fill(int timeout_ms);

  int read_fd_;
  int write_fd_;
  bool owns_;
  std::string buffer_;
};

struct ConnectOptions {
  std::chrono::milliseconds timeout{30000};
  int batch_size = 64;
};

/// An open connection to a model server. Spawned servers run in their own
/// process group; closing the session shuts the write side, waits up to 2 s
/// for the child to exit and then kills the group.
class EndpointSession {
 public:
  EndpointSession(std::unique_ptr<LineChannel> channel, pid_t child);
  ~EndpointSession();
  EndpointSession(const EndpointSession&) = delete;
  EndpointSession& operator=(const EndpointSession&) = delete;

  LineChannel& channel() { return *channel_; }

 private:
  std::unique_ptr<LineChannel> channel_;
  pid_t child_;
};

/// Endpoint forms: "exec:<shell command>" spawns a child and talks over its
/// stdin/stdout; "tcp:<host>:<port>" connects to a listening server.
std::unique_ptr<EndpointSession> open_endpoint(const std::string& endpoint);

/// Predictor backed by a server speaking the protocol above. A session is
/// used serially; give each thread its own connection.
class ExternalPredictor final : public Predictor {
 public:
  /// Performs the hello exchange; throws TransportError(handshake) on failure.
  ExternalPredictor(std::unique_ptr<EndpointSession> session, const ConnectOptions& options);

  const PredictorSpec& spec() const override { return spec_; }
  std::vector<ScoreVector> predict_batch(std::span<const Image> images) override;

  int batch_size() const { return options_.batch_size; }

 private:
  std::vector<ScoreVector> round_trip(std::span<const Image> images);

  std::unique_ptr<EndpointSession> session_;
  ConnectOptions options_;
  PredictorSpec spec_;
  std::uint64_t next_id_ = 1;
};

std::unique_ptr<ExternalPredictor> connect_external(const std::string& endpoint, const ConnectOptions& options = {});

/// Parses one received line; throws TransportError(malformed) unless it is
/// a JSON object.
Json parse_message(const std::string& line);

/// Decodes a scores reply to request `id` carrying `n` vectors of
/// `n_classes`; an error reply becomes TransportError(remote).
std::vector<ScoreVector> decode_scores(const Json& reply, std::uint64_t id, std::size_t n, int n_classes);

/// Serves `predictor` on a line channel until EOF. Malformed requests get an
/// error message; the session continues.
void serve(Predictor& predictor, LineChannel& channel);

}  // namespace perturbx
