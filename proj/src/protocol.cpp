#include "perturbx/protocol.hpp"

#include <cerrno>
#include <csignal>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fmt/format.h>

#include "perturbx/error.hpp"

extern char** environ;

namespace perturbx {

namespace {

using Kind = TransportError::Kind;

void ignore_sigpipe() {
  static const bool once = [] {
    struct sigaction action {};
    action.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &action, nullptr);
    return true;
  }();
  (void)once;
}

Json parse_line(const std::string& line) {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw TransportError(Kind::malformed, fmt::format("response is not JSON: {}", e.what()));
  }
}

}  // namespace

Json spec_to_json(const PredictorSpec& spec) {
  return {{"input", {spec.height, spec.width, spec.channels}},
          {"n_classes", spec.n_classes},
          {"output_semantics", to_string(spec.output_semantics)},
          {"identity", spec.identity},
          {"tolerance", spec.determinism_tolerance}};
}

PredictorSpec spec_from_json(const Json& j) {
  try {
    PredictorSpec spec;
    const auto& input = j.at("input");
    if (!input.is_array() || input.size() != 3) throw InvalidArgument("spec input must be [H, W, C]");
    spec.height = input[0].get<int>();
    spec.width = input[1].get<int>();
    spec.channels = input[2].get<int>();
    spec.n_classes = j.at("n_classes").get<int>();
    spec.output_semantics = output_semantics_from_string(j.at("output_semantics").get<std::string>());
    spec.identity = j.value("identity", std::string("external"));
    spec.determinism_tolerance = j.value("tolerance", 0.0);
    return spec;
  } catch (const Json::exception& e) {
    throw InvalidArgument(fmt::format("bad predictor spec: {}", e.what()));
  }
}

std::string encode_client_hello() { return Json{{"type", "hello"}, {"protocol", kProtocolVersion}}.dump(); }

std::string encode_server_hello(const PredictorSpec& spec) {
  return Json{{"type", "hello"}, {"protocol", kProtocolVersion}, {"spec", spec_to_json(spec)}}.dump();
}

std::string encode_predict(std::uint64_t id, std::span<const Image> images) {
  std::vector<float> data;
  for (const auto& img : images) data.insert(data.end(), img.data.begin(), img.data.end());
  const char* space = images.empty() ? to_string(ColorSpace::normalized_zero_mean) : to_string(images[0].space);
  return Json{{"type", "predict"},
              {"id", id},
              {"n", images.size()},
              {"space", space},
              {"data", encode_f32(std::span<const float>(data))}}
      .dump();
}

std::string encode_scores(std::uint64_t id, const std::vector<ScoreVector>& scores, int n_classes) {
  std::vector<float> data;
  data.reserve(scores.size() * n_classes);
  for (const auto& s : scores)
    for (double v : s) data.push_back(static_cast<float>(v));
  return Json{{"type", "scores"},
              {"id", id},
              {"n", scores.size()},
              {"n_classes", n_classes},
              {"data", encode_f32(std::span<const float>(data))}}
      .dump();
}

std::string encode_error(std::uint64_t id, const std::string& message) {
  return Json{{"type", "error"}, {"id", id}, {"message", message}}.dump();
}

std::vector<Image> decode_predict(const Json& message, const PredictorSpec& spec) {
  const auto n = message.at("n").get<std::size_t>();
  const auto space = color_space_from_string(message.value("space", std::string("normalized_zero_mean")));
  const auto data = decode_f32(message.at("data").get<std::string>());
  const std::size_t per_image = static_cast<std::size_t>(spec.height) * spec.width * spec.channels;
  if (data.size() != n * per_image)
    throw InvalidArgument(fmt::format("predict payload has {} floats, expected {}", data.size(), n * per_image));
  std::vector<Image> images(n);
  for (std::size_t i = 0; i < n; ++i) {
    images[i] = Image{spec.height, spec.width, spec.channels,
                      std::vector<float>(data.begin() + i * per_image, data.begin() + (i + 1) * per_image), space};
  }
  return images;
}

LineChannel::LineChannel(int read_fd, int write_fd, bool owns_fds)
    : read_fd_(read_fd), write_fd_(write_fd), owns_(owns_fds) {
  ignore_sigpipe();
}

LineChannel::~LineChannel() {
  if (!owns_) return;
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
  if (read_fd_ >= 0) ::close(read_fd_);
}

void LineChannel::close_write() {
  if (write_fd_ < 0) return;
  if (write_fd_ == read_fd_) {
    ::shutdown(write_fd_, SHUT_WR);
  } else if (owns_) {
    ::close(write_fd_);
  }
  write_fd_ = -1;
}

void LineChannel::write_line(const std::string& line) {
  if (write_fd_ < 0) throw TransportError(Kind::io, "channel is closed for writing");
  std::string framed = line;
  framed.push_back('\n');
  const char* p = framed.data();
  std::size_t left = framed.size();
  while (left > 0) {
    const ssize_t n = ::write(write_fd_, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(Kind::io, fmt::format("write failed: {}", std::strerror(errno)));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
}

bool LineChannel::fill(int timeout_ms) {
  if (timeout_ms >= 0) {
    pollfd pfd{read_fd_, POLLIN, 0};
    int rc;
    do {
      rc = ::poll(&pfd, 1, timeout_ms);
    } while (rc < 0 && errno == EINTR);
    if (rc == 0) throw TransportError(Kind::timeout, "timed out waiting for the model server");
    if (rc < 0) throw TransportError(Kind::io, fmt::format("poll failed: {}", std::strerror(errno)));
  }
  char chunk[65536];
  ssize_t n;
  do {
    n = ::read(read_fd_, chunk, sizeof chunk);
  } while (n < 0 && errno == EINTR);
  if (n < 0) throw TransportError(Kind::io, fmt::format("read failed: {}", std::strerror(errno)));
  if (n == 0) return false;
  buffer_.append(chunk, static_cast<std::size_t>(n));
  return true;
}

std::string LineChannel::read_line(std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto pos = buffer_.find('\n');
    if (pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TransportError(Kind::timeout, "timed out waiting for the model server");
    if (!fill(static_cast<int>(left.count())))
      throw TransportError(Kind::io, "model server closed the connection");
  }
}

std::optional<std::string> LineChannel::read_line_blocking() {
  for (;;) {
    const auto pos = buffer_.find('\n');
    if (pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return line;
    }
    if (!fill(-1)) {
      if (buffer_.empty()) return std::nullopt;
      std::string line = std::move(buffer_);
      buffer_.clear();
      return line;
    }
  }
}

Json parse_message(const std::string& line) {
  Json j = parse_line(line);
  if (!j.is_object()) throw TransportError(Kind::malformed, "message is not a JSON object");
  return j;
}

std::vector<ScoreVector> decode_scores(const Json& reply, std::uint64_t id, std::size_t n, int n_classes) {
  const std::string type = reply.value("type", std::string());
  if (type == "error")
    throw TransportError(Kind::remote, fmt::format("model server error: {}", reply.value("message", std::string())));
  if (type != "scores") throw TransportError(Kind::malformed, "expected a scores message");
  try {
    if (reply.at("id").get<std::uint64_t>() != id)
      throw TransportError(Kind::malformed, "scores message answers a different request");
    const auto got_n = reply.at("n").get<std::size_t>();
    const int got_classes = reply.at("n_classes").get<int>();
    if (got_n != n || got_classes != n_classes)
      throw TransportError(Kind::malformed, fmt::format("scores shape ({}, {}) does not match ({}, {})", got_n,
                                                        got_classes, n, n_classes));
    const auto data = decode_f32(reply.at("data").get<std::string>());
    if (data.size() != n * n_classes) throw TransportError(Kind::malformed, "scores payload has the wrong length");
    std::vector<ScoreVector> out(n);
    for (std::size_t i = 0; i < n; ++i)
      out[i].assign(data.begin() + i * n_classes, data.begin() + (i + 1) * n_classes);
    return out;
  } catch (const Json::exception& e) {
    throw TransportError(Kind::malformed, fmt::format("bad scores message: {}", e.what()));
  } catch (const InvalidArgument& e) {
    throw TransportError(Kind::malformed, e.what());
  }
}

EndpointSession::EndpointSession(std::unique_ptr<LineChannel> channel, pid_t child)
    : channel_(std::move(channel)), child_(child) {}

EndpointSession::~EndpointSession() {
  channel_->close_write();
  if (child_ <= 0) return;
  int status = 0;
  for (int i = 0; i < 200; ++i) {
    if (::waitpid(child_, &status, WNOHANG) == child_) {
      ::kill(-child_, SIGKILL);
      return;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  ::kill(-child_, SIGKILL);
  ::waitpid(child_, &status, 0);
}

ExternalPredictor::ExternalPredictor(std::unique_ptr<EndpointSession> session, const ConnectOptions& options)
    : session_(std::move(session)), options_(options) {
  if (options_.batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  auto& channel = session_->channel();
  channel.write_line(encode_client_hello());
  const Json hello = parse_line(channel.read_line(options_.timeout));
  if (!hello.is_object() || hello.value("type", std::string()) != "hello")
    throw TransportError(Kind::handshake, "server did not answer with a hello message");
  if (hello.value("protocol", -1) != kProtocolVersion)
    throw TransportError(Kind::handshake, fmt::format("server speaks protocol {}, client speaks {}",
                                                      hello.value("protocol", -1), kProtocolVersion));
  if (!hello.contains("spec")) throw TransportError(Kind::handshake, "server hello lacks a spec");
  try {
    spec_ = spec_from_json(hello.at("spec"));
  } catch (const InvalidArgument& e) {
    throw TransportError(Kind::handshake, e.what());
  }
  if (auto problems = validate(spec_); !problems.empty())
    throw TransportError(Kind::handshake, fmt::format("server spec is invalid: {}", problems.front()));
}

std::vector<ScoreVector> ExternalPredictor::round_trip(std::span<const Image> images) {
  const std::uint64_t id = next_id_++;
  auto& channel = session_->channel();
  channel.write_line(encode_predict(id, images));
  return decode_scores(parse_message(channel.read_line(options_.timeout)), id, images.size(), spec_.n_classes);
}

std::vector<ScoreVector> ExternalPredictor::predict_batch(std::span<const Image> images) {
  check_inputs(images);
  std::vector<ScoreVector> out;
  out.reserve(images.size());
  for (std::size_t begin = 0; begin < images.size(); begin += options_.batch_size) {
    const std::size_t count = std::min<std::size_t>(options_.batch_size, images.size() - begin);
    for (auto& v : round_trip(images.subspan(begin, count))) out.push_back(std::move(v));
  }
  return out;
}

namespace {

std::unique_ptr<EndpointSession> spawn_endpoint(const std::string& command) {
  int to_child[2], from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw TransportError(Kind::io, "pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw TransportError(Kind::io, "pipe failed");
  }
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, to_child[0], STDIN_FILENO);
  posix_spawn_file_actions_adddup2(&actions, from_child[1], STDOUT_FILENO);
  const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
  posix_spawnattr_t attr;
  posix_spawnattr_init(&attr);
  posix_spawnattr_setflags(&attr, POSIX_SPAWN_SETPGROUP);
  posix_spawnattr_setpgroup(&attr, 0);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/bin/sh", &actions, &attr, const_cast<char* const*>(argv), environ);
  posix_spawnattr_destroy(&attr);
  posix_spawn_file_actions_destroy(&actions);
  ::close(to_child[0]);
  ::close(from_child[1]);
  if (rc != 0) {
    ::close(to_child[1]);
    ::close(from_child[0]);
    throw TransportError(Kind::io, fmt::format("could not spawn '{}': {}", command, std::strerror(rc)));
  }
  return std::make_unique<EndpointSession>(std::make_unique<LineChannel>(from_child[0], to_child[1], true), pid);
}

std::unique_ptr<EndpointSession> tcp_endpoint(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument(fmt::format("tcp endpoint '{}' lacks a port", address));
  const std::string host = address.substr(0, colon), port = address.substr(colon + 1);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0)
    throw TransportError(Kind::io, fmt::format("cannot resolve {}: {}", address, gai_strerror(rc)));
  int fd = -1;
  for (addrinfo* ai = found; ai; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(found);
  if (fd < 0) throw TransportError(Kind::io, fmt::format("cannot connect to {}", address));
  return std::make_unique<EndpointSession>(std::make_unique<LineChannel>(fd, fd, true), 0);
}

}  // namespace

std::unique_ptr<EndpointSession> open_endpoint(const std::string& endpoint) {
  if (endpoint.rfind("exec:", 0) == 0) return spawn_endpoint(endpoint.substr(5));
  if (endpoint.rfind("tcp:", 0) == 0) return tcp_endpoint(endpoint.substr(4));
  throw InvalidArgument(fmt::format("endpoint '{}' must start with exec: or tcp:", endpoint));
}

std::unique_ptr<ExternalPredictor> connect_external(const std::string& endpoint, const ConnectOptions& options) {
  return std::make_unique<ExternalPredictor>(open_endpoint(endpoint), options);
}

void serve(Predictor& predictor, LineChannel& channel) {
  while (auto line = channel.read_line_blocking()) {
    if (line->empty()) continue;
    std::uint64_t id = 0;
    try {
      const Json message = Json::parse(*line);
      id = message.value("id", std::uint64_t{0});
      const std::string type = message.value("type", std::string());
      if (type == "hello") {
        channel.write_line(encode_server_hello(predictor.spec()));
      } else if (type == "predict") {
        const auto images = decode_predict(message, predictor.spec());
        channel.write_line(encode_scores(id, predictor.predict_batch(images), predictor.spec().n_classes));
      } else {
        channel.write_line(encode_error(id, fmt::format("unknown message type '{}'", type)));
      }
    } catch (const TransportError&) {
      throw;
    } catch (const std::exception& e) {
      channel.write_line(encode_error(id, e.what()));
    }
  }
}

}  // namespace perturbx
