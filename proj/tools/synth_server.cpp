// Serves a synthetic model over the wire protocol on stdin/stdout or TCP.
// --fault makes the server misbehave in one specific way, for client tests.

#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "perturbx/model.hpp"
#include "perturbx/protocol.hpp"
#include "perturbx/sampling.hpp"

using namespace perturbx;

namespace {

struct Options {
  std::string model = "additive";
  std::uint64_t seed = 0;
  int height = 16;
  int width = 16;
  int channels = 3;
  int classes = 1;
  double gain = 1.0;
  double offset = 0.0;
  std::string fault = "none";
};

class Synthetic final : public Predictor {
 public:
  explicit Synthetic(const Options& o) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(o.height) * o.width);
    auto coeff = random_coefficients(o.height, o.width, o.seed, -scale, scale);
    if (o.model == "logistic") {
      inner_ = std::make_unique<LogisticModel>(std::move(coeff), 0, o.classes, o.channels, o.gain, o.offset);
    } else {
      inner_ = std::make_unique<AdditiveModel>(std::move(coeff), 0, o.classes, o.channels);
    }
    spec_ = inner_->spec();
    spec_.identity = fmt::format("synthetic-{}:seed={}:{}x{}x{}", o.model, o.seed, o.height, o.width, o.channels);
    noisy_ = o.fault == "noisy";
  }

  const PredictorSpec& spec() const override { return spec_; }
  std::vector<ScoreVector> predict_batch(std::span<const Image> images) override {
    auto out = inner_->predict_batch(images);
    if (noisy_)
      for (auto& s : out)
        for (auto& v : s) v += 0.1 * CounterRng(calls_++).uniform(0);
    return out;
  }

 private:
  std::unique_ptr<Predictor> inner_;
  PredictorSpec spec_;
  bool noisy_ = false;
  std::uint64_t calls_ = 1;
};

void serve_faulty(Predictor& model, LineChannel& channel, const std::string& fault) {
  while (auto line = channel.read_line_blocking()) {
    const Json msg = Json::parse(*line, nullptr, false);
    const std::string type = msg.is_object() ? msg.value("type", std::string()) : std::string();
    const auto id = msg.is_object() ? msg.value("id", std::uint64_t{0}) : std::uint64_t{0};
    if (type == "hello") {
      if (fault == "no_hello") {
        channel.write_line(R"({"type":"scores"})");
      } else if (fault == "bad_protocol") {
        channel.write_line(R"({"type":"hello","protocol":99})");
      } else if (fault == "silent_hello") {
        std::this_thread::sleep_for(std::chrono::hours(1));
      } else {
        channel.write_line(encode_server_hello(model.spec()));
      }
      if (fault == "crash") return;
      continue;
    }
    if (type != "predict") {
      channel.write_line(encode_error(id, "unknown message type"));
      continue;
    }
    if (fault == "hang") std::this_thread::sleep_for(std::chrono::hours(1));
    if (fault == "garbage") {
      channel.write_line("this is not json");
      continue;
    }
    const auto images = decode_predict(msg, model.spec());
    auto scores = model.predict_batch(images);
    if (fault == "wrong_count") scores.pop_back();
    channel.write_line(encode_scores(fault == "wrong_id" ? id + 1 : id, scores, model.spec().n_classes));
  }
}

void serve_session(Predictor& model, LineChannel& channel, const std::string& fault) {
  if (fault == "none" || fault == "noisy") {
    serve(model, channel);
  } else {
    serve_faulty(model, channel, fault);
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  int port = -1;
  CLI::App app{"Synthetic model server"};
  app.add_option("--model", o.model)->check(CLI::IsMember({"additive", "logistic"}));
  app.add_option("--seed", o.seed);
  app.add_option("--height", o.height);
  app.add_option("--width", o.width);
  app.add_option("--channels", o.channels);
  app.add_option("--classes", o.classes);
  app.add_option("--gain", o.gain);
  app.add_option("--offset", o.offset);
  app.add_option("--listen", port, "TCP port on 127.0.0.1 (0 picks one); default is stdin/stdout");
  app.add_option("--fault", o.fault)
      ->check(CLI::IsMember({"none", "no_hello", "bad_protocol", "silent_hello", "crash", "hang", "garbage",
                             "wrong_id", "wrong_count", "noisy"}));
  CLI11_PARSE(app, argc, argv);
  std::signal(SIGPIPE, SIG_IGN);

  try {
    Synthetic model(o);
    if (port < 0) {
      LineChannel channel(STDIN_FILENO, STDOUT_FILENO, false);
      serve_session(model, channel, o.fault);
      return 0;
    }

    const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
    const int yes = 1;
    ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listener, 4) != 0) {
      std::perror("listen");
      return 1;
    }
    socklen_t len = sizeof addr;
    ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
    fmt::print("listening on 127.0.0.1:{}\n", ntohs(addr.sin_port));
    std::fflush(stdout);
    for (;;) {
      const int fd = ::accept(listener, nullptr, nullptr);
      if (fd < 0) continue;
      LineChannel channel(fd, fd, true);
      try {
        serve_session(model, channel, o.fault);
      } catch (const std::exception& e) {
        fmt::print(stderr, "session ended: {}\n", e.what());
      }
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
}
