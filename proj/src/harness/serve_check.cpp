#include "perturbx/harness/serve_check.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/protocol.hpp"
#include "perturbx/sampling.hpp"

namespace perturbx::harness {

bool ServeCheckReport::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

namespace {

const std::vector<std::string> kCheckNames = {"handshake",   "predict_single",    "repeatability",
                                              "batch_order", "batch_64",          "malformed_request",
                                              "unknown_type", "session_continues"};

Image probe_image(const PredictorSpec& spec, std::uint64_t seed) {
  const CounterRng rng(seed);
  Image image{spec.height, spec.width, spec.channels,
              std::vector<float>(static_cast<std::size_t>(spec.height) * spec.width * spec.channels),
              ColorSpace::normalized_zero_mean};
  for (std::size_t i = 0; i < image.data.size(); ++i) image.data[i] = static_cast<float>(4.0 * rng.uniform(i) - 2.0);
  return image;
}

double max_diff(const ScoreVector& a, const ScoreVector& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d = std::max(d, std::abs(a[k] - b[k]));
  return d;
}

class Probe {
 public:
  Probe(LineChannel& channel, std::chrono::milliseconds timeout, std::vector<std::string>& transcript)
      : channel_(channel), timeout_(timeout), transcript_(transcript) {}

  void send(const std::string& line) {
    log('>', line);
    channel_.write_line(line);
  }

  Json receive() {
    const auto line = channel_.read_line(timeout_);
    log('<', line);
    return parse_message(line);
  }

  std::vector<ScoreVector> predict(std::uint64_t id, const std::vector<Image>& images, int n_classes) {
    send(encode_predict(id, images));
    return decode_scores(receive(), id, images.size(), n_classes);
  }

 private:
  void log(char direction, const std::string& line) {
    constexpr std::size_t kShown = 160;
    transcript_.push_back(fmt::format("{} {} bytes: {}{}", direction, line.size() + 1, line.substr(0, kShown),
                                      line.size() > kShown ? "..." : ""));
  }

  LineChannel& channel_;
  std::chrono::milliseconds timeout_;
  std::vector<std::string>& transcript_;
};

template <typename Fn>
CheckResult run_check(const std::string& name, Fn&& fn) {
  CheckResult result{name, false, ""};
  try {
    result.detail = fn();
    result.passed = true;
  } catch (const std::exception& e) {
    result.detail = e.what();
  }
  return result;
}

[[noreturn]] void fail(const std::string& why) { throw std::runtime_error(why); }

}  // namespace

ServeCheckReport serve_check(const std::string& endpoint, std::chrono::milliseconds timeout) {
  ServeCheckReport report;
  std::unique_ptr<EndpointSession> session;
  try {
    session = open_endpoint(endpoint);
  } catch (const std::exception& e) {
    for (const auto& name : kCheckNames) report.checks.push_back({name, false, fmt::format("not run: {}", e.what())});
    return report;
  }
  Probe probe(session->channel(), timeout, report.transcript);

  report.checks.push_back(run_check("handshake", [&] {
    probe.send(encode_client_hello());
    const Json hello = probe.receive();
    if (hello.value("type", std::string()) != "hello") fail("reply is not a hello message");
    if (hello.value("protocol", -1) != kProtocolVersion)
      fail(fmt::format("protocol {} instead of {}", hello.value("protocol", -1), kProtocolVersion));
    if (!hello.contains("spec")) fail("hello lacks a spec");
    const auto spec = spec_from_json(hello.at("spec"));
    if (auto problems = validate(spec); !problems.empty()) fail(problems.front());
    report.spec = spec;
    return fmt::format("input {}x{}x{}, {} classes, {}, identity '{}', tolerance {}", spec.height, spec.width,
                       spec.channels, spec.n_classes, to_string(spec.output_semantics), spec.identity,
                       spec.determinism_tolerance);
  }));
  if (!report.spec) {
    for (std::size_t i = 1; i < kCheckNames.size(); ++i)
      report.checks.push_back({kCheckNames[i], false, "not run: handshake failed"});
    return report;
  }
  const PredictorSpec spec = *report.spec;
  const int k = spec.n_classes;
  const double tol = spec.determinism_tolerance;
  std::uint64_t id = 1;
  std::optional<ScoreVector> single;

  report.checks.push_back(run_check("predict_single", [&] {
    const auto scores = probe.predict(id++, {probe_image(spec, 1)}, k);
    for (double v : scores[0])
      if (!std::isfinite(v)) fail("non-finite score");
    if (spec.output_semantics == OutputSemantics::probabilities) {
      double sum = 0.0;
      for (double v : scores[0]) {
        if (v < 0.0 || v > 1.0) fail(fmt::format("probability {} outside [0, 1]", v));
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-3) fail(fmt::format("probabilities sum to {}", sum));
    }
    single = scores[0];
    return fmt::format("{} scores", scores[0].size());
  }));

  report.checks.push_back(run_check("repeatability", [&] {
    if (!single) fail("no single prediction to compare with");
    const auto twice = probe.predict(id++, {probe_image(spec, 1), probe_image(spec, 1)}, k);
    const double d = std::max(max_diff(twice[0], *single), max_diff(twice[1], *single));
    if (d > tol) fail(fmt::format("repeated input differs by {} > tolerance {}", d, tol));
    return fmt::format("max difference {}", d);
  }));

  report.checks.push_back(run_check("batch_order", [&] {
    std::vector<Image> batch;
    for (std::uint64_t s = 0; s < 8; ++s) batch.push_back(probe_image(spec, 100 + s));
    const auto forward = probe.predict(id++, batch, k);
    std::reverse(batch.begin(), batch.end());
    const auto backward = probe.predict(id++, batch, k);
    double d = 0.0;
    for (std::size_t i = 0; i < forward.size(); ++i) d = std::max(d, max_diff(forward[i], backward[7 - i]));
    if (d > tol) fail(fmt::format("reordered batch differs by {} > tolerance {}", d, tol));
    return fmt::format("8 images, max difference {}", d);
  }));

  report.checks.push_back(run_check("batch_64", [&] {
    std::vector<Image> batch;
    for (std::uint64_t s = 0; s < 64; ++s) batch.push_back(probe_image(spec, 200 + s));
    const auto scores = probe.predict(id++, batch, k);
    return fmt::format("{} score vectors", scores.size());
  }));

  auto expect_error = [&](const std::string& line, std::uint64_t want_id) {
    probe.send(line);
    const Json reply = probe.receive();
    if (reply.value("type", std::string()) != "error")
      fail(fmt::format("expected an error reply, got '{}'", reply.value("type", std::string())));
    if (reply.value("id", std::uint64_t{0}) != want_id) fail("error reply carries the wrong id");
    return fmt::format("error: {}", reply.value("message", std::string()));
  };

  report.checks.push_back(run_check("malformed_request", [&] {
    return expect_error(R"({"type":"predict","id":9001,"n":1,"space":"normalized_zero_mean","data":"####"})", 9001);
  }));
  report.checks.push_back(run_check("unknown_type", [&] { return expect_error(R"({"type":"bogus","id":9002})", 9002); }));

  report.checks.push_back(run_check("session_continues", [&] {
    const auto scores = probe.predict(id++, {probe_image(spec, 1)}, k);
    if (single && max_diff(scores[0], *single) > tol) fail("prediction changed after error replies");
    return std::string("prediction after errors matches");
  }));
  return report;
}

}  // namespace perturbx::harness
