#include <gtest/gtest.h>

#include <csignal>
#include <cstdio>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <thread>
#include <unistd.h>

#include "perturbx/error.hpp"
#include "perturbx/harness/runner.hpp"
#include "perturbx/harness/serve_check.hpp"
#include "perturbx/model.hpp"
#include "perturbx/protocol.hpp"

extern char** environ;

using namespace perturbx;
using namespace std::chrono_literals;

namespace {

std::string server(const std::string& args = "") {
  return std::string("exec:") + PERTURBX_SYNTH_SERVER + " --height 8 --width 8 " + args;
}

Image probe(std::uint64_t seed) {
  Image image = harness::synthetic_image(8, 8, 3, seed);
  image.space = ColorSpace::normalized_zero_mean;
  return image;
}

TransportError::Kind fault_kind(const std::string& fault, std::chrono::milliseconds timeout = 2000ms) {
  try {
    auto predictor = connect_external(server("--fault " + fault), ConnectOptions{timeout, 8});
    const std::vector<Image> batch{probe(1), probe(2)};
    predictor->predict_batch(batch);
  } catch (const TransportError& e) {
    return e.kind();
  }
  ADD_FAILURE() << fault << " did not fail";
  return TransportError::Kind::io;
}

// The synthetic server with the same defaults, in process.
AdditiveModel local_model(std::uint64_t seed) {
  return AdditiveModel(random_coefficients(8, 8, seed, -1.0 / 8, 1.0 / 8), 0, 1, 3);
}

}  // namespace

TEST(Wire, PredictMessageLayout) {
  const Image one{1, 1, 1, {1.0f}, ColorSpace::normalized_zero_mean};
  const std::vector<Image> batch{one};
  const auto line = encode_predict(7, batch);
  EXPECT_EQ(line.find('\n'), std::string::npos);
  const Json j = Json::parse(line);
  EXPECT_EQ(j["type"], "predict");
  EXPECT_EQ(j["id"], 7);
  EXPECT_EQ(j["n"], 1);
  EXPECT_EQ(j["space"], "normalized_zero_mean");
  EXPECT_EQ(j["data"], "AACAPw==");
}

TEST(Wire, ScoresRoundTrip) {
  const std::vector<ScoreVector> scores{{1.0, -2.5}, {0.25, 0.5}};
  const Json reply = parse_message(encode_scores(3, scores, 2));
  EXPECT_EQ(reply["data"], "AACAPwAAIMAAAIA+AAAAPw==");
  EXPECT_EQ(decode_scores(reply, 3, 2, 2), scores);
  EXPECT_THROW(decode_scores(reply, 4, 2, 2), TransportError);
  EXPECT_THROW(decode_scores(reply, 3, 3, 2), TransportError);
  try {
    decode_scores(parse_message(encode_error(3, "boom")), 3, 2, 2);
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.kind(), TransportError::Kind::remote);
  }
  EXPECT_THROW(parse_message("[1,2]"), TransportError);
  EXPECT_THROW(parse_message("nope"), TransportError);
}

TEST(Wire, HelloCarriesSpec) {
  const PredictorSpec spec{224, 224, 3, 1000, OutputSemantics::probabilities, "m", 1e-6};
  const Json hello = parse_message(encode_server_hello(spec));
  EXPECT_EQ(hello["protocol"], kProtocolVersion);
  EXPECT_EQ(hello["spec"]["input"], Json::parse("[224,224,3]"));
  const auto back = spec_from_json(hello["spec"]);
  EXPECT_EQ(back.n_classes, 1000);
  EXPECT_EQ(back.identity, "m");
  EXPECT_EQ(back.determinism_tolerance, 1e-6);
  EXPECT_EQ(Json::parse(encode_client_hello()), Json::parse(R"({"type":"hello","protocol":1})"));
}

TEST(Wire, DecodePredictChecksShape) {
  const PredictorSpec spec{2, 2, 1, 1, OutputSemantics::logits, "x", 0.0};
  const std::vector<Image> ok{Image{2, 2, 1, {0, 1, 2, 3}, ColorSpace::normalized_zero_mean}};
  EXPECT_EQ(decode_predict(Json::parse(encode_predict(1, ok)), spec)[0].data, ok[0].data);
  const std::vector<Image> wrong{Image{1, 2, 1, {0, 1}, ColorSpace::normalized_zero_mean}};
  EXPECT_THROW(decode_predict(Json::parse(encode_predict(1, wrong)), spec), InvalidArgument);
}

TEST(Session, InProcessServeRoundTrip) {
  int a[2], b[2];
  ASSERT_EQ(::pipe(a), 0);
  ASSERT_EQ(::pipe(b), 0);
  auto model = local_model(3);
  std::thread server_thread([&] {
    LineChannel channel(a[0], b[1], true);
    serve(model, channel);
  });
  {
    auto session = std::make_unique<EndpointSession>(std::make_unique<LineChannel>(b[0], a[1], true), -1);
    ExternalPredictor remote(std::move(session), ConnectOptions{5000ms, 3});
    std::vector<Image> batch;
    for (int i = 0; i < 7; ++i) batch.push_back(probe(i));
    const auto got = remote.predict_batch(batch);
    const auto want = model.predict_batch(batch);
    ASSERT_EQ(got.size(), 7u);
    for (int i = 0; i < 7; ++i) EXPECT_NEAR(got[i][0], want[i][0], 1e-6);
  }
  server_thread.join();
}

TEST(Session, SpawnedServerMatchesLocalModel) {
  auto remote = connect_external(server("--seed 4"), ConnectOptions{5000ms, 64});
  EXPECT_EQ(remote->spec().identity, "synthetic-additive:seed=4:8x8x3");
  EXPECT_EQ(remote->spec().height, 8);
  auto model = local_model(4);
  std::vector<Image> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(probe(10 + i));
  const auto got = remote->predict_batch(batch);
  const auto want = model.predict_batch(batch);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(got[i][0], want[i][0], 1e-6);
  EXPECT_EQ(remote->predict_batch(batch), got);
  EXPECT_TRUE(remote->predict_batch({}).empty());
}

TEST(Session, TcpEndpoint) {
  int out[2];
  ASSERT_EQ(::pipe(out), 0);
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, out[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, out[0]);
  const std::string path = PERTURBX_SYNTH_SERVER;
  std::vector<std::string> args{path, "--height", "8", "--width", "8", "--listen", "0"};
  std::vector<char*> argv;
  for (auto& s : args) argv.push_back(s.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  ASSERT_EQ(posix_spawn(&pid, path.c_str(), &actions, nullptr, argv.data(), environ), 0);
  posix_spawn_file_actions_destroy(&actions);
  ::close(out[1]);
  LineChannel banner(out[0], -1, true);
  const std::string first = banner.read_line(5000ms);
  const auto colon = first.rfind(':');
  ASSERT_NE(colon, std::string::npos) << first;
  {
    auto remote = connect_external("tcp:127.0.0.1:" + first.substr(colon + 1), ConnectOptions{5000ms, 64});
    EXPECT_EQ(remote->spec().n_classes, 1);
    const std::vector<Image> batch{probe(1)};
    EXPECT_NEAR(remote->predict_batch(batch)[0][0], local_model(0).predict_batch(batch)[0][0], 1e-6);
  }
  ::kill(pid, SIGKILL);
  int status = 0;
  ::waitpid(pid, &status, 0);
}

TEST(Session, FaultsMapToErrorKinds) {
  using K = TransportError::Kind;
  EXPECT_EQ(fault_kind("no_hello"), K::handshake);
  EXPECT_EQ(fault_kind("bad_protocol"), K::handshake);
  EXPECT_EQ(fault_kind("silent_hello", 300ms), K::timeout);
  EXPECT_EQ(fault_kind("crash"), K::io);
  EXPECT_EQ(fault_kind("hang", 300ms), K::timeout);
  EXPECT_EQ(fault_kind("garbage"), K::malformed);
  EXPECT_EQ(fault_kind("wrong_id"), K::malformed);
  EXPECT_EQ(fault_kind("wrong_count"), K::malformed);
}

TEST(Session, BadEndpoints) {
  EXPECT_THROW(connect_external("carrier-pigeon:home"), InvalidArgument);
  try {
    connect_external("exec:/nonexistent/server", ConnectOptions{2000ms, 1});
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_TRUE(e.kind() == TransportError::Kind::io || e.kind() == TransportError::Kind::handshake);
  }
}

TEST(ServeCheck, PassesOnConformingServer) {
  const auto report = harness::serve_check(server(), 5000ms);
  ASSERT_TRUE(report.spec);
  ASSERT_EQ(report.checks.size(), 8u);
  for (const auto& c : report.checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;
  EXPECT_TRUE(report.passed());
  EXPECT_FALSE(report.transcript.empty());
  EXPECT_EQ(report.transcript.front().rfind("> ", 0), 0u);
}

TEST(ServeCheck, FlagsNondeterministicServer) {
  const auto report = harness::serve_check(server("--fault noisy"), 5000ms);
  EXPECT_FALSE(report.passed());
  bool repeat_failed = false;
  for (const auto& c : report.checks)
    if (c.name == "repeatability") repeat_failed = !c.passed;
  EXPECT_TRUE(repeat_failed);
}

TEST(ServeCheck, FailsOnGarbageAndHandshake) {
  EXPECT_FALSE(harness::serve_check(server("--fault garbage"), 2000ms).passed());
  const auto report = harness::serve_check(server("--fault bad_protocol"), 2000ms);
  EXPECT_FALSE(report.spec);
  for (const auto& c : report.checks) EXPECT_FALSE(c.passed) << c.name;
}
