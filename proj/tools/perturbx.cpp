// perturbx: explain one image, evaluate a pipeline matrix, or check a model server.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "perturbx/error.hpp"
#include "perturbx/harness/config.hpp"
#include "perturbx/harness/heatmap.hpp"
#include "perturbx/harness/runner.hpp"
#include "perturbx/harness/serve_check.hpp"
#include "perturbx/serialize.hpp"

namespace fs = std::filesystem;
using namespace perturbx;
using namespace perturbx::harness;

namespace {

constexpr const char* kEndpointEnv = "PERTURBX_MODEL_ENDPOINT";

enum ExitCode { kOk = 0, kConfigError = 1, kTransportError = 2, kPartialFailure = 3 };

struct CommonFlags {
  std::string config_path;
  std::string model;
  std::vector<std::string> images;
  std::vector<std::uint64_t> synthetic;
  std::string synthetic_size = "64x64";
  std::optional<int> target;
  int batch_size = 0;
  int timeout_ms = 30000;
  std::string ciu_utility = "context_range";
  std::vector<std::pair<std::string, std::string>> pipeline_flags;
  std::string out_dir = ".";
};

void add_common(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("-c,--config", f.config_path, "experiment JSON file");
  cmd.add_option("-m,--model", f.model,
                 fmt::format("exec:CMD, tcp:HOST:PORT, additive:SEED[:K] or logistic:SEED[:K] (default ${})",
                             kEndpointEnv));
  cmd.add_option("-i,--image", f.images, "PNG image, repeatable");
  cmd.add_option("--synthetic", f.synthetic, "synthetic image seed, repeatable");
  cmd.add_option("--synthetic-size", f.synthetic_size, "HxW of synthetic images");
  cmd.add_option("--target", f.target, "class to explain (default: top class)");
  cmd.add_option("--batch-size", f.batch_size, "images per model call");
  cmd.add_option("--timeout-ms", f.timeout_ms, "model reply timeout");
  cmd.add_option("--ciu-utility", f.ciu_utility, "context_range or global_range")
      ->check(CLI::IsMember({"context_range", "global_range"}));
  cmd.add_option("-o,--out", f.out_dir, "output directory");
  for (const char* field : {"segmenter", "smoothing", "sampler", "attribution", "granularity", "color", "steps",
                            "occlusion"}) {
    cmd.add_option_function<std::string>(
        fmt::format("--{}", field), [&f, field](const std::string& v) { f.pipeline_flags.emplace_back(field, v); },
        fmt::format("pipeline {} (';' separates matrix alternatives)", field));
  }
}

ExperimentConfig load_experiment(const CommonFlags& f) {
  Json document = Json::object();
  if (!f.config_path.empty()) {
    std::ifstream in(f.config_path);
    if (!in) throw InvalidArgument(fmt::format("cannot read config '{}'", f.config_path));
    document = Json::parse(in);
  }
  if (!f.images.empty() || !f.synthetic.empty()) {
    Json images = Json::array();
    for (const auto& path : f.images) images.push_back({{"id", fs::path(path).stem().string()}, {"path", path}});
    int h = 0, w = 0;
    if (std::sscanf(f.synthetic_size.c_str(), "%dx%d", &h, &w) != 2) throw InvalidArgument("--synthetic-size is HxW");
    for (auto seed : f.synthetic)
      images.push_back({{"id", fmt::format("synthetic-{}", seed)},
                        {"synthetic", {{"height", h}, {"width", w}, {"seed", seed}}}});
    document["images"] = images;
  }
  if (!f.model.empty()) document["model"] = f.model;
  if (f.target) document["target_class"] = *f.target;
  if (f.batch_size > 0) document["batch_size"] = f.batch_size;

  std::vector<std::pair<std::string, Json>> overrides;
  for (const auto& [field, text] : f.pipeline_flags) overrides.emplace_back(field, parse_flag_value(field, text));
  auto cfg = experiment_from_json(document, overrides);

  if (!cfg.model) {
    const char* env = std::getenv(kEndpointEnv);
    if (!env || !*env) throw InvalidArgument(fmt::format("no model given; use --model or set {}", kEndpointEnv));
    cfg.model = model_source_from_json(Json(env));
  }
  if (cfg.images.empty()) throw InvalidArgument("no images given");
  return cfg;
}

RunOptions run_options(const ExperimentConfig& cfg, const CommonFlags& f) {
  RunOptions options;
  options.batch_size = cfg.batch_size;
  options.target_class = cfg.target_class;
  if (!options.target_class && cfg.model->kind != ModelSource::Kind::endpoint) options.target_class = 0;
  options.dataset_mean = cfg.dataset_mean;
  options.normalization = cfg.normalization;
  options.ciu_utility =
      f.ciu_utility == "global_range" ? CuNormalization::global_range : CuNormalization::context_range;
  return options;
}

std::unique_ptr<Predictor> open_model(const ExperimentConfig& cfg, const LoadedImage& first, const CommonFlags& f) {
  ConnectOptions connect;
  connect.timeout = std::chrono::milliseconds(f.timeout_ms);
  connect.batch_size = cfg.batch_size;
  return make_predictor(*cfg.model, first.input.height, first.input.width, first.input.channels, connect);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

int run_explain(const CommonFlags& f) {
  const auto cfg = load_experiment(f);
  if (cfg.matrix.pipelines.size() != 1)
    throw InvalidArgument(fmt::format("explain needs exactly one pipeline, the config expands to {}",
                                      cfg.matrix.pipelines.size()));
  const auto& pipeline = cfg.matrix.pipelines.front();
  const auto options = run_options(cfg, f);
  fs::create_directories(f.out_dir);

  std::vector<LoadedImage> images;
  for (const auto& src : cfg.images) images.push_back(load_image(src, cfg.normalization));
  auto predictor = open_model(cfg, images.front(), f);

  for (const auto& image : images) {
    const auto target = resolve_target(*predictor, image, options);
    const auto ex = explain(*predictor, image, pipeline, options, target);
    const auto occlusion = resolve_color(pipeline.occlusion, image, options);
    const auto score = srg(*predictor, image.input, ex.map, target.class_index, pipeline.steps, occlusion);

    const fs::path heatmap = fs::path(f.out_dir) / (image.id + ".heatmap.png");
    render_heatmap(ex.map, image.display, heatmap.string());
    Json out = {{"image_id", image.id},
                {"model", predictor->spec().identity},
                {"config_hash", config_hash(pipeline)},
                {"config", to_json(pipeline)},
                {"target_class", target.class_index},
                {"reference_output", target.score},
                {"method", to_string(ex.attribution.method)},
                {"n_segments", ex.calls->segments.n_segments},
                {"n_samples", ex.calls->samples.n_samples},
                {"segment_weights", ex.attribution.segment_weights},
                {"degenerate", ex.attribution.degenerate},
                {"dropped_pixels", ex.dropped_pixels},
                {"lif", score.lif},
                {"mif", score.mif},
                {"srg", score.srg},
                {"heatmap", heatmap.string()}};
    write_file(fs::path(f.out_dir) / (image.id + ".weights.json"), out.dump(2) + "\n");
    fmt::print("{}: target {} srg {:.4f} -> {}\n", image.id, target.class_index, score.srg, heatmap.string());
  }
  return kOk;
}

int run_evaluate(const CommonFlags& f) {
  const auto cfg = load_experiment(f);
  const auto options = run_options(cfg, f);
  fs::create_directories(f.out_dir);

  std::vector<LoadedImage> images;
  for (const auto& src : cfg.images) images.push_back(load_image(src, cfg.normalization));
  auto predictor = open_model(cfg, images.front(), f);

  const auto result = run_matrix(cfg.matrix.pipelines, images, *predictor, options);
  {
    std::ofstream out(fs::path(f.out_dir) / "results.csv", std::ios::binary);
    write_records_csv(out, result.records);
  }
  {
    std::ofstream out(fs::path(f.out_dir) / "aggregates.csv", std::ios::binary);
    write_aggregates_csv(out, result.aggregates);
  }
  write_file(fs::path(f.out_dir) / "results.json", sidecar_json(result, cfg, predictor->spec()).dump(2) + "\n");

  fmt::print("{} pipelines ({} pruned) x {} images: {} records, {} failed, {} model call sets\n",
             cfg.matrix.pipelines.size(), cfg.matrix.pruned, images.size(), result.records.size(), result.failures(),
             result.model_call_sets);
  for (const auto& row : result.aggregates) {
    if (row.table != "sampling") continue;
    fmt::print("  {:<24} {:<5} srg {:8.3f}%\n", row.key[0].second, row.key[1].second, row.srg_pct);
  }
  return result.failures() > 0 ? kPartialFailure : kOk;
}

int run_serve_check(std::string endpoint, int timeout_ms) {
  if (endpoint.empty()) {
    const char* env = std::getenv(kEndpointEnv);
    if (!env || !*env) throw InvalidArgument(fmt::format("no endpoint given; use --endpoint or set {}", kEndpointEnv));
    endpoint = env;
  }
  const auto report = serve_check(endpoint, std::chrono::milliseconds(timeout_ms));
  for (const auto& line : report.transcript) fmt::print("  {}\n", line);
  for (const auto& c : report.checks) fmt::print("{} {}: {}\n", c.passed ? "PASS" : "FAIL", c.name, c.detail);
  if (report.passed()) return kOk;
  return report.spec ? kPartialFailure : kTransportError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perturbation-based image attribution and faithfulness evaluation"};
  app.require_subcommand(1);

  CommonFlags explain_flags, evaluate_flags;
  auto* explain_cmd = app.add_subcommand("explain", "attribute one pipeline on each image; heatmap + weights JSON");
  add_common(*explain_cmd, explain_flags);
  auto* evaluate_cmd = app.add_subcommand("evaluate", "run a pipeline matrix; results CSV, aggregates, sidecar");
  add_common(*evaluate_cmd, evaluate_flags);

  std::string endpoint;
  int check_timeout = 30000;
  auto* check_cmd = app.add_subcommand("serve-check", "protocol conformance test of a model server");
  check_cmd->add_option("-e,--endpoint", endpoint, fmt::format("server endpoint (default ${})", kEndpointEnv));
  check_cmd->add_option("--timeout-ms", check_timeout, "reply timeout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*explain_cmd) return run_explain(explain_flags);
    if (*evaluate_cmd) return run_evaluate(evaluate_flags);
    return run_serve_check(endpoint, check_timeout);
  } catch (const TransportError& e) {
    fmt::print(stderr, "model transport error ({}): {}\n", to_string(e.kind()), e.what());
    return kTransportError;
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const Json::exception& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kConfigError;
  }
}
