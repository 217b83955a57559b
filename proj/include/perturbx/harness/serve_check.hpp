#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "perturbx/model.hpp"

namespace perturbx::harness {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ServeCheckReport {
  std::optional<PredictorSpec> spec;
  std::vector<CheckResult> checks;
  std::vector<std::string> transcript;  // "> " sent, "< " received, with byte counts

  bool passed() const;
};

/// Conformance run against a model server: handshake, single and batched
/// predictions, repeatability within the advertised tolerance, order
/// preservation, a 64-image batch, and error replies to a malformed and an
/// unknown request without losing the session. Checks after a failed
/// handshake are reported as failed.
ServeCheckReport serve_check(const std::string& endpoint,
                             std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

}  // namespace perturbx::harness
