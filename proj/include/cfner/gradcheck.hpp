#pragma once

#include <cstdint>
#include <vector>

#include "cfner/baselines.hpp"

namespace cfner {

struct GradcheckOptions {
  std::size_t trials = 20;
  double epsilon = 1e-4;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  EncoderConfig encoder;
  /// Coordinates sampled per parameter tensor and trial.
  std::size_t coordinates_per_tensor = 8;
  /// Test hook: perturbs the analytic gradient so the check must fail.
  bool corrupt = false;
};

struct GradcheckResult {
  Method method = Method::CFNER;
  std::size_t trials = 0;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  bool passed = true;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double relative_error(double analytic, double numeric);

/// Central finite differences against loss_and_grads for every loss kind on
/// random (model, batch) pairs. Matched-token predictions are held fixed, so
/// the check also covers the anchor-only gradient contract.
std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& options);

std::vector<Method> all_methods();

}  // namespace cfner
