#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "cfner/tagger.hpp"

namespace cfner::detail {

inline constexpr std::uint32_t kPadding = std::numeric_limits<std::uint32_t>::max();

/// Unit prototypes and their original norms.
struct PrototypeCache {
  explicit PrototypeCache(const TaggerModel& model);
  Matrix unit;
  std::vector<double> norms;
};

/// Activations of one token kept for backpropagation.
struct TokenCache {
  std::vector<std::uint32_t> window_ids;  // kPadding outside the sentence
  std::vector<double> hidden;             // after tanh
  std::vector<double> feature;            // unit norm
  double norm = 0.0;                      // norm before normalization
};

void forward_token(const TaggerModel& model, std::span<const std::uint32_t> ids,
                   std::size_t position, TokenCache& cache);

void cosine_logits(const TaggerModel& model, const PrototypeCache& protos,
                   std::span<const double> feature, std::vector<double>& out);

}  // namespace cfner::detail
