#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyplan/rng.hpp"

namespace storyplan {

struct GenerationConfig {
  /// 0 selects the argmax.
  double temperature = 0.8;
  std::size_t k = 10;
  std::size_t min_words = 150;
  std::size_t max_words = 250;
  /// Words allowed past max_words while waiting for a sentence boundary.
  std::size_t slack = 100;
  /// Hard token budget; 0 means 4 * (max_words + slack).
  std::size_t max_tokens = 0;
  double copy_threshold = 0.5;
  std::uint64_t seed = 0;
  /// Banned in addition to unk.
  std::vector<int> banned;

  std::size_t token_budget() const { return max_tokens ? max_tokens : 4 * (max_words + slack); }
  /// Throws ValidationError when k is 0 or exceeds the vocabulary, or min_words > max_words.
  void validate(std::size_t vocab_size) const;
  nlohmann::json to_json() const;
  static GenerationConfig from_json(const nlohmann::json& j);
};

/// Masks banned ids, scales by 1/temperature, keeps the k largest logits
/// (ties at the boundary go to the lower id), renormalizes and draws one id.
/// Throws ValidationError when every id is banned.
int sample_top_k(std::span<const double> logits, double temperature, std::size_t k, std::span<const int> banned,
                 Rng& rng);

/// The renormalized distribution sample_top_k draws from (zeros outside the top k).
std::vector<double> top_k_distribution(std::span<const double> logits, double temperature, std::size_t k,
                                       std::span<const int> banned);

}  // namespace storyplan
