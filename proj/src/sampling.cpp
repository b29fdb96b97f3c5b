#include "storyplan/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "storyplan/errors.hpp"

namespace storyplan {

void GenerationConfig::validate(std::size_t vocab_size) const {
  if (k == 0 || k > vocab_size) throw ValidationError("top-k must lie in [1, vocabulary size]");
  if (temperature < 0.0) throw ValidationError("temperature must be non-negative");
  if (min_words > max_words) throw ValidationError("min_words exceeds max_words");
  if (!(copy_threshold >= 0.0 && copy_threshold <= 1.0)) throw ValidationError("copy threshold must lie in [0, 1]");
}

nlohmann::json GenerationConfig::to_json() const {
  return {{"temperature", temperature}, {"k", k},           {"min_words", min_words},
          {"max_words", max_words},     {"slack", slack},   {"max_tokens", max_tokens},
          {"copy_threshold", copy_threshold}, {"seed", seed}, {"banned", banned}};
}

GenerationConfig GenerationConfig::from_json(const nlohmann::json& j) {
  GenerationConfig c;
  c.temperature = j.value("temperature", c.temperature);
  c.k = j.value("k", c.k);
  c.min_words = j.value("min_words", c.min_words);
  c.max_words = j.value("max_words", c.max_words);
  c.slack = j.value("slack", c.slack);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.copy_threshold = j.value("copy_threshold", c.copy_threshold);
  c.seed = j.value("seed", c.seed);
  c.banned = j.value("banned", c.banned);
  return c;
}

namespace {

// Ids of the kept candidates in descending logit order, lower id first on ties.
std::vector<int> top_candidates(std::span<const double> logits, std::size_t k, std::span<const int> banned) {
  std::vector<char> blocked(logits.size(), 0);
  for (int b : banned) {
    if (b >= 0 && static_cast<std::size_t>(b) < logits.size()) blocked[static_cast<std::size_t>(b)] = 1;
  }
  std::vector<int> ids;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!blocked[i] && !std::isnan(logits[i]) && logits[i] > -std::numeric_limits<double>::infinity()) {
      ids.push_back(static_cast<int>(i));
    }
  }
  if (ids.empty()) throw ValidationError("every token is banned");
  const auto better = [&](int a, int b) { return logits[a] > logits[b] || (logits[a] == logits[b] && a < b); };
  const std::size_t keep = std::min(std::max<std::size_t>(k, 1), ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(), better);
  ids.resize(keep);
  return ids;
}

std::vector<double> kept_weights(std::span<const double> logits, double temperature, const std::vector<int>& ids) {
  std::vector<double> w(ids.size(), 0.0);
  if (temperature == 0.0) {
    w[0] = 1.0;
    return w;
  }
  const double top = logits[ids[0]];
  double z = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    w[i] = std::exp((logits[ids[i]] - top) / temperature);
    z += w[i];
  }
  for (double& x : w) x /= z;
  return w;
}

}  // namespace

int sample_top_k(std::span<const double> logits, double temperature, std::size_t k, std::span<const int> banned,
                 Rng& rng) {
  const auto ids = top_candidates(logits, k, banned);
  if (temperature == 0.0 || ids.size() == 1) return ids[0];
  const auto w = kept_weights(logits, temperature, ids);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    acc += w[i];
    if (u < acc) return ids[i];
  }
  return ids.back();
}

std::vector<double> top_k_distribution(std::span<const double> logits, double temperature, std::size_t k,
                                       std::span<const int> banned) {
  const auto ids = top_candidates(logits, k, banned);
  const auto w = kept_weights(logits, temperature, ids);
  std::vector<double> out(logits.size(), 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) out[static_cast<std::size_t>(ids[i])] = w[i];
  return out;
}

}  // namespace storyplan
