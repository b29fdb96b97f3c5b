#include "storyplan/sequence_model.hpp"

#include <algorithm>
#include <cmath>

namespace storyplan {

std::vector<double> SequenceModel::score_tokens(std::span<const int> source, std::span<const int> target) const {
  auto session = start(source);
  std::vector<double> out;
  out.reserve(target.size());
  for (std::size_t t = 0; t < target.size(); ++t) {
    const auto step = session->step(target.subspan(0, t));
    const double mx = *std::max_element(step.logits.begin(), step.logits.end());
    double z = 0.0;
    for (double v : step.logits) z += std::exp(v - mx);
    out.push_back(step.logits.at(static_cast<std::size_t>(target[t])) - mx - std::log(z));
  }
  return out;
}

}  // namespace storyplan
