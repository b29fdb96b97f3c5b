#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace storyplan {

/// What a decoder offers for the next position given a generated prefix.
struct StepOutput {
  std::vector<double> logits;
  /// Present when the model has a pointer-copy head.
  std::optional<double> copy_probability;
  /// Pointer-head attention over prefix positions (same length as the prefix).
  std::vector<double> pointer_weights;
};

/// Autoregressive decoding state bound to one source sequence.
class DecoderSession {
 public:
  virtual ~DecoderSession() = default;
  virtual StepOutput step(std::span<const int> prefix) = 0;
};

/// Anything generate_sequence can decode from: trained models and scripted stubs.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual std::unique_ptr<DecoderSession> start(std::span<const int> source) const = 0;
  virtual std::size_t target_vocab_size() const = 0;
  /// Log-probability of each target token given the source and the tokens
  /// before it. The default replays a session one prefix at a time.
  virtual std::vector<double> score_tokens(std::span<const int> source, std::span<const int> target) const;
};

}  // namespace storyplan
