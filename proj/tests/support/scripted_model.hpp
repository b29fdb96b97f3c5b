#pragma once

#include <functional>
#include <memory>
#include <span>

#include "storyplan/sequence_model.hpp"

namespace storyplan::testing {

/// Deterministic stand-in for a trained decoder: `next(prefix)` names the
/// token that gets essentially all the probability mass at each step. The
/// optional fallback is the runner-up, used when the scripted token is banned.
class ScriptedModel final : public SequenceModel {
 public:
  using Script = std::function<int(std::span<const int> prefix)>;

  ScriptedModel(std::size_t vocab, Script next, int fallback = -1)
      : vocab_(vocab), next_(std::move(next)), fallback_(fallback) {}

  std::unique_ptr<DecoderSession> start(std::span<const int>) const override {
    return std::make_unique<Session>(*this);
  }
  std::size_t target_vocab_size() const override { return vocab_; }

 private:
  struct Session final : DecoderSession {
    explicit Session(const ScriptedModel& m) : model(m) {}
    StepOutput step(std::span<const int> prefix) override {
      StepOutput out;
      out.logits.assign(model.vocab_, -1e9);
      if (model.fallback_ >= 0) out.logits[static_cast<std::size_t>(model.fallback_)] = -40.0;
      out.logits[static_cast<std::size_t>(model.next_(prefix))] = 0.0;
      return out;
    }
    const ScriptedModel& model;
  };

  std::size_t vocab_;
  Script next_;
  int fallback_;
};

}  // namespace storyplan::testing
