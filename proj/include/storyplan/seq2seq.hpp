#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyplan/nn/graph.hpp"
#include "storyplan/nn/layers.hpp"
#include "storyplan/nn/optim.hpp"
#include "storyplan/sequence_model.hpp"

namespace storyplan {

/// Layer sizes and special-head assignments of a convolutional encoder-decoder.
/// Token ids refer to the target vocabulary.
struct Seq2SeqConfig {
  std::size_t source_vocab = 0;
  std::size_t target_vocab = 0;
  std::size_t dim = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 4;
  std::size_t heads = 4;
  std::size_t kernel_width = 3;
  /// Head restricted to previously generated verbs (the token after verb_marker).
  std::optional<std::size_t> verb_head;
  /// Head whose last-layer attention selects the placeholder to copy.
  std::optional<std::size_t> pointer_head;
  int verb_marker = -1;
  int placeholder_begin = 0;
  std::size_t placeholder_count = 0;
  int bos = 2;
  int eos = 3;

  /// Throws ValidationError on inconsistent sizes or head assignments.
  void validate() const;
  nlohmann::json to_json() const;
  static Seq2SeqConfig from_json(const nlohmann::json& j);
};

/// Source/target id sequences. The target ends with eos.
struct TrainingPair {
  std::vector<int> source;
  std::vector<int> target;
};

/// Row t may see generated positions p < t that hold a verb, plus the null slot.
/// Columns index generated positions 0..length-1.
nn::AttentionMask build_verb_mask(std::size_t length, std::span<const std::size_t> verb_positions);

/// sigma(w . h)
double pointer_copy_prob(std::span<const double> decoder_state, std::span<const double> copy_weight);

class Seq2SeqModel final : public SequenceModel {
 public:
  Seq2SeqModel(Seq2SeqConfig config, std::uint64_t seed);

  Seq2SeqModel(const Seq2SeqModel&) = delete;
  Seq2SeqModel& operator=(const Seq2SeqModel&) = delete;
  Seq2SeqModel(Seq2SeqModel&&) = default;
  Seq2SeqModel& operator=(Seq2SeqModel&&) = default;

  const Seq2SeqConfig& config() const { return config_; }
  nn::ParameterSet& parameters() { return *params_; }
  const nn::ParameterSet& parameters() const { return *params_; }

  struct Forward {
    nn::Var logits;         // (n, target vocab)
    nn::Var states;         // (n, dim) final decoder states
    nn::Var copy_logits;    // (n, 1); only with a pointer head
    nn::Var pointer;        // (n, n + 1) last-layer pointer-head weights over decoder keys
    std::vector<std::vector<nn::Var>> self_attention;  // [layer][head]
  };

  /// Teacher-forced pass. Decoder row t reads bos followed by generated[0..t-1]
  /// and predicts generated[t]; `rows` is the number of decoder positions.
  Forward forward(nn::Graph& g, nn::Var encoder_states, std::span<const int> generated, std::size_t rows) const;
  nn::Var encode(nn::Graph& g, std::span<const int> source) const;

  /// Head masks for the decoder self-attention, in decoder-key coordinates
  /// (key j holds generated[j - 1]; key 0 is bos).
  std::vector<nn::AttentionMask> decoder_masks(std::span<const int> generated, std::size_t rows) const;
  /// Verb positions (generated coordinates) implied by the verb marker.
  std::vector<std::size_t> verb_positions(std::span<const int> generated) const;

  struct LossParts {
    nn::Var total;
    double token_nll = 0.0;  // mean nats per target token
    std::size_t tokens = 0;
  };
  /// Cross-entropy plus, with a pointer head, copy-decision and pointer-attention terms.
  LossParts loss(nn::Graph& g, const TrainingPair& pair) const;

  /// Mean per-token NLL under teacher forcing (nats), and the token count.
  std::pair<double, std::size_t> evaluate_nll(std::span<const TrainingPair> pairs) const;

  std::unique_ptr<DecoderSession> start(std::span<const int> source) const override;
  std::size_t target_vocab_size() const override { return config_.target_vocab; }
  std::vector<double> score_tokens(std::span<const int> source, std::span<const int> target) const override;

  /// Log-probabilities of each target token under teacher forcing.
  std::vector<double> target_log_probs(const TrainingPair& pair) const;

 private:
  struct DecoderLayer {
    nn::ConvGlu conv;
    nn::Linear enc_query;
    nn::Linear enc_out;
    nn::GatedSelfAttention self_attention;
  };

  Seq2SeqConfig config_;
  std::unique_ptr<nn::ParameterSet> params_;
  nn::Parameter* source_embedding_ = nullptr;
  nn::Parameter* target_embedding_ = nullptr;
  std::vector<nn::ConvGlu> encoder_;
  std::vector<DecoderLayer> decoder_;
  nn::Linear output_;
  nn::Parameter* copy_weight_ = nullptr;
};

/// Fixed sinusoidal position encodings, (n, dim).
nn::Tensor positional_encoding(std::size_t n, std::size_t dim);

struct TrainSchedule {
  std::size_t max_steps = 2000;
  std::size_t batch_size = 8;
  nn::AdamConfig adam{3e-3, 0.9, 0.999, 1e-8, 5.0};
  std::uint64_t seed = 0;
  /// Stop once an epoch's mean training NLL falls below this.
  std::optional<double> target_nll;
};

struct TrainResult {
  /// Token-weighted mean NLL (nats) of each epoch, measured before each update.
  std::vector<double> epoch_nll;
  std::size_t steps = 0;
};

/// Teacher-forced training with Adam. Deterministic for a fixed seed.
/// Throws ValidationError on an empty dataset.
TrainResult train_model(Seq2SeqModel& model, std::span<const TrainingPair> pairs, const TrainSchedule& schedule,
                        const std::function<void(std::size_t step, double loss)>& on_step = {});

}  // namespace storyplan
