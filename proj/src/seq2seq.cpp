#include "storyplan/seq2seq.hpp"

#include <cmath>
#include <numeric>

#include "storyplan/errors.hpp"
#include "storyplan/rng.hpp"

namespace storyplan {

using nlohmann::json;
using nn::AttentionMask;
using nn::Graph;
using nn::Tensor;
using nn::Var;

void Seq2SeqConfig::validate() const {
  if (source_vocab == 0 || target_vocab == 0) throw ValidationError("vocabulary sizes must be positive");
  if (dim == 0 || heads == 0 || dim % heads != 0) throw ValidationError("head count must divide the model dimension");
  if (decoder_layers == 0) throw ValidationError("decoder needs at least one layer");
  if (kernel_width % 2 == 0) throw ValidationError("kernel width must be odd");
  if (verb_head && *verb_head >= heads) throw ValidationError("verb head index out of range");
  if (pointer_head && *pointer_head >= heads) throw ValidationError("pointer head index out of range");
  if (verb_head && pointer_head && *verb_head == *pointer_head) {
    throw ValidationError("verb and pointer heads must differ");
  }
  if (verb_head && verb_marker < 0) throw ValidationError("verb head needs a verb marker token");
  if (pointer_head && placeholder_count == 0) throw ValidationError("pointer head needs placeholder tokens");
}

json Seq2SeqConfig::to_json() const {
  json j = {{"source_vocab", source_vocab}, {"target_vocab", target_vocab}, {"dim", dim},
            {"encoder_layers", encoder_layers}, {"decoder_layers", decoder_layers}, {"heads", heads},
            {"kernel_width", kernel_width}, {"verb_marker", verb_marker}, {"placeholder_begin", placeholder_begin},
            {"placeholder_count", placeholder_count}, {"bos", bos}, {"eos", eos}};
  j["verb_head"] = verb_head ? json(*verb_head) : json(nullptr);
  j["pointer_head"] = pointer_head ? json(*pointer_head) : json(nullptr);
  return j;
}

Seq2SeqConfig Seq2SeqConfig::from_json(const json& j) {
  Seq2SeqConfig c;
  c.source_vocab = j.at("source_vocab").get<std::size_t>();
  c.target_vocab = j.at("target_vocab").get<std::size_t>();
  c.dim = j.value("dim", c.dim);
  c.encoder_layers = j.value("encoder_layers", c.encoder_layers);
  c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
  c.heads = j.value("heads", c.heads);
  c.kernel_width = j.value("kernel_width", c.kernel_width);
  c.verb_marker = j.value("verb_marker", c.verb_marker);
  c.placeholder_begin = j.value("placeholder_begin", c.placeholder_begin);
  c.placeholder_count = j.value("placeholder_count", c.placeholder_count);
  c.bos = j.value("bos", c.bos);
  c.eos = j.value("eos", c.eos);
  if (j.contains("verb_head") && !j["verb_head"].is_null()) c.verb_head = j["verb_head"].get<std::size_t>();
  if (j.contains("pointer_head") && !j["pointer_head"].is_null()) c.pointer_head = j["pointer_head"].get<std::size_t>();
  c.validate();
  return c;
}

AttentionMask build_verb_mask(std::size_t length, std::span<const std::size_t> verb_positions) {
  AttentionMask mask(length, length);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t p : verb_positions) {
      if (p < t) mask.set(t, p, true);
    }
  }
  return mask;
}

double pointer_copy_prob(std::span<const double> decoder_state, std::span<const double> copy_weight) {
  if (decoder_state.size() != copy_weight.size()) throw ValidationError("copy weight and state dimensions differ");
  double dot = 0.0;
  for (std::size_t i = 0; i < decoder_state.size(); ++i) dot += decoder_state[i] * copy_weight[i];
  return 1.0 / (1.0 + std::exp(-dot));
}

Tensor positional_encoding(std::size_t n, std::size_t dim) {
  Tensor pe(n, dim);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * rate;
      pe(pos, i) = 0.5 * (i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

Seq2SeqModel::Seq2SeqModel(Seq2SeqConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(std::make_unique<nn::ParameterSet>()) {
  config_.validate();
  Rng rng = Rng(seed).substream("init");
  const std::size_t d = config_.dim;
  auto& P = *params_;
  source_embedding_ = &P.create("encoder.embedding", config_.source_vocab, d, 0.5, rng);
  target_embedding_ = &P.create("decoder.embedding", config_.target_vocab, d, 0.5, rng);
  for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
    encoder_.push_back(nn::ConvGlu::create(P, "encoder." + std::to_string(l) + ".conv", d, d, config_.kernel_width,
                                           false, rng));
  }
  for (std::size_t l = 0; l < config_.decoder_layers; ++l) {
    const std::string prefix = "decoder." + std::to_string(l);
    decoder_.push_back({nn::ConvGlu::create(P, prefix + ".conv", d, d, config_.kernel_width, true, rng),
                        nn::Linear::create(P, prefix + ".enc_attn.query", d, d, rng),
                        nn::Linear::create(P, prefix + ".enc_attn.out", d, d, rng),
                        nn::GatedSelfAttention::create(P, prefix + ".self_attn", d, config_.heads, rng)});
  }
  output_ = nn::Linear::create(P, "decoder.output", d, config_.target_vocab, rng);
  if (config_.pointer_head) copy_weight_ = &P.create("decoder.copy_weight", d, 1, 1.0 / std::sqrt(double(d)), rng);
}

Var Seq2SeqModel::encode(Graph& g, std::span<const int> source) const {
  for (int id : source) {
    if (id < 0 || static_cast<std::size_t>(id) >= config_.source_vocab) throw ValidationError("source id out of range");
  }
  Var x = nn::embedding(g, g.parameter(*source_embedding_), source);
  x = nn::add(g, x, g.constant(positional_encoding(source.size(), config_.dim)));
  for (const auto& conv : encoder_) x = conv.forward(g, x);
  return x;
}

std::vector<std::size_t> Seq2SeqModel::verb_positions(std::span<const int> generated) const {
  std::vector<std::size_t> out;
  if (config_.verb_marker < 0) return out;
  for (std::size_t p = 1; p < generated.size(); ++p) {
    if (generated[p - 1] == config_.verb_marker) out.push_back(p);
  }
  return out;
}

std::vector<AttentionMask> Seq2SeqModel::decoder_masks(std::span<const int> generated, std::size_t rows) const {
  std::vector<AttentionMask> masks(config_.heads, AttentionMask::causal(rows));
  if (config_.verb_head) {
    // Decoder key j holds generated[j - 1]; only generated[0..rows-2] are inputs.
    const auto visible = generated.subspan(0, std::min(generated.size(), rows > 0 ? rows - 1 : 0));
    const auto verbs = verb_positions(visible);
    const AttentionMask generated_mask = build_verb_mask(rows, verbs);
    AttentionMask shifted(rows, rows);
    for (std::size_t t = 0; t < rows; ++t) {
      for (std::size_t p = 0; p + 1 < rows; ++p) shifted.set(t, p + 1, generated_mask.allowed(t, p));
    }
    masks[*config_.verb_head] = std::move(shifted);
  }
  return masks;
}

Seq2SeqModel::Forward Seq2SeqModel::forward(Graph& g, Var encoder_states, std::span<const int> generated,
                                            std::size_t rows) const {
  if (rows == 0 || generated.size() + 1 < rows) throw ValidationError("decoder rows exceed the generated prefix");
  std::vector<int> input(rows);
  input[0] = config_.bos;
  for (std::size_t j = 1; j < rows; ++j) {
    input[j] = generated[j - 1];
    if (input[j] < 0 || static_cast<std::size_t>(input[j]) >= config_.target_vocab) {
      throw ValidationError("target id out of range");
    }
  }
  Var h = nn::embedding(g, g.parameter(*target_embedding_), input);
  h = nn::add(g, h, g.constant(positional_encoding(rows, config_.dim)));

  const auto masks = decoder_masks(generated, rows);
  const std::size_t src_len = g.value(encoder_states).rows();
  const AttentionMask cross = AttentionMask::full(rows, src_len);

  Forward f;
  for (const auto& layer : decoder_) {
    h = layer.conv.forward(g, h);
    auto ctx = nn::attention(g, layer.enc_query.forward(g, h), encoder_states, encoder_states, cross);
    h = nn::add(g, h, layer.enc_out.forward(g, ctx.output));
    auto sa = layer.self_attention.forward(g, h, masks);
    h = nn::add(g, h, sa.output);
    f.self_attention.push_back(std::move(sa.head_weights));
  }
  f.states = h;
  f.logits = output_.forward(g, h);
  if (config_.pointer_head) {
    f.copy_logits = nn::matmul(g, h, g.parameter(*copy_weight_));
    f.pointer = f.self_attention.back()[*config_.pointer_head];
  }
  return f;
}

Seq2SeqModel::LossParts Seq2SeqModel::loss(Graph& g, const TrainingPair& pair) const {
  if (pair.target.empty()) throw ValidationError("empty target sequence");
  const std::size_t n = pair.target.size();
  Var enc = encode(g, pair.source);
  Forward f = forward(g, enc, pair.target, n);
  LossParts parts;
  Var ce = nn::cross_entropy(g, f.logits, pair.target);
  parts.token_nll = g.value(ce)[0];
  parts.tokens = n;
  parts.total = ce;

  if (config_.pointer_head) {
    std::vector<double> copy_target(n, 0.0), weight(n, 1.0);
    std::vector<std::size_t> rows;
    std::vector<std::vector<std::size_t>> columns;
    for (std::size_t t = 0; t < n; ++t) {
      const int y = pair.target[t];
      const bool placeholder =
          y >= config_.placeholder_begin && y < config_.placeholder_begin + static_cast<int>(config_.placeholder_count);
      if (!placeholder) continue;
      std::vector<std::size_t> keys;
      for (std::size_t p = 0; p < t; ++p) {
        if (pair.target[p] == y) keys.push_back(p + 1);
      }
      if (keys.empty()) continue;
      copy_target[t] = 1.0;
      rows.push_back(t);
      columns.push_back(std::move(keys));
    }
    parts.total = nn::add(g, parts.total, nn::bce_with_logits(g, f.copy_logits, copy_target, weight));
    if (!rows.empty()) parts.total = nn::add(g, parts.total, nn::neg_log_mass(g, f.pointer, rows, columns));
  }
  return parts;
}

std::pair<double, std::size_t> Seq2SeqModel::evaluate_nll(std::span<const TrainingPair> pairs) const {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& pair : pairs) {
    Graph g(false);
    Var enc = encode(g, pair.source);
    Forward f = forward(g, enc, pair.target, pair.target.size());
    total += g.value(nn::cross_entropy(g, f.logits, pair.target))[0] * static_cast<double>(pair.target.size());
    tokens += pair.target.size();
  }
  return {tokens ? total / static_cast<double>(tokens) : 0.0, tokens};
}

std::vector<double> Seq2SeqModel::target_log_probs(const TrainingPair& pair) const {
  Graph g(false);
  Var enc = encode(g, pair.source);
  Forward f = forward(g, enc, pair.target, pair.target.size());
  const Tensor& logits = g.value(f.logits);
  std::vector<double> out;
  for (std::size_t t = 0; t < pair.target.size(); ++t) {
    auto row = logits.row(t);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    out.push_back(row[static_cast<std::size_t>(pair.target[t])] - mx - std::log(z));
  }
  return out;
}

std::vector<double> Seq2SeqModel::score_tokens(std::span<const int> source, std::span<const int> target) const {
  if (target.empty()) return {};
  return target_log_probs({{source.begin(), source.end()}, {target.begin(), target.end()}});
}

namespace {

class Seq2SeqSession final : public DecoderSession {
 public:
  Seq2SeqSession(const Seq2SeqModel& model, Tensor encoder_states)
      : model_(model), encoder_states_(std::move(encoder_states)) {}

  StepOutput step(std::span<const int> prefix) override {
    Graph g(false);
    Var enc = g.constant(encoder_states_);
    const std::size_t rows = prefix.size() + 1;
    auto f = model_.forward(g, enc, prefix, rows);
    StepOutput out;
    auto last = g.value(f.logits).row(rows - 1);
    out.logits.assign(last.begin(), last.end());
    if (model_.config().pointer_head) {
      const double z = g.value(f.copy_logits)[rows - 1];
      out.copy_probability = 1.0 / (1.0 + std::exp(-z));
      const Tensor& w = g.value(f.pointer);
      out.pointer_weights.resize(prefix.size());
      for (std::size_t p = 0; p < prefix.size(); ++p) out.pointer_weights[p] = w(rows - 1, p + 1);
    }
    return out;
  }

 private:
  const Seq2SeqModel& model_;
  Tensor encoder_states_;
};

}  // namespace

std::unique_ptr<DecoderSession> Seq2SeqModel::start(std::span<const int> source) const {
  Graph g(false);
  Var enc = encode(g, source);
  return std::make_unique<Seq2SeqSession>(*this, g.value(enc));
}

TrainResult train_model(Seq2SeqModel& model, std::span<const TrainingPair> pairs, const TrainSchedule& schedule,
                        const std::function<void(std::size_t, double)>& on_step) {
  if (pairs.empty()) throw ValidationError("cannot train on an empty dataset");
  const std::size_t batch = std::max<std::size_t>(1, schedule.batch_size);
  Rng order_rng = Rng(schedule.seed).substream("train-order");
  nn::Adam adam(schedule.adam);
  auto& params = model.parameters();

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto shuffle = [&] {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
  };

  TrainResult result;
  shuffle();
  std::size_t cursor = 0;
  double epoch_nll = 0.0;
  std::size_t epoch_tokens = 0;
  while (result.steps < schedule.max_steps) {
    params.zero_grad();
    double batch_loss = 0.0;
    const std::size_t take = std::min(batch, order.size() - cursor);
    for (std::size_t b = 0; b < take; ++b) {
      const auto& pair = pairs[order[cursor + b]];
      Graph g;
      auto parts = model.loss(g, pair);
      g.backward(nn::scale(g, parts.total, 1.0 / static_cast<double>(take)));
      epoch_nll += parts.token_nll * static_cast<double>(parts.tokens);
      epoch_tokens += parts.tokens;
      batch_loss += g.value(parts.total)[0] / static_cast<double>(take);
    }
    adam.step(params);
    ++result.steps;
    if (on_step) on_step(result.steps, batch_loss);
    cursor += take;
    if (cursor == order.size()) {
      result.epoch_nll.push_back(epoch_nll / static_cast<double>(epoch_tokens));
      epoch_nll = 0.0;
      epoch_tokens = 0;
      cursor = 0;
      shuffle();
      if (schedule.target_nll && result.epoch_nll.back() < *schedule.target_nll) break;
    }
  }
  if (epoch_tokens > 0) result.epoch_nll.push_back(epoch_nll / static_cast<double>(epoch_tokens));
  return result;
}

}  // namespace storyplan
