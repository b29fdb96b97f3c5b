#include "storyplan/models.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "storyplan/errors.hpp"
#include "storyplan/nn/checkpoint.hpp"

namespace storyplan {

using nlohmann::json;

MentionContext make_mention_context(const Tokens& story, std::size_t position, std::vector<std::string> previous,
                                    std::size_t window) {
  if (position >= story.size()) throw ValidationError("mention position outside the story");
  const auto id = placeholder_index(story[position]);
  if (!id) throw ValidationError("mention position does not hold a placeholder");
  MentionContext ctx;
  ctx.placeholder = *id;
  ctx.position = position;
  ctx.previous = std::move(previous);
  ctx.story = story;
  const std::size_t lo = position >= window ? position - window : 0;
  const std::size_t hi = std::min(story.size(), position + window + 1);
  for (std::size_t i = lo; i < hi; ++i) {
    if (i != position) ctx.window.push_back(story[i]);
  }
  std::sort(ctx.window.begin(), ctx.window.end());
  return ctx;
}

Tokens coref_fill_source(const MentionContext& context) {
  const std::string sep(special::separator);
  Tokens out{placeholder_token(context.placeholder), sep};
  out.insert(out.end(), context.window.begin(), context.window.end());
  out.push_back(sep);
  if (context.previous.empty()) {
    out.emplace_back(special::null_slot);
  } else {
    for (std::size_t i = 0; i < context.previous.size(); ++i) {
      if (i > 0) out.push_back(sep);
      auto words = tokenize(context.previous[i], Scheme::word);
      out.insert(out.end(), words.begin(), words.end());
    }
  }
  out.push_back(sep);
  for (std::size_t i = 0; i < context.story.size(); ++i) {
    out.push_back(i == context.position ? std::string(special::mention) : context.story[i]);
  }
  return out;
}

Tokens ner_fill_source(std::size_t placeholder, const Tokens& story) {
  Tokens out{placeholder_token(placeholder), std::string(special::separator)};
  out.insert(out.end(), story.begin(), story.end());
  return out;
}

std::vector<FillExample> fill_examples(const AnonymizedStory& anon, AnonScheme mode, std::size_t window) {
  std::vector<FillExample> out;
  if (mode == AnonScheme::ner) {
    for (std::size_t id = 0; id < anon.table.entries.size(); ++id) {
      const auto& slots = anon.table.entries[id].slots;
      if (slots.empty() || slots.front().surface.empty()) continue;
      out.push_back({ner_fill_source(id, anon.tokens), slots.front().surface, id, true});
    }
    return out;
  }
  std::map<std::size_t, std::pair<std::size_t, const MentionSlot*>> by_position;
  for (std::size_t id = 0; id < anon.table.entries.size(); ++id) {
    for (const auto& slot : anon.table.entries[id].slots) by_position[slot.position] = {id, &slot};
  }
  std::map<std::size_t, std::vector<std::string>> history;
  for (const auto& [position, entry] : by_position) {
    const auto& [id, slot] = entry;
    if (slot->surface.empty()) continue;
    auto& previous = history[id];
    auto ctx = make_mention_context(anon.tokens, position, previous, window);
    out.push_back({coref_fill_source(ctx), slot->surface, id, previous.empty()});
    previous.push_back(slot->surface);
  }
  return out;
}

std::vector<int> encode_with_eos(const Vocabulary& vocab, const Tokens& tokens) {
  auto ids = vocab.encode(tokens);
  ids.push_back(vocab.eos_id());
  return ids;
}

TrainingPair FillModel::encode(const FillExample& example) const {
  return {source_vocab.encode(example.source), encode_with_eos(target_vocab, target_tokenizer.tokenize(example.target))};
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(' ');
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(' ');
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string decode_fill(const FillModel& filler, const Tokens& source, Rng& rng) {
  if (!filler.model) throw ValidationError("filler has no model");
  const auto& tv = filler.target_vocab;
  const std::vector<int> base_banned{tv.pad_id(), tv.unk_id(), tv.bos_id()};
  std::vector<int> first_banned = base_banned;
  first_banned.push_back(tv.eos_id());
  const auto source_ids = filler.source_vocab.encode(source);
  auto session = filler.model->start(source_ids);
  std::vector<int> prefix;
  while (prefix.size() < filler.max_length) {
    const auto step = session->step(prefix);
    const int token = sample_top_k(step.logits, filler.temperature, filler.k,
                                   prefix.empty() ? first_banned : base_banned, rng);
    if (token == tv.eos_id()) break;
    prefix.push_back(token);
  }
  Tokens pieces;
  for (int id : prefix) {
    if (tv.is_placeholder(id) || is_special_token(tv.token(id))) continue;
    pieces.push_back(tv.token(id));
  }
  std::string text = trim(filler.target_tokenizer.detokenize(pieces));
  if (text.empty()) throw ValidationError("filler produced an empty reference");
  return text;
}

std::string ner_fill_predict(std::size_t placeholder, const Tokens& anon_story, const FillModel& filler, Rng& rng) {
  const std::string token = placeholder_token(placeholder);
  if (std::find(anon_story.begin(), anon_story.end(), token) == anon_story.end()) {
    throw ValidationError("placeholder " + token + " does not occur in the story");
  }
  return decode_fill(filler, ner_fill_source(placeholder, anon_story), rng);
}

std::string coref_fill_predict(const MentionContext& context, const FillModel& filler, Rng& rng) {
  return decode_fill(filler, coref_fill_source(context), rng);
}

Fills predict_fills(const Tokens& anon_story, const FillModel& filler, Rng& rng) {
  Fills fills;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < anon_story.size(); ++i) {
    if (auto id = placeholder_index(anon_story[i])) {
      if (fills.size() <= *id) fills.resize(*id + 1);
      order.push_back(i);
    }
  }
  for (std::size_t position : order) {
    const std::size_t id = *placeholder_index(anon_story[position]);
    if (filler.mode == AnonScheme::ner) {
      if (fills[id].empty()) fills[id].push_back(ner_fill_predict(id, anon_story, filler, rng));
    } else {
      auto ctx = make_mention_context(anon_story, position, fills[id], filler.window);
      fills[id].push_back(coref_fill_predict(ctx, filler, rng));
    }
  }
  return fills;
}

double score_mention(const FillModel& filler, const Tokens& source, const std::string& candidate) {
  if (trim(candidate).empty()) throw ValidationError("cannot score an empty candidate");
  if (!filler.model) throw ValidationError("filler has no model");
  const auto target = encode_with_eos(filler.target_vocab, filler.target_tokenizer.tokenize(candidate));
  const auto logp = filler.model->score_tokens(filler.source_vocab.encode(source), target);
  double total = 0.0;
  for (double v : logp) total += v;
  return filler.length_normalize ? total / static_cast<double>(logp.size()) : total;
}

double score_mention(const FillModel& filler, const MentionContext& context, const std::string& candidate) {
  return score_mention(filler, coref_fill_source(context), candidate);
}

StepDecision decode_step_with_copy(const StepOutput& step, std::span<const int> prefix, int placeholder_begin,
                                   std::size_t placeholder_count, const GenerationConfig& config,
                                   std::span<const int> banned, Rng& rng) {
  const auto is_placeholder = [&](int id) {
    return id >= placeholder_begin && id < placeholder_begin + static_cast<int>(placeholder_count);
  };
  if (step.copy_probability && *step.copy_probability >= config.copy_threshold &&
      step.pointer_weights.size() == prefix.size()) {
    std::optional<std::size_t> best;
    for (std::size_t p = 0; p < prefix.size(); ++p) {
      if (!is_placeholder(prefix[p])) continue;
      if (!best || step.pointer_weights[p] > step.pointer_weights[*best]) best = p;
    }
    if (best) return {prefix[*best], true};
  }
  return {sample_top_k(step.logits, config.temperature, config.k, banned, rng), false};
}

void PipelineBundle::validate() const {
  if (!plan_model || !story_model || !fill.model) throw ValidationError("pipeline bundle is missing a model");
  if (plan_model->target_vocab_size() != story_vocab.size()) {
    throw ValidationError("plan model target vocabulary differs from the story vocabulary");
  }
  if (story_model->target_vocab_size() != story_vocab.size()) {
    throw ValidationError("story model target vocabulary differs from the story vocabulary");
  }
  if (fill.model->target_vocab_size() != fill.target_vocab.size()) {
    throw ValidationError("fill model target vocabulary differs from the fill vocabulary");
  }
  if (story_vocab.placeholder_count() == 0) throw ValidationError("story vocabulary has no placeholder tokens");
  if (fill.source_vocab.entries() != story_vocab.entries()) {
    throw ValidationError("filler source vocabulary differs from the story vocabulary");
  }
  if (fill.mode != scheme) throw ValidationError("filler mode differs from the bundle scheme");
}

json StageShape::to_json() const {
  return {{"dim", dim},
          {"encoder_layers", encoder_layers},
          {"decoder_layers", decoder_layers},
          {"heads", heads},
          {"kernel_width", kernel_width},
          {"verb_attention", verb_attention},
          {"pointer_copy", pointer_copy}};
}

StageShape StageShape::from_json(const json& j) {
  StageShape s;
  s.dim = j.value("dim", s.dim);
  s.encoder_layers = j.value("encoder_layers", s.encoder_layers);
  s.decoder_layers = j.value("decoder_layers", s.decoder_layers);
  s.heads = j.value("heads", s.heads);
  s.kernel_width = j.value("kernel_width", s.kernel_width);
  s.verb_attention = j.value("verb_attention", s.verb_attention);
  s.pointer_copy = j.value("pointer_copy", s.pointer_copy);
  return s;
}

namespace {

Seq2SeqConfig base_config(std::size_t source_vocab, const Vocabulary& target, const StageShape& shape) {
  Seq2SeqConfig c;
  c.source_vocab = source_vocab;
  c.target_vocab = target.size();
  c.dim = shape.dim;
  c.encoder_layers = shape.encoder_layers;
  c.decoder_layers = shape.decoder_layers;
  c.heads = shape.heads;
  c.kernel_width = shape.kernel_width;
  c.bos = target.bos_id();
  c.eos = target.eos_id();
  c.placeholder_begin = target.placeholder_begin();
  c.placeholder_count = target.placeholder_count();
  return c;
}

}  // namespace

Seq2SeqConfig plan_model_config(const Vocabulary& prompt_vocab, const Vocabulary& story_vocab,
                                const StageShape& shape) {
  auto c = base_config(prompt_vocab.size(), story_vocab, shape);
  if (shape.verb_attention) {
    c.verb_head = 0;
    c.verb_marker = story_vocab.frame_id();
  }
  c.validate();
  return c;
}

Seq2SeqConfig story_model_config(const Vocabulary& story_vocab, const StageShape& shape) {
  auto c = base_config(story_vocab.size(), story_vocab, shape);
  if (shape.pointer_copy && story_vocab.placeholder_count() > 0) c.pointer_head = shape.heads - 1;
  c.validate();
  return c;
}

Seq2SeqConfig fill_model_config(const Vocabulary& story_vocab, const Vocabulary& fill_vocab, const StageShape& shape) {
  auto c = base_config(story_vocab.size(), fill_vocab, shape);
  c.validate();
  return c;
}

json ModelManifest::to_json() const {
  json j = {{"stage", stage},
            {"config", config.to_json()},
            {"seed", seed},
            {"source_vocab", source_vocab},
            {"target_vocab", target_vocab},
            {"target_scheme", std::string(to_string(target_scheme))},
            {"bpe_merges", bpe_merges},
            {"training", training}};
  j["anon_scheme"] = anon_scheme ? json(std::string(to_string(*anon_scheme))) : json(nullptr);
  return j;
}

ModelManifest ModelManifest::from_json(const json& j) {
  ModelManifest m;
  m.stage = j.at("stage").get<std::string>();
  m.config = Seq2SeqConfig::from_json(j.at("config"));
  m.seed = j.at("seed").get<std::uint64_t>();
  m.source_vocab = j.at("source_vocab").get<std::string>();
  m.target_vocab = j.at("target_vocab").get<std::string>();
  m.target_scheme = parse_scheme(j.at("target_scheme").get<std::string>());
  m.bpe_merges = j.value("bpe_merges", std::string());
  if (j.contains("anon_scheme") && !j["anon_scheme"].is_null()) {
    m.anon_scheme = parse_anon_scheme(j["anon_scheme"].get<std::string>());
  }
  m.training = j.value("training", json::object());
  return m;
}

void save_model(const Seq2SeqModel& model, const ModelManifest& manifest, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save_parameters(dir / (manifest.stage + ".ckpt"), model.parameters());
  std::ofstream out(dir / (manifest.stage + ".json"), std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.to_json().dump(2) << '\n';
}

std::pair<std::shared_ptr<Seq2SeqModel>, ModelManifest> load_model(const std::filesystem::path& dir,
                                                                   const std::string& stage) {
  const auto manifest_path = dir / (stage + ".json");
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("missing model manifest " + manifest_path.string());
  ModelManifest manifest;
  try {
    json j;
    in >> j;
    manifest = ModelManifest::from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError("malformed model manifest " + manifest_path.string() + ": " + e.what());
  }
  auto model = std::make_shared<Seq2SeqModel>(manifest.config, manifest.seed);
  nn::load_parameters(dir / (stage + ".ckpt"), model->parameters());
  return {std::move(model), std::move(manifest)};
}

}  // namespace storyplan
