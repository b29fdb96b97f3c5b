#include "storyplan/generate.hpp"

#include <algorithm>
#include <cctype>

#include "storyplan/errors.hpp"

namespace storyplan {

using nlohmann::json;

bool is_word_token(std::string_view token) {
  if (token.empty()) return false;
  if (placeholder_index(token)) return true;
  if (is_special_token(token) || token == kNewlineMarker) return false;
  return !std::all_of(token.begin(), token.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u);
  });
}

std::size_t count_words(const Tokens& tokens) {
  return static_cast<std::size_t>(std::count_if(tokens.begin(), tokens.end(), is_word_token));
}

Tokens trim_to_words(const Tokens& tokens, std::size_t words) {
  Tokens out;
  std::size_t seen = 0;
  for (const auto& t : tokens) {
    if (is_word_token(t)) {
      if (seen == words) break;
      ++seen;
    }
    out.push_back(t);
  }
  return out;
}

GeneratedSequence generate_sequence(const SequenceModel& model, std::span<const int> source,
                                    const Vocabulary& target_vocab, const GenerationConfig& config, Rng& rng) {
  config.validate(target_vocab.size());
  if (model.target_vocab_size() != target_vocab.size()) {
    throw ValidationError("model and target vocabulary sizes differ");
  }
  std::vector<int> banned{target_vocab.pad_id(), target_vocab.unk_id(), target_vocab.bos_id()};
  banned.insert(banned.end(), config.banned.begin(), config.banned.end());
  std::vector<int> banned_with_eos = banned;
  banned_with_eos.push_back(target_vocab.eos_id());

  const auto is_boundary_piece = [&](int id) {
    const auto& t = target_vocab.token(id);
    return is_sentence_terminator(t) || is_closing_quote(t);
  };

  GeneratedSequence out;
  auto session = model.start(source);
  bool pending_cut = false;
  const std::size_t budget = config.token_budget();
  while (true) {
    if (out.ids.size() >= budget) {
      (pending_cut ? out.cut_at_boundary : out.hard_cut) = true;
      break;
    }
    const auto step = session->step(out.ids);
    const auto& active = out.words < config.min_words ? banned_with_eos : banned;
    const int token = decode_step_with_copy(step, out.ids, target_vocab.placeholder_begin(),
                                            target_vocab.placeholder_count(), config, active, rng)
                          .token;
    if (pending_cut) {
      if (token != target_vocab.eos_id() && is_boundary_piece(token)) {
        out.ids.push_back(token);
        continue;
      }
      out.cut_at_boundary = true;
      break;
    }
    if (token == target_vocab.eos_id()) {
      out.ended_with_eos = true;
      break;
    }
    out.ids.push_back(token);
    const auto& text = target_vocab.token(token);
    if (is_word_token(text)) ++out.words;
    if (is_sentence_terminator(text) && out.words >= config.max_words) {
      pending_cut = true;
    } else if (out.words >= config.max_words + config.slack) {
      out.hard_cut = true;
      break;
    }
  }
  return out;
}

PipelineConfig::PipelineConfig() {
  plan.min_words = 0;
  plan.max_words = 400;
  plan.slack = 0;
  plan.max_tokens = 600;
}

json PipelineConfig::to_json() const { return {{"plan", plan.to_json()}, {"story", story.to_json()}, {"seed", seed}}; }

PipelineConfig PipelineConfig::from_json(const json& j) {
  PipelineConfig c;
  if (j.contains("plan")) {
    json merged = c.plan.to_json();
    merged.merge_patch(j["plan"]);
    c.plan = GenerationConfig::from_json(merged);
  }
  if (j.contains("story")) c.story = GenerationConfig::from_json(j["story"]);
  c.seed = j.value("seed", c.seed);
  return c;
}

json PipelineRecord::to_json() const {
  return {{"example", example},
          {"prompt", join_tokens(prompt)},
          {"plan", join_tokens(plan)},
          {"anonymized", join_tokens(anonymized)},
          {"fills", fills},
          {"story", join_tokens(story)},
          {"plan_hard_cut", plan_hard_cut},
          {"story_hard_cut", story_hard_cut}};
}

namespace {

template <typename F>
auto run_stage(const char* stage, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

PipelineRecord run_pipeline(const Prompt& prompt, const PipelineBundle& bundle, const PipelineConfig& config,
                            std::uint64_t example) {
  run_stage("bundle", [&] {
    bundle.validate();
    return 0;
  });
  const Rng root(config.seed);
  PipelineRecord record;
  record.example = example;
  record.prompt = prompt.tokens;

  const auto plan = run_stage("plan", [&] {
    Rng rng = root.substream("plan", example);
    return generate_sequence(*bundle.plan_model, bundle.prompt_vocab.encode(prompt.tokens), bundle.story_vocab,
                             config.plan, rng);
  });
  record.plan = bundle.story_vocab.decode(plan.ids);
  record.plan_hard_cut = plan.hard_cut;

  const auto story = run_stage("story", [&] {
    Rng rng = root.substream("story", example);
    return generate_sequence(*bundle.story_model, plan.ids, bundle.story_vocab, config.story, rng);
  });
  record.anonymized = bundle.story_vocab.decode(story.ids);
  record.story_hard_cut = story.hard_cut;

  record.fills = run_stage("fill", [&] {
    Rng rng = root.substream("fill", example);
    return predict_fills(record.anonymized, bundle.fill, rng);
  });
  record.story = run_stage("deanonymize", [&] {
    return deanonymize(anonymized_from_tokens(record.anonymized, bundle.scheme), record.fills);
  });
  return record;
}

}  // namespace storyplan
