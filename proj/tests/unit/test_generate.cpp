#include <doctest.h>

#include <cmath>
#include <map>

#include "scripted_model.hpp"
#include "storyplan/errors.hpp"
#include "storyplan/generate.hpp"
#include "storyplan/sampling.hpp"

using namespace storyplan;

namespace {

// word tokens w0..w9 plus ".", "!", "\"" and ent0, ent1
Vocabulary story_vocab() {
  Tokens words = {".", "!", "\""};
  for (int i = 0; i < 10; ++i) words.push_back("w" + std::to_string(i));
  return build_vocab({words}, Scheme::word, 64, 2);
}

}  // namespace

TEST_SUITE("generate") {
  TEST_CASE("top-k distribution matches the analytic truncation") {
    const std::vector<double> logits = {1.0, 3.0, 2.0, 0.5, 3.0};
    const auto p = top_k_distribution(logits, 0.5, 3, {});
    // kept: ids 1, 4 (tie, lower id first) and 2
    const double z = 2.0 * std::exp(6.0) + std::exp(4.0);
    CHECK(p[1] == doctest::Approx(std::exp(6.0) / z));
    CHECK(p[4] == doctest::Approx(std::exp(6.0) / z));
    CHECK(p[2] == doctest::Approx(std::exp(4.0) / z));
    CHECK(p[0] == 0.0);
    CHECK(p[3] == 0.0);

    const std::vector<int> banned = {1};
    const auto q = top_k_distribution(logits, 1.0, 2, banned);
    CHECK(q[1] == 0.0);
    CHECK(q[4] == doctest::Approx(std::exp(3.0) / (std::exp(3.0) + std::exp(2.0))));

    const auto full = top_k_distribution(logits, 1.0, 5, {});
    double z1 = 0.0;
    for (double l : logits) z1 += std::exp(l);
    for (std::size_t i = 0; i < logits.size(); ++i) CHECK(full[i] == doctest::Approx(std::exp(logits[i]) / z1));
  }

  TEST_CASE("sample_top_k edge cases") {
    Rng rng(3);
    const std::vector<double> logits = {0.1, 0.7, 0.3, 0.7};
    for (int i = 0; i < 200; ++i) CHECK(sample_top_k(logits, 1.0, 1, {}, rng) == 1);
    CHECK(sample_top_k(logits, 0.0, 4, {}, rng) == 1);
    const std::vector<int> all = {0, 1, 2, 3};
    CHECK_THROWS_AS(sample_top_k(logits, 1.0, 2, all, rng), ValidationError);
    const std::vector<int> some = {1, 3};
    for (int i = 0; i < 200; ++i) {
      const int t = sample_top_k(logits, 1.0, 4, some, rng);
      CHECK((t == 0 || t == 2));
    }
    Rng a(9), b(9);
    for (int i = 0; i < 50; ++i) CHECK(sample_top_k(logits, 1.0, 3, {}, a) == sample_top_k(logits, 1.0, 3, {}, b));
  }

  TEST_CASE("generation config") {
    GenerationConfig c;
    CHECK(c.token_budget() == 4 * (250 + 100));
    c.k = 0;
    CHECK_THROWS_AS(c.validate(10), ValidationError);
    c.k = 11;
    CHECK_THROWS_AS(c.validate(10), ValidationError);
    c.k = 5;
    c.min_words = 300;
    CHECK_THROWS_AS(c.validate(10), ValidationError);
    c.min_words = 10;
    c.banned = {4, 5};
    CHECK(GenerationConfig::from_json(c.to_json()).to_json() == c.to_json());
  }

  TEST_CASE("word counting") {
    CHECK(is_word_token("ent3"));
    CHECK(is_word_token("don't"));
    CHECK_FALSE(is_word_token("."));
    CHECK_FALSE(is_word_token("--"));
    CHECK_FALSE(is_word_token("<sent>"));
    CHECK(count_words({"He", "ran", ",", "ent0", "<newline>", "."}) == 3);
    CHECK(trim_to_words({"a", "b", ",", "c", "."}, 2) == Tokens{"a", "b", ","});
  }

  TEST_CASE("eos before the minimum is suppressed") {
    const Vocabulary v = story_vocab();
    const int w = v.id("w1"), eos = v.eos_id(), period = v.id(".");
    // proposes eos at word 100 and every word after it; a period every 10 words
    testing::ScriptedModel model(v.size(), [&](std::span<const int> prefix) {
      std::size_t words = 0;
      for (int id : prefix) words += is_word_token(v.token(id));
      if (words >= 100 && prefix.back() == period) return eos;
      if (!prefix.empty() && prefix.back() != period && words % 10 == 0) return period;
      return w;
    }, w);
    GenerationConfig cfg;
    Rng rng(1);
    const auto out = generate_sequence(model, {}, v, cfg, rng);
    CHECK(out.ended_with_eos);
    CHECK(out.words == 150);
    CHECK(out.ids.back() == period);
  }

  TEST_CASE("past the maximum the story ends at the next sentence boundary") {
    const Vocabulary v = story_vocab();
    const int w = v.id("w2"), period = v.id("."), quote = v.id("\"");
    // 262 words without a terminator, then ." and more words
    testing::ScriptedModel model(v.size(), [&](std::span<const int> prefix) {
      if (prefix.size() < 262) return w;
      if (prefix.size() == 262) return period;
      if (prefix.size() == 263) return quote;
      return w;
    });
    GenerationConfig cfg;
    Rng rng(1);
    const auto out = generate_sequence(model, {}, v, cfg, rng);
    CHECK(out.cut_at_boundary);
    CHECK(out.words == 262);
    CHECK(out.ids.size() == 264);
    CHECK(out.ids.back() == quote);
  }

  TEST_CASE("hard cut without any boundary") {
    const Vocabulary v = story_vocab();
    const int w = v.id("w3");
    testing::ScriptedModel model(v.size(), [&](std::span<const int>) { return w; });
    GenerationConfig cfg;
    cfg.min_words = 5;
    cfg.max_words = 20;
    cfg.slack = 7;
    Rng rng(1);
    const auto out = generate_sequence(model, {}, v, cfg, rng);
    CHECK(out.hard_cut);
    CHECK(out.words == 27);

    testing::ScriptedModel dots(v.size(), [&](std::span<const int>) { return v.id("!"); });
    const auto budget = generate_sequence(dots, {}, v, cfg, rng);
    CHECK(budget.hard_cut);
    CHECK(budget.ids.size() == cfg.token_budget());
  }

  TEST_CASE("unk is never produced") {
    const Vocabulary v = story_vocab();
    testing::ScriptedModel model(v.size(), [&](std::span<const int> prefix) {
      return prefix.size() < 30 ? v.unk_id() : v.eos_id();
    });
    GenerationConfig cfg;
    cfg.min_words = 0;
    cfg.max_words = 50;
    Rng rng(2);
    const auto out = generate_sequence(model, {}, v, cfg, rng);
    for (int id : out.ids) CHECK(id != v.unk_id());
  }

  TEST_CASE("pipeline config json") {
    PipelineConfig c;
    c.seed = 17;
    c.story.max_words = 90;
    const auto back = PipelineConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.plan.min_words == 0);
    const auto partial = PipelineConfig::from_json({{"plan", {{"k", 3}}}});
    CHECK(partial.plan.k == 3);
    CHECK(partial.plan.max_tokens == 600);
  }

  TEST_CASE("stub pipeline reproduces a hand-built story") {
    const Vocabulary prompts = build_vocab({{"a", "knight"}}, Scheme::word, 32);
    const Vocabulary story = build_vocab({{"<frame>", "rode", "ent0", "<sent>", "home", "."}}, Scheme::word, 40, 2);
    const auto script = [](std::vector<int> ids) {
      return [ids](std::span<const int> prefix) { return ids[std::min(prefix.size(), ids.size() - 1)]; };
    };
    PipelineBundle b;
    b.prompt_vocab = prompts;
    b.story_vocab = story;
    b.scheme = AnonScheme::ner;
    b.plan_model = std::make_shared<testing::ScriptedModel>(
        story.size(), script({story.frame_id(), story.id("rode"), story.id("ent0"), story.sentence_id(), story.eos_id()}));
    b.story_model = std::make_shared<testing::ScriptedModel>(
        story.size(), script({story.id("ent0"), story.id("rode"), story.id("home"), story.id("."), story.eos_id()}));
    Tokens chars;
    for (char c : std::string("Sir Kay")) chars.emplace_back(c == ' ' ? std::string(kSpaceMarker) : std::string(1, c));
    const Vocabulary fill_vocab = build_vocab({chars}, Scheme::character, 40);
    std::vector<int> spelled = fill_vocab.encode(chars);
    spelled.push_back(fill_vocab.eos_id());
    b.fill.model = std::make_shared<testing::ScriptedModel>(fill_vocab.size(), script(spelled));
    b.fill.source_vocab = story;
    b.fill.target_vocab = fill_vocab;
    b.fill.target_tokenizer = Tokenizer(Scheme::character);
    b.fill.mode = AnonScheme::ner;

    PipelineConfig cfg;
    cfg.seed = 5;
    cfg.story.min_words = 1;
    cfg.story.max_words = 10;
    cfg.story.k = 3;
    cfg.plan.k = 3;
    const auto rec = run_pipeline(make_prompt("a knight"), b, cfg);
    CHECK(rec.plan == Tokens{"<frame>", "rode", "ent0", "<sent>"});
    CHECK(rec.anonymized == Tokens{"ent0", "rode", "home", "."});
    CHECK(rec.fills == Fills{{"Sir Kay"}});
    CHECK(rec.story == Tokens{"Sir", "Kay", "rode", "home", "."});
    for (const auto& t : rec.plan) CHECK(story.find(t).has_value());

    b.fill.mode = AnonScheme::coref;
    try {
      run_pipeline(make_prompt("a knight"), b, cfg);
      FAIL("expected a stage error");
    } catch (const StageError& e) {
      CHECK(e.stage() == "bundle");
    }
  }
}
