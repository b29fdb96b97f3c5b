#include <doctest.h>

#include "storyplan/decompose.hpp"
#include "storyplan/errors.hpp"

using namespace storyplan;

namespace {

EntityMention mention(const Story& s, Span span, EntityLabel label = EntityLabel::person) {
  return {span, label, Tokens(s.tokens.begin() + static_cast<long>(span.start), s.tokens.begin() + static_cast<long>(span.end))};
}

}  // namespace

TEST_SUITE("decompose") {
  TEST_CASE("serialize_srl_plan puts the predicate first and closes sentences") {
    const Story s = make_story("John ate the cake");
    AnnotatedStory a{s, {{{1, 2}, {{"ARG0", {0, 1}}, {"ARG1", {2, 4}}}, 0}}, {}, {}};
    const auto plan = serialize_srl_plan(a);
    CHECK(plan.tokens == Tokens{"<frame>", "ate", "John", "the", "cake", "<sent>"});
    CHECK(plan.verb_positions == std::vector<std::size_t>{1});
    CHECK(plan_verb_positions(plan.tokens) == plan.verb_positions);

    CHECK(serialize_srl_plan(AnnotatedStory{s, {}, {}, {}}).tokens.empty());

    // ARG1 precedes ARG0 in text; modifiers are dropped
    const Story p = make_story("the cake was eaten by John yesterday");
    AnnotatedStory b{p, {{{3, 4}, {{"ARG1", {0, 2}}, {"ARG0", {5, 6}}, {"ARGM-TMP", {6, 7}}}, 0}}, {}, {}};
    CHECK(serialize_srl_plan(b).tokens == Tokens{"<frame>", "eaten", "John", "the", "cake", "<sent>"});
  }

  TEST_CASE("sentence delimiter follows the last frame of each sentence") {
    const Story s = make_story("Ann ran and Bo hid . Cy sat .");
    AnnotatedStory a{s,
                     {{{1, 2}, {{"ARG0", {0, 1}}}, 0}, {{4, 5}, {{"ARG0", {3, 4}}}, 0}, {{7, 8}, {{"ARG0", {6, 7}}}, 1}},
                     {},
                     {}};
    CHECK(serialize_srl_plan(a).tokens ==
          Tokens{"<frame>", "ran", "Ann", "<frame>", "hid", "Bo", "<sent>", "<frame>", "sat", "Cy", "<sent>"});
  }

  TEST_CASE("anonymize_ner keys on identical strings") {
    const Story s = make_story("Bilbo Baggins met Bilbo");
    const auto anon = anonymize_ner(s, {mention(s, {0, 2}), mention(s, {3, 4})});
    CHECK(anon.tokens == Tokens{"ent0", "met", "ent1"});
    CHECK(anon.table.entries.size() == 2);

    const Story j = make_story("John saw John");
    const auto same = anonymize_ner(j, {mention(j, {0, 1}), mention(j, {2, 3})});
    CHECK(same.tokens == Tokens{"ent0", "saw", "ent0"});
    CHECK(same.table.entries[0].slots.size() == 2);

    const auto none = anonymize_ner(j, {});
    CHECK(none.tokens == j.tokens);
    CHECK(none.table.entries.empty());
  }

  TEST_CASE("overlapping mentions keep the longer span") {
    const Story s = make_story("we met Bilbo Baggins today");
    const auto anon = anonymize_ner(s, {mention(s, {2, 3}), mention(s, {2, 4})});
    CHECK(anon.tokens == Tokens{"we", "met", "ent0", "today"});
  }

  TEST_CASE("anonymize_coref") {
    const Story s = make_story("Bilbo Baggins left . he walked . the hobbit rested near Gondor .");
    const std::vector<CorefCluster> clusters = {{{{0, 2}, {4, 5}, {7, 9}}}};
    const auto anon = anonymize_coref(s, clusters, {mention(s, {0, 2}), mention(s, {11, 12}, EntityLabel::loc)});
    CHECK(anon.tokens == Tokens{"ent0", "left", ".", "ent0", "walked", ".", "ent0", "rested", "near", "ent1", "."});
    CHECK(anon.table.entries[0].slots.size() == 3);
    CHECK(anon.table.entries[0].slots[2].surface == "the hobbit");

    const auto same = anonymize_coref(s, {}, {});
    CHECK(same.tokens == s.tokens);
  }

  TEST_CASE("deanonymize") {
    const Story s = make_story("John saw Mary and John waved");
    const auto ner = anonymize_ner(s, {mention(s, {0, 1}), mention(s, {2, 3}), mention(s, {4, 5})});
    CHECK(deanonymize(ner, gold_fills(ner)) == s.tokens);
    CHECK(deanonymize(ner, {{"Bob Smith"}, {"Ann"}}) == Tokens{"Bob", "Smith", "saw", "Ann", "and", "Bob", "Smith", "waved"});
    CHECK_THROWS_AS(deanonymize(ner, {{"Bob"}}), ValidationError);
    CHECK_THROWS_AS(deanonymize(ner, {{"a", "b", "c"}, {"Ann"}}), ValidationError);

    const auto coref = anonymize_coref(s, {{{{0, 1}, {4, 5}}}}, {mention(s, {2, 3})});
    CHECK(deanonymize(coref, gold_fills(coref)) == s.tokens);
    CHECK(deanonymize(coref, {{"John", "he"}, {"Mary"}}) == Tokens{"John", "saw", "Mary", "and", "he", "waved"});
  }

  TEST_CASE("generated tables skip unused ids") {
    const auto anon = anonymized_from_tokens({"ent0", "met", "ent2"}, AnonScheme::ner);
    CHECK(anon.table.entries.size() == 3);
    CHECK(deanonymize(anon, {{"Ann"}, {}, {"Bo"}}) == Tokens{"Ann", "met", "Bo"});
  }

  TEST_CASE("placeholder cap turns the excess into unk") {
    const Story s = make_story("A B C");
    const auto anon = anonymize_ner(s, {mention(s, {0, 1}), mention(s, {1, 2}), mention(s, {2, 3})}, 2);
    CHECK(anon.tokens == Tokens{"ent0", "ent1", "<unk>"});
    CHECK(anon.overflow);
    // the table still records the overflow entity, so gold fills restore it
    CHECK(anon.table.entries.size() == 3);
    CHECK(deanonymize(anon, gold_fills(anon)) == Tokens{"A", "B", "C"});
  }

  TEST_CASE("table json round trip") {
    const Story s = make_story("John saw Mary");
    const auto anon = anonymize_ner(s, {mention(s, {0, 1}), mention(s, {2, 3})});
    const auto back = anonymized_from_json(anon.tokens, table_to_json(anon));
    CHECK(back.table == anon.table);
    CHECK(back.scheme == anon.scheme);
  }

  TEST_CASE("posteriors") {
    const Story s = make_story("John ate the cake .");
    AnnotatedStory a{s, {{{1, 2}, {{"ARG0", {0, 1}}, {"ARG1", {2, 4}}}, 0}}, {mention(s, {0, 1})}, {}};
    const auto plan = build_posterior(a, PosteriorScheme::srl_plan);
    CHECK(plan.latent == serialize_srl_plan(a).tokens);
    CHECK(plan.target == s.tokens);
    CHECK(plan.latent != plan.target);
    const auto ner = build_posterior(a, PosteriorScheme::ner_anon);
    CHECK(ner.latent == Tokens{"ent0", "ate", "the", "cake", "."});
    REQUIRE(ner.anonymized.has_value());

    const auto pipe = decompose_for_pipeline(a, AnonScheme::ner);
    CHECK(pipe.plan.tokens == Tokens{"<frame>", "ate", "ent0", "the", "cake", "<sent>"});
    CHECK(parse_posterior_scheme("coref-anon") == PosteriorScheme::coref_anon);
    CHECK_THROWS_AS(parse_posterior_scheme("identity"), ValidationError);
  }
}
