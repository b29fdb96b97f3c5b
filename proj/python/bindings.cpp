#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include <nlohmann/json.hpp>

#include "storyplan/annotate.hpp"
#include "storyplan/cli.hpp"
#include "storyplan/corpus.hpp"
#include "storyplan/decompose.hpp"
#include "storyplan/errors.hpp"
#include "storyplan/evaluate.hpp"
#include "storyplan/rng.hpp"
#include "storyplan/sampling.hpp"
#include "storyplan/seq2seq.hpp"

namespace py = pybind11;
using namespace storyplan;
using json = nlohmann::json;

namespace {

AnnotatedStory annotated(const std::string& text, const std::string& record) {
  return import_annotations(make_story(text), json::parse(record));
}

std::pair<Tokens, std::string> anonymize(const std::string& text, const std::string& record,
                                         const std::string& scheme, std::size_t cap) {
  const auto a = annotated(text, record);
  const auto anon = parse_anon_scheme(scheme) == AnonScheme::ner
                        ? anonymize_ner(a.story, a.mentions, cap)
                        : anonymize_coref(a.story, a.clusters, a.mentions, cap);
  return {anon.tokens, table_to_json(anon).dump()};
}

// Rows are decoder positions; the last column is the null slot.
std::vector<std::vector<bool>> verb_mask(std::size_t length, const std::vector<std::size_t>& verbs) {
  const auto mask = build_verb_mask(length, verbs);
  std::vector<std::vector<bool>> rows(length, std::vector<bool>(length + 1));
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t p = 0; p < length; ++p) rows[t][p] = mask.allowed(t, p);
    rows[t][length] = mask.null_allowed(t);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_storyplan, m) {
  m.doc() = "Plan-then-write story generation toolkit.";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

  m.def("tokenize", [](const std::string& text, const std::string& scheme) { return tokenize(text, parse_scheme(scheme)); },
        py::arg("text"), py::arg("scheme") = "word");
  m.def("detokenize", [](const Tokens& tokens, const std::string& scheme) { return detokenize(tokens, parse_scheme(scheme)); },
        py::arg("tokens"), py::arg("scheme") = "word");

  m.def("import_annotations", [](const std::string& text, const std::string& record) {
    return export_annotations(annotated(text, record)).dump();
  });
  m.def("annotate_fallback", [](const std::string& text) {
    return export_annotations(annotate_fallback(make_story(text), default_verb_lexicon(), {})).dump();
  });
  m.def("srl_plan", [](const std::string& text, const std::string& record) {
    return serialize_srl_plan(annotated(text, record)).tokens;
  });
  m.def("anonymize", &anonymize, py::arg("text"), py::arg("annotations"), py::arg("scheme") = "ner",
        py::arg("cap") = kDefaultPlaceholderCap);
  m.def("gold_fills", [](const Tokens& tokens, const std::string& table) {
    return gold_fills(anonymized_from_json(tokens, json::parse(table)));
  });
  m.def("deanonymize", [](const Tokens& tokens, const std::string& table, const Fills& fills) {
    return deanonymize(anonymized_from_json(tokens, json::parse(table)), fills);
  });

  m.def("build_verb_mask", &verb_mask, py::arg("length"), py::arg("verb_positions"));
  m.def("pointer_copy_prob", [](const std::vector<double>& h, const std::vector<double>& w) {
    return pointer_copy_prob(h, w);
  });

  m.def("sample_top_k",
        [](const std::vector<double>& logits, double temperature, std::size_t k, const std::vector<int>& banned,
           std::uint64_t seed) {
          Rng rng(seed);
          return sample_top_k(logits, temperature, k, banned, rng);
        },
        py::arg("logits"), py::arg("temperature"), py::arg("k"), py::arg("banned") = std::vector<int>{},
        py::arg("seed") = 0);
  m.def("top_k_distribution",
        [](const std::vector<double>& logits, double temperature, std::size_t k, const std::vector<int>& banned) {
          return top_k_distribution(logits, temperature, k, banned);
        },
        py::arg("logits"), py::arg("temperature"), py::arg("k"), py::arg("banned") = std::vector<int>{});

  m.def("lcs_length", [](const Tokens& a, const Tokens& b) { return lcs_length(a, b); });
  m.def("lemmatize_verb", [](const std::string& token) { return lemmatize_verb(token, default_verb_lexicon()); });
  m.def("verb_diversity", [](const std::vector<std::vector<std::string>>& lemmas) {
    const auto v = verb_diversity(lemmas);
    return py::dict(py::arg("mean_unique") = v.mean_unique, py::arg("percent_diverse") = v.percent_diverse,
                    py::arg("top_verbs") = v.top_verbs, py::arg("verb_tokens") = v.verb_tokens);
  });

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  });
}
