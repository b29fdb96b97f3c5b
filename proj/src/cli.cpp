#include "storyplan/cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "storyplan/annotate.hpp"
#include "storyplan/corpus.hpp"
#include "storyplan/decompose.hpp"
#include "storyplan/errors.hpp"
#include "storyplan/evaluate.hpp"
#include "storyplan/generate.hpp"
#include "storyplan/models.hpp"
#include "storyplan/seq2seq.hpp"

namespace storyplan {

namespace fs = std::filesystem;
using nlohmann::json;

json default_run_config() {
  const json shape = StageShape{64, 2, 2, 4, 3, true, true}.to_json();
  const json schedule = {{"max_steps", 300}, {"batch_size", 8}, {"lr", 3e-3}, {"clip_norm", 5.0},
                         {"target_nll", nullptr}};
  return {
      {"seed", nullptr},
      {"paths",
       {{"source", nullptr},
        {"target", nullptr},
        {"prompts", nullptr},
        {"annotations", nullptr},
        {"lexicon", nullptr},
        {"gazetteer", nullptr}}},
      {"preprocess", {{"max_story_words", kDefaultMaxStoryWords}, {"prompt_vocab_size", kFullPromptVocabSize},
                      {"limit", 0}}},
      {"decompose",
       {{"scheme", "combined"},
        {"anon", "coref"},
        {"placeholders", kDefaultPlaceholderCap},
        {"story_vocab_size", kFullStoryVocabSize},
        {"fill_scheme", "character"},
        {"fill_vocab_size", 512},
        {"bpe_merges", 500}}},
      {"models", {{"plan", shape}, {"story", shape}, {"fill", shape}}},
      {"train", {{"plan", schedule}, {"story", schedule}, {"fill", schedule}}},
      {"generation", PipelineConfig().to_json()},
      {"fill", {{"temperature", 0.0}, {"k", 10}, {"max_length", 48}, {"window", kDefaultFillWindow},
                {"length_normalize", true}}},
      {"evaluate", {{"ranking_n", {10, 50, 100}}, {"lcs_threads", 0}, {"training_stories", nullptr}}},
      {"pipeline", {{"prompts", 2}}},
  };
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ValidationError("override must look like key.path=value: " + assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("empty key segment in override: " + assignment);
    if (!node->is_object()) throw ValidationError("override descends into a non-object at " + part);
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

// ---------------------------------------------------------------- file helpers

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

Tokens split_tokens(const std::string& line) {
  Tokens out;
  std::istringstream in(line);
  std::string t;
  while (in >> t) out.push_back(std::move(t));
  return out;
}

std::vector<Tokens> read_token_lines(const fs::path& path) {
  std::vector<Tokens> out;
  for (const auto& line : read_lines(path)) out.push_back(split_tokens(line));
  return out;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

void write_token_lines(const fs::path& path, const std::vector<Tokens>& lines) {
  std::vector<std::string> text;
  text.reserve(lines.size());
  for (const auto& t : lines) text.push_back(join_tokens(t));
  write_lines(path, text);
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::vector<json> out;
  std::size_t n = 0;
  for (const auto& line : read_lines(path)) {
    ++n;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ValidationError(path.string() + ":" + std::to_string(n) + ": malformed record");
    out.push_back(std::move(j));
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(r.dump());
  write_lines(path, lines);
}

void require_file(const fs::path& path, std::string_view what) {
  if (!fs::exists(path)) throw ValidationError("missing " + std::string(what) + ": " + path.string());
}

// ------------------------------------------------------------- config access

struct Context {
  json config;
  fs::path out;
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;

  const json& at(std::string_view dotted) const {
    const json* node = &config;
    std::size_t start = 0;
    while (true) {
      const auto dot = dotted.find('.', start);
      const std::string part(dotted.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
      if (!node->is_object() || !node->contains(part)) {
        throw ValidationError("missing configuration key " + std::string(dotted));
      }
      node = &(*node)[part];
      if (dot == std::string_view::npos) return *node;
      start = dot + 1;
    }
  }

  template <typename T>
  T get(std::string_view dotted) const {
    try {
      return at(dotted).get<T>();
    } catch (const json::exception& e) {
      throw ValidationError("configuration key " + std::string(dotted) + ": " + e.what());
    }
  }

  std::optional<fs::path> path(std::string_view dotted) const {
    const auto& v = at(dotted);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) throw ValidationError("configuration key " + std::string(dotted) + " must be a path");
    return fs::path(v.get<std::string>());
  }

  fs::path file(std::string_view name) const { return out / name; }
  void note(const std::string& line) const {
    if (log) *log << line << '\n';
  }
};

// -------------------------------------------------------------- artifacts

constexpr const char* kPrompts = "prompts.txt";
constexpr const char* kStories = "stories.txt";
constexpr const char* kPromptVocab = "prompt.vocab";
constexpr const char* kStoryVocab = "story.vocab";
constexpr const char* kFillVocab = "fill.vocab";
constexpr const char* kFillMerges = "fill.bpe";
constexpr const char* kAnnotations = "annotations.jsonl";
constexpr const char* kPlans = "plans.txt";
constexpr const char* kTargets = "targets.txt";
constexpr const char* kAnon = "anon.txt";
constexpr const char* kAnonTables = "anon.tables.jsonl";
constexpr const char* kDecomposeManifest = "decompose.json";
constexpr const char* kModels = "models";
constexpr const char* kGenerated = "generated.txt";
constexpr const char* kProvenance = "provenance.jsonl";

std::vector<Story> load_stories(const fs::path& path) {
  std::vector<Story> out;
  for (auto& tokens : read_token_lines(path)) out.push_back(make_story(std::move(tokens)));
  return out;
}

std::vector<AnnotatedStory> load_annotated(const fs::path& stories_path, const fs::path& annotations_path) {
  const auto stories = load_stories(stories_path);
  const auto records = read_jsonl(annotations_path);
  if (records.size() != stories.size()) {
    throw ValidationError(annotations_path.string() + " has " + std::to_string(records.size()) +
                          " records for " + std::to_string(stories.size()) + " stories");
  }
  std::vector<AnnotatedStory> out;
  out.reserve(stories.size());
  for (std::size_t i = 0; i < stories.size(); ++i) {
    try {
      out.push_back(import_annotations(stories[i], records[i]));
    } catch (const ValidationError& e) {
      throw ValidationError(annotations_path.string() + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

VerbLexicon lexicon_from(const Context& ctx) {
  if (auto p = ctx.path("paths.lexicon")) {
    require_file(*p, "verb lexicon");
    return load_verb_lexicon(*p);
  }
  return default_verb_lexicon();
}

Gazetteer gazetteer_from(const Context& ctx) {
  if (auto p = ctx.path("paths.gazetteer")) {
    require_file(*p, "gazetteer");
    return load_gazetteer(*p);
  }
  return {};
}

Scheme fill_scheme(const Context& ctx) { return parse_scheme(ctx.get<std::string>("decompose.fill_scheme")); }

Tokenizer fill_tokenizer(const Context& ctx) {
  const Scheme scheme = fill_scheme(ctx);
  if (scheme == Scheme::bpe) {
    require_file(ctx.file(kFillMerges), "bpe merges");
    return Tokenizer(scheme, BpeModel::load(ctx.file(kFillMerges)));
  }
  return Tokenizer(scheme);
}

// --------------------------------------------------------------- commands

void cmd_preprocess(const Context& ctx) {
  const auto source = ctx.path("paths.source");
  const auto target = ctx.path("paths.target");
  if (!source || !target) throw ValidationError("preprocess needs paths.source and paths.target");
  require_file(*source, "source file");
  require_file(*target, "target file");
  auto examples = load_dataset(*source, *target);
  const auto limit = ctx.get<std::size_t>("preprocess.limit");
  if (limit > 0 && examples.size() > limit) examples.resize(limit);
  const auto max_words = ctx.get<std::size_t>("preprocess.max_story_words");
  std::vector<Tokens> prompts, stories;
  for (const auto& ex : examples) {
    prompts.push_back(ex.prompt.tokens);
    stories.push_back(truncate_story(ex.story, max_words).tokens);
  }
  write_token_lines(ctx.file(kPrompts), prompts);
  write_token_lines(ctx.file(kStories), stories);
  build_vocab(prompts, Scheme::word, ctx.get<std::size_t>("preprocess.prompt_vocab_size")).save(ctx.file(kPromptVocab));
  ctx.note("preprocess: " + std::to_string(examples.size()) + " examples");
}

void cmd_annotate(const Context& ctx, bool fallback, const std::optional<fs::path>& import_path) {
  require_file(ctx.file(kStories), "stories (run preprocess)");
  std::vector<json> records;
  if (import_path) {
    require_file(*import_path, "annotation file");
    for (const auto& a : load_annotated(ctx.file(kStories), *import_path)) records.push_back(export_annotations(a));
  } else {
    if (!fallback) throw ValidationError("annotate needs --fallback or --import FILE");
    const auto lexicon = lexicon_from(ctx);
    const auto gazetteer = gazetteer_from(ctx);
    for (const auto& story : load_stories(ctx.file(kStories))) {
      records.push_back(export_annotations(annotate_fallback(story, lexicon, gazetteer)));
    }
  }
  write_jsonl(ctx.file(kAnnotations), records);
  ctx.note("annotate: " + std::to_string(records.size()) + " records");
}

void cmd_decompose(const Context& ctx, const std::string& scheme_name) {
  require_file(ctx.file(kStories), "stories (run preprocess)");
  require_file(ctx.file(kAnnotations), "annotations (run annotate)");
  const auto annotated = load_annotated(ctx.file(kStories), ctx.file(kAnnotations));
  const auto cap = ctx.get<std::size_t>("decompose.placeholders");
  const bool combined = scheme_name == "combined";
  const AnonScheme anon_scheme = parse_anon_scheme(ctx.get<std::string>("decompose.anon"));
  std::optional<PosteriorScheme> posterior;
  if (!combined) posterior = parse_posterior_scheme(scheme_name);

  std::vector<Tokens> plans, targets, anon_tokens;
  std::vector<json> tables;
  std::vector<AnonymizedStory> anonymized;
  for (std::size_t i = 0; i < annotated.size(); ++i) {
    if (combined) {
      auto d = decompose_for_pipeline(annotated[i], anon_scheme, cap);
      plans.push_back(d.plan.tokens);
      targets.push_back(d.anonymized.tokens);
      anonymized.push_back(std::move(d.anonymized));
    } else {
      auto p = build_posterior(annotated[i], *posterior, cap);
      plans.push_back(p.latent);
      targets.push_back(p.target);
      if (p.anonymized) anonymized.push_back(std::move(*p.anonymized));
    }
  }
  for (std::size_t i = 0; i < anonymized.size(); ++i) {
    anon_tokens.push_back(anonymized[i].tokens);
    json t = table_to_json(anonymized[i]);
    t["line"] = i;
    tables.push_back(std::move(t));
  }
  write_token_lines(ctx.file(kPlans), plans);
  write_token_lines(ctx.file(kTargets), targets);
  if (!anonymized.empty()) {
    write_token_lines(ctx.file(kAnon), anon_tokens);
    write_jsonl(ctx.file(kAnonTables), tables);
  } else {
    fs::remove(ctx.file(kAnon));
    fs::remove(ctx.file(kAnonTables));
  }

  std::vector<Tokens> story_corpus = plans;
  story_corpus.insert(story_corpus.end(), targets.begin(), targets.end());
  build_vocab(story_corpus, Scheme::word, ctx.get<std::size_t>("decompose.story_vocab_size"), cap)
      .save(ctx.file(kStoryVocab));

  if (!anonymized.empty()) {
    std::vector<std::string> fill_targets;
    for (const auto& a : anonymized) {
      for (const auto& e : fill_examples(a, anon_scheme)) fill_targets.push_back(e.target);
    }
    const Scheme scheme = fill_scheme(ctx);
    Tokenizer tokenizer(scheme);
    if (scheme == Scheme::bpe) {
      BpeModel bpe(learn_bpe(fill_targets, ctx.get<std::size_t>("decompose.bpe_merges")));
      bpe.save(ctx.file(kFillMerges));
      tokenizer = Tokenizer(scheme, bpe);
    }
    std::vector<Tokens> pieces;
    for (const auto& t : fill_targets) pieces.push_back(tokenizer.tokenize(t));
    build_vocab(pieces, scheme, ctx.get<std::size_t>("decompose.fill_vocab_size")).save(ctx.file(kFillVocab));
  }

  std::optional<AnonScheme> anon;
  if (combined) {
    anon = anon_scheme;
  } else if (*posterior == PosteriorScheme::ner_anon) {
    anon = AnonScheme::ner;
  } else if (*posterior == PosteriorScheme::coref_anon) {
    anon = AnonScheme::coref;
  }
  json manifest = {{"scheme", scheme_name}, {"stories", annotated.size()}};
  manifest["anon"] = anon ? json(std::string(to_string(*anon))) : json(nullptr);
  write_lines(ctx.file(kDecomposeManifest), {manifest.dump(2)});
  ctx.note("decompose: scheme " + scheme_name + ", " + std::to_string(annotated.size()) + " stories");
}

json read_decompose_manifest(const Context& ctx) {
  require_file(ctx.file(kDecomposeManifest), "decomposition (run decompose)");
  std::ifstream in(ctx.file(kDecomposeManifest));
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError("malformed " + ctx.file(kDecomposeManifest).string());
  return j;
}

std::optional<AnonScheme> decomposed_anon(const Context& ctx) {
  const json m = read_decompose_manifest(ctx);
  if (!m.contains("anon") || m["anon"].is_null()) return std::nullopt;
  return parse_anon_scheme(m["anon"].get<std::string>());
}

std::vector<AnonymizedStory> load_anonymized(const Context& ctx) {
  require_file(ctx.file(kAnon), "anonymized stories (decompose with an anonymizing scheme)");
  require_file(ctx.file(kAnonTables), "placeholder tables");
  auto tokens = read_token_lines(ctx.file(kAnon));
  const auto tables = read_jsonl(ctx.file(kAnonTables));
  if (tokens.size() != tables.size()) throw ValidationError("anonymized stories and tables differ in length");
  std::vector<AnonymizedStory> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) out.push_back(anonymized_from_json(std::move(tokens[i]), tables[i]));
  return out;
}

TrainSchedule schedule_from(const Context& ctx, const std::string& stage, std::uint64_t seed) {
  const std::string base = "train." + stage + ".";
  TrainSchedule s;
  s.max_steps = ctx.get<std::size_t>(base + "max_steps");
  s.batch_size = ctx.get<std::size_t>(base + "batch_size");
  s.adam.learning_rate = ctx.get<double>(base + "lr");
  s.adam.clip_norm = ctx.get<double>(base + "clip_norm");
  const auto& target = ctx.at(base + "target_nll");
  if (!target.is_null()) s.target_nll = target.get<double>();
  s.seed = seed;
  return s;
}

std::vector<TrainingPair> encode_pairs(const std::vector<Tokens>& sources, const Vocabulary& source_vocab,
                                       const std::vector<Tokens>& targets, const Vocabulary& target_vocab) {
  if (sources.size() != targets.size()) throw ValidationError("source and target files differ in length");
  std::vector<TrainingPair> pairs;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    pairs.push_back({source_vocab.encode(sources[i]), encode_with_eos(target_vocab, targets[i])});
  }
  return pairs;
}

struct FillData {
  Vocabulary story_vocab;
  Vocabulary fill_vocab;
  Tokenizer tokenizer;
  AnonScheme mode = AnonScheme::ner;
  std::vector<FillExample> examples;
};

FillData fill_data(const Context& ctx) {
  FillData d;
  const auto mode = decomposed_anon(ctx);
  if (!mode) throw ValidationError("the fill stage needs an anonymizing decomposition");
  d.mode = *mode;
  d.story_vocab = Vocabulary::load(ctx.file(kStoryVocab), Scheme::word);
  require_file(ctx.file(kFillVocab), "fill vocabulary");
  d.fill_vocab = Vocabulary::load(ctx.file(kFillVocab), fill_scheme(ctx));
  d.tokenizer = fill_tokenizer(ctx);
  const auto window = ctx.get<std::size_t>("fill.window");
  for (const auto& a : load_anonymized(ctx)) {
    auto ex = fill_examples(a, d.mode, window);
    d.examples.insert(d.examples.end(), std::make_move_iterator(ex.begin()), std::make_move_iterator(ex.end()));
  }
  return d;
}

FillModel make_filler(const Context& ctx, std::shared_ptr<const SequenceModel> model, FillData data) {
  FillModel f;
  f.model = std::move(model);
  f.source_vocab = std::move(data.story_vocab);
  f.target_vocab = std::move(data.fill_vocab);
  f.target_tokenizer = std::move(data.tokenizer);
  f.mode = data.mode;
  f.window = ctx.get<std::size_t>("fill.window");
  f.max_length = ctx.get<std::size_t>("fill.max_length");
  f.temperature = ctx.get<double>("fill.temperature");
  f.k = ctx.get<std::size_t>("fill.k");
  f.length_normalize = ctx.get<bool>("fill.length_normalize");
  return f;
}

// Manifest paths are relative to the model directory.
std::string up(const char* artifact) { return std::string("../") + artifact; }

void cmd_train(const Context& ctx, const std::string& stage) {
  if (stage != "plan" && stage != "story" && stage != "fill") {
    throw ValidationError("unknown stage " + stage + " (expected plan, story or fill)");
  }
  const std::uint64_t seed = Rng::derive_seed(ctx.seed, "train-" + stage);
  const StageShape shape = StageShape::from_json(ctx.at("models." + stage));
  require_file(ctx.file(kStoryVocab), "story vocabulary (run decompose)");
  const auto story_vocab = Vocabulary::load(ctx.file(kStoryVocab), Scheme::word);

  std::vector<TrainingPair> pairs;
  Seq2SeqConfig config;
  ModelManifest manifest;
  manifest.stage = stage;
  manifest.seed = seed;
  if (stage == "plan") {
    require_file(ctx.file(kPrompts), "prompts");
    require_file(ctx.file(kPlans), "plans");
    const auto prompt_vocab = Vocabulary::load(ctx.file(kPromptVocab), Scheme::word);
    pairs = encode_pairs(read_token_lines(ctx.file(kPrompts)), prompt_vocab, read_token_lines(ctx.file(kPlans)),
                         story_vocab);
    config = plan_model_config(prompt_vocab, story_vocab, shape);
    manifest.source_vocab = up(kPromptVocab);
    manifest.target_vocab = up(kStoryVocab);
  } else if (stage == "story") {
    require_file(ctx.file(kPlans), "plans");
    require_file(ctx.file(kTargets), "targets");
    pairs = encode_pairs(read_token_lines(ctx.file(kPlans)), story_vocab, read_token_lines(ctx.file(kTargets)),
                         story_vocab);
    config = story_model_config(story_vocab, shape);
    manifest.source_vocab = up(kStoryVocab);
    manifest.target_vocab = up(kStoryVocab);
  } else {
    auto data = fill_data(ctx);
    FillModel encoder;
    encoder.source_vocab = data.story_vocab;
    encoder.target_vocab = data.fill_vocab;
    encoder.target_tokenizer = data.tokenizer;
    for (const auto& ex : data.examples) pairs.push_back(encoder.encode(ex));
    config = fill_model_config(data.story_vocab, data.fill_vocab, shape);
    manifest.source_vocab = up(kStoryVocab);
    manifest.target_vocab = up(kFillVocab);
    manifest.target_scheme = fill_scheme(ctx);
    if (manifest.target_scheme == Scheme::bpe) manifest.bpe_merges = up(kFillMerges);
    manifest.anon_scheme = data.mode;
  }
  if (pairs.empty()) throw ValidationError("no training pairs for stage " + stage);
  manifest.config = config;

  Seq2SeqModel model(config, seed);
  const auto result = train_model(model, pairs, schedule_from(ctx, stage, seed));
  manifest.training = {{"steps", result.steps}, {"epoch_nll", result.epoch_nll}, {"pairs", pairs.size()}};
  save_model(model, manifest, ctx.file(kModels));
  std::ostringstream msg;
  msg << "train " << stage << ": " << result.steps << " steps, final epoch NLL "
      << (result.epoch_nll.empty() ? 0.0 : result.epoch_nll.back());
  ctx.note(msg.str());
}

PipelineBundle load_bundle(const Context& ctx) {
  PipelineBundle b;
  b.prompt_vocab = Vocabulary::load(ctx.file(kPromptVocab), Scheme::word);
  b.story_vocab = Vocabulary::load(ctx.file(kStoryVocab), Scheme::word);
  b.plan_model = load_model(ctx.file(kModels), "plan").first;
  b.story_model = load_model(ctx.file(kModels), "story").first;
  auto [fill_model, fill_manifest] = load_model(ctx.file(kModels), "fill");
  if (!fill_manifest.anon_scheme) throw ValidationError("fill model manifest lacks its scheme");
  FillData data;
  data.mode = *fill_manifest.anon_scheme;
  data.story_vocab = b.story_vocab;
  data.fill_vocab = Vocabulary::load(ctx.file(kModels) / fill_manifest.target_vocab, fill_manifest.target_scheme);
  data.tokenizer = fill_manifest.target_scheme == Scheme::bpe
                       ? Tokenizer(Scheme::bpe, BpeModel::load(ctx.file(kModels) / fill_manifest.bpe_merges))
                       : Tokenizer(fill_manifest.target_scheme);
  b.scheme = data.mode;
  b.fill = make_filler(ctx, std::move(fill_model), std::move(data));
  return b;
}

PipelineConfig pipeline_config(const Context& ctx) {
  auto c = PipelineConfig::from_json(ctx.at("generation"));
  c.seed = ctx.seed;
  return c;
}

void cmd_generate(const Context& ctx, const fs::path& prompt_file, std::optional<std::size_t> trim_words) {
  require_file(prompt_file, "prompt file");
  for (const char* f : {kPromptVocab, kStoryVocab}) require_file(ctx.file(f), f);
  for (const char* stage : {"plan", "story", "fill"}) {
    require_file(ctx.file(kModels) / (std::string(stage) + ".json"), std::string(stage) + " model (run train)");
  }
  const auto bundle = load_bundle(ctx);
  const auto config = pipeline_config(ctx);
  std::vector<Tokens> stories;
  std::vector<json> provenance;
  const auto prompts = read_lines(prompt_file);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].empty()) throw ValidationError(prompt_file.string() + ":" + std::to_string(i + 1) + ": empty prompt");
    auto record = run_pipeline(make_prompt(prompts[i]), bundle, config, i);
    stories.push_back(trim_words ? trim_to_words(record.story, *trim_words) : record.story);
    provenance.push_back(record.to_json());
  }
  write_token_lines(ctx.file(kGenerated), stories);
  write_jsonl(ctx.file(kProvenance), provenance);
  ctx.note("generate: " + std::to_string(stories.size()) + " stories");
}

struct EvaluateInputs {
  std::optional<fs::path> stories;
  std::optional<fs::path> annotations;
  std::optional<fs::path> training;
};

void cmd_evaluate(const Context& ctx, const fs::path& report_path, EvaluateInputs inputs) {
  const fs::path stories_path = inputs.stories ? *inputs.stories : ctx.file(kGenerated);
  require_file(stories_path, "stories to evaluate");
  std::vector<AnnotatedStory> annotated;
  std::string verb_source;
  if (inputs.annotations) {
    require_file(*inputs.annotations, "annotation file");
    annotated = load_annotated(stories_path, *inputs.annotations);
  } else {
    const auto lexicon = lexicon_from(ctx);
    const auto gazetteer = gazetteer_from(ctx);
    for (const auto& s : load_stories(stories_path)) annotated.push_back(annotate_fallback(s, lexicon, gazetteer));
  }
  if (annotated.empty()) throw ValidationError("no stories to evaluate in " + stories_path.string());

  MetricsReport report;
  report.stories = annotated.size();
  const auto lexicon = lexicon_from(ctx);
  std::vector<std::vector<std::string>> lemmas;
  std::size_t with_frames = 0;
  for (const auto& a : annotated) {
    lemmas.push_back(story_verbs(a, lexicon));
    with_frames += !a.frames.empty();
  }
  report.verb_source = !inputs.annotations ? "heuristic lexicon"
                       : with_frames == annotated.size() ? "imported annotations"
                       : with_frames == 0               ? "verb lexicon"
                                                        : "imported annotations and verb lexicon";
  report.verbs = verb_diversity(lemmas);

  std::vector<std::vector<EntityMention>> mentions;
  for (const auto& a : annotated) mentions.push_back(a.mentions);
  report.entity_names = entity_name_diversity(mentions);
  report.coref = coref_cluster_stats(annotated);

  std::optional<fs::path> training = inputs.training;
  if (!training) training = ctx.path("evaluate.training_stories");
  if (!training && fs::exists(ctx.file(kStories)) && stories_path != ctx.file(kStories)) training = ctx.file(kStories);
  if (training) {
    require_file(*training, "training stories");
    const auto train = read_token_lines(*training);
    MetricsReport::LcsSummary summary;
    const auto threads = ctx.get<std::size_t>("evaluate.lcs_threads");
    for (const auto& a : annotated) {
      const auto s = lcs_stats(a.story.tokens, train, threads);
      summary.max += static_cast<double>(s.max);
      summary.average += s.mean;
    }
    summary.max /= static_cast<double>(annotated.size());
    summary.average /= static_cast<double>(annotated.size());
    report.lcs = summary;
  }

  const bool have_models = fs::exists(ctx.file(kModels) / "plan.json") && fs::exists(ctx.file(kModels) / "story.json") &&
                           fs::exists(ctx.file(kModels) / "fill.json");
  if (have_models && fs::exists(ctx.file(kPlans)) && fs::exists(ctx.file(kTargets))) {
    const auto bundle = load_bundle(ctx);
    const auto plan_pairs = encode_pairs(read_token_lines(ctx.file(kPrompts)), bundle.prompt_vocab,
                                         read_token_lines(ctx.file(kPlans)), bundle.story_vocab);
    const auto story_pairs = encode_pairs(read_token_lines(ctx.file(kPlans)), bundle.story_vocab,
                                          read_token_lines(ctx.file(kTargets)), bundle.story_vocab);
    report.nll = stage_nll_report(bundle, plan_pairs, story_pairs);
    if (fs::exists(ctx.file(kAnon))) {
      std::vector<FillExample> examples;
      for (const auto& a : load_anonymized(ctx)) {
        auto ex = fill_examples(a, bundle.fill.mode, bundle.fill.window);
        examples.insert(examples.end(), ex.begin(), ex.end());
      }
      const auto cases = ranking_cases(examples);
      const auto scorer = filler_scorer(bundle.fill);
      for (std::size_t n : ctx.get<std::vector<std::size_t>>("evaluate.ranking_n")) {
        Rng rng = Rng(ctx.seed).substream("ranking", n);
        try {
          const auto acc = entity_ranking(cases, scorer, n, rng);
          if (acc.first_cases) report.ranking[{"first", n}] = acc.first;
          if (acc.subsequent_cases) report.ranking[{"subsequent", n}] = acc.subsequent;
        } catch (const ValidationError& e) {
          ctx.note("evaluate: ranking with n=" + std::to_string(n) + " skipped: " + e.what());
        }
      }
    }
  }

  write_lines(report_path, {report.to_text()});
  write_lines(fs::path(report_path.string() + ".json"), {report.to_json().dump(2)});
  ctx.note("evaluate: report " + report_path.string());
}

void cmd_pipeline(const Context& ctx) {
  cmd_preprocess(ctx);
  if (auto annotations = ctx.path("paths.annotations")) {
    cmd_annotate(ctx, false, annotations);
  } else {
    cmd_annotate(ctx, true, std::nullopt);
  }
  cmd_decompose(ctx, "combined");
  for (const char* stage : {"plan", "story", "fill"}) cmd_train(ctx, stage);
  fs::path prompt_file;
  if (auto p = ctx.path("paths.prompts")) {
    prompt_file = *p;
  } else {
    const auto prompts = read_lines(*ctx.path("paths.source"));
    const auto n = std::min(prompts.size(), ctx.get<std::size_t>("pipeline.prompts"));
    prompt_file = ctx.file("pipeline.prompts.txt");
    write_lines(prompt_file, std::vector<std::string>(prompts.begin(), prompts.begin() + static_cast<std::ptrdiff_t>(n)));
  }
  cmd_generate(ctx, prompt_file, std::nullopt);
  cmd_evaluate(ctx, ctx.file("report.txt"), {});
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Coarse-to-fine story generation: decomposition, training, generation and evaluation."};
  app.name("storyplan");
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  app.add_option("--seed", seed, "Root seed for every random stream");
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Artifact directory");
  app.add_option("--set", overrides, "Configuration override key.path=value (repeatable)")->allow_extra_args(false);

  app.add_subcommand("preprocess", "Tokenize and truncate the dataset; build the prompt vocabulary");
  auto* annotate = app.add_subcommand("annotate", "Attach SRL, entity and coreference annotations");
  bool fallback = false;
  std::string import_file;
  auto* fb = annotate->add_flag("--fallback", fallback, "Use the built-in heuristic annotators");
  auto* im = annotate->add_option("--import", import_file, "Line-delimited annotation records");
  fb->excludes(im);
  auto* decompose = app.add_subcommand("decompose", "Build plans, anonymized stories and vocabularies");
  std::string scheme = "combined";
  decompose->add_option("--scheme", scheme, "srl-plan, ner-anon, coref-anon or combined")
      ->check(CLI::IsMember({"srl-plan", "ner-anon", "coref-anon", "combined"}));
  auto* train = app.add_subcommand("train", "Train one stage model");
  std::string stage;
  train->add_option("--stage", stage, "plan, story or fill")->required()->check(CLI::IsMember({"plan", "story", "fill"}));
  auto* generate = app.add_subcommand("generate", "Run the three-stage pipeline on prompts");
  std::string prompt_file;
  std::optional<std::size_t> trim_words;
  generate->add_option("--prompt-file", prompt_file, "One prompt per line")->required();
  generate->add_option("--trim-words", trim_words, "Trim each story to this many words");
  auto* evaluate = app.add_subcommand("evaluate", "Compute automatic metrics");
  std::string report_path;
  std::string eval_stories, eval_annotations, eval_training;
  evaluate->add_option("--report", report_path, "Text report path; a .json twin is written next to it")->required();
  evaluate->add_option("--stories", eval_stories, "Stories to evaluate (default: generated.txt)");
  evaluate->add_option("--annotations", eval_annotations, "Annotation records for those stories");
  evaluate->add_option("--training", eval_training, "Training stories for the LCS measure");
  app.add_subcommand("pipeline", "preprocess, annotate, decompose, train, generate and evaluate");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error [cli]: " << e.what() << '\n';
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Context ctx;
  try {
    ctx.config = default_run_config();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      json user = json::parse(in, nullptr, false, true);
      if (user.is_discarded() || !user.is_object()) throw ValidationError("malformed configuration " + config_path);
      ctx.config.merge_patch(user);
    }
    for (const auto& o : overrides) apply_override(ctx.config, o);
    if (seed) ctx.config["seed"] = *seed;
    if (ctx.config["seed"].is_null()) throw ValidationError("a seed is required (--seed or \"seed\" in the config)");
    ctx.seed = ctx.get<std::uint64_t>("seed");
    ctx.out = out_dir;
    fs::create_directories(ctx.out);
  } catch (const std::exception& e) {
    err << "error [config]: " << e.what() << '\n';
    return 2;
  }

  std::ofstream log(ctx.out / "run.log", std::ios::app);
  ctx.log = &log;
  log << timestamp() << " command=" << command << " seed=" << ctx.seed << " config=" << config_hash(ctx.config)
      << '\n';

  try {
    if (command == "preprocess") {
      cmd_preprocess(ctx);
    } else if (command == "annotate") {
      cmd_annotate(ctx, fallback, import_file.empty() ? std::nullopt : std::optional<fs::path>(import_file));
    } else if (command == "decompose") {
      cmd_decompose(ctx, scheme);
    } else if (command == "train") {
      cmd_train(ctx, stage);
    } else if (command == "generate") {
      cmd_generate(ctx, prompt_file, trim_words);
    } else if (command == "evaluate") {
      EvaluateInputs inputs;
      if (!eval_stories.empty()) inputs.stories = eval_stories;
      if (!eval_annotations.empty()) inputs.annotations = eval_annotations;
      if (!eval_training.empty()) inputs.training = eval_training;
      cmd_evaluate(ctx, report_path, inputs);
    } else if (command == "pipeline") {
      cmd_pipeline(ctx);
    }
  } catch (const ValidationError& e) {
    err << "error [" << command << "]: " << e.what() << '\n';
    log << "failed: " << e.what() << '\n';
    return 2;
  } catch (const StageError& e) {
    err << "error [" << command << "/" << e.stage() << "]: " << e.what() << '\n';
    log << "failed: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error [" << command << "]: " << e.what() << '\n';
    log << "failed: " << e.what() << '\n';
    return 3;
  }
  out << command << ": done\n";
  return 0;
}

}  // namespace storyplan
