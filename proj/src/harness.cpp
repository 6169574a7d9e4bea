#include "lexprompt/harness.h"

#include "lexprompt/checkpoint.h"
#include "lexprompt/utf8.h"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace lexprompt {

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t h = fnv1a(&seed, sizeof(seed));
  return fnv1a(&tag, sizeof(tag), h);
}

enum SeedTag : std::uint64_t { kSplitTag = 1, kPairTag, kRetrieverTag, kValTag, kModelTag, kTrainTag, kFractionTag };

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw UsageError("config key '" + key + "': cannot parse '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw UsageError("config key '" + key + "': expected true or false, got '" + value + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

const Article* find_article(std::span<const Article> articles, int id) {
  for (const auto& a : articles) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

template <typename F>
auto in_stage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DataError& e) {
    throw DataError(std::string(stage) + ": " + e.what());
  } catch (const NumericError& e) {
    throw NumericError(std::string(stage) + ": " + e.what());
  } catch (const UsageError& e) {
    throw UsageError(std::string(stage) + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string(stage) + ": " + e.what());
  } catch (const TransportError& e) {
    throw DataError(std::string(stage) + ": " + e.what());
  }
}

bool has_cjk(const std::string& text) {
  for (char32_t c : utf8::decode(text)) {
    if (c >= 0x4E00 && c <= 0x9FFF) return true;
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::validate() const {
  if (n_articles < 0) throw UsageError("n_articles must be >= 0");
  if (mask_count < 1) throw UsageError("mask_count must be >= 1");
  if (batch < 1) throw UsageError("batch must be >= 1");
  if (max_epochs < 0 || patience < 0) throw UsageError("max_epochs and patience must be >= 0");
  if (d_model < 2 || d_model % 2 != 0) throw UsageError("d_model must be even");
  if (heads < 1 || d_model % heads != 0) throw UsageError("d_model must be divisible by heads");
  if (layers < 0 || ff < 1) throw UsageError("layers must be >= 0 and ff >= 1");
  if (retriever_dim < 1 || retriever_epochs < 0) throw UsageError("retriever_dim must be >= 1");
  if (!(tau > 0.0)) throw UsageError("tau must be positive");
  if (!(lr > 0.0) || !(retriever_lr > 0.0)) throw UsageError("learning rates must be positive");
  if (val_fraction < 0.0 || val_fraction >= 1.0) throw UsageError("val_fraction must be in [0, 1)");
  if (templates != "auto" && templates != "english" && templates != "chinese") {
    throw UsageError("templates must be auto, english or chinese");
  }
}

void set_config_value(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "lr") c.lr = parse_number<double>(key, value);
  else if (key == "batch") c.batch = parse_number<int>(key, value);
  else if (key == "max_epochs") c.max_epochs = parse_number<int>(key, value);
  else if (key == "patience") c.patience = parse_number<int>(key, value);
  else if (key == "d_model") c.d_model = parse_number<int>(key, value);
  else if (key == "layers") c.layers = parse_number<int>(key, value);
  else if (key == "heads") c.heads = parse_number<int>(key, value);
  else if (key == "ff") c.ff = parse_number<int>(key, value);
  else if (key == "mask_count") c.mask_count = parse_number<int>(key, value);
  else if (key == "max_len") c.max_len = parse_number<std::size_t>(key, value);
  else if (key == "max_case_len") c.max_case_len = parse_number<std::size_t>(key, value);
  else if (key == "max_fact_len") c.max_fact_len = parse_number<std::size_t>(key, value);
  else if (key == "templates") c.templates = value;
  else if (key == "n_articles") c.n_articles = parse_number<int>(key, value);
  else if (key == "retriever_dim") c.retriever_dim = parse_number<int>(key, value);
  else if (key == "retriever_lr") c.retriever_lr = parse_number<double>(key, value);
  else if (key == "retriever_epochs") c.retriever_epochs = parse_number<int>(key, value);
  else if (key == "tau") c.tau = parse_number<double>(key, value);
  else if (key == "llm_endpoint") c.llm_endpoint = value;
  else if (key == "llm_retries") c.llm_retries = parse_number<int>(key, value);
  else if (key == "min_freq") c.min_freq = parse_number<int>(key, value);
  else if (key == "val_fraction") c.val_fraction = parse_number<double>(key, value);
  else if (key == "no_snippets") c.no_snippets = parse_bool(key, value);
  else if (key == "no_facts") c.no_facts = parse_bool(key, value);
  else if (key == "no_contrastive") c.no_contrastive = parse_bool(key, value);
  else throw UsageError("unknown config key '" + key + "'");
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string trimmed = utf8::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(base, utf8::trim(trimmed.substr(0, eq)), utf8::trim(trimmed.substr(eq + 1)));
  }
  return base;
}

void save_run_config(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write config file " + path.string());
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "seed = " << c.seed << "\n"
      << "lr = " << fmt_double(c.lr) << "\n"
      << "batch = " << c.batch << "\n"
      << "max_epochs = " << c.max_epochs << "\n"
      << "patience = " << c.patience << "\n"
      << "d_model = " << c.d_model << "\n"
      << "layers = " << c.layers << "\n"
      << "heads = " << c.heads << "\n"
      << "ff = " << c.ff << "\n"
      << "mask_count = " << c.mask_count << "\n"
      << "max_len = " << c.max_len << "\n"
      << "max_case_len = " << c.max_case_len << "\n"
      << "max_fact_len = " << c.max_fact_len << "\n"
      << "templates = " << c.templates << "\n"
      << "n_articles = " << c.n_articles << "\n"
      << "retriever_dim = " << c.retriever_dim << "\n"
      << "retriever_lr = " << fmt_double(c.retriever_lr) << "\n"
      << "retriever_epochs = " << c.retriever_epochs << "\n"
      << "tau = " << fmt_double(c.tau) << "\n"
      << "llm_endpoint = " << c.llm_endpoint << "\n"
      << "llm_retries = " << c.llm_retries << "\n"
      << "min_freq = " << c.min_freq << "\n"
      << "val_fraction = " << fmt_double(c.val_fraction) << "\n"
      << "no_snippets = " << b(c.no_snippets) << "\n"
      << "no_facts = " << b(c.no_facts) << "\n"
      << "no_contrastive = " << b(c.no_contrastive) << "\n";
}

// ---------------------------------------------------------------------------
// Splits

namespace {

std::map<int, std::vector<std::size_t>> by_class(const Dataset& dataset, std::span<const std::size_t> indices) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i : indices) out[dataset.cases.at(i).charge].push_back(i);
  return out;
}

std::vector<std::size_t> all_indices(const Dataset& dataset) {
  std::vector<std::size_t> out(dataset.cases.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

}  // namespace

Split split_dataset(const Dataset& dataset, std::uint64_t seed, double train_fraction) {
  Rng rng(derive_seed(seed, kSplitTag));
  Split split;
  for (auto& [label, members] : by_class(dataset, all_indices(dataset))) {
    rng.shuffle(members);
    const auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < members.size(); ++k) (k < n_train ? split.train : split.test).push_back(members[k]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

std::vector<std::size_t> stratified_subsample(const Dataset& dataset, std::span<const std::size_t> indices,
                                              double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("fraction must be in (0, 1]");
  Rng rng(derive_seed(seed, kFractionTag));
  std::vector<std::size_t> out;
  for (auto& [label, members] : by_class(dataset, indices)) {
    rng.shuffle(members);
    const auto keep = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(members.size())));
    if (keep == 0) {
      spdlog::warn("fraction {} leaves no training cases for class {}; class dropped", fraction, label);
      continue;
    }
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Inference

HardTemplates resolve_templates(const RunConfig& config, const Verbalizer& verbalizer) {
  if (config.templates == "chinese") return HardTemplates::chinese();
  if (config.templates == "english") return HardTemplates::english();
  for (const auto& text : verbalizer.texts()) {
    if (has_cjk(text)) return HardTemplates::chinese();
  }
  return HardTemplates::english();
}

std::shared_ptr<LlmClient> make_client(const RunConfig& config, const Lexicon& lexicon) {
  if (!config.llm_endpoint.empty()) {
    return std::make_shared<RemoteHttpClient>(RemoteClientConfig{config.llm_endpoint});
  }
  return std::make_shared<MockExtractorClient>(lexicon);
}

PreparedCase prepare_case(const Components& c, std::string_view case_text, const RunConfig& config) {
  PreparedCase p;
  if (config.n_articles > 0) {
    p.retrieved = in_stage("retrieval", [&] {
      return retrieve_top_n(c.retriever, c.vocab, case_text, c.index, config.n_articles, JointSpaceConfig{}.max_len);
    });
  }
  p.inject = !config.no_facts;
  if (p.inject && !p.retrieved.empty() && c.client) {
    std::vector<Article> context;
    for (const auto& r : p.retrieved) {
      if (const Article* a = find_article(c.articles, r.id)) context.push_back(*a);
    }
    p.facts = in_stage("fact extraction", [&] {
      ExtractOptions options;
      options.retries = config.llm_retries;
      return extract_facts(*c.client, case_text, context, options);
    });
    p.fact_tokens = fact_tokens(p.facts, c.vocab, config.max_fact_len);
  }
  if (!config.no_snippets) {
    p.snippets = in_stage("snippet matching", [&] { return match_snippets(c.lexicon, case_text); });
  }
  p.layout = in_stage("prompt assembly", [&] {
    const auto snippet_tokens = snippets_to_tokens(p.snippets, c.vocab);
    const auto case_tokens = config.max_case_len > 0 ? tokenize(c.vocab, case_text, config.max_case_len)
                                                     : tokenize(c.vocab, case_text);
    return assemble_prompt(case_tokens, snippet_tokens, c.prefix_tokens, c.keyword_tokens, config.mask_count,
                           config.max_len);
  });
  return p;
}

Prediction predict_prepared(const Components& c, const PreparedCase& p) {
  const ModelOutput out = in_stage("prompt model", [&] { return c.model.forward(p.layout, p.fact_tokens, p.inject); });
  const PredictionTokens tokens = make_prediction_tokens(out.predicted, c.vocab);
  const LabelMapping mapping = in_stage("label mapping", [&] { return map_to_label(tokens, c.verbalizer); });

  Prediction pred;
  pred.label = mapping.label;
  Explanation& e = pred.explanation;
  e.label = mapping.label;
  e.label_text = c.verbalizer.text(mapping.label);
  e.retrieved = p.retrieved;
  for (const auto& s : p.snippets) e.snippets.push_back(s.term);
  e.facts = p.facts.elements;
  for (TokenId id : out.predicted) e.predicted_tokens.push_back(c.vocab.token(id));
  e.jaccard = mapping.scores;
  e.zero_confidence = mapping.zero_confidence;
  return pred;
}

Prediction predict_case(const Components& c, std::string_view case_text, const RunConfig& config) {
  return predict_prepared(c, prepare_case(c, case_text, config));
}

std::string explanation_json(const Explanation& e) {
  nlohmann::json j;
  j["case_id"] = e.case_id;
  j["label"] = e.label;
  j["label_text"] = e.label_text;
  j["retrieved"] = nlohmann::json::array();
  for (const auto& r : e.retrieved) j["retrieved"].push_back({{"id", r.id}, {"score", r.score}});
  j["snippets"] = e.snippets;
  j["facts"] = e.facts;
  j["predicted_tokens"] = e.predicted_tokens;
  j["jaccard"] = e.jaccard;
  j["zero_confidence"] = e.zero_confidence;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string explanation_text(const Explanation& e, const Verbalizer& verbalizer) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "case " << (e.case_id.empty() ? "-" : e.case_id) << ": " << e.label_text << " (label " << e.label << ")";
  if (e.zero_confidence) os << " [zero confidence]";
  os << "\n  retrieved articles:";
  for (const auto& r : e.retrieved) os << " " << r.id << " (" << r.score << ")";
  os << "\n  knowledge snippets:";
  for (const auto& s : e.snippets) os << " " << s;
  os << "\n  factual elements:\n";
  for (const auto& f : e.facts) os << "    - " << f << "\n";
  os << "  predicted tokens:";
  for (const auto& t : e.predicted_tokens) os << " " << t;
  os << "\n  jaccard:";
  for (std::size_t y = 0; y < e.jaccard.size() && y < verbalizer.size(); ++y) {
    os << " " << verbalizer.text(static_cast<int>(y)) << "=" << e.jaccard[y];
  }
  os << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Metrics

EvalReport compute_report(std::span<const int> gold, std::span<const int> predicted, std::size_t num_classes) {
  if (gold.empty()) throw DataError("cannot evaluate an empty split");
  if (gold.size() != predicted.size()) throw std::invalid_argument("gold and predicted lengths differ");
  EvalReport r;
  r.total = gold.size();
  r.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || predicted[i] < 0 || static_cast<std::size_t>(gold[i]) >= num_classes ||
        static_cast<std::size_t>(predicted[i]) >= num_classes) {
      throw std::invalid_argument("label outside [0, " + std::to_string(num_classes) + ")");
    }
    ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(predicted[i])];
  }
  std::size_t supported = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    ClassMetrics m;
    const double tp = static_cast<double>(r.confusion[c][c]);
    std::size_t predicted_c = 0;
    for (std::size_t g = 0; g < num_classes; ++g) predicted_c += r.confusion[g][c];
    for (std::size_t p = 0; p < num_classes; ++p) m.support += r.confusion[c][p];
    m.precision = predicted_c > 0 ? tp / static_cast<double>(predicted_c) : 0.0;
    m.recall = m.support > 0 ? tp / static_cast<double>(m.support) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (m.support > 0) {
      ++supported;
      r.macro_precision += m.precision;
      r.macro_recall += m.recall;
      r.macro_f1 += m.f1;
    }
    r.classes.push_back(m);
  }
  r.macro_precision /= static_cast<double>(supported);
  r.macro_recall /= static_cast<double>(supported);
  r.macro_f1 /= static_cast<double>(supported);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["total"] = total;
  j["macro_precision"] = macro_precision;
  j["macro_recall"] = macro_recall;
  j["macro_f1"] = macro_f1;
  j["classes"] = nlohmann::json::array();
  for (const auto& c : classes) {
    j["classes"].push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  j["confusion"] = confusion;
  return j.dump(2);
}

EvalReport evaluate(const Components& c, const Dataset& dataset, std::span<const std::size_t> cases,
                    const RunConfig& config) {
  std::vector<int> gold;
  std::vector<int> predicted;
  for (std::size_t i : cases) {
    const Case& k = dataset.cases.at(i);
    gold.push_back(k.charge);
    predicted.push_back(predict_case(c, k.text, config).label);
  }
  return compute_report(gold, predicted, c.verbalizer.size());
}

// ---------------------------------------------------------------------------
// Training

namespace {

void attach_inference_state(Components& c, const RunConfig& config) {
  c.index = build_article_index(c.retriever, c.vocab, c.articles, JointSpaceConfig{}.max_len);
  const HardTemplates templates = resolve_templates(config, c.verbalizer);
  c.prefix_tokens = tokenize(c.vocab, templates.prefix);
  c.keyword_tokens = tokenize(c.vocab, templates.keywords);
  c.client = make_client(config, c.lexicon);
}

}  // namespace

Vocab build_pipeline_vocab(const Dataset& train, const Lexicon& lexicon, const RunConfig& config) {
  const HardTemplates t = resolve_templates(config, train.verbalizer);
  std::vector<std::string> extras{t.prefix, t.keywords, ","};
  extras.insert(extras.end(), lexicon.terms().begin(), lexicon.terms().end());
  return build_vocab(train, config.min_freq, TokenizerMode::Character, extras);
}

SentenceEncoder build_retriever(const Dataset& train, const Vocab& vocab, const RunConfig& config,
                                JointSpaceHistory* history) {
  SentenceEncoder encoder(vocab.size(), config.retriever_dim, derive_seed(config.seed, kRetrieverTag));
  if (config.no_contrastive) return encoder;
  const PairSet pairs = build_pairs(train, derive_seed(config.seed, kPairTag));
  JointSpaceConfig jc;
  jc.tau = config.tau;
  jc.lr = config.retriever_lr;
  jc.epochs = config.retriever_epochs;
  jc.batch = config.batch;
  jc.seed = derive_seed(config.seed, kTrainTag);
  JointSpaceHistory h = train_joint_space(encoder, vocab, train, pairs, jc);
  if (history) *history = std::move(h);
  return encoder;
}

TrainedPipeline train_pipeline(const Dataset& dataset, std::span<const std::size_t> train_cases,
                               const Lexicon& lexicon, const RunConfig& config) {
  config.validate();
  if (train_cases.empty()) throw DataError("no training cases");
  const Dataset train = dataset.subset(train_cases);

  TrainedPipeline out;
  Components& c = out.components;
  c.vocab = build_pipeline_vocab(train, lexicon, config);
  c.lexicon = lexicon;
  c.articles = dataset.articles;
  c.verbalizer = dataset.verbalizer;
  c.retriever = build_retriever(train, c.vocab, config, &out.retriever_history);
  attach_inference_state(c, config);

  // Validation carve-out from the training cases.
  std::vector<std::size_t> fit;
  std::vector<std::size_t> val;
  {
    const Split inner = split_dataset(train, derive_seed(config.seed, kValTag), 1.0 - config.val_fraction);
    fit = inner.train;
    val = inner.test;
    if (val.empty()) val = fit;
  }

  std::vector<PromptExample> fit_examples;
  std::vector<PromptExample> val_examples;
  std::vector<PreparedCase> val_prepared;
  std::vector<int> val_gold;
  auto make_example = [&](const Case& k, PreparedCase& p) {
    PromptExample ex;
    ex.layout = p.layout;
    ex.fact_tokens = p.fact_tokens;
    ex.inject = p.inject;
    ex.targets = label_targets(c.vocab, c.verbalizer.text(k.charge), config.mask_count);
    return ex;
  };
  for (std::size_t i : fit) {
    PreparedCase p = prepare_case(c, train.cases[i].text, config);
    fit_examples.push_back(make_example(train.cases[i], p));
  }
  for (std::size_t i : val) {
    PreparedCase p = prepare_case(c, train.cases[i].text, config);
    val_examples.push_back(make_example(train.cases[i], p));
    val_gold.push_back(train.cases[i].charge);
    val_prepared.push_back(std::move(p));
  }

  ModelDims dims;
  dims.vocab_size = c.vocab.size();
  dims.d_model = config.d_model;
  dims.layers = config.layers;
  dims.heads = config.heads;
  dims.ff = config.ff;
  dims.max_len = config.max_len;
  c.model = PromptModel(dims, derive_seed(config.seed, kModelTag));

  const Validator validator = [&](const PromptModel& model) {
    std::vector<int> predicted;
    double loss = 0.0;
    for (std::size_t k = 0; k < val_prepared.size(); ++k) {
      const ModelOutput o = model.forward(val_prepared[k].layout, val_prepared[k].fact_tokens, val_prepared[k].inject);
      predicted.push_back(map_to_label(make_prediction_tokens(o.predicted, c.vocab), c.verbalizer).label);
      loss += mlm_loss(o.logits, val_examples[k].targets);
    }
    const EvalReport report = compute_report(val_gold, predicted, c.verbalizer.size());
    return ValidationResult{report.macro_f1, loss / static_cast<double>(val_prepared.size())};
  };

  TrainConfig tc;
  tc.lr = config.lr;
  tc.batch = config.batch;
  tc.max_epochs = config.max_epochs;
  tc.patience = config.patience;
  tc.seed = derive_seed(config.seed, kTrainTag);
  out.history = train_prompt_model(c.model, fit_examples, validator, tc);
  spdlog::info("prompt model: best epoch {} of {}, validation F1 {:.4f}", out.history.best_epoch,
               out.history.train_loss.size(),
               out.history.best_epoch > 0 ? out.history.val_f1[static_cast<std::size_t>(out.history.best_epoch - 1)]
                                          : 0.0);
  return out;
}

void save_components(const Components& c, const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  c.vocab.save(dir / "vocab.json");
  SentenceEncoder retriever = c.retriever;
  save_checkpoint(to_checkpoint(retriever, c.vocab.hash()), dir / "retriever.ckpt");
  PromptModel model = c.model;
  save_checkpoint(to_checkpoint(model, c.vocab.hash()), dir / "model.ckpt");
  save_run_config(config, dir / "run.cfg");
}

Components load_components(const std::filesystem::path& dir, const Dataset& dataset, const Lexicon& lexicon,
                           const RunConfig& config) {
  Components c;
  c.vocab = Vocab::load(dir / "vocab.json");
  c.lexicon = lexicon;
  c.articles = dataset.articles;
  c.verbalizer = dataset.verbalizer;
  c.retriever = retriever_from(load_checkpoint(dir / "retriever.ckpt", c.vocab.hash()));
  c.model = prompt_model_from(load_checkpoint(dir / "model.ckpt", c.vocab.hash()));
  if (c.model.dims().vocab_size != c.vocab.size()) throw DataError("model and vocabulary sizes differ");
  attach_inference_state(c, config);
  return c;
}

// ---------------------------------------------------------------------------
// Experiments

std::vector<AblationRow> run_ablation(const Dataset& dataset, const Split& split, const Lexicon& lexicon,
                                      const RunConfig& base) {
  std::vector<AblationRow> rows;
  auto add = [&](const std::string& name, bool no_snippets, bool no_facts, bool no_contrastive) {
    RunConfig cfg = base;
    cfg.no_snippets = no_snippets;
    cfg.no_facts = no_facts;
    cfg.no_contrastive = no_contrastive;
    const TrainedPipeline p = train_pipeline(dataset, split.train, lexicon, cfg);
    rows.push_back({name, cfg, evaluate(p.components, dataset, split.test, cfg)});
    spdlog::info("ablation {}: macro F1 {:.4f}", name, rows.back().report.macro_f1);
  };
  add("full", false, false, false);
  add("no_snippets", true, false, false);
  add("no_facts", false, true, false);
  add("no_snippets_no_facts", true, true, false);
  add("no_contrastive", false, false, true);
  return rows;
}

std::vector<FractionRow> data_fraction_sweep(const Dataset& dataset, const Split& split, const Lexicon& lexicon,
                                             std::span<const double> fractions, const RunConfig& base) {
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw UsageError("fraction " + fmt_double(f) + " is outside (0, 1]");
  }
  std::vector<FractionRow> rows;
  for (double f : fractions) {
    const auto subset = stratified_subsample(dataset, split.train, f, base.seed);
    const TrainedPipeline p = train_pipeline(dataset, subset, lexicon, base);
    rows.push_back({f, subset.size(), evaluate(p.components, dataset, split.test, base).macro_f1});
    spdlog::info("fraction {}: {} training cases, macro F1 {:.4f}", f, subset.size(), rows.back().macro_f1);
  }
  return rows;
}

std::vector<HyperRow> hyperparam_sweep(const HyperGrid& grid, const RunConfig& base, const CellEvaluator& evaluate) {
  if (grid.n_articles.empty() || grid.max_len.empty() || grid.mask_count.empty()) {
    throw UsageError("hyperparameter grid has an empty axis");
  }
  std::vector<HyperRow> rows;
  for (int n : grid.n_articles) {
    for (std::size_t len : grid.max_len) {
      for (int m : grid.mask_count) {
        RunConfig cfg = base;
        cfg.n_articles = n;
        cfg.max_len = len;
        cfg.mask_count = m;
        rows.push_back({n, len, m, evaluate(cfg)});
      }
    }
  }
  return rows;
}

CellEvaluator pipeline_evaluator(const Dataset& dataset, const Split& split, const Lexicon& lexicon) {
  return [&dataset, split, lexicon](const RunConfig& cfg) {
    const TrainedPipeline p = train_pipeline(dataset, split.train, lexicon, cfg);
    return evaluate(p.components, dataset, split.test, cfg).macro_f1;
  };
}

std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "row,macro_precision,macro_recall,macro_f1\n";
  for (const auto& r : rows) {
    out += r.name + "," + fmt_double(r.report.macro_precision) + "," + fmt_double(r.report.macro_recall) + "," +
           fmt_double(r.report.macro_f1) + "\n";
  }
  return out;
}

std::string fraction_csv(std::span<const FractionRow> rows) {
  std::string out = "fraction,train_cases,macro_f1\n";
  for (const auto& r : rows) {
    out += fmt_double(r.fraction) + "," + std::to_string(r.train_cases) + "," + fmt_double(r.macro_f1) + "\n";
  }
  return out;
}

std::string hyper_csv(std::span<const HyperRow> rows) {
  std::string out = "n_articles,max_len,mask_count,macro_f1\n";
  for (const auto& r : rows) {
    out += std::to_string(r.n_articles) + "," + std::to_string(r.max_len) + "," + std::to_string(r.mask_count) +
           "," + fmt_double(r.macro_f1) + "\n";
  }
  return out;
}

std::vector<HyperRow> parse_hyper_csv(std::string_view csv) {
  std::vector<HyperRow> rows;
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string a, b, c, d;
    if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') || !std::getline(fields, c, ',') ||
        !std::getline(fields, d)) {
      throw DataError("malformed sweep row: " + line);
    }
    rows.push_back({std::stoi(a), static_cast<std::size_t>(std::stoull(b)), std::stoi(c), std::stod(d)});
  }
  return rows;
}

std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,val_macro_f1,val_loss\n";
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    out += std::to_string(e + 1) + "," + fmt_double(h.train_loss[e]) + "," + fmt_double(h.val_f1[e]) + "," +
           fmt_double(h.val_loss[e]) + "\n";
  }
  return out;
}

}  // namespace lexprompt
