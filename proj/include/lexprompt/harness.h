#pragma once

#include "lexprompt/corpus.h"
#include "lexprompt/fact_extractor.h"
#include "lexprompt/joint_space.h"
#include "lexprompt/knowledge_matcher.h"
#include "lexprompt/label_mapper.h"
#include "lexprompt/prompt_model.h"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace lexprompt {

struct RunConfig {
  std::uint64_t seed = 1;

  // prompt model
  double lr = 3e-3;
  int batch = 8;
  int max_epochs = 50;
  int patience = 5;
  int d_model = 32;
  int layers = 2;
  int heads = 2;
  int ff = 64;
  int mask_count = 20;
  std::size_t max_len = 256;       // whole prompt
  std::size_t max_case_len = 0;    // case segment; 0 leaves it to max_len
  std::size_t max_fact_len = 64;
  std::string templates = "auto";  // english | chinese | auto (chinese for CJK labels)

  // retrieval and extraction
  int n_articles = 4;
  int retriever_dim = 32;
  double retriever_lr = 0.5;
  int retriever_epochs = 30;
  double tau = 0.1;
  std::string llm_endpoint;  // empty: deterministic mock extractor
  int llm_retries = 1;

  // data
  int min_freq = 1;
  double val_fraction = 0.1;

  // ablations
  bool no_snippets = false;
  bool no_facts = false;
  bool no_contrastive = false;

  void validate() const;  // throws UsageError
};

// Sets one field from its textual form. Throws UsageError on an unknown key
// or an unparsable value.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
// key = value lines; '#' starts a comment.
RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {});
void save_run_config(const RunConfig& config, const std::filesystem::path& path);

// Stratified case-index split: about two thirds of each class to train.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split split_dataset(const Dataset& dataset, std::uint64_t seed, double train_fraction = 2.0 / 3.0);

// Seeded per-class subsample keeping round(fraction * count) cases of each
// class; classes that round to zero are dropped with a warning.
std::vector<std::size_t> stratified_subsample(const Dataset& dataset, std::span<const std::size_t> indices,
                                              double fraction, std::uint64_t seed);

// Everything inference needs.
struct Components {
  Vocab vocab;
  SentenceEncoder retriever;
  ArticleIndex index;
  Lexicon lexicon;
  std::vector<Article> articles;
  Verbalizer verbalizer;
  PromptModel model;
  std::vector<TokenId> prefix_tokens;
  std::vector<TokenId> keyword_tokens;
  std::shared_ptr<LlmClient> client;
};

HardTemplates resolve_templates(const RunConfig& config, const Verbalizer& verbalizer);
// Mock extractor unless an endpoint is configured.
std::shared_ptr<LlmClient> make_client(const RunConfig& config, const Lexicon& lexicon);

// Intermediate artifacts of one case, before the prompt model runs.
struct PreparedCase {
  std::vector<ScoredArticle> retrieved;
  FactList facts;
  std::vector<TokenId> fact_tokens;
  std::vector<SnippetMatch> snippets;
  PromptLayout layout;
  bool inject = true;
};

PreparedCase prepare_case(const Components& components, std::string_view case_text, const RunConfig& config);

struct Explanation {
  std::string case_id;
  int label = 0;
  std::string label_text;
  std::vector<ScoredArticle> retrieved;
  std::vector<std::string> snippets;
  std::vector<std::string> facts;
  std::vector<std::string> predicted_tokens;
  std::vector<double> jaccard;
  bool zero_confidence = false;
};

std::string explanation_json(const Explanation& explanation);  // one line
std::string explanation_text(const Explanation& explanation, const Verbalizer& verbalizer);

struct Prediction {
  int label = 0;
  Explanation explanation;
};

Prediction predict_prepared(const Components& components, const PreparedCase& prepared);
// Errors from a stage are rethrown with the stage named in the message.
Prediction predict_case(const Components& components, std::string_view case_text, const RunConfig& config);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;

  bool operator==(const ClassMetrics&) const = default;
};

struct EvalReport {
  std::vector<ClassMetrics> classes;
  std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::size_t total = 0;

  bool operator==(const EvalReport&) const = default;
  std::string to_json() const;
};

// Macro values average the classes with non-zero support. Throws DataError
// on empty input.
EvalReport compute_report(std::span<const int> gold, std::span<const int> predicted, std::size_t num_classes);

EvalReport evaluate(const Components& components, const Dataset& dataset, std::span<const std::size_t> cases,
                    const RunConfig& config);

struct TrainedPipeline {
  Components components;
  JointSpaceHistory retriever_history;
  TrainHistory history;
};

Vocab build_pipeline_vocab(const Dataset& train, const Lexicon& lexicon, const RunConfig& config);

// Retriever only: vocab from the training cases, contrastive training unless
// no_contrastive is set.
SentenceEncoder build_retriever(const Dataset& train, const Vocab& vocab, const RunConfig& config,
                                JointSpaceHistory* history = nullptr);

// Vocab, retriever, fact extraction and prompt-model training on the given
// case indices, with a stratified validation carve-out for early stopping.
TrainedPipeline train_pipeline(const Dataset& dataset, std::span<const std::size_t> train_cases,
                               const Lexicon& lexicon, const RunConfig& config);

// Model directory layout: vocab.json, retriever.ckpt, model.ckpt, run.cfg.
void save_components(const Components& components, const RunConfig& config, const std::filesystem::path& dir);
// Rebuilds inference components from a model directory plus the dataset's
// articles and labels. Throws DataError on missing or mismatched artifacts.
Components load_components(const std::filesystem::path& dir, const Dataset& dataset, const Lexicon& lexicon,
                           const RunConfig& config);

struct AblationRow {
  std::string name;
  RunConfig config;
  EvalReport report;
};

// full, no_snippets, no_facts, no_snippets+no_facts, no_contrastive; all
// rows share the seed and split.
std::vector<AblationRow> run_ablation(const Dataset& dataset, const Split& split, const Lexicon& lexicon,
                                      const RunConfig& base);

struct FractionRow {
  double fraction = 0.0;
  std::size_t train_cases = 0;
  double macro_f1 = 0.0;
};

// Throws UsageError for fractions outside (0, 1].
std::vector<FractionRow> data_fraction_sweep(const Dataset& dataset, const Split& split, const Lexicon& lexicon,
                                             std::span<const double> fractions, const RunConfig& base);

struct HyperGrid {
  std::vector<int> n_articles{2, 4, 6, 8};
  std::vector<std::size_t> max_len{256};
  std::vector<int> mask_count{5, 10, 15, 20};
};

struct HyperRow {
  int n_articles = 0;
  std::size_t max_len = 0;
  int mask_count = 0;
  double macro_f1 = 0.0;

  bool operator==(const HyperRow&) const = default;
};

using CellEvaluator = std::function<double(const RunConfig&)>;

// Cartesian product in n_articles, max_len, mask_count order. Throws
// UsageError on an empty axis.
std::vector<HyperRow> hyperparam_sweep(const HyperGrid& grid, const RunConfig& base, const CellEvaluator& evaluate);
// Evaluator that trains on split.train and scores split.test.
CellEvaluator pipeline_evaluator(const Dataset& dataset, const Split& split, const Lexicon& lexicon);

std::string ablation_csv(std::span<const AblationRow> rows);
std::string fraction_csv(std::span<const FractionRow> rows);
std::string hyper_csv(std::span<const HyperRow> rows);
std::vector<HyperRow> parse_hyper_csv(std::string_view csv);
std::string history_csv(const TrainHistory& history);

}  // namespace lexprompt
