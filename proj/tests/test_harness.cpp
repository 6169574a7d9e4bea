#include "lexprompt/harness.h"
#include "lexprompt/toy_corpus.h"

#include "test_util.h"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace lexprompt {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(ComputeReport, HandComputedTwoClassExample) {
  // gold a a a b b, predicted a a b b a: TP_a=2 FN_a=1 FP_a=1, TP_b=1 FN_b=1 FP_b=1.
  const std::vector<int> gold{0, 0, 0, 1, 1};
  const std::vector<int> pred{0, 0, 1, 1, 0};
  const EvalReport r = compute_report(gold, pred, 2);
  const double p_a = 2.0 / 3.0, r_a = 2.0 / 3.0, f_a = 2.0 / 3.0;
  const double p_b = 1.0 / 2.0, r_b = 1.0 / 2.0, f_b = 1.0 / 2.0;
  EXPECT_NEAR(r.classes[0].precision, p_a, 1e-15);
  EXPECT_NEAR(r.classes[0].recall, r_a, 1e-15);
  EXPECT_NEAR(r.classes[1].f1, f_b, 1e-15);
  EXPECT_NEAR(r.macro_precision, (p_a + p_b) / 2, 1e-15);
  EXPECT_NEAR(r.macro_recall, (r_a + r_b) / 2, 1e-15);
  EXPECT_NEAR(r.macro_f1, (f_a + f_b) / 2, 1e-15);
  EXPECT_EQ(r.confusion, (std::vector<std::vector<std::size_t>>{{2, 1}, {1, 1}}));
  EXPECT_EQ(r.total, 5u);
}

TEST(ComputeReport, PerfectAndConstantPredictors) {
  const std::vector<int> gold{0, 1, 2, 0, 1, 2};
  EXPECT_EQ(compute_report(gold, gold, 3).macro_f1, 1.0);

  const std::vector<int> balanced{0, 0, 1, 1};
  const std::vector<int> constant{0, 0, 0, 0};
  const EvalReport r = compute_report(balanced, constant, 2);
  EXPECT_EQ(r.classes[1].f1, 0.0);
  EXPECT_NEAR(r.classes[0].f1, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.macro_f1, 1.0 / 3.0, 1e-15);
}

TEST(ComputeReport, UnsupportedClassesExcludedFromMacro) {
  const std::vector<int> gold{0, 0};
  const std::vector<int> pred{0, 0};
  EXPECT_EQ(compute_report(gold, pred, 5).macro_f1, 1.0);
}

TEST(ComputeReport, Errors) {
  EXPECT_THROW(compute_report({}, {}, 2), DataError);
  const std::vector<int> one{0};
  const std::vector<int> bad{2};
  EXPECT_THROW(compute_report(one, bad, 2), std::invalid_argument);
}

TEST(ComputeReport, MacroF1IsMeanOfRecomputedClassF1) {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(4);
    std::vector<int> gold, pred;
    for (std::size_t i = 0, n = 1 + rng.below(40); i < n; ++i) {
      gold.push_back(static_cast<int>(rng.below(k)));
      pred.push_back(static_cast<int>(rng.below(k)));
    }
    const EvalReport r = compute_report(gold, pred, k);
    double sum = 0.0;
    int supported = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool g = gold[i] == static_cast<int>(c), p = pred[i] == static_cast<int>(c);
        tp += g && p;
        fp += !g && p;
        fn += g && !p;
      }
      if (tp + fn == 0) continue;
      ++supported;
      sum += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
      EXPECT_GE(r.classes[c].f1, 0.0);
      EXPECT_LE(r.classes[c].f1, 1.0);
    }
    EXPECT_NEAR(r.macro_f1, sum / supported, 1e-12);
  }
}

TEST(ComputeReport, JsonCarriesMacroValues) {
  const std::vector<int> gold{0, 1};
  const auto j = nlohmann::json::parse(compute_report(gold, gold, 2).to_json());
  EXPECT_EQ(j["macro_f1"], 1.0);
  EXPECT_EQ(j["classes"].size(), 2u);
}

TEST(RunConfig, ParseSaveAndValidate) {
  TempDir dir;
  write_file(dir / "c.cfg", "# comment\nseed = 9\nlr = 0.25  # trailing\nno_snippets = true\nmask_count=7\n\n");
  RunConfig c = load_run_config(dir / "c.cfg");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.lr, 0.25);
  EXPECT_TRUE(c.no_snippets);
  EXPECT_EQ(c.mask_count, 7);
  c.tau = 0.123456789012345;
  save_run_config(c, dir / "out.cfg");
  const RunConfig back = load_run_config(dir / "out.cfg");
  EXPECT_EQ(back.tau, c.tau);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_TRUE(back.no_snippets);

  write_file(dir / "bad.cfg", "colour = red\n");
  EXPECT_THROW(load_run_config(dir / "bad.cfg"), UsageError);
  write_file(dir / "bad2.cfg", "seed = many\n");
  EXPECT_THROW(load_run_config(dir / "bad2.cfg"), UsageError);
  write_file(dir / "bad3.cfg", "seed\n");
  EXPECT_THROW(load_run_config(dir / "bad3.cfg"), UsageError);
  EXPECT_THROW(load_run_config(dir / "missing.cfg"), UsageError);

  RunConfig invalid;
  invalid.mask_count = 0;
  EXPECT_THROW(invalid.validate(), UsageError);
  invalid = RunConfig{};
  invalid.n_articles = -1;
  EXPECT_THROW(invalid.validate(), UsageError);
  EXPECT_NO_THROW(RunConfig{}.validate());
}

TEST(SplitDataset, StratifiedDisjointAndSeeded) {
  const Dataset d = generate_toy_corpus(default_toy_spec(3, 30), 1);
  const Split s = split_dataset(d, 5);
  EXPECT_EQ(s.train.size(), 60u);
  EXPECT_EQ(s.test.size(), 30u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  for (auto i : s.test) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 90u);
  std::vector<int> per_class(3, 0);
  for (auto i : s.test) ++per_class[static_cast<std::size_t>(d.cases[i].charge)];
  EXPECT_EQ(per_class, (std::vector<int>{10, 10, 10}));
  EXPECT_EQ(split_dataset(d, 5).train, s.train);
  EXPECT_NE(split_dataset(d, 6).train, s.train);
}

TEST(StratifiedSubsample, ReproducibleAndProportional) {
  const Dataset d = generate_toy_corpus(default_toy_spec(4, 20), 1);
  const Split s = split_dataset(d, 1);
  const auto half = stratified_subsample(d, s.train, 0.5, 3);
  EXPECT_EQ(half, stratified_subsample(d, s.train, 0.5, 3));
  std::vector<std::size_t> train_per_class(4, 0), half_per_class(4, 0);
  for (auto i : s.train) ++train_per_class[static_cast<std::size_t>(d.cases[i].charge)];
  for (auto i : half) ++half_per_class[static_cast<std::size_t>(d.cases[i].charge)];
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(half_per_class[c], static_cast<std::size_t>(std::lround(0.5 * static_cast<double>(train_per_class[c]))));
  }
  for (auto i : half) EXPECT_NE(std::find(s.train.begin(), s.train.end(), i), s.train.end());
  EXPECT_EQ(stratified_subsample(d, s.train, 1.0, 3).size(), s.train.size());
  EXPECT_TRUE(stratified_subsample(d, s.train, 0.01, 3).empty());
  EXPECT_THROW(stratified_subsample(d, s.train, 0.0, 3), UsageError);
  EXPECT_THROW(stratified_subsample(d, s.train, 1.5, 3), UsageError);
}

TEST(HyperparamSweep, CartesianProductInOrder) {
  int calls = 0;
  const CellEvaluator fake = [&](const RunConfig& c) {
    ++calls;
    return c.n_articles * 0.01 + c.mask_count * 0.001 + 1.0 / 3.0;
  };
  const auto rows = hyperparam_sweep(HyperGrid{}, RunConfig{}, fake);
  ASSERT_EQ(rows.size(), 16u);
  EXPECT_EQ(rows[1].mask_count, 10);
  EXPECT_EQ(rows[4].n_articles, 4);

  HyperGrid four;
  four.max_len = {64, 128, 256, 512};
  EXPECT_EQ(hyperparam_sweep(four, RunConfig{}, fake).size(), 64u);
  HyperGrid one{{4}, {256}, {20}};
  EXPECT_EQ(hyperparam_sweep(one, RunConfig{}, fake).size(), 1u);
  HyperGrid empty{{}, {256}, {20}};
  EXPECT_THROW(hyperparam_sweep(empty, RunConfig{}, fake), UsageError);

  EXPECT_EQ(parse_hyper_csv(hyper_csv(rows)), rows);
}

TEST(Csv, Headers) {
  EXPECT_EQ(fraction_csv(std::vector<FractionRow>{{0.5, 10, 0.75}}), "fraction,train_cases,macro_f1\n0.5,10,0.75\n");
  TrainHistory h;
  h.train_loss = {1.5};
  h.val_f1 = {0.5};
  h.val_loss = {2};
  EXPECT_EQ(history_csv(h), "epoch,train_loss,val_macro_f1,val_loss\n1,1.5,0.5,2\n");
}

TEST(ResolveTemplates, AutoFollowsLabelScript) {
  RunConfig c;
  EXPECT_EQ(resolve_templates(c, Verbalizer({{0, "盗窃"}})).prefix, HardTemplates::chinese().prefix);
  EXPECT_EQ(resolve_templates(c, Verbalizer({{0, "theft"}})).prefix, HardTemplates::english().prefix);
  c.templates = "english";
  EXPECT_EQ(resolve_templates(c, Verbalizer({{0, "盗窃"}})).prefix, HardTemplates::english().prefix);
}

RunConfig small_config() {
  RunConfig c;
  c.d_model = 16;
  c.ff = 32;
  c.max_epochs = 30;
  c.mask_count = 4;
  c.max_len = 160;
  c.retriever_dim = 16;
  c.retriever_epochs = 15;
  c.n_articles = 2;
  return c;
}

struct SmallRun {
  Dataset data;
  Lexicon lexicon;
  Split split;
  TrainedPipeline pipeline;
};

const SmallRun& small_run() {
  static const SmallRun run = [] {
    SmallRun r;
    const ToyCorpusSpec spec = default_toy_spec(3, 12);
    r.data = generate_toy_corpus(spec, 3);
    r.lexicon = Lexicon(toy_lexicon_terms(spec));
    r.split = split_dataset(r.data, 1);
    r.pipeline = train_pipeline(r.data, r.split.train, r.lexicon, small_config());
    return r;
  }();
  return run;
}

TEST(Pipeline, TheftCasePredictedWithCueAmongSnippets) {
  const SmallRun& run = small_run();
  const Case* theft = nullptr;
  for (auto i : run.split.test) {
    if (run.data.cases[i].charge == 0) theft = &run.data.cases[i];
  }
  ASSERT_NE(theft, nullptr);
  ASSERT_EQ(run.data.verbalizer.text(0), "盗窃");
  const Prediction p = predict_case(run.pipeline.components, theft->text, small_config());
  EXPECT_EQ(p.label, 0);
  const auto& snippets = p.explanation.snippets;
  EXPECT_TRUE(std::find(snippets.begin(), snippets.end(), "扒窃") != snippets.end() ||
              std::find(snippets.begin(), snippets.end(), "窃得") != snippets.end());
  EXPECT_FALSE(p.explanation.facts.empty());
  EXPECT_EQ(p.explanation.retrieved.size(), 2u);
  EXPECT_EQ(p.explanation.jaccard.size(), 3u);

  const auto j = nlohmann::json::parse(explanation_json(p.explanation));
  EXPECT_EQ(j["label"], 0);
  EXPECT_EQ(explanation_json(p.explanation).find('\n'), std::string::npos);
  EXPECT_NE(explanation_text(p.explanation, run.data.verbalizer).find("盗窃"), std::string::npos);
}

TEST(Pipeline, NoSnippetsLeavesSnippetSegmentEmpty) {
  const SmallRun& run = small_run();
  RunConfig c = small_config();
  const std::string& text = run.data.cases[run.split.test[0]].text;
  const PreparedCase full = prepare_case(run.pipeline.components, text, c);
  c.no_snippets = true;
  const PreparedCase ablated = prepare_case(run.pipeline.components, text, c);
  EXPECT_GT(full.layout.snippet_len, 0u);
  EXPECT_EQ(ablated.layout.snippet_len, 0u);
  EXPECT_TRUE(ablated.snippets.empty());
  // Only the snippet stage differs.
  EXPECT_EQ(ablated.retrieved, full.retrieved);
  EXPECT_EQ(ablated.facts, full.facts);
  EXPECT_EQ(ablated.layout.case_len, full.layout.case_len);
  const Prediction p = predict_prepared(run.pipeline.components, ablated);
  EXPECT_TRUE(run.data.verbalizer.contains(p.label));
}

TEST(Pipeline, NoFactsZeroesOnlyTheFactStage) {
  const SmallRun& run = small_run();
  RunConfig c = small_config();
  const std::string& text = run.data.cases[run.split.test[0]].text;
  const PreparedCase full = prepare_case(run.pipeline.components, text, c);
  c.no_facts = true;
  const PreparedCase ablated = prepare_case(run.pipeline.components, text, c);
  EXPECT_FALSE(ablated.inject);
  EXPECT_TRUE(ablated.fact_tokens.empty());
  EXPECT_EQ(ablated.layout.tokens, full.layout.tokens);
  EXPECT_EQ(ablated.snippets, full.snippets);
}

TEST(Pipeline, StageErrorsNameTheStage) {
  const SmallRun& run = small_run();
  RunConfig c = small_config();
  c.max_len = 5;
  try {
    predict_case(run.pipeline.components, "x", c);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("prompt assembly"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, TrainingIsDeterministic) {
  const SmallRun& run = small_run();
  RunConfig c = small_config();
  c.max_epochs = 3;
  const TrainedPipeline a = train_pipeline(run.data, run.split.train, run.lexicon, c);
  const TrainedPipeline b = train_pipeline(run.data, run.split.train, run.lexicon, c);
  EXPECT_EQ(a.history.train_loss, b.history.train_loss);
  EXPECT_EQ(evaluate(a.components, run.data, run.split.test, c), evaluate(b.components, run.data, run.split.test, c));
}

TEST(Pipeline, EvaluateRejectsEmptySplit) {
  const SmallRun& run = small_run();
  EXPECT_THROW(evaluate(run.pipeline.components, run.data, {}, small_config()), DataError);
}

TEST(Pipeline, SavedComponentsReproducePredictions) {
  const SmallRun& run = small_run();
  TempDir dir;
  save_components(run.pipeline.components, small_config(), dir.path());
  const RunConfig saved = load_run_config(dir / "run.cfg");
  const Components loaded = load_components(dir.path(), run.data, run.lexicon, saved);
  for (auto i : run.split.test) {
    const auto a = predict_case(run.pipeline.components, run.data.cases[i].text, saved).explanation;
    const auto b = predict_case(loaded, run.data.cases[i].text, saved).explanation;
    EXPECT_EQ(explanation_json(a), explanation_json(b));
  }
  std::filesystem::remove(dir / "model.ckpt");
  EXPECT_THROW(load_components(dir.path(), run.data, run.lexicon, saved), DataError);
}

TEST(DataFractionSweep, FullFractionMatchesPlainRun) {
  const SmallRun& run = small_run();
  RunConfig c = small_config();
  c.max_epochs = 3;
  const std::vector<double> fractions{1.0};
  const auto rows = data_fraction_sweep(run.data, run.split, run.lexicon, fractions, c);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].train_cases, run.split.train.size());
  const TrainedPipeline plain = train_pipeline(run.data, run.split.train, run.lexicon, c);
  EXPECT_EQ(rows[0].macro_f1, evaluate(plain.components, run.data, run.split.test, c).macro_f1);
  const std::vector<double> bad{0.0};
  EXPECT_THROW(data_fraction_sweep(run.data, run.split, run.lexicon, bad, c), UsageError);
}

TEST(DataFractionSweep, OneRowPerFraction) {
  const SmallRun& run = small_run();
  RunConfig c = small_config();
  c.max_epochs = 1;
  const std::vector<double> fractions{0.1, 0.5, 1.0};
  const auto rows = data_fraction_sweep(run.data, run.split, run.lexicon, fractions, c);
  ASSERT_EQ(rows.size(), 3u);
  const std::string csv = fraction_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

}  // namespace
}  // namespace lexprompt
