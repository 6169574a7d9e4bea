#include "lexprompt/checkpoint.h"
#include "lexprompt/gradcheck.h"
#include "lexprompt/harness.h"
#include "lexprompt/toy_corpus.h"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace lexprompt;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct Options {
  std::string config_path;
  std::uint64_t seed = 1;
  int n_articles = 4;
  int mask_count = 20;
  std::size_t max_len = 256;
  bool no_snippets = false;
  bool no_facts = false;
  bool no_contrastive = false;
  std::string llm_endpoint;
  std::string out;
  std::string data;
  std::string model;
  std::string text;
  bool verbose = false;
  bool quiet = false;

  // gen-data
  int charges = 5;
  int cases = 40;
  std::string variant = "default";

  // predict
  std::string format = "json";

  // sweeps
  std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  std::vector<int> grid_n{2, 4, 6, 8};
  std::vector<std::size_t> grid_len{256};
  std::vector<int> grid_mask{5, 10, 15, 20};
};

struct FlagOptions {
  CLI::Option* seed = nullptr;
  CLI::Option* n_articles = nullptr;
  CLI::Option* mask_count = nullptr;
  CLI::Option* max_len = nullptr;
  CLI::Option* llm_endpoint = nullptr;
};

// Defaults, then the model's saved config (if any), then --config, then flags.
RunConfig resolve_config(const Options& o, const FlagOptions& f, const fs::path& saved = {}) {
  RunConfig c;
  if (!saved.empty() && fs::exists(saved)) c = load_run_config(saved, c);
  if (!o.config_path.empty()) c = load_run_config(o.config_path, c);
  if (f.seed->count()) c.seed = o.seed;
  if (f.n_articles->count()) c.n_articles = o.n_articles;
  if (f.mask_count->count()) c.mask_count = o.mask_count;
  if (f.max_len->count()) c.max_len = o.max_len;
  if (o.no_snippets) c.no_snippets = true;
  if (o.no_facts) c.no_facts = true;
  if (o.no_contrastive) c.no_contrastive = true;
  if (f.llm_endpoint->count()) {
    c.llm_endpoint = o.llm_endpoint;
  } else if (const char* env = std::getenv("LLM_ENDPOINT"); env && *env) {
    c.llm_endpoint = env;
  }
  c.validate();
  return c;
}

fs::path require_dir(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string(flag) + " is required");
  return value;
}

Dataset load_data(const fs::path& dir) {
  return load_dataset(dir / "cases.jsonl", dir / "articles.jsonl", dir / "verbalizer.jsonl");
}

Lexicon load_data_lexicon(const fs::path& dir) {
  if (!fs::exists(dir / "lexicon.txt")) {
    spdlog::warn("{} has no lexicon.txt; snippet matching disabled", dir.string());
    return Lexicon();
  }
  return load_lexicon(dir / "lexicon.txt");
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  spdlog::info("wrote {}", path.string());
}

// Writes the CSV under --out when given, and always to stdout.
void emit_csv(const Options& o, const char* name, const std::string& csv) {
  if (!o.out.empty()) write_text(fs::path(o.out) / name, csv);
  std::cout << csv;
}

int cmd_gen_data(const Options& o) {
  const fs::path out = require_dir(o.out, "--out");
  ToyCorpusSpec spec;
  if (o.variant == "default") spec = default_toy_spec(o.charges, o.cases);
  else if (o.variant == "snippet") spec = snippet_adversarial_spec(o.charges, o.cases);
  else if (o.variant == "fact") spec = fact_separable_spec(o.charges, o.cases);
  else throw UsageError("unknown variant '" + o.variant + "' (default, snippet, fact)");
  const Dataset d = generate_toy_corpus(spec, o.seed);
  fs::create_directories(out);
  save_dataset(d, out);
  std::string lexicon;
  for (const auto& t : toy_lexicon_terms(spec)) lexicon += t + "\n";
  write_text(out / "lexicon.txt", lexicon);
  std::printf("%zu cases, %zu articles, %zu charges written to %s\n", d.cases.size(), d.articles.size(),
              d.verbalizer.size(), out.string().c_str());
  return 0;
}

int cmd_train_retriever(const Options& o, const RunConfig& c) {
  const fs::path data_dir = require_dir(o.data, "--data");
  const fs::path out = require_dir(o.out, "--out");
  const Dataset d = load_data(data_dir);
  const Lexicon lex = load_data_lexicon(data_dir);
  const Split split = split_dataset(d, c.seed);
  const Dataset train = d.subset(split.train);
  const Vocab vocab = build_pipeline_vocab(train, lex, c);
  JointSpaceHistory history;
  SentenceEncoder enc = build_retriever(train, vocab, c, &history);
  const ArticleIndex index = build_article_index(enc, vocab, d.articles, JointSpaceConfig{}.max_len);

  int hits = 0;
  for (auto i : split.test) {
    const auto top = retrieve_top_n(enc, vocab, d.cases[i].text, index, 1, JointSpaceConfig{}.max_len);
    const auto& rel = d.cases[i].articles;
    hits += !top.empty() && std::find(rel.begin(), rel.end(), top[0].id) != rel.end();
  }
  fs::create_directories(out);
  vocab.save(out / "vocab.json");
  save_checkpoint(to_checkpoint(enc, vocab.hash()), out / "retriever.ckpt");
  std::string csv = "epoch,loss\n";
  for (std::size_t e = 0; e < history.epoch_loss.size(); ++e) {
    csv += std::to_string(e + 1) + "," + std::to_string(history.epoch_loss[e]) + "\n";
  }
  write_text(out / "retriever_history.csv", csv);
  std::printf("top-1 article accuracy on %zu held-out cases: %.4f\n", split.test.size(),
              split.test.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(split.test.size()));
  return 0;
}

int cmd_train(const Options& o, const RunConfig& c) {
  const fs::path data_dir = require_dir(o.data, "--data");
  const fs::path out = require_dir(o.out, "--out");
  const Dataset d = load_data(data_dir);
  const Lexicon lex = load_data_lexicon(data_dir);
  const Split split = split_dataset(d, c.seed);
  const TrainedPipeline p = train_pipeline(d, split.train, lex, c);
  save_components(p.components, c, out);
  write_text(out / "history.csv", history_csv(p.history));
  const EvalReport report = evaluate(p.components, d, split.test, c);
  write_text(out / "report.json", report.to_json() + "\n");
  std::printf("trained on %zu cases; held-out macro F1 %.4f (P %.4f, R %.4f)\n", split.train.size(),
              report.macro_f1, report.macro_precision, report.macro_recall);
  return 0;
}

int cmd_predict(const Options& o, const RunConfig& c) {
  const fs::path data_dir = require_dir(o.data, "--data");
  const fs::path model_dir = require_dir(o.model, "--model");
  if (o.text.empty()) throw UsageError("--text is required");
  const Dataset d = load_data(data_dir);
  const Components comp = load_components(model_dir, d, load_data_lexicon(data_dir), c);
  const Prediction p = predict_case(comp, o.text, c);
  if (o.format == "text") {
    std::cout << explanation_text(p.explanation, comp.verbalizer);
  } else {
    std::cout << explanation_json(p.explanation) << "\n";
  }
  return 0;
}

int cmd_eval(const Options& o, const RunConfig& c) {
  const fs::path data_dir = require_dir(o.data, "--data");
  const fs::path model_dir = require_dir(o.model, "--model");
  const Dataset d = load_data(data_dir);
  const Components comp = load_components(model_dir, d, load_data_lexicon(data_dir), c);
  const Split split = split_dataset(d, c.seed);
  const EvalReport report = evaluate(comp, d, split.test, c);
  if (!o.out.empty()) {
    write_text(fs::path(o.out) / "report.json", report.to_json() + "\n");
    std::string lines;
    for (auto i : split.test) {
      Explanation e = predict_case(comp, d.cases[i].text, c).explanation;
      e.case_id = d.cases[i].id;
      lines += explanation_json(e) + "\n";
    }
    write_text(fs::path(o.out) / "explanations.jsonl", lines);
  }
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_ablate(const Options& o, const RunConfig& c) {
  const fs::path data_dir = require_dir(o.data, "--data");
  const Dataset d = load_data(data_dir);
  const auto rows = run_ablation(d, split_dataset(d, c.seed), load_data_lexicon(data_dir), c);
  emit_csv(o, "ablation.csv", ablation_csv(rows));
  return 0;
}

int cmd_sweep_data(const Options& o, const RunConfig& c) {
  const fs::path data_dir = require_dir(o.data, "--data");
  const Dataset d = load_data(data_dir);
  const auto rows = data_fraction_sweep(d, split_dataset(d, c.seed), load_data_lexicon(data_dir), o.fractions, c);
  emit_csv(o, "fractions.csv", fraction_csv(rows));
  return 0;
}

int cmd_sweep_hparams(const Options& o, const RunConfig& c) {
  const fs::path data_dir = require_dir(o.data, "--data");
  const Dataset d = load_data(data_dir);
  const Split split = split_dataset(d, c.seed);
  const HyperGrid grid{o.grid_n, o.grid_len, o.grid_mask};
  const auto rows = hyperparam_sweep(grid, c, pipeline_evaluator(d, split, load_data_lexicon(data_dir)));
  emit_csv(o, "hparams.csv", hyper_csv(rows));
  return 0;
}

int cmd_gradcheck(const Options& o) {
  const auto results = gradcheck_all(o.seed);
  double worst = 0.0;
  std::printf("%-12s %-24s %8s %12s\n", "family", "parameter", "entries", "max rel err");
  for (const auto& r : results) {
    std::printf("%-12s %-24s %8zu %12.3e\n", r.family.c_str(), r.param.c_str(), r.entries, r.max_rel_error);
    worst = std::max(worst, r.max_rel_error);
  }
  std::printf("worst %.3e (threshold 1e-4)\n", worst);
  return worst < 1e-4 ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-injected prompt learning for legal charge prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  FlagOptions f;
  app.add_option("--config", o.config_path, "key = value run configuration file");
  f.seed = app.add_option("--seed", o.seed, "random seed");
  f.n_articles = app.add_option("--n-articles", o.n_articles, "retrieved articles per case");
  f.mask_count = app.add_option("--mask-count", o.mask_count, "mask tokens in the prompt");
  f.max_len = app.add_option("--max-len", o.max_len, "prompt length cap");
  app.add_flag("--no-snippets", o.no_snippets, "drop knowledge snippets from the prompt");
  app.add_flag("--no-facts", o.no_facts, "skip fact injection");
  app.add_flag("--no-contrastive", o.no_contrastive, "use the untrained retriever");
  f.llm_endpoint = app.add_option("--llm-endpoint", o.llm_endpoint, "http endpoint of a chat model (env LLM_ENDPOINT)");
  app.add_option("--out", o.out, "output directory");
  app.add_flag("-v,--verbose", o.verbose, "debug logging");
  app.add_flag("-q,--quiet", o.quiet, "errors only");

  auto* gen = app.add_subcommand("gen-data", "write a synthetic toy corpus and lexicon");
  gen->add_option("--charges", o.charges, "number of charges")->check(CLI::PositiveNumber);
  gen->add_option("--cases", o.cases, "cases per charge")->check(CLI::PositiveNumber);
  gen->add_option("--variant", o.variant, "default, snippet or fact");

  auto* train_retriever = app.add_subcommand("train-retriever", "train the case/article joint space");
  auto* train = app.add_subcommand("train", "train the full pipeline and save it");
  auto* predict = app.add_subcommand("predict", "predict the charge of one case");
  predict->add_option("--text", o.text, "case description");
  predict->add_option("--format", o.format, "json or text")->check(CLI::IsMember({"json", "text"}));
  auto* eval = app.add_subcommand("eval", "evaluate a saved model on the held-out split");
  auto* ablate = app.add_subcommand("ablate", "ablation table");
  auto* sweep_data = app.add_subcommand("sweep-data", "training-fraction sweep");
  sweep_data->add_option("--fractions", o.fractions, "fractions in (0, 1]")->delimiter(',');
  auto* sweep_hparams = app.add_subcommand("sweep-hparams", "grid over articles, length cap and masks");
  sweep_hparams->add_option("--grid-n-articles", o.grid_n, "retrieved article counts")->delimiter(',');
  sweep_hparams->add_option("--grid-max-len", o.grid_len, "length caps")->delimiter(',');
  sweep_hparams->add_option("--grid-mask-count", o.grid_mask, "mask counts")->delimiter(',');
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");

  for (auto* sub : {train_retriever, train, ablate, sweep_data, sweep_hparams}) {
    sub->add_option("--data", o.data, "dataset directory");
  }
  for (auto* sub : {predict, eval}) {
    sub->add_option("--data", o.data, "dataset directory");
    sub->add_option("--model", o.model, "model directory written by train");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  spdlog::set_level(o.quiet ? spdlog::level::err : o.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (gradcheck->parsed()) return cmd_gradcheck(o);
    const fs::path saved = o.model.empty() ? fs::path{} : fs::path(o.model) / "run.cfg";
    const RunConfig c = resolve_config(o, f, saved);
    if (train_retriever->parsed()) return cmd_train_retriever(o, c);
    if (train->parsed()) return cmd_train(o, c);
    if (predict->parsed()) return cmd_predict(o, c);
    if (eval->parsed()) return cmd_eval(o, c);
    if (ablate->parsed()) return cmd_ablate(o, c);
    if (sweep_data->parsed()) return cmd_sweep_data(o, c);
    if (sweep_hparams->parsed()) return cmd_sweep_hparams(o, c);
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const NumericError& e) {
    spdlog::error("numeric failure: {}", e.what());
    return kExitNumeric;
  } catch (const DataError& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitUsage;
}
