// Acceptance gate: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include "lexprompt/checkpoint.h"
#include "lexprompt/gradcheck.h"
#include "lexprompt/harness.h"
#include "lexprompt/toy_corpus.h"

#include "oracles.h"
#include "test_util.h"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace lexprompt {
namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double top1_accuracy(const SentenceEncoder& encoder, const Vocab& vocab, const ArticleIndex& index,
                     const Dataset& data, std::span<const std::size_t> cases) {
  int hits = 0;
  for (auto i : cases) {
    const auto top = retrieve_top_n(encoder, vocab, data.cases[i].text, index, 1, JointSpaceConfig{}.max_len);
    const auto& rel = data.cases[i].articles;
    hits += !top.empty() && std::find(rel.begin(), rel.end(), top[0].id) != rel.end();
  }
  return static_cast<double>(hits) / static_cast<double>(cases.size());
}

struct ToyRun {
  Dataset data;
  Lexicon lexicon;
  Split split;
};

ToyRun make_run(const ToyCorpusSpec& spec, std::uint64_t seed) {
  ToyRun r;
  r.data = generate_toy_corpus(spec, seed);
  r.lexicon = Lexicon(toy_lexicon_terms(spec));
  r.split = split_dataset(r.data, seed);
  return r;
}

double train_and_score(const ToyRun& run, const RunConfig& config) {
  const TrainedPipeline p = train_pipeline(run.data, run.split.train, run.lexicon, config);
  return evaluate(p.components, run.data, run.split.test, config).macro_f1;
}

Outcome contrastive_closed_form() {
  double worst = 0.0;
  for (int c : {1, 3, 10}) {
    for (double tau : {0.05, 0.1, 1.0}) {
      const std::vector<double> sims(static_cast<std::size_t>(c), 0.42);
      worst = std::max(worst, std::abs(contrastive_loss(sims, sims, tau) - std::log(2.0)));
    }
  }
  return {worst < 1e-9, "max |loss - ln 2| = " + fmt("%.2e", worst)};
}

Outcome gradient_suites() {
  const auto results = gradcheck_all(1);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& r : results) {
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = r.family + "/" + r.param;
    }
  }
  return {worst < 1e-4, std::to_string(results.size()) + " parameters, worst " + fmt("%.2e", worst) + " at " +
                            worst_name};
}

Outcome retrieval_quality() {
  const ToyRun run = make_run(default_toy_spec(3, 30), 1);
  const Dataset train = run.data.subset(run.split.train);
  RunConfig config;
  const Vocab vocab = build_pipeline_vocab(train, run.lexicon, config);
  double acc[2] = {0.0, 0.0};
  for (int untrained = 0; untrained < 2; ++untrained) {
    config.no_contrastive = untrained == 1;
    const SentenceEncoder enc = build_retriever(train, vocab, config);
    const ArticleIndex index = build_article_index(enc, vocab, run.data.articles, JointSpaceConfig{}.max_len);
    acc[untrained] = top1_accuracy(enc, vocab, index, run.data, run.split.test);
  }
  return {acc[0] >= 0.95 && acc[1] <= 0.6,
          "top-1 trained " + fmt("%.3f", acc[0]) + ", untrained " + fmt("%.3f", acc[1])};
}

Outcome end_to_end() {
  const ToyRun run = make_run(default_toy_spec(5, 40), 1);
  const double f1 = train_and_score(run, RunConfig{});
  return {f1 >= 0.90, "macro F1 " + fmt("%.4f", f1)};
}

Outcome ablation_direction() {
  RunConfig config;
  config.max_case_len = 64;
  const ToyRun snip = make_run(snippet_adversarial_spec(5, 40), 1);
  const double full_s = train_and_score(snip, config);
  RunConfig no_snippets = config;
  no_snippets.no_snippets = true;
  const double ablated_s = train_and_score(snip, no_snippets);

  const ToyRun fact = make_run(fact_separable_spec(5, 40), 1);
  const double full_f = train_and_score(fact, config);
  RunConfig no_facts = config;
  no_facts.no_facts = true;
  const double ablated_f = train_and_score(fact, no_facts);

  return {full_s - ablated_s >= 0.05 && full_f - ablated_f >= 0.02,
          "snippets " + fmt("%.4f", full_s) + " vs " + fmt("%.4f", ablated_s) + ", facts " + fmt("%.4f", full_f) +
              " vs " + fmt("%.4f", ablated_f)};
}

Outcome oracle_equivalences() {
  Rng rng(2024);
  int matcher_bad = 0, label_bad = 0, retrieval_bad = 0;

  const std::vector<std::string> alphabet{"盗", "窃", "抢", "劫", "a", "b"};
  for (int t = 0; t < 1000; ++t) {
    std::string text;
    for (std::size_t i = 0, n = rng.below(40); i < n; ++i) text += alphabet[rng.below(alphabet.size())];
    std::vector<std::string> terms;
    for (std::size_t k = 0, n = rng.below(10); k < n; ++k) {
      std::string term;
      for (std::size_t i = 0, len = 1 + rng.below(4); i < len; ++i) term += alphabet[rng.below(alphabet.size())];
      terms.push_back(term);
    }
    const auto got = match_snippets(Lexicon(terms), text);
    matcher_bad += testing::canonical(got) != testing::naive_scan(terms, text) || testing::canonical(got) != got;
  }

  const Verbalizer labels({{0, "故意伤害"}, {1, "盗窃"}, {2, "抢劫"}, {3, "诈骗"}, {4, "强奸"}, {5, "故意杀人"}});
  std::vector<std::string> pool{"x", "的", "人"};
  for (const auto& text : labels.texts()) {
    for (const auto& c : char_set(text)) pool.push_back(c);
  }
  for (int t = 0; t < 1000; ++t) {
    PredictionTokens p;
    for (std::size_t i = 0, n = rng.below(20); i < n; ++i) p.chars.insert(pool[rng.below(pool.size())]);
    const LabelMapping m = map_to_label(p, labels);
    const testing::ScanResult want = testing::exhaustive_label_scan(p.chars, labels);
    label_bad += m.label != want.label || m.score != want.score;
  }

  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + rng.below(30);
    const int dim = 1 + static_cast<int>(rng.below(8));
    ArticleIndex index;
    index.vectors = Mat(static_cast<Eigen::Index>(n), dim);
    for (Eigen::Index i = 0; i < index.vectors.size(); ++i) {
      index.vectors.data()[i] = static_cast<double>(static_cast<int>(rng.below(7)) - 3) * 0.5;
    }
    for (std::size_t i = 0; i < n; ++i) index.ids.push_back(static_cast<int>(1000 - 7 * i));
    Vec q(dim);
    for (int k = 0; k < dim; ++k) q(k) = static_cast<double>(static_cast<int>(rng.below(5)) - 2);
    const int top = static_cast<int>(rng.below(n + 2));
    retrieval_bad += retrieve_top_n(q, index, top) != testing::brute_force_top_n(q, index, top);
  }
  return {matcher_bad == 0 && label_bad == 0 && retrieval_bad == 0,
          "mismatches: matcher " + std::to_string(matcher_bad) + "/1000, label map " + std::to_string(label_bad) +
              "/1000, retrieval " + std::to_string(retrieval_bad) + "/200"};
}

Outcome structural_identities() {
  Rng rng(77);
  int length_bad = 0, inject_bad = 0, zero_bad = 0;
  auto ids = [&](std::size_t n) {
    std::vector<TokenId> v(n);
    for (auto& x : v) x = static_cast<TokenId>(Vocab::kFirstFree + rng.below(37));
    return v;
  };
  for (int t = 0; t < 1000; ++t) {
    ModelDims dims;
    dims.vocab_size = 40;
    dims.d_model = 2 * (1 + static_cast<int>(rng.below(8)));
    dims.layers = 1;
    dims.heads = 1;
    dims.ff = 8;
    dims.max_len = 128;
    const PromptModel model(dims, rng.next());

    const std::size_t nt1 = rng.below(6), nx = rng.below(80), nt2 = rng.below(6), nk = rng.below(12);
    const int m = 1 + static_cast<int>(rng.below(20));
    const std::size_t fixed = 2 + nt1 + static_cast<std::size_t>(m) + nt2 + nk;
    const std::size_t cap = fixed + rng.below(128 - fixed + 1);
    const PromptLayout l = assemble_prompt(ids(nx), ids(nk), ids(nt1), ids(nt2), m, cap);
    length_bad += l.size() != fixed + l.case_len || l.case_len != std::min(nx, cap - fixed) ||
                  l.soft_positions[0] != 0 || l.soft_positions[1] != l.size() - 1;

    const Mat e = embed(l, model.encoder, model.soft_prompts.value);
    Vec u(dims.d_model);
    for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = rng.uniform(-1, 1) + (i == 0 ? 2.0 : 0.0);
    const Mat ep = inject_facts(e, l, u);
    int changed = 0;
    for (Eigen::Index i = 0; i < e.rows(); ++i) changed += ep.row(i) != e.row(i);
    const double delta = (ep.row(0).transpose() - e.row(0).transpose() - u).cwiseAbs().maxCoeff();
    inject_bad += changed != 2 || delta > 1e-12;
    zero_bad += inject_facts(e, l, Vec::Zero(dims.d_model)) != e;
  }
  return {length_bad == 0 && inject_bad == 0 && zero_bad == 0,
          "violations: length " + std::to_string(length_bad) + "/1000, inject " + std::to_string(inject_bad) +
              "/1000, zero u " + std::to_string(zero_bad) + "/1000"};
}

Outcome determinism() {
  const ToyRun run = make_run(default_toy_spec(3, 30), 3);
  const RunConfig config;
  testing::TempDir dir;
  EvalReport reports[2];
  for (int k = 0; k < 2; ++k) {
    const TrainedPipeline p = train_pipeline(run.data, run.split.train, run.lexicon, config);
    save_components(p.components, config, dir / ("run" + std::to_string(k)));
    reports[k] = evaluate(p.components, run.data, run.split.test, config);
  }
  bool same_files = true;
  for (const char* f : {"model.ckpt", "retriever.ckpt", "vocab.json", "run.cfg"}) {
    same_files = same_files && read_bytes(dir / "run0" / f) == read_bytes(dir / "run1" / f) &&
                 !read_bytes(dir / "run0" / f).empty();
  }
  return {same_files && reports[0] == reports[1],
          std::string("checkpoints ") + (same_files ? "identical" : "differ") + ", reports " +
              (reports[0] == reports[1] ? "identical" : "differ") + " (macro F1 " +
              fmt("%.4f", reports[0].macro_f1) + ")"};
}

Outcome data_fraction() {
  const ToyRun run = make_run(default_toy_spec(5, 40), 1);
  const std::vector<double> fractions{0.1, 0.25, 0.5, 1.0};
  const auto rows = data_fraction_sweep(run.data, run.split, run.lexicon, fractions, RunConfig{});
  std::string detail;
  for (const auto& r : rows) detail += (detail.empty() ? "" : ", ") + fmt("%.2f", r.fraction) + ":" + fmt("%.3f", r.macro_f1);
  return {rows.size() == 4 && rows.back().macro_f1 >= rows.front().macro_f1, "F1 by fraction " + detail};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace lexprompt

int main() {
  using namespace lexprompt;
  spdlog::set_level(spdlog::level::err);
  const std::vector<Criterion> criteria{
      {1, "contrastive loss equals ln 2 for equal similarities", 1.0, contrastive_closed_form},
      {2, "finite-difference gradient checks", 60.0, gradient_suites},
      {3, "retrieval quality trained vs untrained", 120.0, retrieval_quality},
      {4, "end-to-end toy task macro F1 >= 0.90", 600.0, end_to_end},
      {5, "ablation direction for snippets and facts", 1200.0, ablation_direction},
      {6, "oracle equivalences", 60.0, oracle_equivalences},
      {7, "structural identities", 60.0, structural_identities},
      {8, "training determinism", 1200.0, determinism},
      {9, "data-fraction sweep trend", 1200.0, data_fraction},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_seconds) {
      o.pass = false;
      o.detail += "; over time budget";
    }
    failures += !o.pass;
    std::printf("[%s] %d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
