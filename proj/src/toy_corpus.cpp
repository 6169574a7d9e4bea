#include "lexprompt/toy_corpus.h"

#include "lexprompt/utf8.h"

#include <algorithm>
#include <set>

namespace lexprompt {

namespace {

// Label, cue and element characters are pairwise disjoint across entries.
const std::vector<ToyCharge> kChargePool = {
    {"盗窃", {"扒窃", "窃得"}, {"财物"}},
    {"诈骗", {"虚构", "骗取"}, {"钱款"}},
    {"抢劫", {"持刀", "抢走"}, {"现场"}},
    {"故意伤害", {"殴打", "轻伤"}, {"医院"}},
    {"强奸", {"暴力", "威胁"}, {"宾馆"}},
    {"贩卖毒品", {"海洛因", "毒资"}, {"贩运"}},
    {"交通肇事", {"驾驶", "撞倒"}, {"路口"}},
    {"受贿", {"收受", "贿赂"}, {"职务"}},
};

const char* kFillerPool =
    "的一是在了人这们中来上大为和国地我时要就出会可也你对生能而子那下天过经"
    "后多然于心学么之都好看起发当没成只如事把还用第样道想作种开美总从无情己面"
    "最女但现前些所同日手又行意动方期它头进此话常间很";

const char* kStatuteAlphabet = "条款规定处年以有徒刑拘役或者管制并罚金";

const std::vector<std::string> kBoilerplate = {"被告人", "本院", "查明"};

std::set<char32_t> used_chars(const std::vector<ToyCharge>& charges, std::string_view statute,
                              const std::vector<std::string>& boilerplate) {
  std::set<char32_t> used;
  auto add = [&](std::string_view s) {
    for (char32_t cp : utf8::decode(s)) used.insert(cp);
  };
  for (const auto& c : charges) {
    add(c.label);
    for (const auto& w : c.cues) add(w);
    for (const auto& w : c.element_words) add(w);
  }
  add(statute);
  for (const auto& w : boilerplate) add(w);
  return used;
}

// Synthetic entries beyond the fixed pool, built from unused CJK code points.
ToyCharge synthetic_charge(char32_t& next, const std::set<char32_t>& avoid) {
  auto take = [&](int n) {
    std::u32string s;
    while (static_cast<int>(s.size()) < n) {
      if (!avoid.contains(next)) s.push_back(next);
      ++next;
    }
    return utf8::encode(s);
  };
  ToyCharge c;
  c.label = take(2);
  c.cues = {take(2), take(2)};
  c.element_words = {take(2)};
  return c;
}

ToyCorpusSpec base_spec(int num_charges, int cases_per_charge) {
  ToyCorpusSpec spec;
  spec.cases_per_charge = cases_per_charge;
  spec.statute_alphabet = kStatuteAlphabet;
  spec.boilerplate_words = kBoilerplate;

  std::set<char32_t> avoid = used_chars(kChargePool, kStatuteAlphabet, kBoilerplate);
  for (char32_t cp : utf8::decode(kFillerPool)) avoid.insert(cp);
  char32_t next = 0x5F00;
  for (int i = 0; i < num_charges; ++i) {
    if (i < static_cast<int>(kChargePool.size())) {
      spec.charges.push_back(kChargePool[static_cast<std::size_t>(i)]);
    } else {
      spec.charges.push_back(synthetic_charge(next, avoid));
    }
  }

  const auto reserved = used_chars(spec.charges, spec.statute_alphabet, spec.boilerplate_words);
  std::u32string filler;
  for (char32_t cp : utf8::decode(kFillerPool)) {
    if (!reserved.contains(cp) && filler.find(cp) == std::u32string::npos) filler.push_back(cp);
  }
  spec.filler_alphabet = utf8::encode(filler);
  return spec;
}

}  // namespace

ToyCorpusSpec default_toy_spec(int num_charges, int cases_per_charge) {
  return base_spec(num_charges, cases_per_charge);
}

ToyCorpusSpec snippet_adversarial_spec(int num_charges, int cases_per_charge) {
  ToyCorpusSpec spec = base_spec(num_charges, cases_per_charge);
  spec.boilerplate_sentences = 6;
  spec.filler_sentences = 2;
  spec.tail_charges = {0, 1};
  return spec;
}

ToyCorpusSpec fact_separable_spec(int num_charges, int cases_per_charge) {
  ToyCorpusSpec spec = base_spec(num_charges, cases_per_charge);
  if (spec.charges.size() >= 2) spec.charges[1].cues = spec.charges[0].cues;
  spec.filler_sentences = 8;
  spec.tail_charges = {0, 1};
  return spec;
}

std::vector<std::string> toy_lexicon_terms(const ToyCorpusSpec& spec) {
  std::vector<std::string> terms;
  for (const auto& c : spec.charges) {
    for (const auto& cue : c.cues) {
      if (std::find(terms.begin(), terms.end(), cue) == terms.end()) terms.push_back(cue);
    }
  }
  return terms;
}

Dataset generate_toy_corpus(const ToyCorpusSpec& spec, std::uint64_t seed) {
  if (spec.charges.empty()) throw UsageError("toy corpus spec needs at least one charge");
  const std::u32string filler = utf8::decode(spec.filler_alphabet);
  const std::u32string statute = utf8::decode(spec.statute_alphabet);
  if (filler.empty()) throw UsageError("toy corpus spec needs a non-empty filler alphabet");

  Rng rng(seed);
  auto draw = [&](const std::u32string& alphabet, int n) {
    std::u32string s;
    for (int i = 0; i < n && !alphabet.empty(); ++i) s.push_back(alphabet[rng.below(alphabet.size())]);
    return utf8::encode(s);
  };

  Dataset ds;
  std::vector<std::pair<int, std::string>> labels;
  for (std::size_t c = 0; c < spec.charges.size(); ++c) {
    const auto& charge = spec.charges[c];
    labels.emplace_back(static_cast<int>(c), charge.label);

    std::string text = draw(statute, 4);
    for (const auto& w : spec.boilerplate_words) text += w;
    for (const auto& cue : charge.cues) text += cue + draw(statute, 2);
    for (const auto& w : charge.element_words) text += w + draw(statute, 2);
    text += "。";
    ds.articles.push_back({static_cast<int>(c) + 1, std::move(text)});
  }
  ds.verbalizer = Verbalizer(std::move(labels));

  const int len = std::max(2, spec.sentence_length);
  for (int k = 0; k < spec.cases_per_charge; ++k) {
    for (std::size_t c = 0; c < spec.charges.size(); ++c) {
      const auto& charge = spec.charges[c];
      const bool tail = std::find(spec.tail_charges.begin(), spec.tail_charges.end(),
                                  static_cast<int>(c)) != spec.tail_charges.end();

      std::vector<std::string> cues;
      for (const auto& cue : charge.cues) {
        if (!rng.bernoulli(spec.noise_rate)) cues.push_back(cue);
      }
      if (cues.empty() && !charge.cues.empty()) cues.push_back(charge.cues[rng.below(charge.cues.size())]);

      std::string cue_sentence = draw(filler, len / 4);
      for (const auto& cue : cues) cue_sentence += cue + draw(filler, 1 + len / 4);
      for (const auto& w : charge.element_words) cue_sentence += w + draw(filler, 1);
      cue_sentence += "。";

      std::vector<std::string> lead;
      for (int b = 0; b < spec.boilerplate_sentences && !spec.boilerplate_words.empty(); ++b) {
        const auto& word = spec.boilerplate_words[rng.below(spec.boilerplate_words.size())];
        lead.push_back(draw(filler, len / 2) + word + draw(filler, len - len / 2) + "。");
      }
      std::vector<std::string> rest;
      for (int f = 0; f < spec.filler_sentences; ++f) rest.push_back(draw(filler, len) + "。");

      if (tail) {
        rest.push_back(std::move(cue_sentence));
      } else if (!lead.empty()) {
        lead.insert(lead.begin(), std::move(cue_sentence));
      } else {
        const std::size_t at = rng.below(rest.size() + 1);
        rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(at), std::move(cue_sentence));
      }

      Case cs;
      cs.id = "toy-" + std::to_string(c) + "-" + std::to_string(k);
      for (const auto& s : lead) cs.text += s;
      for (const auto& s : rest) cs.text += s;
      cs.charge = static_cast<int>(c);
      cs.articles = {static_cast<int>(c) + 1};
      ds.cases.push_back(std::move(cs));
    }
  }
  ds.validate();
  return ds;
}

}  // namespace lexprompt
