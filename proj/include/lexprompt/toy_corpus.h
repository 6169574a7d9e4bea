#pragma once

#include "lexprompt/corpus.h"

#include <cstdint>
#include <string>
#include <vector>

namespace lexprompt {

struct ToyCharge {
  std::string label;
  std::vector<std::string> cues;           // lexicon terms; go into the case and the article
  std::vector<std::string> element_words;  // article-only vocabulary, not in the lexicon
};

// Recipe for a synthetic charge corpus. Every case is a run of sentences
// ending in "。": filler sentences, optional boilerplate sentences, and one
// cue sentence carrying the charge's cues (and element words, if any). The
// cue sentence is last for tail charges, first when boilerplate is present,
// and at a random position among the fillers otherwise.
struct ToyCorpusSpec {
  std::vector<ToyCharge> charges;
  int cases_per_charge = 30;
  std::string filler_alphabet;
  std::string statute_alphabet;               // padding characters for article texts
  std::vector<std::string> boilerplate_words;  // present in every article
  int filler_sentences = 3;
  int boilerplate_sentences = 0;
  int sentence_length = 8;  // filler characters per sentence
  // Probability of dropping each cue from a case (at least one cue is kept).
  double noise_rate = 0.0;
  // Charges whose cue sentence is always the final sentence.
  std::vector<int> tail_charges;
};

// C charges drawn from a fixed pool of label/cue/element triples with
// pairwise-disjoint characters.
ToyCorpusSpec default_toy_spec(int num_charges, int cases_per_charge);

// Charges 0 and 1 put their cues in the final sentence behind boilerplate
// sentences, so a short truncation length hides the cues from the case
// segment and the fact list fills up with boilerplate before reaching them.
// The other charges open with their cue sentence.
ToyCorpusSpec snippet_adversarial_spec(int num_charges, int cases_per_charge);

// Charges 0 and 1 share their cue words and differ only in element words
// that sit in the final sentence.
ToyCorpusSpec fact_separable_spec(int num_charges, int cases_per_charge);

// Throws UsageError when the spec has no charges.
Dataset generate_toy_corpus(const ToyCorpusSpec& spec, std::uint64_t seed);

// Distinct cue terms across all charges, in charge order.
std::vector<std::string> toy_lexicon_terms(const ToyCorpusSpec& spec);

}  // namespace lexprompt
