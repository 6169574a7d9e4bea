#include "lexprompt/knowledge_matcher.h"
#include "lexprompt/utf8.h"

#include "oracles.h"
#include "test_util.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <set>

namespace lexprompt {
namespace {

using testing::TempDir;
using testing::write_file;

TEST(LoadLexicon, FrequencyColumnIgnored) {
  TempDir dir;
  write_file(dir / "lex.txt", "暴力\t1200\n威胁\n");
  const Lexicon lex = load_lexicon(dir / "lex.txt");
  EXPECT_EQ(lex.terms(), (std::vector<std::string>{"暴力", "威胁"}));
}

TEST(LoadLexicon, DuplicatesCollapse) {
  TempDir dir;
  write_file(dir / "lex.txt", "殴打\n殴打\n");
  EXPECT_EQ(load_lexicon(dir / "lex.txt").size(), 1u);
}

TEST(LoadLexicon, BlankAndEmptyFilesGiveEmptyLexicon) {
  TempDir dir;
  write_file(dir / "blank.txt", "\n  \n\n");
  write_file(dir / "empty.txt", "");
  EXPECT_TRUE(load_lexicon(dir / "blank.txt").empty());
  EXPECT_TRUE(load_lexicon(dir / "empty.txt").empty());
}

TEST(LoadLexicon, MissingFileThrows) {
  TempDir dir;
  EXPECT_THROW(load_lexicon(dir / "none.txt"), DataError);
}

TEST(MatchSnippets, RapeCaseFixture) {
  const Lexicon lex({"暴力", "威胁", "盗窃"});
  const std::string text = "被告人采用暴力手段，并以威胁方式强行与被害人发生性关系。";
  const auto m = match_snippets(lex, text);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0], (SnippetMatch{"暴力", 5}));
  EXPECT_EQ(m[1], (SnippetMatch{"威胁", 12}));
}

TEST(MatchSnippets, EmptyTextAndEmptyLexicon) {
  EXPECT_TRUE(match_snippets(Lexicon({"a"}), "").empty());
  EXPECT_TRUE(match_snippets(Lexicon(), "abc").empty());
}

TEST(MatchSnippets, OverlapsReportedLongerFirst) {
  const Lexicon lex({"ab", "abc", "bc", "c"});
  const auto m = match_snippets(lex, "xabcab");
  EXPECT_EQ(m, (std::vector<SnippetMatch>{{"abc", 1}, {"ab", 1}, {"bc", 2}, {"c", 3}}));
}

TEST(MatchSnippets, EachTermReportedOnce) {
  const auto m = match_snippets(Lexicon({"aa"}), "aaaa");
  EXPECT_EQ(m, (std::vector<SnippetMatch>{{"aa", 0}}));
}

TEST(MatchSnippets, AgreesWithNaiveScan) {
  const std::vector<std::string> alphabet{"甲", "乙", "丙", "a", "b"};
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    std::string text;
    const std::size_t n = rng.below(30);
    for (std::size_t i = 0; i < n; ++i) text += alphabet[rng.below(alphabet.size())];
    std::vector<std::string> terms;
    const std::size_t n_terms = rng.below(8);
    for (std::size_t k = 0; k < n_terms; ++k) {
      std::string term;
      const std::size_t len = 1 + rng.below(4);
      for (std::size_t i = 0; i < len; ++i) term += alphabet[rng.below(alphabet.size())];
      terms.push_back(term);
    }
    const auto got = match_snippets(Lexicon(terms), text);
    EXPECT_EQ(testing::canonical(got), testing::naive_scan(terms, text)) << text;
    EXPECT_EQ(testing::canonical(got), got) << text;
  }
}

TEST(MatchSnippets, ReportedTermsOccurAtOffset) {
  const std::vector<std::string> alphabet{"盗", "窃", "抢", "劫", "x"};
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    for (std::size_t i = 0, n = rng.below(40); i < n; ++i) text += alphabet[rng.below(alphabet.size())];
    const Lexicon lex({"盗窃", "抢劫", "窃", "xx", "劫x盗"});
    const std::u32string t = utf8::decode(text);
    std::set<std::string> seen;
    for (const auto& m : match_snippets(lex, text)) {
      const std::u32string k = utf8::decode(m.term);
      EXPECT_EQ(t.compare(m.first_offset, k.size(), k), 0);
      EXPECT_NE(std::find(lex.terms().begin(), lex.terms().end(), m.term), lex.terms().end());
      EXPECT_TRUE(seen.insert(m.term).second);
    }
  }
}

Vocab snippet_vocab() {
  Dataset d;
  d.verbalizer = Verbalizer({{0, "暴力威胁,abc"}});
  return build_vocab(d, 1);
}

TEST(SnippetsToTokens, JoinsWithSeparator) {
  const Vocab v = snippet_vocab();
  const std::vector<SnippetMatch> m{{"暴力", 0}, {"威胁", 4}};
  EXPECT_EQ(snippets_to_tokens(m, v, ","), tokenize(v, "暴力,威胁"));
  EXPECT_TRUE(snippets_to_tokens({}, v).empty());
}

TEST(SnippetsToTokens, ThreeSingleCharTermsGiveFiveTokens) {
  const Vocab v = snippet_vocab();
  const std::vector<SnippetMatch> m{{"a", 0}, {"b", 1}, {"c", 2}};
  const auto ids = snippets_to_tokens(m, v, ",");
  ASSERT_EQ(ids.size(), 5u);
  EXPECT_EQ(ids[1], v.id(","));
  EXPECT_EQ(ids[3], v.id(","));
}

}  // namespace
}  // namespace lexprompt
