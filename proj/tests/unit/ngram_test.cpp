#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "lmkit/arpa.hpp"
#include "lmkit/evaluate.hpp"
#include "lmkit/mkn.hpp"
#include "oracle/mkn_oracle.hpp"
#include "oracle/random_fixtures.hpp"

namespace lmkit {
namespace {

class QuietTest : public ::testing::Test {
 protected:
  ScopedWarningSink quiet_{[](const std::string&) {}};
};

NGram ids(const Vocabulary& v, std::initializer_list<const char*> words) {
  NGram g;
  for (const char* w : words) g.push_back(v.id(w));
  return g;
}

Vocabulary vocab_ab() { return Vocabulary(std::vector<std::string>{"<s>", "</s>", "<unk>", "a", "b"}); }

using CountTest = QuietTest;

TEST_F(CountTest, BigramsOfSingleSentence) {
  Vocabulary v = vocab_ab();
  auto t = count_ngrams(corpus_from_text("t", "a b a"), 2, v);
  EXPECT_EQ(t.counts[1].size(), 4u);
  EXPECT_EQ(t.count(ids(v, {"<s>", "a"})), 1);
  EXPECT_EQ(t.count(ids(v, {"a", "b"})), 1);
  EXPECT_EQ(t.count(ids(v, {"b", "a"})), 1);
  EXPECT_EQ(t.count(ids(v, {"a", "</s>"})), 1);
  EXPECT_EQ(t.counts[0].size(), 3u);
  EXPECT_EQ(t.count(ids(v, {"a"})), 2);
  EXPECT_EQ(t.count(ids(v, {"b"})), 1);
  EXPECT_EQ(t.count(ids(v, {"</s>"})), 1);
  EXPECT_EQ(t.count(ids(v, {"<s>"})), 0);
  EXPECT_EQ(t.continuation_count(ids(v, {"a"})), 2);
}

TEST_F(CountTest, CountFileFormat) {
  auto t = count_ngrams(corpus_from_text("t", "a b a"), 2, vocab_ab());
  EXPECT_EQ(format_counts(t),
            "1\t</s>\t1\t1\n1\ta\t2\t2\n1\tb\t1\t1\n"
            "2\t<s> a\t1\t-\n2\ta </s>\t1\t-\n2\ta b\t1\t-\n2\tb a\t1\t-\n");
}

TEST_F(CountTest, UnigramOrder) {
  Vocabulary v = vocab_ab();
  auto t = count_ngrams(corpus_from_text("t", "a"), 1, v);
  EXPECT_EQ(t.counts[0].size(), 2u);
  EXPECT_EQ(t.count(ids(v, {"a"})), 1);
  EXPECT_EQ(t.count(ids(v, {"</s>"})), 1);
}

TEST_F(CountTest, UnknownWordsMapToUnk) {
  Vocabulary v = vocab_ab();
  auto t = count_ngrams(corpus_from_text("t", "a c"), 2, v);
  EXPECT_EQ(t.count(ids(v, {"a", "<unk>"})), 1);
}

TEST_F(CountTest, Preconditions) {
  Vocabulary v = vocab_ab();
  EXPECT_THROW(count_ngrams(Corpus("empty"), 2, v), Error);
  EXPECT_THROW(count_ngrams(corpus_from_text("t", "a"), 0, v), Error);
}

TEST_F(CountTest, MergeEqualsCountingTheUnion) {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    Corpus a = fixtures::random_corpus(rng, 10, 8);
    Corpus b = fixtures::random_corpus(rng, 10, 8);
    Corpus both("both");
    for (const auto& s : a.sentences()) both.add_sentence(s);
    for (const auto& s : b.sentences()) both.add_sentence(s);
    Vocabulary v = build_vocabulary(both);
    auto merged = merge_counts(count_ngrams(a, 3, v), count_ngrams(b, 3, v));
    auto direct = count_ngrams(both, 3, v);
    EXPECT_EQ(merged.counts, direct.counts);
    EXPECT_EQ(merged.continuation, direct.continuation);
  }
}

TEST(Discounts, ClosedFormFromCountOfCounts) {
  // Y = 2/(2+2) = 1/2; D1 = 1 - 2(1/2)(1/2) = 1/2; D2 = 2 - 3(1/2)(1/1) = 1/2;
  // D3+ = 3 - 4(1/2)(1/1) = 1.
  DiscountTriple d = discounts_from_count_of_counts({2, 1, 1, 1});
  EXPECT_FALSE(d.fallback);
  EXPECT_DOUBLE_EQ(d.d1, 0.5);
  EXPECT_DOUBLE_EQ(d.d2, 0.5);
  EXPECT_DOUBLE_EQ(d.d3plus, 1.0);
}

TEST(Discounts, RealisticCountOfCounts) {
  // n = (100, 40, 20, 10): Y = 100/180 = 5/9.
  DiscountTriple d = discounts_from_count_of_counts({100, 40, 20, 10});
  EXPECT_NEAR(d.d1, 1.0 - 2.0 * (5.0 / 9.0) * 40.0 / 100.0, 1e-15);
  EXPECT_NEAR(d.d2, 2.0 - 3.0 * (5.0 / 9.0) * 20.0 / 40.0, 1e-15);
  EXPECT_NEAR(d.d3plus, 3.0 - 4.0 * (5.0 / 9.0) * 10.0 / 20.0, 1e-15);
}

TEST(Discounts, ClipsToRange) {
  // D2 = 2 - 3 (1/3)(50/1) < 0 clips to 0.
  DiscountTriple d = discounts_from_count_of_counts({1, 1, 50, 1});
  EXPECT_GE(d.d2, 0.0);
  EXPECT_EQ(d.d2, 0.0);
  EXPECT_LE(d.d1, 1.0);
  EXPECT_LE(d.d3plus, 3.0);
}

TEST(Discounts, FallbackWhenAnyCountOfCountsIsZero) {
  for (auto n : {std::array<std::int64_t, 4>{3, 0, 1, 1}, std::array<std::int64_t, 4>{0, 0, 0, 0}}) {
    DiscountTriple d = discounts_from_count_of_counts(n);
    EXPECT_TRUE(d.fallback);
    EXPECT_EQ(d.d1, 0.5);
    EXPECT_EQ(d.d2, 0.5);
    EXPECT_EQ(d.d3plus, 0.5);
  }
}

TEST(Discounts, FallbackEmitsWarning) {
  std::vector<std::string> warnings;
  ScopedWarningSink sink([&](const std::string& m) { warnings.push_back(m); });
  Vocabulary v = vocab_ab();
  // Every n-gram occurs at least 5 times: n1..n4 are all zero.
  std::string text;
  for (int i = 0; i < 5; ++i) text += "a b\n";
  auto d = estimate_discounts(count_ngrams(corpus_from_text("t", text), 2, v));
  EXPECT_TRUE(d.at(2).fallback);
  EXPECT_EQ(d.at(2).d1, 0.5);
  EXPECT_FALSE(warnings.empty());
}

using MknTest = QuietTest;

// Hand evaluation for "a b a", order 2, vocabulary {a, b}; predictable
// words {a, b, </s>, <unk>}. Both orders take the 0.5 fallback.
//   unigram adjusted counts a=2 (<s>,b), b=1, </s>=1; total 4; gamma = 1.5/4
//   p(a) = 1.5/4 + 0.375/4 = 0.46875, p(b) = p(</s>) = 0.21875, p(<unk>) = 0.09375
//   p(a|<s>) = 0.5 + 0.5 * 0.46875 = 0.734375
//   p(b|a) = p(</s>|a) = 0.25 + 0.5 * 0.21875 = 0.359375
//   p(a|b) = 0.734375
TEST_F(MknTest, HandEvaluatedBigramModel) {
  Vocabulary v = vocab_ab();
  BackoffLM lm = train_lm(corpus_from_text("t", "a b a"), 2, v);
  auto p = [&](const char* w, std::vector<std::string> h) { return std::pow(10.0, lm.prob(w, h)); };
  EXPECT_NEAR(p("a", {}), 0.46875, 1e-12);
  EXPECT_NEAR(p("b", {}), 0.21875, 1e-12);
  EXPECT_NEAR(p("</s>", {}), 0.21875, 1e-12);
  EXPECT_NEAR(p("<unk>", {}), 0.09375, 1e-12);
  EXPECT_NEAR(p("a", {"<s>"}), 0.734375, 1e-12);
  EXPECT_NEAR(p("b", {"a"}), 0.359375, 1e-12);
  EXPECT_NEAR(p("</s>", {"a"}), 0.359375, 1e-12);
  EXPECT_NEAR(p("a", {"b"}), 0.734375, 1e-12);
  // Unseen bigram: gamma(a) * p(a) = 0.5 * 0.46875.
  EXPECT_NEAR(p("a", {"a"}), 0.234375, 1e-12);
  EXPECT_LT(max_normalization_error(lm), 1e-12);
}

TEST_F(MknTest, MatchesOracleOnSmallCorpus) {
  Vocabulary v = vocab_ab();
  Corpus c = corpus_from_text("t", "a b a");
  BackoffLM lm = train_lm(c, 2, v);
  oracle::BruteForceMkn oracle(c.sentences(), 2, fixtures::predictable(v));
  for (int k = 1; k <= 2; ++k) {
    for (const auto& [g, e] : lm.grams(k)) {
      if (g.back() == v.bos()) continue;
      std::vector<std::string> h;
      for (std::size_t i = 0; i + 1 < g.size(); ++i) h.push_back(v.word(g[i]));
      EXPECT_NEAR(e.log_prob, std::log10(oracle.prob(v.word(g.back()), h)), 1e-9);
    }
  }
}

TEST_F(MknTest, SingleSentenceUnigramNormalizes) {
  Vocabulary v = vocab_ab();
  BackoffLM lm = train_lm(corpus_from_text("t", "a"), 1, Vocabulary(std::vector<std::string>{"a"}));
  double total = 0.0;
  for (const char* w : {"a", "</s>", "<unk>"}) total += std::pow(10.0, lm.prob(w, {}));
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST_F(MknTest, SymmetricCorpusGivesEqualSiblingProbabilities) {
  Vocabulary v = vocab_ab();
  BackoffLM lm = train_lm(corpus_from_text("t", "a b\nb a"), 2, v);
  EXPECT_NEAR(lm.prob("b", {"a"}), lm.prob("</s>", {"a"}), 1e-12);
  EXPECT_NEAR(lm.prob("a", {"b"}), lm.prob("</s>", {"b"}), 1e-12);
  EXPECT_NEAR(lm.prob("a", {"<s>"}), lm.prob("b", {"<s>"}), 1e-12);
}

TEST_F(MknTest, RandomCorporaMatchOracleAndNormalize) {
  std::mt19937 rng(2024);
  for (int trial = 0; trial < 15; ++trial) {
    int order = 2 + trial % 3;
    Corpus c = fixtures::random_corpus(rng, 30, 15);
    Vocabulary v = build_vocabulary(c, 1 + trial % 2);
    BackoffLM lm = train_lm(c, order, v);
    oracle::BruteForceMkn oracle(c.sentences(), order, fixtures::predictable(v));
    for (int k = 1; k <= order; ++k) {
      for (const auto& [g, e] : lm.grams(k)) {
        if (g.back() == v.bos()) continue;
        std::vector<std::string> h;
        for (std::size_t i = 0; i + 1 < g.size(); ++i) h.push_back(v.word(g[i]));
        ASSERT_NEAR(e.log_prob, std::log10(oracle.prob(v.word(g.back()), h)), 1e-9);
      }
    }
    // Unstored (w, h) pairs go through the back-off weights.
    std::uniform_int_distribution<int> word(1, static_cast<int>(v.size()) - 1);
    for (int q = 0; q < 200; ++q) {
      std::vector<std::string> h{"<s>"};
      for (int i = 0; i < order - 1; ++i) h.push_back(v.word(word(rng)));
      h.erase(h.begin(), h.begin() + (q % static_cast<int>(h.size())));
      std::string w = v.word(word(rng));
      if (w == "<s>") continue;
      ASSERT_NEAR(lm.prob(w, h), std::log10(oracle.prob(w, h)), 1e-9);
    }
    EXPECT_LT(max_normalization_error(lm), 1e-6);
  }
}

TEST_F(MknTest, DuplicatedCorpusScalesCountsExactly) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    Corpus c = fixtures::random_corpus(rng, 20, 10);
    Corpus twice("twice");
    for (int rep = 0; rep < 2; ++rep)
      for (const auto& s : c.sentences()) twice.add_sentence(s);
    Vocabulary v = build_vocabulary(c);
    auto once_counts = count_ngrams(c, 3, v);
    auto twice_counts = count_ngrams(twice, 3, v);
    for (const auto& [g, n] : once_counts.counts[2]) EXPECT_EQ(twice_counts.count(g), 2 * n);
    EXPECT_EQ(once_counts.continuation, twice_counts.continuation);
    // With discounts held at zero the estimator is a ratio of counts, so
    // every observed n-gram keeps its probability.
    DiscountSet zero{std::vector<DiscountTriple>(3, DiscountTriple{0.0, 0.0, 0.0, false})};
    BackoffLM a = train_mkn(once_counts, zero);
    BackoffLM b = train_mkn(twice_counts, zero);
    for (int k = 1; k <= 3; ++k)
      for (const auto& [g, n] : once_counts.counts[static_cast<std::size_t>(k - 1)])
        EXPECT_NEAR(a.find(g)->log_prob, b.find(g)->log_prob, 1e-12);
  }
}

TEST_F(MknTest, ProbBackoffRecursion) {
  Vocabulary v = vocab_ab();
  BackoffLM lm = train_lm(corpus_from_text("t", "a b a"), 2, v);
  NGram ab = ids(v, {"a", "b"});
  EXPECT_DOUBLE_EQ(lm.prob(v.id("b"), NGram{v.id("a")}), lm.find(ab)->log_prob);
  // (a, a) is not stored.
  ASSERT_FALSE(lm.contains(ids(v, {"a", "a"})));
  EXPECT_DOUBLE_EQ(lm.prob(v.id("a"), NGram{v.id("a")}),
                   lm.find(ids(v, {"a"}))->log_backoff + lm.find(ids(v, {"a"}))->log_prob);
  EXPECT_DOUBLE_EQ(lm.prob(v.id("b"), NGram{}), lm.find(ids(v, {"b"}))->log_prob);
}

TEST(Perplexity, UniformUnigramIsVocabularySize) {
  // 8 predictable words, each 1/8.
  std::string arpa = "\\data\\\nngram 1=9\n\n\\1-grams:\n-99\t<s>\n";
  std::vector<std::string> words{"</s>", "<unk>", "a", "b", "c", "d", "e", "f"};
  for (const auto& w : words) arpa += format_g(std::log10(1.0 / 8.0), 17) + "\t" + w + "\n";
  arpa += "\n\\end\\\n";
  BackoffLM lm = parse_arpa(arpa);
  auto r = perplexity(lm, corpus_from_text("t", "a b c\nf e d a"));
  EXPECT_NEAR(r.ppl, 8.0, 1e-9);
  EXPECT_EQ(r.scored_tokens, 9u);
}

TEST_F(QuietTest, PerplexityExcludesOov) {
  Vocabulary v = vocab_ab();
  BackoffLM lm = train_lm(corpus_from_text("t", "a b a"), 2, v);
  auto r = perplexity(lm, corpus_from_text("t", "a z"), OovPolicy::kExclude);
  EXPECT_EQ(r.scored_tokens, 2u);
  EXPECT_EQ(r.oov_tokens, 1u);
  EXPECT_EQ(r.sentences, 1u);
  // </s> is scored with z mapped to <unk> in its history.
  double expected = lm.prob("a", {"<s>"}) + lm.prob("</s>", {"<s>", "a", "<unk>"});
  EXPECT_NEAR(r.log10_prob_sum, expected, 1e-12);
  auto u = perplexity(lm, corpus_from_text("t", "a z"), OovPolicy::kAsUnk);
  EXPECT_EQ(u.scored_tokens, 3u);
  EXPECT_EQ(u.oov_tokens, 0u);
  EXPECT_NEAR(u.log10_prob_sum, expected + lm.prob("<unk>", {"<s>", "a"}), 1e-12);
}

TEST_F(QuietTest, PerplexityErrors) {
  Vocabulary v = vocab_ab();
  BackoffLM lm = train_lm(corpus_from_text("t", "a b a"), 2, v);
  EXPECT_THROW(perplexity(lm, Corpus("empty")), Error);
  // All-OOV words still score </s>; a corpus is only unscorable if it has no positions.
  auto r = perplexity(lm, corpus_from_text("t", "z q"));
  EXPECT_EQ(r.scored_tokens, 1u);
}

TEST_F(QuietTest, PerplexityOnTrainingDataIsFinite) {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Corpus c = fixtures::random_corpus(rng, 30, 15);
    BackoffLM lm = train_lm(c, 3, build_vocabulary(c));
    auto r = perplexity(lm, c);
    EXPECT_TRUE(std::isfinite(r.ppl));
    EXPECT_GT(r.ppl, 0.0);
    EXPECT_EQ(r.scored_tokens + r.oov_tokens, c.token_count() + c.size());
  }
}

TEST(OovRate, Examples) {
  Vocabulary v(std::vector<std::string>{"a", "b"});
  EXPECT_DOUBLE_EQ(oov_rate(v, corpus_from_text("t", "a b c c")), 0.5);
  EXPECT_DOUBLE_EQ(oov_rate(v, corpus_from_text("t", "a b\nb")), 0.0);
  EXPECT_THROW(oov_rate(v, Corpus("empty")), Error);
}

using ArpaTest = QuietTest;

TEST_F(ArpaTest, RoundTripIsLossless) {
  std::mt19937 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    BackoffLM lm = fixtures::random_model(rng, 2 + trial % 3);
    std::string first = format_arpa(lm);
    BackoffLM back = parse_arpa(first);
    EXPECT_EQ(format_arpa(back), first);
    ASSERT_EQ(back.order(), lm.order());
    for (int k = 1; k <= lm.order(); ++k) {
      ASSERT_EQ(back.size(k), lm.size(k));
      for (const auto& [g, e] : lm.grams(k)) {
        NGram mapped;
        for (WordId w : g) mapped.push_back(back.vocab().id(lm.vocab().word(w)));
        const NGramEntry* f = back.find(mapped);
        ASSERT_NE(f, nullptr);
        EXPECT_NEAR(f->log_prob, e.log_prob, 1e-6);
        EXPECT_NEAR(f->log_backoff, e.log_backoff, 1e-6);
      }
    }
  }
}

TEST_F(ArpaTest, FormatDetails) {
  Vocabulary v = vocab_ab();
  BackoffLM lm = train_lm(corpus_from_text("t", "a b a"), 2, v);
  std::string text = format_arpa(lm);
  EXPECT_NE(text.find("\\data\\\nngram 1=5\nngram 2=4\n"), std::string::npos);
  EXPECT_NE(text.find("\\1-grams:\n-99\t<s>\t"), std::string::npos);
  // </s>-final and highest-order entries carry no back-off field.
  EXPECT_NE(text.find("\t</s>\n"), std::string::npos);
  EXPECT_NE(text.find("\ta </s>\n"), std::string::npos);
  EXPECT_NE(text.find("-0.1340821\tb a\n"), std::string::npos);  // log10(0.734375)
  EXPECT_EQ(text.substr(text.size() - 6), "\\end\\\n");
}

TEST(ArpaRead, HandWrittenUnigramModel) {
  BackoffLM lm = parse_arpa("\\data\\\nngram 1=2\n\n\\1-grams:\n-0.3\tx\n-0.5\ty\n\n\\end\\\n");
  EXPECT_EQ(lm.order(), 1);
  EXPECT_EQ(lm.size(1), 2u);
  EXPECT_DOUBLE_EQ(lm.prob("x", {}), -0.3);
  EXPECT_DOUBLE_EQ(lm.prob("y", {}), -0.5);
}

TEST(ArpaRead, CountMismatchNamesBothNumbers) {
  try {
    parse_arpa("\\data\\\nngram 1=2\nngram 2=3\n\n\\1-grams:\n-0.3\tx\n-0.5\ty\n\n\\2-grams:\n-0.1\tx y\n\n\\end\\\n");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    std::string what = e.what();
    EXPECT_NE(what.find("ngram 2=3"), std::string::npos) << what;
    EXPECT_NE(what.find("has 1"), std::string::npos) << what;
    EXPECT_GT(e.line(), 0u);
  }
}

TEST(ArpaRead, MalformedInputs) {
  EXPECT_THROW(parse_arpa("no header here\n"), FormatError);
  EXPECT_THROW(parse_arpa("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3\tx\n"), FormatError);
  EXPECT_THROW(parse_arpa("\\data\\\nngram 1=1\n\n\\1-grams:\nnotanumber\tx\n\\end\\\n"), FormatError);
  EXPECT_THROW(parse_arpa("\\data\\\nngram 1=1\n\n\\1-grams:\n-0.3\tx y z w\n\\end\\\n"), FormatError);
  EXPECT_THROW(parse_arpa("\\data\\\nngram 2=1\n\\end\\\n"), FormatError);
}

}  // namespace
}  // namespace lmkit
