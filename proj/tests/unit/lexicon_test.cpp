#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "lmkit/lexicon.hpp"

namespace lmkit {
namespace {

Lexicon lex_of(const std::vector<std::pair<std::string, std::string>>& rows) {
  Lexicon lex;
  for (const auto& [w, p] : rows) lex.add(w, split_whitespace(p));
  return lex;
}

TEST(LexiconTest, DuplicatesCollapseAndOrderIsCanonical) {
  Lexicon lex = lex_of({{"tomato", "t o m a t o"}, {"tomato", "t o m eI t o"}, {"tomato", "t o m a t o"}});
  EXPECT_EQ(lex.size(), 1u);
  EXPECT_EQ(lex.pronunciation_count(), 2u);
  EXPECT_EQ(format_lexicon(lex), "tomato\tt o m a t o\ntomato\tt o m eI t o\n");
  EXPECT_EQ(lex.inventory(), (PhonemeInventory{"a", "eI", "m", "o", "t"}));
}

TEST(LexiconTest, RejectsEmptyPronunciationsAndUndeclaredPhonemes) {
  Lexicon lex;
  EXPECT_THROW(lex.add("a", {}), Error);
  EXPECT_THROW(lex.add("", {"a"}), Error);
  Lexicon declared(PhonemeInventory{"a", "b"});
  declared.add("ab", {"a", "b"});
  EXPECT_THROW(declared.add("c", {"c"}), Error);
  EXPECT_THROW(declared.declare_inventory({"a"}), Error);
}

TEST(LexiconTest, FileRoundTripAndErrors) {
  auto dir = std::filesystem::temp_directory_path() / "lmkit_lexicon_test";
  std::filesystem::create_directories(dir);
  Lexicon lex = lex_of({{"b", "b e:"}, {"a", "a:"}, {"b", "b i:"}});
  write_lexicon(lex, dir / "lex.txt");
  EXPECT_EQ(read_lexicon(dir / "lex.txt"), lex);
  write_inventory(lex.inventory(), dir / "inv.txt");
  EXPECT_EQ(read_inventory(dir / "inv.txt"), lex.inventory());

  write_file(dir / "bad.txt", "a\ta:\nb b e:\n");
  try {
    read_lexicon(dir / "bad.txt");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  write_file(dir / "empty_pron.txt", "a\t  \n");
  EXPECT_THROW(read_lexicon(dir / "empty_pron.txt"), FormatError);
  write_file(dir / "outside.txt", "a\ta: x\n");
  EXPECT_THROW(read_lexicon(dir / "outside.txt", PhonemeInventory{"a:"}), FormatError);
  write_file(dir / "dup_inv.txt", "a\na\n");
  EXPECT_THROW(read_inventory(dir / "dup_inv.txt"), FormatError);
}

TEST(LexiconTest, MergePolicies) {
  Lexicon base = lex_of({{"aspirin", "a s p i r i n"}, {"dose", "d o s"}});
  Lexicon addon = lex_of({{"aspirin", "a s p r i n"}, {"stent", "s t e n t"}});
  base.declare_inventory({"a", "d", "e", "i", "n", "o", "p", "r", "s", "t"});

  auto [u, ur] = merge_lexicons(base, addon, MergePolicy::kUnion);
  EXPECT_EQ(u.pronunciations("aspirin").size(), 2u);
  EXPECT_EQ(ur.shared_words, 1u);
  EXPECT_EQ(ur.result_words, 3u);
  EXPECT_EQ(ur.result_pronunciations, 4u);

  auto [a, ar] = merge_lexicons(base, addon, MergePolicy::kAddonWins);
  EXPECT_EQ(a.pronunciations("aspirin"), (std::set<Pronunciation>{{"a", "s", "p", "r", "i", "n"}}));
  auto [b, br] = merge_lexicons(base, addon, MergePolicy::kBaseWins);
  EXPECT_EQ(b.pronunciations("aspirin"), (std::set<Pronunciation>{{"a", "s", "p", "i", "r", "i", "n"}}));
  EXPECT_TRUE(b.contains("stent"));
  EXPECT_EQ(format_merge_report(br).substr(0, 13), "base_words\t2\n");

  Lexicon disjoint = lex_of({{"nose", "n o s"}});
  for (auto policy : {MergePolicy::kUnion, MergePolicy::kAddonWins, MergePolicy::kBaseWins}) {
    auto [m, r] = merge_lexicons(base, disjoint, policy);
    EXPECT_EQ(m.size(), 3u);
    EXPECT_EQ(r.shared_words, 0u);
  }
}

TEST(LexiconTest, InventoryMismatchNeedsMapping) {
  Lexicon base = lex_of({{"kit", "k I t"}});
  Lexicon addon = lex_of({{"cyst", "s IH s t"}});
  base.declare_inventory({"I", "k", "s", "t"});
  try {
    merge_lexicons(base, addon, MergePolicy::kUnion);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("IH"), std::string::npos);
  }
  auto [m, r] = merge_lexicons(base, addon, MergePolicy::kUnion, {{"IH", "I"}});
  EXPECT_EQ(m.pronunciations("cyst"), (std::set<Pronunciation>{{"s", "I", "s", "t"}}));
  EXPECT_EQ(parse_merge_policy("addon_wins"), MergePolicy::kAddonWins);
  EXPECT_THROW(parse_merge_policy("both"), Error);
}

TEST(LexiconTest, UnionMergeIsSymmetric) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<int> pick(0, 3);
  const std::vector<std::string> words{"w0", "w1", "w2", "w3"};
  const std::vector<std::string> phones{"p", "t", "k", "a"};
  for (int trial = 0; trial < 50; ++trial) {
    Lexicon a, b;
    for (int i = 0; i < 5; ++i) {
      a.add(words[pick(rng)], {phones[pick(rng)], phones[pick(rng)]});
      b.add(words[pick(rng)], {phones[pick(rng)]});
    }
    a.declare_inventory({phones.begin(), phones.end()});
    b.declare_inventory({phones.begin(), phones.end()});
    EXPECT_EQ(merge_lexicons(a, b, MergePolicy::kUnion).first, merge_lexicons(b, a, MergePolicy::kUnion).first);
  }
}

}  // namespace
}  // namespace lmkit
