#ifndef LMKIT_TESTS_LEXICON_FIXTURES_HPP
#define LMKIT_TESTS_LEXICON_FIXTURES_HPP

#include <random>
#include <string>

#include "lmkit/lexicon.hpp"

namespace fixtures {

/// Every word pronounced letter by letter as the upper-cased letter.
inline lmkit::Lexicon identity_lexicon(std::mt19937& rng, std::size_t words, const std::string& alphabet,
                                       std::size_t max_len = 6) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<std::size_t> letter(0, alphabet.size() - 1);
  lmkit::Lexicon lex;
  while (lex.size() < words) {
    std::string w;
    lmkit::Pronunciation p;
    for (std::size_t n = len(rng); n > 0; --n) {
      char c = alphabet[letter(rng)];
      w += c;
      p.emplace_back(1, c);
    }
    lex.add(w, p);
  }
  return lex;
}

/// Spelling rules with one-to-many and silent letters over {a, b, c, d}:
/// a -> A, b -> B, c -> K S, d -> D except word-finally, where it is silent.
inline lmkit::Pronunciation rule_pronunciation(const std::string& w) {
  lmkit::Pronunciation p;
  for (std::size_t i = 0; i < w.size(); ++i) {
    switch (w[i]) {
      case 'a': p.push_back("A"); break;
      case 'b': p.push_back("B"); break;
      case 'c': p.push_back("K"); p.push_back("S"); break;
      case 'd': if (i + 1 < w.size()) p.push_back("D"); break;
    }
  }
  return p;
}

inline lmkit::Lexicon rule_lexicon(std::mt19937& rng, std::size_t words, std::size_t max_len = 6) {
  std::uniform_int_distribution<std::size_t> len(2, max_len);
  std::uniform_int_distribution<int> letter(0, 3);
  lmkit::Lexicon lex;
  while (lex.size() < words) {
    std::string w;
    for (std::size_t n = len(rng); n > 0; --n) w += static_cast<char>('a' + letter(rng));
    auto p = rule_pronunciation(w);
    if (!p.empty()) lex.add(w, p);
  }
  return lex;
}

/// All strings of length 1..max_len over `alphabet`, shortest first.
inline std::vector<std::string> all_words(const std::string& alphabet, std::size_t max_len) {
  std::vector<std::string> out{""};
  std::vector<std::string> result;
  for (std::size_t n = 1; n <= max_len; ++n) {
    std::vector<std::string> next;
    for (const auto& prefix : out)
      for (char c : alphabet) next.push_back(prefix + c);
    result.insert(result.end(), next.begin(), next.end());
    out = std::move(next);
  }
  return result;
}

}  // namespace fixtures

#endif  // LMKIT_TESTS_LEXICON_FIXTURES_HPP
