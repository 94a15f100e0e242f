#ifndef LMKIT_TESTS_G2P_ORACLE_HPP
#define LMKIT_TESTS_G2P_ORACLE_HPP

// Exhaustive decoder: enumerates every graphone sequence of the model that
// spells the word, scores each with the full history, and returns the best
// distinct pronunciation. No beam, no recombination.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmkit/g2p.hpp"

namespace oracle {

struct ExhaustiveResult {
  lmkit::Pronunciation phonemes;
  double log10_score;
};

inline std::optional<ExhaustiveResult> exhaustive_g2p(const lmkit::JointSequenceModel& model,
                                                      const std::string& word) {
  const auto& lm = model.lm();
  const auto& vocab = lm.vocab();
  auto letters = lmkit::unicode::code_points(word);
  std::map<lmkit::Pronunciation, double> best;
  std::vector<lmkit::WordId> sequence{vocab.bos()};
  std::function<void(std::size_t, double)> walk = [&](std::size_t pos, double score) {
    if (pos == letters.size()) {
      lmkit::Pronunciation p;
      for (std::size_t i = 1; i < sequence.size(); ++i) {
        const auto& ph = model.graphone(sequence[i]).phonemes;
        p.insert(p.end(), ph.begin(), ph.end());
      }
      if (p.empty()) return;
      double s = score + lm.prob(vocab.eos(), sequence);
      auto [it, fresh] = best.try_emplace(p, s);
      if (!fresh && s > it->second) it->second = s;
      return;
    }
    for (std::size_t id = 0; id < vocab.size(); ++id) {
      auto w = static_cast<lmkit::WordId>(id);
      if (vocab.is_reserved(w)) continue;
      const auto& g = model.graphone(w).letters;
      if (pos + g.size() > letters.size() || !std::equal(g.begin(), g.end(), letters.begin() + static_cast<long>(pos)))
        continue;
      double s = score + lm.prob(w, sequence);
      sequence.push_back(w);
      walk(pos + g.size(), s);
      sequence.pop_back();
    }
  };
  walk(0, 0.0);
  if (best.empty()) return std::nullopt;
  std::optional<ExhaustiveResult> top;
  for (const auto& [p, s] : best)
    if (!top || s > top->log10_score) top = ExhaustiveResult{p, s};
  return top;
}

}  // namespace oracle

#endif  // LMKIT_TESTS_G2P_ORACLE_HPP
