#ifndef LMKIT_EVALUATE_HPP
#define LMKIT_EVALUATE_HPP

#include <cmath>
#include <string>
#include <vector>

#include "lmkit/backoff_lm.hpp"

namespace lmkit {

enum class OovPolicy { kExclude, kAsUnk };

inline OovPolicy parse_oov_policy(std::string_view s) {
  if (s == "exclude") return OovPolicy::kExclude;
  if (s == "as_unk" || s == "as-unk") return OovPolicy::kAsUnk;
  throw Error("unknown OOV policy '" + std::string(s) + "' (expected exclude or as_unk)");
}

inline std::string to_string(OovPolicy p) { return p == OovPolicy::kExclude ? "exclude" : "as_unk"; }

struct PerplexityReport {
  double log10_prob_sum = 0.0;
  std::size_t scored_tokens = 0;
  std::size_t oov_tokens = 0;
  std::size_t sentences = 0;
  double ppl = 0.0;

  bool operator==(const PerplexityReport&) const = default;
};

/// One predicted position: every word and the closing `</s>`.
struct ScoredPosition {
  double log10_prob = 0.0;
  bool oov = false;
};

/// Scores a sentence. OOV words are looked up as `<unk>`, both when
/// predicted and when they appear in later histories; `oov` marks them so
/// callers can exclude them.
inline std::vector<ScoredPosition> score_sentence(const BackoffLM& lm, const Sentence& sentence) {
  const auto& vocab = lm.vocab();
  std::vector<ScoredPosition> out;
  out.reserve(sentence.size() + 1);
  std::vector<WordId> history{vocab.bos()};
  for (std::size_t i = 0; i <= sentence.size(); ++i) {
    WordId w;
    bool oov = false;
    if (i == sentence.size()) {
      w = vocab.eos();
    } else {
      w = vocab.id(sentence[i]);
      if (w == kNoWord || w == vocab.bos()) {
        w = vocab.unk();
        oov = true;
      }
    }
    out.push_back({lm.prob(w, history), oov});
    history.push_back(w);
  }
  return out;
}

inline PerplexityReport finish_report(PerplexityReport r) {
  if (r.scored_tokens == 0) throw Error("perplexity undefined: no scored tokens");
  r.ppl = std::pow(10.0, -r.log10_prob_sum / static_cast<double>(r.scored_tokens));
  return r;
}

inline PerplexityReport perplexity(const BackoffLM& lm, const Corpus& corpus,
                                   OovPolicy policy = OovPolicy::kExclude) {
  if (corpus.empty()) throw Error("perplexity of an empty corpus");
  PerplexityReport r;
  for (const auto& s : corpus.sentences()) {
    ++r.sentences;
    for (const auto& pos : score_sentence(lm, s)) {
      if (pos.oov && policy == OovPolicy::kExclude) {
        ++r.oov_tokens;
        continue;
      }
      r.log10_prob_sum += pos.log10_prob;
      ++r.scored_tokens;
    }
  }
  return finish_report(r);
}

/// Fraction of word tokens (no `</s>`) missing from the vocabulary.
inline double oov_rate(const Vocabulary& vocab, const Corpus& corpus) {
  if (corpus.token_count() == 0) throw Error("OOV rate of an empty corpus");
  std::size_t oov = 0;
  for (const auto& s : corpus.sentences())
    for (const auto& w : s)
      if (!vocab.contains(w)) ++oov;
  return static_cast<double>(oov) / static_cast<double>(corpus.token_count());
}

inline std::string format_report(const PerplexityReport& r) {
  std::string out;
  out += "sentences\t" + std::to_string(r.sentences) + '\n';
  out += "scored_tokens\t" + std::to_string(r.scored_tokens) + '\n';
  out += "oov_tokens\t" + std::to_string(r.oov_tokens) + '\n';
  out += "log10_prob\t" + format_g(r.log10_prob_sum, 10) + '\n';
  out += "ppl\t" + format_g(r.ppl, 10) + '\n';
  return out;
}

}  // namespace lmkit

#endif  // LMKIT_EVALUATE_HPP
