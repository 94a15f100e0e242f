#ifndef LMKIT_BACKOFF_LM_HPP
#define LMKIT_BACKOFF_LM_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lmkit/ngram_counts.hpp"

namespace lmkit {

/// log10 used for "impossible" events (`<s>` as a unigram, missing entries).
inline constexpr double kLogZero = -99.0;

struct NGramEntry {
  double log_prob = kLogZero;
  double log_backoff = 0.0;
};

struct DiscountTriple {
  double d1 = 0.5;
  double d2 = 0.5;
  double d3plus = 0.5;
  bool fallback = false;
};

struct ModelMetadata {
  std::string corpus_id;
  std::string smoothing;
  std::vector<DiscountTriple> discounts;  // per order, empty unless trained here
};

/// ARPA-style back-off n-gram model over a fixed vocabulary.
class BackoffLM {
 public:
  BackoffLM() = default;
  BackoffLM(int order, Vocabulary vocab) : order_(order), vocab_(std::move(vocab)) {
    if (order < 1) throw Error("model order must be >= 1");
    grams_.assign(static_cast<std::size_t>(order), {});
  }

  int order() const { return order_; }
  const Vocabulary& vocab() const { return vocab_; }
  ModelMetadata& metadata() { return meta_; }
  const ModelMetadata& metadata() const { return meta_; }

  const NGramMap<NGramEntry>& grams(int k) const { return grams_.at(static_cast<std::size_t>(k - 1)); }
  NGramMap<NGramEntry>& grams(int k) { return grams_.at(static_cast<std::size_t>(k - 1)); }

  const NGramEntry* find(const NGram& g) const {
    if (g.empty() || static_cast<int>(g.size()) > order_) return nullptr;
    const auto& m = grams_[g.size() - 1];
    auto it = m.find(g);
    return it == m.end() ? nullptr : &it->second;
  }
  bool contains(const NGram& g) const { return find(g) != nullptr; }

  void set(const NGram& g, NGramEntry e) {
    if (g.empty() || static_cast<int>(g.size()) > order_) throw Error("n-gram length out of range");
    grams_[g.size() - 1][g] = e;
  }
  void erase(const NGram& g) { grams_.at(g.size() - 1).erase(g); }

  std::size_t size(int k) const { return grams(k).size(); }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& m : grams_) n += m.size();
    return n;
  }

  /// Back-off recursion: the stored value for the longest matching n-gram
  /// plus the back-off weights of the contexts skipped on the way down.
  double prob(WordId word, std::span<const WordId> history) const {
    std::size_t max_ctx = std::min<std::size_t>(history.size(), static_cast<std::size_t>(order_ - 1));
    double backoff = 0.0;
    NGram key;
    key.reserve(max_ctx + 1);
    for (std::size_t len = max_ctx;; --len) {
      key.assign(history.end() - static_cast<std::ptrdiff_t>(len), history.end());
      key.push_back(word);
      auto hit = grams_[len].find(key);
      if (hit != grams_[len].end()) return backoff + hit->second.log_prob;
      if (len == 0) return backoff + kLogZero;
      key.pop_back();
      auto ctx = grams_[len - 1].find(key);
      if (ctx != grams_[len - 1].end()) backoff += ctx->second.log_backoff;
    }
  }

  double prob(std::string_view word, const std::vector<std::string>& history) const {
    std::vector<WordId> h;
    h.reserve(history.size());
    for (const auto& w : history) h.push_back(vocab_.id_or_unk(w));
    return prob(vocab_.id_or_unk(word), h);
  }

  /// Sorted n-grams of one order; the canonical iteration order.
  std::vector<NGram> sorted_grams(int k) const {
    std::vector<NGram> out;
    out.reserve(grams(k).size());
    for (const auto& [g, e] : grams(k)) out.push_back(g);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Stored extensions grouped by their context, for contexts of order k.
  std::map<NGram, std::vector<WordId>> children(int k) const {
    std::map<NGram, std::vector<WordId>> out;
    if (k >= order_) return out;
    for (const auto& [g, e] : grams(k + 1)) out[ngram_prefix(g)].push_back(g.back());
    return out;
  }

  /// Rebuilds every back-off weight so each stored context normalizes:
  ///   bow(h) = (1 - sum_{hw stored} p(w|h)) / (1 - sum_{hw stored} p(w|h')).
  /// Processed from low to high order since p(w|h') uses lower weights.
  void recompute_backoffs() {
    for (int k = 1; k < order_; ++k) {
      auto kids = children(k);
      for (auto& [ctx, entry] : grams(k)) {
        auto it = kids.find(ctx);
        if (it == kids.end()) {
          entry.log_backoff = 0.0;
          continue;
        }
        std::span<const WordId> shorter(ctx.data() + 1, ctx.size() - 1);
        double numerator = 1.0;
        double denominator = 1.0;
        NGram full = ctx;
        full.push_back(0);
        for (WordId w : it->second) {
          full.back() = w;
          numerator -= std::pow(10.0, grams(k + 1).at(full).log_prob);
          denominator -= std::pow(10.0, prob(w, shorter));
        }
        entry.log_backoff = backoff_from_masses(numerator, denominator);
      }
    }
  }

  static double backoff_from_masses(double numerator, double denominator) {
    if (numerator <= 0.0) return kLogZero;
    if (denominator <= 0.0) return 0.0;
    return std::max(kLogZero, std::log10(numerator / denominator));
  }

 private:
  int order_ = 0;
  Vocabulary vocab_;
  std::vector<NGramMap<NGramEntry>> grams_;
  ModelMetadata meta_;
};

/// Every context for which the model defines a distribution: the empty
/// context plus every stored n-gram shorter than the model order.
inline std::vector<NGram> stored_contexts(const BackoffLM& lm) {
  std::vector<NGram> out{NGram{}};
  for (int k = 1; k < lm.order(); ++k) {
    auto sorted = lm.sorted_grams(k);
    out.insert(out.end(), sorted.begin(), sorted.end());
  }
  return out;
}

/// sum_w p(w|h) over all predictable words (everything except `<s>`).
inline double context_mass(const BackoffLM& lm, const NGram& context) {
  double total = 0.0;
  const auto& vocab = lm.vocab();
  for (WordId w = 0; w < static_cast<WordId>(vocab.size()); ++w) {
    if (w == vocab.bos()) continue;
    total += std::pow(10.0, lm.prob(w, context));
  }
  return total;
}

/// Largest |sum_w p(w|h) - 1| over all stored contexts.
inline double max_normalization_error(const BackoffLM& lm) {
  double worst = 0.0;
  for (const auto& ctx : stored_contexts(lm)) worst = std::max(worst, std::abs(context_mass(lm, ctx) - 1.0));
  return worst;
}

}  // namespace lmkit

#endif  // LMKIT_BACKOFF_LM_HPP
