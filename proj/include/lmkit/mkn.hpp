#ifndef LMKIT_MKN_HPP
#define LMKIT_MKN_HPP

// Interpolated modified Kneser-Ney estimation into back-off form.

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <vector>

#include "lmkit/backoff_lm.hpp"

namespace lmkit {

/// Discounts per order; discounts[k-1] belongs to order k.
struct DiscountSet {
  std::vector<DiscountTriple> per_order;

  const DiscountTriple& at(int k) const { return per_order.at(static_cast<std::size_t>(k - 1)); }

  double discount(int k, std::int64_t count) const {
    const auto& d = at(k);
    if (count <= 0) return 0.0;
    if (count == 1) return d.d1;
    if (count == 2) return d.d2;
    return d.d3plus;
  }
};

/// n_r for r = 1..4: how many n-grams of order k have adjusted count r.
inline std::array<std::int64_t, 4> count_of_counts(const NGramCountTable& counts, int k) {
  std::array<std::int64_t, 4> n{0, 0, 0, 0};
  for (const auto& [g, c] : counts.counts[static_cast<std::size_t>(k - 1)]) {
    std::int64_t a = counts.adjusted_count(g);
    if (a >= 1 && a <= 4) ++n[static_cast<std::size_t>(a - 1)];
  }
  return n;
}

/// Closed-form discounts from count-of-counts:
///   Y = n1/(n1+2 n2), D1 = 1-2Y n2/n1, D2 = 2-3Y n3/n2, D3+ = 3-4Y n4/n3,
/// clipped to [0,1], [0,2], [0,3]. Any n_r = 0 falls back to 0.5 for all three.
inline DiscountTriple discounts_from_count_of_counts(const std::array<std::int64_t, 4>& n) {
  DiscountTriple d;
  if (n[0] == 0 || n[1] == 0 || n[2] == 0 || n[3] == 0) {
    d.d1 = d.d2 = d.d3plus = 0.5;
    d.fallback = true;
    return d;
  }
  const double n1 = static_cast<double>(n[0]);
  const double n2 = static_cast<double>(n[1]);
  const double n3 = static_cast<double>(n[2]);
  const double n4 = static_cast<double>(n[3]);
  const double y = n1 / (n1 + 2.0 * n2);
  d.d1 = std::clamp(1.0 - 2.0 * y * n2 / n1, 0.0, 1.0);
  d.d2 = std::clamp(2.0 - 3.0 * y * n3 / n2, 0.0, 2.0);
  d.d3plus = std::clamp(3.0 - 4.0 * y * n4 / n3, 0.0, 3.0);
  return d;
}

inline DiscountSet estimate_discounts(const NGramCountTable& counts) {
  if (counts.total_ngrams() == 0) throw Error("cannot estimate discounts from an empty count table");
  DiscountSet out;
  for (int k = 1; k <= counts.order; ++k) {
    auto n = count_of_counts(counts, k);
    out.per_order.push_back(discounts_from_count_of_counts(n));
    if (out.per_order.back().fallback) {
      std::ostringstream msg;
      msg << "order " << k << ": degenerate count-of-counts (n1..n4 = " << n[0] << ',' << n[1] << ','
          << n[2] << ',' << n[3] << "), using fallback discounts 0.5";
      warn(msg.str());
    }
  }
  return out;
}

namespace detail {

inline double safe_log10(double p) { return p > 0.0 ? std::max(kLogZero, std::log10(p)) : kLogZero; }

struct ContextStats {
  double total = 0.0;  // sum of adjusted counts of the extensions
  std::array<std::int64_t, 3> distinct{0, 0, 0};  // extensions with count 1, 2, 3+
  double gamma = 0.0;
};

}  // namespace detail

/// Interpolated modified Kneser-Ney:
///   p(w|h) = (a(hw) - D(a(hw))) / sum_v a(hv) + gamma(h) p(w|h'),
///   gamma(h) = (D1 N1(h.) + D2 N2(h.) + D3+ N3+(h.)) / sum_v a(hv),
/// with the unigram level interpolated with the uniform distribution over
/// the predictable vocabulary. The back-off weight of h is gamma(h).
inline BackoffLM train_mkn(const NGramCountTable& counts, const DiscountSet& discounts) {
  const int order = counts.order;
  if (order < 1) throw Error("count table order must be >= 1");
  if (static_cast<int>(discounts.per_order.size()) < order) throw Error("discount set shorter than model order");
  const Vocabulary& vocab = counts.vocab;

  std::vector<NGramMap<detail::ContextStats>> stats(static_cast<std::size_t>(order));
  for (int k = 1; k <= order; ++k) {
    auto& level = stats[static_cast<std::size_t>(k - 1)];
    for (const auto& [g, c] : counts.counts[static_cast<std::size_t>(k - 1)]) {
      std::int64_t a = counts.adjusted_count(g);
      if (a <= 0) continue;
      auto& st = level[ngram_prefix(g)];
      st.total += static_cast<double>(a);
      ++st.distinct[static_cast<std::size_t>(std::min<std::int64_t>(a, 3) - 1)];
    }
    const auto& d = discounts.at(k);
    for (auto& [ctx, st] : level) {
      st.gamma = (d.d1 * static_cast<double>(st.distinct[0]) + d.d2 * static_cast<double>(st.distinct[1]) +
                  d.d3plus * static_cast<double>(st.distinct[2])) /
                 st.total;
    }
  }

  BackoffLM lm(order, vocab);
  lm.metadata().smoothing = "interpolated modified Kneser-Ney";
  lm.metadata().discounts = discounts.per_order;
  lm.metadata().discounts.resize(static_cast<std::size_t>(order));

  // Linear-domain probabilities of the previous order, for interpolation.
  NGramMap<double> lower;
  {
    const auto& root = stats[0];
    auto it = root.find(NGram{});
    const double total = it == root.end() ? 0.0 : it->second.total;
    const double gamma = it == root.end() ? 1.0 : it->second.gamma;
    const double uniform = 1.0 / static_cast<double>(vocab.predicted_size());
    for (WordId w = 0; w < static_cast<WordId>(vocab.size()); ++w) {
      if (w == vocab.bos()) {
        lm.set(NGram{w}, NGramEntry{kLogZero, 0.0});
        continue;
      }
      NGram g{w};
      double p = gamma * uniform;
      if (total > 0.0) {
        std::int64_t a = counts.adjusted_count(g);
        p += std::max(static_cast<double>(a) - discounts.discount(1, a), 0.0) / total;
      }
      lower[g] = p;
      lm.set(g, NGramEntry{detail::safe_log10(p), 0.0});
    }
  }

  for (int k = 2; k <= order; ++k) {
    const auto& level = stats[static_cast<std::size_t>(k - 1)];
    NGramMap<double> current;
    for (const auto& [g, c] : counts.counts[static_cast<std::size_t>(k - 1)]) {
      std::int64_t a = counts.adjusted_count(g);
      const auto& st = level.at(ngram_prefix(g));
      double p = std::max(static_cast<double>(a) - discounts.discount(k, a), 0.0) / st.total +
                 st.gamma * lower.at(ngram_suffix(g));
      current[g] = p;
      lm.set(g, NGramEntry{detail::safe_log10(p), 0.0});
    }
    lower = std::move(current);
  }

  // Back-off weights for every stored context that has extensions.
  for (int k = 1; k < order; ++k) {
    const auto& next = stats[static_cast<std::size_t>(k)];
    for (auto& [ctx, entry] : lm.grams(k)) {
      auto it = next.find(ctx);
      if (it == next.end()) continue;
      entry.log_backoff = it->second.gamma > 0.0 ? std::max(kLogZero, std::log10(it->second.gamma)) : kLogZero;
    }
  }
  return lm;
}

/// count -> discounts -> model, the usual one-shot path.
inline BackoffLM train_lm(const Corpus& corpus, int order, const Vocabulary& vocab) {
  auto counts = count_ngrams(corpus, order, vocab);
  auto discounts = estimate_discounts(counts);
  BackoffLM lm = train_mkn(counts, discounts);
  lm.metadata().corpus_id = corpus.id();
  return lm;
}

}  // namespace lmkit

#endif  // LMKIT_MKN_HPP
