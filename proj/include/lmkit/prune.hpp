#ifndef LMKIT_PRUNE_HPP
#define LMKIT_PRUNE_HPP

// Relative-entropy pruning of back-off models.
//
// Orders are processed from the highest down. Each n-gram of the current
// order is scored against the model as it stands after the higher orders
// were pruned: the history marginal times the KL change in the conditional
// distribution if the n-gram were dropped and its context's back-off weight
// re-solved. N-grams scoring below theta go, unless a retained n-gram one
// order up still uses them as its context; back-off weights are then
// recomputed before moving to the next order.

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "lmkit/backoff_lm.hpp"

namespace lmkit {

struct PruneOptions {
  // Repeat the sweep until it removes nothing. The result is then a fixed
  // point (pruning it again with the same theta is a no-op), at the cost of
  // the nesting property across thresholds, which one sweep keeps in practice.
  bool until_stable = false;
};

struct PruneReport {
  double theta = 0.0;
  std::vector<std::size_t> original;  // per order
  std::vector<std::size_t> removed;   // per order
  std::size_t size_before = 0;
  std::size_t size_after = 0;
  int sweeps = 0;
};

/// Marginal probability of a history: the product of the model's own
/// conditionals along the chain. A leading `<s>` has probability one.
inline double history_probability(const BackoffLM& lm, const NGram& history) {
  double log_p = 0.0;
  std::size_t start = (!history.empty() && history.front() == lm.vocab().bos()) ? 1 : 0;
  for (std::size_t i = start; i < history.size(); ++i) {
    std::span<const WordId> h(history.data(), i);
    log_p += lm.prob(history[i], h);
  }
  return std::pow(10.0, log_p);
}

/// Entropy increase (nats) for removing each stored n-gram of order k >= 2.
inline NGramMap<double> pruning_scores(const BackoffLM& lm, int k) {
  if (k < 2 || k > lm.order()) throw Error("pruning scores exist for orders 2.." + std::to_string(lm.order()));
  NGramMap<double> scores;
  for (const auto& [ctx, words] : lm.children(k - 1)) {
    std::span<const WordId> shorter(ctx.data() + 1, ctx.size() - 1);
    NGram full = ctx;
    full.push_back(0);
    // Mass left for backed-off words under h, and the same words' mass under h'.
    double numerator = 1.0;
    double denominator = 1.0;
    std::vector<std::pair<double, double>> probs;  // (p(w|h), p(w|h'))
    for (WordId w : words) {
      full.back() = w;
      double p = std::pow(10.0, lm.grams(k).at(full).log_prob);
      double p_low = std::pow(10.0, lm.prob(w, shorter));
      numerator -= p;
      denominator -= p_low;
      probs.emplace_back(p, p_low);
    }
    const double p_history = history_probability(lm, ctx);
    const bool has_backoff_mass = numerator > 0.0 && denominator > 0.0;
    const double bow = has_backoff_mass ? numerator / denominator : 0.0;
    for (std::size_t i = 0; i < words.size(); ++i) {
      auto [p, p_low] = probs[i];
      const double new_num = std::max(numerator, 0.0) + p;
      const double new_den = std::max(denominator, 0.0) + p_low;
      const double new_bow = new_num / new_den;
      double delta = p * (std::log(p_low) + std::log(new_bow) - std::log(p));
      if (has_backoff_mass) delta += (std::log(new_bow) - std::log(bow)) * numerator;
      full.back() = words[i];
      scores[full] = -p_history * delta;
    }
  }
  return scores;
}

namespace detail {

// One highest-order-first sweep; returns the number of n-grams removed.
inline std::size_t prune_sweep(BackoffLM& lm, double theta, std::vector<std::size_t>& removed) {
  std::size_t total = 0;
  for (int k = lm.order(); k >= 2; --k) {
    NGramMap<char> needed;
    if (k < lm.order())
      for (const auto& [g, e] : lm.grams(k + 1)) needed.emplace(ngram_prefix(g), 0);
    auto scores = pruning_scores(lm, k);
    std::vector<NGram> doomed;
    for (const auto& g : lm.sorted_grams(k))
      if (needed.count(g) == 0 && scores.at(g) < theta) doomed.push_back(g);
    for (const auto& g : doomed) lm.erase(g);
    removed[static_cast<std::size_t>(k - 1)] += doomed.size();
    total += doomed.size();
    if (!doomed.empty()) lm.recompute_backoffs();
  }
  return total;
}

}  // namespace detail

inline std::pair<BackoffLM, PruneReport> prune_entropy(const BackoffLM& lm, double theta,
                                                       const PruneOptions& opts = {}) {
  PruneReport report;
  report.theta = theta;
  report.size_before = lm.total_size();
  for (int k = 1; k <= lm.order(); ++k) report.original.push_back(lm.size(k));
  report.removed.assign(static_cast<std::size_t>(lm.order()), 0);
  if (!(theta >= 0.0)) {
    warn("pruning threshold " + format_g(theta, 6) + " is negative; model left unchanged");
    report.size_after = report.size_before;
    return {lm, report};
  }

  BackoffLM pruned = lm;
  do {
    ++report.sweeps;
  } while (detail::prune_sweep(pruned, theta, report.removed) > 0 && opts.until_stable);
  pruned.recompute_backoffs();
  pruned.metadata().smoothing = lm.metadata().smoothing + " + entropy pruning";
  report.size_after = pruned.total_size();
  return {std::move(pruned), report};
}

inline std::string format_prune_report(const PruneReport& r) {
  std::ostringstream out;
  out << "theta\t" << format_g(r.theta, 10) << '\n';
  out << "order\toriginal\tremoved\tretained\n";
  for (std::size_t k = 0; k < r.original.size(); ++k)
    out << k + 1 << '\t' << r.original[k] << '\t' << r.removed[k] << '\t' << r.original[k] - r.removed[k] << '\n';
  out << "total\t" << r.size_before << '\t' << r.size_before - r.size_after << '\t' << r.size_after << '\n';
  return out.str();
}

}  // namespace lmkit

#endif  // LMKIT_PRUNE_HPP
