#ifndef LMKIT_MIXTURE_HPP
#define LMKIT_MIXTURE_HPP

// Linear interpolation of back-off models: EM estimation of the mixture
// weights on held-out text, dynamic mixture scoring, and static merging
// into a single back-off model.

#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmkit/backoff_lm.hpp"
#include "lmkit/evaluate.hpp"

namespace lmkit {

struct InterpolationWeights {
  std::vector<std::string> ids;   // component ids, aligned with weights
  std::vector<double> weights;
  double dev_log_likelihood = 0.0;  // log10, at the returned weights
  std::vector<double> history;      // log10 likelihood at every iterate, starting with init
  int iterations = 0;
};

struct EmOptions {
  std::optional<std::vector<double>> init;
  double tol = 1e-7;  // stop once the log10 likelihood improves by less than this
  int max_iter = 200;
};

inline void check_simplex(std::span<const double> w, double tolerance, const std::string& what) {
  if (w.empty()) throw Error(what + ": no weights");
  double sum = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(what + ": weights must be finite and non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > tolerance) throw Error(what + ": weights sum to " + format_g(sum, 12) + ", not 1");
}

/// EM over a fixed matrix of component probabilities, probs[t][i] =
/// p_i(w_t | h_t) (linear). Each iteration applies
///   lambda_i <- (1/M) sum_t lambda_i p_i(t) / sum_j lambda_j p_j(t),
/// which never decreases the held-out likelihood.
inline InterpolationWeights em_from_probabilities(const std::vector<std::vector<double>>& probs,
                                                  std::size_t components, const EmOptions& opts = {}) {
  if (components == 0) throw Error("mixture needs at least one component");
  if (probs.empty()) throw Error("EM needs at least one held-out position");
  std::vector<double> lambda = opts.init.value_or(std::vector<double>(components, 1.0 / static_cast<double>(components)));
  if (lambda.size() != components) throw Error("initial weights do not match the number of components");
  check_simplex(lambda, 1e-9, "initial weights");

  InterpolationWeights out;
  std::vector<double> posterior_sum(components);
  auto e_step = [&](const std::vector<double>& lam, bool accumulate) {
    double ll = 0.0;
    std::fill(posterior_sum.begin(), posterior_sum.end(), 0.0);
    for (const auto& row : probs) {
      double mix = 0.0;
      for (std::size_t i = 0; i < components; ++i) mix += lam[i] * row[i];
      if (!(mix > 0.0)) throw Error("mixture assigns zero probability to a held-out position");
      ll += std::log10(mix);
      if (accumulate)
        for (std::size_t i = 0; i < components; ++i) posterior_sum[i] += lam[i] * row[i] / mix;
    }
    return ll;
  };

  double ll = e_step(lambda, true);
  out.history.push_back(ll);
  for (int it = 0; it < opts.max_iter; ++it) {
    std::vector<double> next(components);
    for (std::size_t i = 0; i < components; ++i) next[i] = posterior_sum[i] / static_cast<double>(probs.size());
    double total = std::accumulate(next.begin(), next.end(), 0.0);
    for (double& x : next) x /= total;
    double next_ll = e_step(next, true);
    ++out.iterations;
    out.history.push_back(next_ll);
    lambda = std::move(next);
    const double gain = next_ll - ll;
    ll = next_ll;
    if (gain < opts.tol) break;
  }
  out.weights = lambda;
  out.dev_log_likelihood = ll;
  return out;
}

inline void check_shared_vocabulary(std::span<const BackoffLM> lms) {
  for (std::size_t i = 1; i < lms.size(); ++i)
    if (!lms[i].vocab().same_words(lms[0].vocab()))
      throw Error("mixture components use different vocabularies (component 0 vs " + std::to_string(i) + ")");
}

/// probs[t][i] for every predicted position of `corpus`; OOVs score as `<unk>`.
inline std::vector<std::vector<double>> component_probabilities(std::span<const BackoffLM> lms, const Corpus& corpus,
                                                                std::vector<bool>* oov = nullptr) {
  std::vector<std::vector<double>> probs;
  for (const auto& s : corpus.sentences()) {
    std::vector<std::vector<ScoredPosition>> per_lm;
    per_lm.reserve(lms.size());
    for (const auto& lm : lms) per_lm.push_back(score_sentence(lm, s));
    for (std::size_t t = 0; t < per_lm[0].size(); ++t) {
      std::vector<double> row(lms.size());
      for (std::size_t i = 0; i < lms.size(); ++i) row[i] = std::pow(10.0, per_lm[i][t].log10_prob);
      probs.push_back(std::move(row));
      if (oov) oov->push_back(per_lm[0][t].oov);
    }
  }
  return probs;
}

inline std::vector<std::string> component_ids(std::span<const BackoffLM> lms) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < lms.size(); ++i)
    ids.push_back(lms[i].metadata().corpus_id.empty() ? "lm" + std::to_string(i) : lms[i].metadata().corpus_id);
  return ids;
}

inline InterpolationWeights em_weights(std::span<const BackoffLM> lms, const Corpus& dev, const EmOptions& opts = {}) {
  if (lms.size() < 2) throw Error("EM weight estimation needs at least two component models");
  if (dev.empty()) throw Error("EM weight estimation needs a non-empty dev corpus");
  check_shared_vocabulary(lms);
  auto probs = component_probabilities(lms, dev);
  InterpolationWeights w = em_from_probabilities(probs, lms.size(), opts);
  w.ids = component_ids(lms);
  return w;
}

inline PerplexityReport perplexity_mixture(std::span<const BackoffLM> lms, std::span<const double> weights,
                                           const Corpus& corpus, OovPolicy policy = OovPolicy::kExclude) {
  if (lms.empty()) throw Error("mixture needs at least one component");
  if (weights.size() != lms.size()) throw Error("weights do not match the number of components");
  if (corpus.empty()) throw Error("perplexity of an empty corpus");
  check_shared_vocabulary(lms);
  check_simplex(weights, 1e-6, "mixture weights");
  std::vector<bool> oov;
  auto probs = component_probabilities(lms, corpus, &oov);
  PerplexityReport r;
  r.sentences = corpus.size();
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (oov[t] && policy == OovPolicy::kExclude) {
      ++r.oov_tokens;
      continue;
    }
    double mix = 0.0;
    for (std::size_t i = 0; i < lms.size(); ++i) mix += weights[i] * probs[t][i];
    if (!(mix > 0.0)) throw Error("mixture assigns zero probability to a position");
    r.log10_prob_sum += std::log10(mix);
    ++r.scored_tokens;
  }
  return finish_report(r);
}

/// Static merge: the union of all stored n-grams, each with the mixture
/// probability sum_i lambda_i p_i(w|h); back-off weights are recomputed so
/// every context normalizes.
inline BackoffLM interpolate_static(std::span<const BackoffLM> lms, std::span<const double> weights) {
  if (lms.empty()) throw Error("mixture needs at least one component");
  if (weights.size() != lms.size()) throw Error("weights do not match the number of components");
  check_shared_vocabulary(lms);
  check_simplex(weights, 1e-6, "mixture weights");
  const int order = lms[0].order();
  for (const auto& lm : lms)
    if (lm.order() != order) throw Error("static merge needs components of equal order");

  const Vocabulary& vocab = lms[0].vocab();
  // id maps from the merged (component 0) vocabulary into each component.
  std::vector<std::vector<WordId>> to_component(lms.size());
  for (std::size_t i = 0; i < lms.size(); ++i)
    for (const auto& w : vocab.words()) to_component[i].push_back(lms[i].vocab().id(w));

  BackoffLM merged(order, vocab);
  merged.metadata().smoothing = "static linear interpolation";
  for (int k = 1; k <= order; ++k) {
    NGramMap<char> keys;
    for (std::size_t i = 0; i < lms.size(); ++i) {
      for (const auto& [g, e] : lms[i].grams(k)) {
        NGram mapped;
        for (WordId w : g) mapped.push_back(vocab.id(lms[i].vocab().word(w)));
        keys.emplace(std::move(mapped), 0);
      }
    }
    NGram local;
    for (const auto& [g, unused] : keys) {
      if (g.back() == vocab.bos()) {
        merged.set(g, NGramEntry{kLogZero, 0.0});
        continue;
      }
      double p = 0.0;
      for (std::size_t i = 0; i < lms.size(); ++i) {
        local.clear();
        for (WordId w : g) local.push_back(to_component[i][static_cast<std::size_t>(w)]);
        std::span<const WordId> history(local.data(), local.size() - 1);
        p += weights[i] * std::pow(10.0, lms[i].prob(local.back(), history));
      }
      merged.set(g, NGramEntry{p > 0.0 ? std::max(kLogZero, std::log10(p)) : kLogZero, 0.0});
    }
  }
  merged.recompute_backoffs();
  return merged;
}

struct MergeDivergence {
  double stored = 0.0;      // max |log10 static - log10 dynamic| where the n-gram is stored
  double backed_off = 0.0;  // same, where the static model backs off
};

/// Diagnostic: how far the static merge departs from the dynamic mixture
/// on the positions of `corpus`. Only the stored part is exact.
inline MergeDivergence merge_divergence(std::span<const BackoffLM> lms, std::span<const double> weights,
                                        const BackoffLM& merged, const Corpus& corpus) {
  MergeDivergence d;
  const auto& vocab = merged.vocab();
  auto probs = component_probabilities(lms, corpus);
  std::size_t t = 0;
  for (const auto& s : corpus.sentences()) {
    NGram history{vocab.bos()};
    for (std::size_t i = 0; i <= s.size(); ++i, ++t) {
      WordId w = i == s.size() ? vocab.eos() : vocab.id_or_unk(s[i]);
      if (w == vocab.bos()) w = vocab.unk();
      double dynamic = 0.0;
      for (std::size_t c = 0; c < lms.size(); ++c) dynamic += weights[c] * probs[t][c];
      double diff = std::abs(merged.prob(w, history) - std::log10(dynamic));
      std::size_t ctx = std::min<std::size_t>(history.size(), static_cast<std::size_t>(merged.order() - 1));
      NGram full(history.end() - static_cast<std::ptrdiff_t>(ctx), history.end());
      full.push_back(w);
      double& slot = merged.contains(full) ? d.stored : d.backed_off;
      slot = std::max(slot, diff);
      history.push_back(w);
    }
  }
  return d;
}

inline InterpolationWeights read_weights(const std::filesystem::path& path) {
  InterpolationWeights w;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view t = trim(lines[i]);
    if (t.empty()) continue;
    auto parts = split(t, '\t');
    if (parts.size() != 2) throw FormatError(path.string(), i + 1, "expected 'lm_id<TAB>lambda'");
    try {
      w.weights.push_back(parse_double(parts[1], "lambda"));
    } catch (const Error& e) {
      throw FormatError(path.string(), i + 1, e.what());
    }
    w.ids.push_back(parts[0]);
  }
  check_simplex(w.weights, 1e-6, path.string());
  return w;
}

inline std::string format_weights(const InterpolationWeights& w) {
  std::string out;
  for (std::size_t i = 0; i < w.weights.size(); ++i) out += w.ids.at(i) + '\t' + format_g(w.weights[i], 17) + '\n';
  return out;
}

inline void write_weights(const InterpolationWeights& w, const std::filesystem::path& path) {
  write_file(path, format_weights(w));
}

}  // namespace lmkit

#endif  // LMKIT_MIXTURE_HPP
