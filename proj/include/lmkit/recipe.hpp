#ifndef LMKIT_RECIPE_HPP
#define LMKIT_RECIPE_HPP

// The LM recipe shared by the pipeline and the dialect experiment: one
// model per training corpus over a shared vocabulary, interpolated with
// weights fitted on dev text, or a single model on the pooled text.

#include <optional>
#include <span>
#include <vector>

#include "lmkit/mixture.hpp"
#include "lmkit/mkn.hpp"

namespace lmkit {

struct LmRecipe {
  int order = 4;
  std::size_t min_count = 1;
  std::optional<std::size_t> max_vocab;  // including the reserved markers
  bool interpolate = true;
  OovPolicy oov = OovPolicy::kExclude;
  EmOptions em;
};

struct TrainedLms {
  Vocabulary vocab;
  std::vector<BackoffLM> lms;
  InterpolationWeights weights;  // a single model gets weight 1
};

inline Corpus pool_corpora(std::span<const Corpus> corpora) {
  std::string id;
  for (const auto& c : corpora) id += (id.empty() ? "" : "+") + c.id();
  Corpus pooled(id);
  for (const auto& c : corpora)
    for (const auto& s : c.sentences()) pooled.add_sentence(s);
  return pooled;
}

inline TrainedLms train_recipe(std::span<const Corpus> corpora, const Corpus& dev, const LmRecipe& recipe) {
  if (corpora.empty()) throw Error("no training corpora");
  TrainedLms out;
  out.vocab = build_vocabulary(corpora, recipe.min_count, recipe.max_vocab);
  if (recipe.interpolate && corpora.size() > 1) {
    for (const auto& c : corpora) out.lms.push_back(train_lm(c, recipe.order, out.vocab));
    out.weights = em_weights(out.lms, dev, recipe.em);
  } else {
    Corpus pooled = corpora.size() == 1 ? corpora[0] : pool_corpora(corpora);
    out.lms.push_back(train_lm(pooled, recipe.order, out.vocab));
    out.weights.ids = component_ids(out.lms);
    out.weights.weights = {1.0};
  }
  return out;
}

inline PerplexityReport evaluate_recipe(const TrainedLms& trained, const Corpus& text, OovPolicy policy) {
  if (trained.lms.size() == 1) return perplexity(trained.lms[0], text, policy);
  return perplexity_mixture(trained.lms, trained.weights.weights, text, policy);
}

}  // namespace lmkit

#endif  // LMKIT_RECIPE_HPP
