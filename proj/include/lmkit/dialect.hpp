#ifndef LMKIT_DIALECT_HPP
#define LMKIT_DIALECT_HPP

// Dialect-word normalization: rank frequent words missing from a standard
// vocabulary as mapping candidates, apply a curated word-to-word mapping to
// corpora, and compare LMs trained before and after the mapping.

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lmkit/recipe.hpp"

namespace lmkit {

struct MappingEntry {
  std::string target;
  std::string note;
};

class MappingTable {
 public:
  void add(const std::string& from, const std::string& to, std::string note = {}) {
    if (from.empty() || to.empty()) throw Error("mapping words must be non-empty");
    if (from == to) throw Error("'" + from + "' maps to itself");
    if (!pairs_.emplace(from, MappingEntry{to, std::move(note)}).second)
      throw Error("'" + from + "' is mapped more than once");
  }
  const std::string* lookup(const std::string& word) const {
    auto it = pairs_.find(word);
    return it == pairs_.end() ? nullptr : &it->second.target;
  }
  const std::map<std::string, MappingEntry>& pairs() const { return pairs_; }
  std::size_t size() const { return pairs_.size(); }
  bool empty() const { return pairs_.empty(); }

 private:
  std::map<std::string, MappingEntry> pairs_;
};

inline MappingTable parse_mapping(const std::vector<std::string>& lines, const std::string& source) {
  MappingTable table;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view t = trim(lines[i]);
    if (t.empty() || t.front() == '#') continue;
    auto fields = split(lines[i], '\t');
    if (fields.size() < 2 || fields.size() > 3)
      throw FormatError(source, i + 1, "expected 'dialect_word<TAB>msa_word[<TAB>note]'");
    try {
      table.add(std::string(trim(fields[0])), std::string(trim(fields[1])), fields.size() == 3 ? fields[2] : "");
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(source, i + 1, e.what());
    }
  }
  return table;
}

inline MappingTable read_mapping(const std::filesystem::path& path) {
  return parse_mapping(read_lines(path), path.string());
}

inline std::string format_mapping(const MappingTable& table) {
  std::string out;
  for (const auto& [from, e] : table.pairs()) out += from + '\t' + e.target + (e.note.empty() ? "" : '\t' + e.note) + '\n';
  return out;
}

/// The k most frequent words of `corpus` that `exclusion` does not contain,
/// by descending count, ties broken lexicographically.
inline std::vector<WordCount> select_candidates(const Corpus& corpus, std::size_t k, const Vocabulary& exclusion) {
  if (k < 1) throw Error("candidate count k must be at least 1");
  std::vector<WordCount> out;
  for (auto& wc : word_frequencies(corpus)) {
    if (exclusion.contains(wc.first) || wc.first == kUnk) continue;
    out.push_back(std::move(wc));
    if (out.size() == k) break;
  }
  return out;
}

inline std::string format_candidates(const std::vector<WordCount>& candidates) {
  std::string out;
  for (const auto& [w, c] : candidates) out += w + '\t' + std::to_string(c) + '\n';
  return out;
}

/// Replaces every token that is a table key by its target, once; targets
/// are never looked up again.
inline Corpus apply_mapping(const Corpus& corpus, const MappingTable& table, std::size_t* replaced = nullptr) {
  Corpus out(corpus.id());
  std::size_t n = 0;
  for (const auto& s : corpus.sentences()) {
    Sentence mapped;
    mapped.reserve(s.size());
    for (const auto& w : s) {
      const std::string* target = table.lookup(w);
      n += target != nullptr;
      mapped.push_back(target ? *target : w);
    }
    out.add_sentence(std::move(mapped));
  }
  if (replaced) *replaced = n;
  return out;
}

struct MappedEvaluation {
  PerplexityReport before;
  PerplexityReport after;
  InterpolationWeights weights_before;
  InterpolationWeights weights_after;
  std::size_t replaced_train_tokens = 0;
  std::size_t replaced_eval_tokens = 0;
};

/// Trains the recipe on the raw and on the mapped training corpora and
/// evaluates each on `eval`. With `map_eval_text` the "after" side also
/// sees mapped evaluation text (and fits its weights on mapped dev text).
inline MappedEvaluation mapped_lm_eval(std::span<const Corpus> train, const Corpus& dev, const Corpus& eval,
                                       const MappingTable& table, const LmRecipe& recipe, bool map_eval_text = true) {
  MappedEvaluation r;
  TrainedLms raw = train_recipe(train, dev, recipe);
  r.before = evaluate_recipe(raw, eval, recipe.oov);
  r.weights_before = raw.weights;

  std::vector<Corpus> mapped;
  for (const auto& c : train) {
    std::size_t n = 0;
    mapped.push_back(apply_mapping(c, table, &n));
    r.replaced_train_tokens += n;
  }
  Corpus mapped_dev = map_eval_text ? apply_mapping(dev, table) : dev;
  Corpus mapped_eval = map_eval_text ? apply_mapping(eval, table, &r.replaced_eval_tokens) : eval;
  TrainedLms after = train_recipe(mapped, mapped_dev, recipe);
  r.after = evaluate_recipe(after, mapped_eval, recipe.oov);
  r.weights_after = after.weights;
  return r;
}

/// Same, evaluating on the dev text itself.
inline MappedEvaluation mapped_lm_eval(std::span<const Corpus> train, const Corpus& dev, const MappingTable& table,
                                       const LmRecipe& recipe, bool map_eval_text = true) {
  return mapped_lm_eval(train, dev, dev, table, recipe, map_eval_text);
}

inline std::string format_mapped_evaluation(const MappedEvaluation& r) {
  auto row = [](const std::string& name, const PerplexityReport& p) {
    return name + '\t' + format_g(p.ppl, 10) + '\t' + std::to_string(p.scored_tokens) + '\t' +
           std::to_string(p.oov_tokens) + '\t' + format_g(p.log10_prob_sum, 12) + '\n';
  };
  return "model\tppl\tscored\toov\tlog10_prob\n" + row("before", r.before) + row("after", r.after) +
         "replaced_train_tokens\t" + std::to_string(r.replaced_train_tokens) + "\nreplaced_eval_tokens\t" +
         std::to_string(r.replaced_eval_tokens) + '\n';
}

}  // namespace lmkit

#endif  // LMKIT_DIALECT_HPP
