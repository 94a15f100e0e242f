#ifndef LMKIT_NGRAM_COUNTS_HPP
#define LMKIT_NGRAM_COUNTS_HPP

#include <algorithm>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "lmkit/corpus.hpp"

namespace lmkit {

using NGram = std::vector<WordId>;

struct NGramHash {
  std::size_t operator()(const NGram& g) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (WordId w : g) {
      h ^= static_cast<std::uint32_t>(w);
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

template <typename Value>
using NGramMap = std::unordered_map<NGram, Value, NGramHash>;

inline NGram ngram_prefix(const NGram& g) { return NGram(g.begin(), g.end() - 1); }
inline NGram ngram_suffix(const NGram& g) { return NGram(g.begin() + 1, g.end()); }

/// Exact k-gram counts (1 <= k <= order) over `<s>`/`</s>` padded sentences.
/// `<s>` itself is never counted as a unigram.
struct NGramCountTable {
  int order = 0;
  Vocabulary vocab;
  std::vector<NGramMap<std::int64_t>> counts;        // counts[k-1]
  std::vector<NGramMap<std::int64_t>> continuation;  // continuation[k-1], k < order

  std::int64_t count(const NGram& g) const {
    if (g.empty() || static_cast<int>(g.size()) > order) return 0;
    const auto& m = counts[g.size() - 1];
    auto it = m.find(g);
    return it == m.end() ? 0 : it->second;
  }

  /// Number of distinct words v with c(v g) > 0.
  std::int64_t continuation_count(const NGram& g) const {
    if (g.empty() || static_cast<int>(g.size()) >= order) return 0;
    const auto& m = continuation[g.size() - 1];
    auto it = m.find(g);
    return it == m.end() ? 0 : it->second;
  }

  /// Count used by Kneser-Ney at this order: raw counts for the highest
  /// order and for n-grams that begin with `<s>` (they have no left
  /// context), continuation counts otherwise.
  std::int64_t adjusted_count(const NGram& g) const {
    if (static_cast<int>(g.size()) == order || g.front() == vocab.bos()) return count(g);
    return continuation_count(g);
  }

  std::size_t total_ngrams() const {
    std::size_t n = 0;
    for (const auto& m : counts) n += m.size();
    return n;
  }
};

inline void recompute_continuation(NGramCountTable& table) {
  table.continuation.assign(static_cast<std::size_t>(std::max(table.order - 1, 0)), {});
  for (int k = 2; k <= table.order; ++k) {
    auto& cont = table.continuation[static_cast<std::size_t>(k - 2)];
    for (const auto& [g, c] : table.counts[static_cast<std::size_t>(k - 1)]) {
      if (c > 0) ++cont[ngram_suffix(g)];
    }
  }
}

inline NGramCountTable count_ngrams(const Corpus& corpus, int order, const Vocabulary& vocab) {
  if (order < 1) throw Error("n-gram order must be >= 1");
  if (corpus.empty()) throw Error("cannot count n-grams of an empty corpus");
  NGramCountTable table;
  table.order = order;
  table.vocab = vocab;
  table.counts.assign(static_cast<std::size_t>(order), {});
  std::vector<WordId> padded;
  for (const auto& s : corpus.sentences()) {
    padded.clear();
    padded.push_back(vocab.bos());
    for (const auto& w : s) padded.push_back(vocab.id_or_unk(w));
    padded.push_back(vocab.eos());
    for (std::size_t end = 1; end < padded.size(); ++end) {
      for (int k = 1; k <= order && static_cast<std::size_t>(k) <= end + 1; ++k) {
        NGram g(padded.begin() + static_cast<std::ptrdiff_t>(end + 1 - static_cast<std::size_t>(k)),
                padded.begin() + static_cast<std::ptrdiff_t>(end + 1));
        ++table.counts[static_cast<std::size_t>(k - 1)][std::move(g)];
      }
    }
  }
  recompute_continuation(table);
  return table;
}

/// Pointwise sum of two tables over the same vocabulary and order;
/// continuation counts are rebuilt from the merged counts.
inline NGramCountTable merge_counts(const NGramCountTable& a, const NGramCountTable& b) {
  if (a.order != b.order) throw Error("cannot merge count tables of different order");
  if (!(a.vocab == b.vocab)) throw Error("cannot merge count tables over different vocabularies");
  NGramCountTable out = a;
  for (std::size_t k = 0; k < b.counts.size(); ++k)
    for (const auto& [g, c] : b.counts[k]) out.counts[k][g] += c;
  recompute_continuation(out);
  return out;
}

/// One `k<TAB>w1 ... wk<TAB>count<TAB>continuation` line per n-gram, by
/// order and then by id; the continuation column is `-` at the top order.
inline std::string format_counts(const NGramCountTable& table) {
  std::string out;
  for (int k = 1; k <= table.order; ++k) {
    const auto& m = table.counts[static_cast<std::size_t>(k - 1)];
    std::vector<NGram> grams;
    grams.reserve(m.size());
    for (const auto& [g, c] : m) grams.push_back(g);
    std::sort(grams.begin(), grams.end());
    for (const auto& g : grams) {
      out += std::to_string(k) + '\t';
      for (std::size_t i = 0; i < g.size(); ++i) out += (i ? " " : "") + table.vocab.word(g[i]);
      out += '\t' + std::to_string(m.at(g)) + '\t';
      out += k < table.order ? std::to_string(table.continuation_count(g)) : "-";
      out += '\n';
    }
  }
  return out;
}

}  // namespace lmkit

#endif  // LMKIT_NGRAM_COUNTS_HPP
