#ifndef LMKIT_CORPUS_HPP
#define LMKIT_CORPUS_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lmkit/unicode.hpp"
#include "lmkit/util.hpp"

namespace lmkit {

inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "<unk>";

using WordId = std::int32_t;
inline constexpr WordId kNoWord = -1;

using Sentence = std::vector<std::string>;

/// An ordered collection of normalized, tokenized sentences.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::string id) : id_(std::move(id)) {}
  Corpus(std::string id, std::vector<Sentence> sentences) : id_(std::move(id)) {
    for (auto& s : sentences) add_sentence(std::move(s));
  }

  const std::string& id() const { return id_; }
  const std::vector<Sentence>& sentences() const { return sentences_; }
  std::size_t size() const { return sentences_.size(); }
  bool empty() const { return sentences_.empty(); }
  std::size_t token_count() const { return token_count_; }

  void add_sentence(Sentence s) {
    token_count_ += s.size();
    sentences_.push_back(std::move(s));
  }

  bool operator==(const Corpus&) const = default;

 private:
  std::string id_;
  std::vector<Sentence> sentences_;
  std::size_t token_count_ = 0;
};

/// Dense word <-> index bijection. The three reserved markers are always
/// present; `<s>` only ever conditions and is never predicted.
class Vocabulary {
 public:
  Vocabulary() {
    add(std::string(kBos));
    add(std::string(kEos));
    add(std::string(kUnk));
  }

  /// Builds in the given order; missing reserved markers are appended.
  explicit Vocabulary(const std::vector<std::string>& words) : Vocabulary(words, FromList{}) {}

  WordId add(const std::string& word) {
    if (word.empty()) throw Error("vocabulary words must be non-empty");
    auto [it, inserted] = index_.emplace(word, static_cast<WordId>(words_.size()));
    if (inserted) {
      words_.push_back(word);
      if (word == kBos) bos_ = it->second;
      if (word == kEos) eos_ = it->second;
      if (word == kUnk) unk_ = it->second;
    }
    return it->second;
  }

  WordId id(std::string_view word) const {
    auto it = index_.find(std::string(word));
    return it == index_.end() ? kNoWord : it->second;
  }
  /// Unknown words map to `<unk>`.
  WordId id_or_unk(std::string_view word) const {
    WordId w = id(word);
    return w == kNoWord ? unk_ : w;
  }
  bool contains(std::string_view word) const { return id(word) != kNoWord; }
  const std::string& word(WordId id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  WordId bos() const { return bos_; }
  WordId eos() const { return eos_; }
  WordId unk() const { return unk_; }
  bool is_reserved(WordId id) const { return id == bos_ || id == eos_ || id == unk_; }
  /// Number of predictable words (everything except `<s>`).
  std::size_t predicted_size() const { return words_.size() - 1; }

  /// Same word set, ignoring index order.
  bool same_words(const Vocabulary& other) const {
    if (size() != other.size()) return false;
    return std::all_of(words_.begin(), words_.end(),
                       [&](const std::string& w) { return other.contains(w); });
  }

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  struct FromList {};
  Vocabulary(const std::vector<std::string>& words, FromList) {
    for (const auto& w : words) {
      if (contains(w)) throw Error("duplicate vocabulary word '" + w + "'");
      add(w);
    }
    if (bos_ == kNoWord) add(std::string(kBos));
    if (eos_ == kNoWord) add(std::string(kEos));
    if (unk_ == kNoWord) add(std::string(kUnk));
  }

  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
  WordId bos_ = kNoWord;
  WordId eos_ = kNoWord;
  WordId unk_ = kNoWord;
};

struct NormalizeOptions {
  bool lowercase = false;
  bool strip_punct = false;
};

/// NFC, optional lowercasing, optional punctuation stripping, then
/// whitespace collapse. Sentence markers in the text are dropped.
inline Sentence normalize_line(std::string_view line, const NormalizeOptions& opts) {
  std::string text = unicode::nfc(line);
  if (opts.lowercase) text = unicode::to_lower(text);
  if (opts.strip_punct) text = unicode::strip_punctuation(text);
  // Re-compose: lowercasing or stripping can leave decomposed sequences.
  if (opts.lowercase || opts.strip_punct) text = unicode::nfc(text);
  Sentence out;
  for (auto& tok : unicode::split_unicode_whitespace(text)) {
    if (tok == kBos || tok == kEos) continue;
    out.push_back(std::move(tok));
  }
  return out;
}

inline Corpus corpus_from_lines(std::string id, std::span<const std::string> lines,
                                const NormalizeOptions& opts = {},
                                const std::string& source = "<memory>") {
  Corpus corpus(std::move(id));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!unicode::is_valid_utf8(lines[i])) throw FormatError(source, i + 1, "invalid UTF-8");
    Sentence s = normalize_line(lines[i], opts);
    if (!s.empty()) corpus.add_sentence(std::move(s));
  }
  return corpus;
}

/// Convenience for tests and small fixtures: one sentence per '\n'.
inline Corpus corpus_from_text(std::string id, std::string_view text,
                               const NormalizeOptions& opts = {}) {
  std::vector<std::string> lines = split(text, '\n');
  return corpus_from_lines(std::move(id), lines, opts);
}

inline Corpus load_corpus(const std::filesystem::path& path, const NormalizeOptions& opts = {},
                          std::string id = {}) {
  if (id.empty()) id = path.stem().string();
  std::vector<std::string> lines = read_lines(path);
  return corpus_from_lines(std::move(id), lines, opts, path.string());
}

inline std::string format_corpus(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.sentences()) {
    out += join(s, " ");
    out += '\n';
  }
  return out;
}

inline void dump_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file(path, format_corpus(corpus));
}

using WordCount = std::pair<std::string, std::size_t>;

/// Descending count, ties broken lexicographically.
inline std::vector<WordCount> rank_counts(const std::unordered_map<std::string, std::size_t>& counts) {
  std::vector<WordCount> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const WordCount& a, const WordCount& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return ranked;
}

inline std::vector<WordCount> word_frequencies(const Corpus& corpus) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : corpus.sentences())
    for (const auto& w : s) ++counts[w];
  return rank_counts(counts);
}

inline Vocabulary build_vocabulary(std::span<const Corpus> corpora, std::size_t min_count = 1,
                                   std::optional<std::size_t> max_size = std::nullopt) {
  if (corpora.empty()) throw Error("build_vocabulary needs at least one corpus");
  if (min_count < 1) throw Error("min_count must be >= 1");
  if (max_size && *max_size < 3) throw Error("max_size must leave room for the 3 reserved markers");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& c : corpora)
    for (const auto& s : c.sentences())
      for (const auto& w : s)
        if (w != kUnk) ++counts[w];
  Vocabulary vocab;
  std::size_t limit = max_size ? *max_size - 3 : SIZE_MAX;
  std::size_t taken = 0;
  for (const auto& [word, count] : rank_counts(counts)) {
    if (count < min_count || taken >= limit) break;
    vocab.add(word);
    ++taken;
  }
  return vocab;
}

inline Vocabulary build_vocabulary(const Corpus& corpus, std::size_t min_count = 1,
                                   std::optional<std::size_t> max_size = std::nullopt) {
  return build_vocabulary(std::span<const Corpus>(&corpus, 1), min_count, max_size);
}

inline Vocabulary read_vocabulary(const std::filesystem::path& path) {
  std::vector<std::string> words;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto w = std::string(trim(lines[i]));
    if (w.empty()) continue;
    if (!unicode::is_valid_utf8(w)) throw FormatError(path.string(), i + 1, "invalid UTF-8");
    words.push_back(std::move(w));
  }
  return Vocabulary(words);
}

inline void write_vocabulary(const Vocabulary& vocab, const std::filesystem::path& path) {
  std::string out;
  for (const auto& w : vocab.words()) {
    out += w;
    out += '\n';
  }
  write_file(path, out);
}

struct CorpusStats {
  std::string id;
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::size_t types = 0;
};

inline CorpusStats corpus_stats(const Corpus& corpus) {
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& s : corpus.sentences())
    for (const auto& w : s) ++seen[w];
  return {corpus.id(), corpus.size(), corpus.token_count(), seen.size()};
}

inline std::string format_corpus_stats(std::span<const CorpusStats> stats) {
  std::string out = "id\tsentences\ttokens\ttypes\n";
  for (const auto& s : stats)
    out += s.id + '\t' + std::to_string(s.sentences) + '\t' + std::to_string(s.tokens) + '\t' +
           std::to_string(s.types) + '\n';
  return out;
}

}  // namespace lmkit

#endif  // LMKIT_CORPUS_HPP
