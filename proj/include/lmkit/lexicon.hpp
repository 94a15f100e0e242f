#ifndef LMKIT_LEXICON_HPP
#define LMKIT_LEXICON_HPP

// Pronunciation lexica: word -> set of phoneme sequences over a declared
// phoneme inventory. File format is one `word<TAB>ph1 ph2 ...` line per
// pronunciation; a word with several pronunciations repeats the word.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lmkit/util.hpp"

namespace lmkit {

using Pronunciation = std::vector<std::string>;
using PhonemeInventory = std::set<std::string>;

class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(PhonemeInventory inventory) : inventory_(std::move(inventory)), declared_(true) {}

  /// Adds a pronunciation; duplicates collapse. With a declared inventory
  /// unknown phonemes are rejected, otherwise the inventory grows.
  void add(const std::string& word, Pronunciation pron) {
    if (word.empty()) throw Error("lexicon word is empty");
    if (pron.empty()) throw Error("empty pronunciation for '" + word + "'");
    for (const auto& ph : pron) {
      if (declared_ && !inventory_.count(ph))
        throw Error("phoneme '" + ph + "' of '" + word + "' is not in the phoneme inventory");
      if (!declared_) inventory_.insert(ph);
    }
    entries_[word].insert(std::move(pron));
  }

  bool contains(const std::string& word) const { return entries_.count(word) > 0; }
  const std::set<Pronunciation>& pronunciations(const std::string& word) const {
    auto it = entries_.find(word);
    if (it == entries_.end()) throw Error("word '" + word + "' is not in the lexicon");
    return it->second;
  }
  const std::map<std::string, std::set<Pronunciation>>& entries() const { return entries_; }
  const PhonemeInventory& inventory() const { return inventory_; }
  bool inventory_declared() const { return declared_; }
  void declare_inventory(PhonemeInventory inventory) {
    for (const auto& [word, prons] : entries_)
      for (const auto& p : prons)
        for (const auto& ph : p)
          if (!inventory.count(ph)) throw Error("phoneme '" + ph + "' of '" + word + "' is not in the declared inventory");
    inventory_ = std::move(inventory);
    declared_ = true;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t pronunciation_count() const {
    std::size_t n = 0;
    for (const auto& [w, p] : entries_) n += p.size();
    return n;
  }

  bool operator==(const Lexicon& other) const {
    return entries_ == other.entries_ && inventory_ == other.inventory_;
  }

 private:
  std::map<std::string, std::set<Pronunciation>> entries_;
  PhonemeInventory inventory_;
  bool declared_ = false;
};

inline PhonemeInventory read_inventory(const std::filesystem::path& path) {
  PhonemeInventory inv;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view t = trim(lines[i]);
    if (t.empty()) continue;
    if (split_whitespace(t).size() != 1) throw FormatError(path.string(), i + 1, "expected one phoneme symbol per line");
    if (!inv.emplace(t).second) throw FormatError(path.string(), i + 1, "duplicate phoneme '" + std::string(t) + "'");
  }
  if (inv.empty()) throw Error(path.string() + ": phoneme inventory is empty");
  return inv;
}

inline void write_inventory(const PhonemeInventory& inv, const std::filesystem::path& path) {
  std::string out;
  for (const auto& ph : inv) out += ph + '\n';
  write_file(path, out);
}

inline Lexicon parse_lexicon(const std::vector<std::string>& lines, const std::string& source,
                             const std::optional<PhonemeInventory>& inventory = std::nullopt) {
  Lexicon lex = inventory ? Lexicon(*inventory) : Lexicon();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto tab = lines[i].find('\t');
    if (tab == std::string::npos) throw FormatError(source, i + 1, "expected 'word<TAB>phonemes'");
    std::string word(trim(std::string_view(lines[i]).substr(0, tab)));
    try {
      lex.add(word, split_whitespace(std::string_view(lines[i]).substr(tab + 1)));
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(source, i + 1, e.what());
    }
  }
  return lex;
}

inline Lexicon read_lexicon(const std::filesystem::path& path,
                            const std::optional<PhonemeInventory>& inventory = std::nullopt) {
  return parse_lexicon(read_lines(path), path.string(), inventory);
}

inline std::string format_lexicon(const Lexicon& lex) {
  std::string out;
  for (const auto& [word, prons] : lex.entries())
    for (const auto& p : prons) out += word + '\t' + join(p, " ") + '\n';
  return out;
}

inline void write_lexicon(const Lexicon& lex, const std::filesystem::path& path) {
  write_file(path, format_lexicon(lex));
}

enum class MergePolicy { kUnion, kAddonWins, kBaseWins };

inline MergePolicy parse_merge_policy(std::string_view s) {
  if (s == "union") return MergePolicy::kUnion;
  if (s == "addon_wins") return MergePolicy::kAddonWins;
  if (s == "base_wins") return MergePolicy::kBaseWins;
  throw Error("unknown merge policy '" + std::string(s) + "' (expected union, addon_wins or base_wins)");
}

struct MergeReport {
  std::size_t base_words = 0;
  std::size_t addon_words = 0;
  std::size_t shared_words = 0;
  std::size_t result_words = 0;
  std::size_t result_pronunciations = 0;
};

inline std::string format_merge_report(const MergeReport& r) {
  return "base_words\t" + std::to_string(r.base_words) + "\naddon_words\t" + std::to_string(r.addon_words) +
         "\nshared_words\t" + std::to_string(r.shared_words) + "\nresult_words\t" + std::to_string(r.result_words) +
         "\nresult_pronunciations\t" + std::to_string(r.result_pronunciations) + '\n';
}

/// Reads `addon_symbol<TAB>base_symbol` lines.
inline std::map<std::string, std::string> read_phoneme_mapping(const std::filesystem::path& path) {
  std::map<std::string, std::string> m;
  auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto parts = split(lines[i], '\t');
    if (parts.size() != 2 || parts[0].empty() || parts[1].empty())
      throw FormatError(path.string(), i + 1, "expected 'addon_phoneme<TAB>base_phoneme'");
    if (!m.emplace(parts[0], parts[1]).second)
      throw FormatError(path.string(), i + 1, "phoneme '" + parts[0] + "' mapped twice");
  }
  return m;
}

/// Merges two lexica. Every phoneme the addon uses must, after the optional
/// symbol mapping, belong to the base inventory. The result's inventory
/// is the union of both, so the union policy is symmetric.
inline std::pair<Lexicon, MergeReport> merge_lexicons(const Lexicon& base, const Lexicon& addon, MergePolicy policy,
                                                      const std::map<std::string, std::string>& mapping = {}) {
  auto map_phoneme = [&](const std::string& ph) {
    auto it = mapping.find(ph);
    return it == mapping.end() ? ph : it->second;
  };
  std::set<std::string> unknown;
  for (const auto& [word, prons] : addon.entries())
    for (const auto& p : prons)
      for (const auto& ph : p)
        if (!base.inventory().count(map_phoneme(ph))) unknown.insert(ph);
  PhonemeInventory inventory = base.inventory();
  for (const auto& ph : addon.inventory()) inventory.insert(map_phoneme(ph));
  if (!unknown.empty()) {
    std::vector<std::string> list(unknown.begin(), unknown.end());
    throw Error("addon lexicon uses phonemes outside the base inventory: " + join(list, " ") +
                (mapping.empty() ? " (supply a phoneme mapping)" : ""));
  }

  MergeReport report;
  report.base_words = base.size();
  report.addon_words = addon.size();
  Lexicon out(inventory);
  for (const auto& [word, prons] : base.entries()) {
    const bool shared = addon.contains(word);
    report.shared_words += shared;
    if (shared && policy == MergePolicy::kAddonWins) continue;
    for (const auto& p : prons) out.add(word, p);
  }
  for (const auto& [word, prons] : addon.entries()) {
    if (base.contains(word) && policy == MergePolicy::kBaseWins) continue;
    for (const auto& p : prons) {
      Pronunciation mapped;
      for (const auto& ph : p) mapped.push_back(map_phoneme(ph));
      out.add(word, std::move(mapped));
    }
  }
  report.result_words = out.size();
  report.result_pronunciations = out.pronunciation_count();
  return {std::move(out), report};
}

}  // namespace lmkit

#endif  // LMKIT_LEXICON_HPP
