#ifndef LMKIT_SCORING_HPP
#define LMKIT_SCORING_HPP

// Word and character error rates from Levenshtein alignments.
//
// Costs are unit. Among minimal-cost alignments the DP prefers those with
// fewer deletions plus insertions (so more substitutions); that secondary
// cost makes the substitution count independent of which side is the
// reference. The backtrace then breaks remaining ties as
// match > substitution > deletion > insertion.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmkit/corpus.hpp"
#include "lmkit/unicode.hpp"

namespace lmkit {

enum class EditOp : char { kMatch = '=', kSubstitute = 'S', kDelete = 'D', kInsert = 'I' };

struct EditAlignment {
  std::size_t matches = 0;
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t ref_length = 0;
  std::vector<EditOp> ops;  // ref -> hyp, left to right

  std::size_t errors() const { return substitutions + deletions + insertions; }
  EditAlignment& operator+=(const EditAlignment& o) {
    matches += o.matches;
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    ref_length += o.ref_length;
    return *this;
  }
};

/// Replays an alignment on `ref`, taking inserted and substituted tokens
/// from `hyp`; a correct alignment reproduces `hyp`.
inline std::vector<std::string> replay(const EditAlignment& a, std::span<const std::string> ref,
                                       std::span<const std::string> hyp) {
  std::vector<std::string> out;
  std::size_t i = 0, j = 0;
  for (EditOp op : a.ops) {
    switch (op) {
      case EditOp::kMatch: out.push_back(ref[i++]); ++j; break;
      case EditOp::kSubstitute: out.push_back(hyp[j++]); ++i; break;
      case EditOp::kDelete: ++i; break;
      case EditOp::kInsert: out.push_back(hyp[j++]); break;
    }
  }
  return out;
}

inline EditAlignment align(std::span<const std::string> ref, std::span<const std::string> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  // (edits, deletions + insertions), compared lexicographically.
  using Cost = std::pair<std::size_t, std::size_t>;
  std::vector<Cost> dp((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Cost& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = {i, i};
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = {j, j};
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const Cost& diag = at(i - 1, j - 1);
      Cost best{diag.first + (ref[i - 1] == hyp[j - 1] ? 0 : 1), diag.second};
      best = std::min(best, Cost{at(i - 1, j).first + 1, at(i - 1, j).second + 1});
      best = std::min(best, Cost{at(i, j - 1).first + 1, at(i, j - 1).second + 1});
      at(i, j) = best;
    }
  }

  EditAlignment a;
  a.ref_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const Cost cur = at(i, j);
    if (i > 0 && j > 0 && ref[i - 1] == hyp[j - 1] && cur == at(i - 1, j - 1)) {
      a.ops.push_back(EditOp::kMatch);
      ++a.matches;
      --i, --j;
    } else if (i > 0 && j > 0 && cur == Cost{at(i - 1, j - 1).first + 1, at(i - 1, j - 1).second}) {
      a.ops.push_back(EditOp::kSubstitute);
      ++a.substitutions;
      --i, --j;
    } else if (i > 0 && cur == Cost{at(i - 1, j).first + 1, at(i - 1, j).second + 1}) {
      a.ops.push_back(EditOp::kDelete);
      ++a.deletions;
      --i;
    } else {
      a.ops.push_back(EditOp::kInsert);
      ++a.insertions;
      --j;
    }
  }
  std::reverse(a.ops.begin(), a.ops.end());
  return a;
}

/// Utterance id -> tokens, iterated in id order.
using Transcripts = std::map<std::string, std::vector<std::string>>;

inline Transcripts parse_transcripts(const std::vector<std::string>& lines, const std::string& source) {
  Transcripts t;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto tab = lines[i].find('\t');
    std::string id(trim(std::string_view(lines[i]).substr(0, tab)));
    if (id.empty()) throw FormatError(source, i + 1, "missing utterance id");
    if (!unicode::is_valid_utf8(lines[i])) throw FormatError(source, i + 1, "invalid UTF-8");
    auto tokens = tab == std::string::npos ? std::vector<std::string>{}
                                           : split_whitespace(std::string_view(lines[i]).substr(tab + 1));
    if (!t.emplace(id, std::move(tokens)).second)
      throw FormatError(source, i + 1, "duplicate utterance id '" + id + "'");
  }
  return t;
}

inline Transcripts read_transcripts(const std::filesystem::path& path) {
  return parse_transcripts(read_lines(path), path.string());
}

enum class ScoreUnit { kWord, kCharacter };

struct UtteranceScore {
  std::string id;
  EditAlignment alignment;
  bool missing_hypothesis = false;
};

struct ScoreReport {
  ScoreUnit unit = ScoreUnit::kWord;
  std::vector<UtteranceScore> utterances;  // id order
  EditAlignment total;                     // summed counts, no ops
  double percent = 0.0;                    // 100 (S+D+I)/N over the totals
  std::vector<std::string> missing;        // refs without a hypothesis, scored as empty
};

inline double error_percent(const EditAlignment& a) {
  if (a.ref_length == 0) return a.errors() == 0 ? 0.0 : INFINITY;
  return 100.0 * static_cast<double>(a.errors()) / static_cast<double>(a.ref_length);
}

namespace detail {

inline std::vector<std::string> characters(const std::vector<std::string>& tokens) {
  std::string joined;
  for (const auto& t : tokens) joined += t;
  return unicode::code_points(joined);
}

inline ScoreReport score(const Transcripts& refs, const Transcripts& hyps, ScoreUnit unit) {
  for (const auto& [id, tokens] : hyps)
    if (!refs.count(id)) throw Error("hypothesis '" + id + "' has no reference");
  ScoreReport r;
  r.unit = unit;
  static const std::vector<std::string> empty;
  for (const auto& [id, ref] : refs) {
    auto it = hyps.find(id);
    const bool missing = it == hyps.end();
    if (missing) r.missing.push_back(id);
    const auto& hyp = missing ? empty : it->second;
    EditAlignment a = unit == ScoreUnit::kWord ? align(ref, hyp) : align(characters(ref), characters(hyp));
    r.total += a;
    r.utterances.push_back({id, std::move(a), missing});
  }
  if (r.total.ref_length == 0) throw Error("references contain no tokens to score against");
  r.percent = error_percent(r.total);
  return r;
}

}  // namespace detail

inline ScoreReport wer(const Transcripts& refs, const Transcripts& hyps) {
  return detail::score(refs, hyps, ScoreUnit::kWord);
}

/// Character error rate: tokens are concatenated without spaces and split
/// into code points before alignment.
inline ScoreReport cer(const Transcripts& refs, const Transcripts& hyps) {
  return detail::score(refs, hyps, ScoreUnit::kCharacter);
}

/// 100 (base - improved) / base.
inline double relative_reduction(double base, double improved) {
  if (!(base > 0.0) || !std::isfinite(base)) throw Error("relative reduction needs a positive base rate");
  return 100.0 * (base - improved) / base;
}

namespace detail {

inline std::string fixed(double v, int decimals) {
  if (std::isinf(v)) return "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace detail

/// Tab-separated per-utterance and total counts. Passing a word report plus
/// a character report over the same utterances adds the CER columns.
inline std::string format_score_tsv(const ScoreReport& words, const ScoreReport* chars = nullptr) {
  if (chars && chars->utterances.size() != words.utterances.size())
    throw Error("word and character reports cover different utterances");
  std::string out = std::string("id\tN\tH\tS\tD\tI\t") + (words.unit == ScoreUnit::kWord ? "WER" : "CER");
  if (chars) out += "\tNc\tHc\tSc\tDc\tIc\tCER";
  out += '\n';
  auto row = [&](const std::string& id, const EditAlignment& w, const EditAlignment* c) {
    auto counts = [](const EditAlignment& a) {
      return std::to_string(a.ref_length) + '\t' + std::to_string(a.matches) + '\t' + std::to_string(a.substitutions) +
             '\t' + std::to_string(a.deletions) + '\t' + std::to_string(a.insertions) + '\t' +
             detail::fixed(error_percent(a), 4);
    };
    out += id + '\t' + counts(w);
    if (c) out += '\t' + counts(*c);
    out += '\n';
  };
  for (std::size_t i = 0; i < words.utterances.size(); ++i)
    row(words.utterances[i].id, words.utterances[i].alignment, chars ? &chars->utterances[i].alignment : nullptr);
  row("TOTAL", words.total, chars ? &chars->total : nullptr);
  return out;
}

/// Human-readable table with the same content, rates to two decimals.
inline std::string format_score_table(const ScoreReport& words, const ScoreReport* chars = nullptr) {
  if (chars && chars->utterances.size() != words.utterances.size())
    throw Error("word and character reports cover different utterances");
  std::size_t width = 5;
  for (const auto& u : words.utterances) width = std::max(width, u.id.size());
  std::string out;
  char buf[256];
  auto line = [&](const std::string& id, const EditAlignment& w, const EditAlignment* c) {
    std::snprintf(buf, sizeof buf, "%-*s %7zu %6zu %6zu %6zu %8s", static_cast<int>(width), id.c_str(), w.ref_length,
                  w.substitutions, w.deletions, w.insertions, detail::fixed(error_percent(w), 2).c_str());
    out += buf;
    if (c) {
      std::snprintf(buf, sizeof buf, " %7zu %6zu %6zu %6zu %8s", c->ref_length, c->substitutions, c->deletions,
                    c->insertions, detail::fixed(error_percent(*c), 2).c_str());
      out += buf;
    }
    out += '\n';
  };
  std::snprintf(buf, sizeof buf, "%-*s %7s %6s %6s %6s %8s", static_cast<int>(width), "id", "N", "S", "D", "I",
                words.unit == ScoreUnit::kWord ? "WER%" : "CER%");
  out += buf;
  if (chars) {
    std::snprintf(buf, sizeof buf, " %7s %6s %6s %6s %8s", "Nc", "Sc", "Dc", "Ic", "CER%");
    out += buf;
  }
  out += '\n';
  for (std::size_t i = 0; i < words.utterances.size(); ++i)
    line(words.utterances[i].id, words.utterances[i].alignment, chars ? &chars->utterances[i].alignment : nullptr);
  line("TOTAL", words.total, chars ? &chars->total : nullptr);
  if (!words.missing.empty()) out += "missing hypotheses (scored as empty): " + join(words.missing, " ") + '\n';
  return out;
}

}  // namespace lmkit

#endif  // LMKIT_SCORING_HPP
