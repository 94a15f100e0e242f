#ifndef LMKIT_ARPA_HPP
#define LMKIT_ARPA_HPP

#include <filesystem>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lmkit/backoff_lm.hpp"

namespace lmkit {

inline constexpr int kArpaDigits = 7;

/// ARPA back-off text format. Entries are written in n-gram id order, so
/// writing is deterministic and write(read(write(lm))) is byte-identical.
inline void write_arpa(const BackoffLM& lm, std::ostream& out) {
  const auto& vocab = lm.vocab();
  out << "\n\\data\\\n";
  for (int k = 1; k <= lm.order(); ++k) out << "ngram " << k << '=' << lm.size(k) << '\n';
  for (int k = 1; k <= lm.order(); ++k) {
    out << "\n\\" << k << "-grams:\n";
    for (const auto& g : lm.sorted_grams(k)) {
      const NGramEntry& e = lm.grams(k).at(g);
      out << format_g(e.log_prob, kArpaDigits) << '\t';
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (i) out << ' ';
        out << vocab.word(g[i]);
      }
      if (k < lm.order() && g.back() != vocab.eos()) out << '\t' << format_g(e.log_backoff, kArpaDigits);
      out << '\n';
    }
  }
  out << "\n\\end\\\n";
}

inline std::string format_arpa(const BackoffLM& lm) {
  std::ostringstream ss;
  write_arpa(lm, ss);
  return ss.str();
}

inline void write_arpa(const BackoffLM& lm, const std::filesystem::path& path) {
  write_file(path, format_arpa(lm));
}

namespace detail {

struct ArpaEntry {
  std::vector<std::string> words;
  double log_prob;
  double log_backoff;
};

}  // namespace detail

/// Parses an ARPA model. Text before `\data\` is ignored. The vocabulary is
/// the unigram section in file order, with missing reserved markers added.
inline BackoffLM read_arpa(std::istream& in, const std::string& source = "<arpa>") {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  bool found_data = false;
  while (next()) {
    if (trim(line) == "\\data\\") {
      found_data = true;
      break;
    }
  }
  if (!found_data) throw FormatError(source, lineno, "missing \\data\\ header");

  std::vector<std::size_t> declared;
  std::vector<std::size_t> declared_line;
  while (next()) {
    std::string_view t = trim(line);
    if (t.empty()) {
      if (!declared.empty()) break;
      continue;
    }
    if (t.rfind("ngram ", 0) != 0) {
      if (t.front() == '\\') break;
      throw FormatError(source, lineno, "expected 'ngram k=COUNT', got '" + std::string(t) + "'");
    }
    auto eq = t.find('=');
    if (eq == std::string_view::npos) throw FormatError(source, lineno, "malformed ngram count line");
    long long k = parse_int(trim(t.substr(6, eq - 6)), "ngram order");
    long long c = parse_int(trim(t.substr(eq + 1)), "ngram count");
    if (k != static_cast<long long>(declared.size()) + 1 || c < 0)
      throw FormatError(source, lineno, "ngram counts must be listed for k=1,2,... in order");
    declared.push_back(static_cast<std::size_t>(c));
    declared_line.push_back(lineno);
  }
  if (declared.empty()) throw FormatError(source, lineno, "no 'ngram k=COUNT' lines in header");
  const int order = static_cast<int>(declared.size());

  std::vector<std::vector<detail::ArpaEntry>> sections(static_cast<std::size_t>(order));
  int current = 0;
  bool ended = false;
  auto close_section = [&](std::size_t at_line) {
    if (current == 0) return;
    std::size_t got = sections[static_cast<std::size_t>(current - 1)].size();
    std::size_t want = declared[static_cast<std::size_t>(current - 1)];
    if (got != want) {
      throw FormatError(source, at_line,
                        "header declares ngram " + std::to_string(current) + "=" + std::to_string(want) +
                            " but section \\" + std::to_string(current) + "-grams: has " +
                            std::to_string(got) + " entries");
    }
  };
  // The header loop may already have consumed a section line.
  bool pending = !trim(line).empty() && trim(line).front() == '\\';
  while (pending || next()) {
    pending = false;
    std::string_view t = trim(line);
    if (t.empty()) continue;
    if (t == "\\end\\") {
      close_section(lineno);
      ended = true;
      break;
    }
    if (t.front() == '\\') {
      close_section(lineno);
      std::string s(t);
      auto dash = s.find("-grams:");
      if (dash == std::string::npos) throw FormatError(source, lineno, "unknown section '" + s + "'");
      long long k = parse_int(s.substr(1, dash - 1), "section order");
      if (k != current + 1 || k > order)
        throw FormatError(source, lineno, "unexpected section '" + s + "'");
      current = static_cast<int>(k);
      continue;
    }
    if (current == 0) throw FormatError(source, lineno, "n-gram entry outside of a section");
    auto fields = split_whitespace(t);
    const auto k = static_cast<std::size_t>(current);
    if (fields.size() != k + 1 && fields.size() != k + 2)
      throw FormatError(source, lineno,
                        "expected " + std::to_string(k + 1) + " or " + std::to_string(k + 2) + " fields, got " +
                            std::to_string(fields.size()));
    detail::ArpaEntry e;
    try {
      e.log_prob = parse_double(fields[0], "log probability");
      e.log_backoff = fields.size() == k + 2 ? parse_double(fields.back(), "back-off weight") : 0.0;
    } catch (const Error& err) {
      throw FormatError(source, lineno, err.what());
    }
    e.words.assign(fields.begin() + 1, fields.begin() + 1 + static_cast<std::ptrdiff_t>(k));
    sections[k - 1].push_back(std::move(e));
  }
  if (!ended) throw FormatError(source, lineno, "missing \\end\\ marker");
  for (int k = 1; k <= order; ++k) {
    if (sections[static_cast<std::size_t>(k - 1)].size() != declared[static_cast<std::size_t>(k - 1)]) {
      throw FormatError(source, declared_line[static_cast<std::size_t>(k - 1)],
                        "header declares ngram " + std::to_string(k) + "=" +
                            std::to_string(declared[static_cast<std::size_t>(k - 1)]) + " but section has " +
                            std::to_string(sections[static_cast<std::size_t>(k - 1)].size()) + " entries");
    }
  }

  std::vector<std::string> words;
  for (const auto& e : sections[0]) words.push_back(e.words[0]);
  Vocabulary vocab(words);
  BackoffLM lm(order, vocab);
  for (int k = 1; k <= order; ++k) {
    for (const auto& e : sections[static_cast<std::size_t>(k - 1)]) {
      NGram g;
      for (const auto& w : e.words) {
        WordId id = vocab.id(w);
        if (id == kNoWord) throw Error(source + ": n-gram uses word '" + w + "' missing from the unigram section");
        g.push_back(id);
      }
      if (lm.contains(g)) throw Error(source + ": duplicate n-gram '" + join(e.words, " ") + "'");
      lm.set(g, NGramEntry{e.log_prob, e.log_backoff});
    }
  }
  lm.metadata().smoothing = "arpa";
  return lm;
}

inline BackoffLM read_arpa(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  return read_arpa(in, path.string());
}

inline BackoffLM parse_arpa(const std::string& text) {
  std::istringstream ss(text);
  return read_arpa(ss);
}

}  // namespace lmkit

#endif  // LMKIT_ARPA_HPP
