#ifndef LMKIT_G2P_HPP
#define LMKIT_G2P_HPP

// Joint-sequence grapheme-to-phoneme conversion.
//
// A graphone pairs 1..Lg letters with 0..Lp phonemes. Training runs EM over
// all segmentations of every (spelling, pronunciation) pair under a
// maximum-likelihood graphone m-gram, then smooths: the most likely
// segmentation of each pair is fed to the modified Kneser-Ney trainer, and
// the resulting back-off model over graphone tokens is what decoding uses.
//
// Graphone tokens are spelled `letters}ph1|ph2`, with `\`, `}` and `|`
// escaped by a backslash.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lmkit/arpa.hpp"
#include "lmkit/lexicon.hpp"
#include "lmkit/mkn.hpp"
#include "lmkit/unicode.hpp"

namespace lmkit {

struct Graphone {
  std::vector<std::string> letters;  // code points
  Pronunciation phonemes;

  bool operator==(const Graphone&) const = default;
  auto operator<=>(const Graphone&) const = default;
};

namespace detail {

inline void append_escaped(std::string& out, std::string_view s) {
  for (char c : s) {
    if (c == '\\' || c == '}' || c == '|') out += '\\';
    out += c;
  }
}

}  // namespace detail

inline std::string encode_graphone(const Graphone& g) {
  std::string out;
  for (const auto& l : g.letters) detail::append_escaped(out, l);
  out += '}';
  for (std::size_t i = 0; i < g.phonemes.size(); ++i) {
    if (i) out += '|';
    detail::append_escaped(out, g.phonemes[i]);
  }
  return out;
}

inline Graphone decode_graphone(std::string_view token) {
  std::string letters;
  std::vector<std::string> phonemes;
  std::string current;
  bool in_phonemes = false;
  for (std::size_t i = 0; i < token.size(); ++i) {
    char c = token[i];
    if (c == '\\') {
      if (++i == token.size()) throw Error("graphone token '" + std::string(token) + "' ends in an escape");
      current += token[i];
    } else if (c == '}' && !in_phonemes) {
      letters = std::move(current);
      current.clear();
      in_phonemes = true;
    } else if (c == '|' && in_phonemes) {
      phonemes.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!in_phonemes) throw Error("'" + std::string(token) + "' is not a graphone token");
  if (!current.empty() || !phonemes.empty()) phonemes.push_back(std::move(current));
  Graphone g{unicode::code_points(letters), std::move(phonemes)};
  if (g.letters.empty()) throw Error("graphone token '" + std::string(token) + "' has no letters");
  return g;
}

/// A trained joint-sequence model: a back-off LM whose words are graphone
/// tokens, plus the lookup tables the decoder needs.
class JointSequenceModel {
 public:
  JointSequenceModel(int max_letters, int max_phonemes, BackoffLM lm)
      : lg_(max_letters), lp_(max_phonemes), lm_(std::move(lm)) {
    const auto& v = lm_.vocab();
    graphones_.resize(v.size());
    for (std::size_t id = 0; id < v.size(); ++id) {
      if (v.is_reserved(static_cast<WordId>(id))) continue;
      Graphone g = decode_graphone(v.word(static_cast<WordId>(id)));
      if (static_cast<int>(g.letters.size()) > lg_ || static_cast<int>(g.phonemes.size()) > lp_)
        throw Error("graphone '" + v.word(static_cast<WordId>(id)) + "' exceeds the model's size limits");
      for (const auto& l : g.letters) letters_.insert(l);
      std::string key;
      for (const auto& l : g.letters) key += l;
      by_letters_[key].push_back(static_cast<WordId>(id));
      graphones_[id] = std::move(g);
    }
  }

  int max_letters() const { return lg_; }
  int max_phonemes() const { return lp_; }
  int order() const { return lm_.order(); }
  const BackoffLM& lm() const { return lm_; }
  const Graphone& graphone(WordId id) const { return graphones_.at(static_cast<std::size_t>(id)); }
  std::size_t graphone_count() const {
    std::size_t n = 0;
    for (const auto& [k, ids] : by_letters_) n += ids.size();
    return n;
  }
  const std::set<std::string>& letters() const { return letters_; }
  /// Graphone ids whose letter side spells `letters` exactly.
  const std::vector<WordId>& graphones_for(const std::string& letters) const {
    static const std::vector<WordId> none;
    auto it = by_letters_.find(letters);
    return it == by_letters_.end() ? none : it->second;
  }

 private:
  int lg_;
  int lp_;
  BackoffLM lm_;
  std::vector<Graphone> graphones_;
  std::map<std::string, std::vector<WordId>> by_letters_;
  std::set<std::string> letters_;
};

struct G2POptions {
  int order = 3;
  int max_letters = 2;   // Lg
  int max_phonemes = 2;  // Lp
  int em_iters = 20;  // per order when ramping up
  double tol = 1e-6;  // move on once the training log10 likelihood improves by less than this
  // Estimate orders 1..order in turn instead of starting at the full order.
  // Starting a high-order model from uniform lets EM settle on implausible
  // alignments; growing the order keeps the unigram alignment as a guide.
  bool ramp_up = true;
  // Add the one-letter pieces of every selected graphone that pairs k
  // letters with k phonemes to the final vocabulary.
  bool letter_units = true;
};

struct SkippedEntry {
  std::string word;
  Pronunciation pronunciation;
  std::string reason;
};

struct G2PTraining {
  JointSequenceModel model;
  std::vector<double> log_likelihood;  // log10, starting with the uniform initialization
  int iterations = 0;
  std::vector<SkippedEntry> skipped;
  std::size_t entries = 0;  // (word, pronunciation) pairs used
};

namespace g2p_detail {

inline constexpr int kStart = 0;
inline constexpr int kEnd = 1;

struct Edge {
  std::size_t to;  // destination cell
  int graphone;
};

// Segmentation lattice of one (spelling, pronunciation) pair. Cells are
// (letters consumed, phonemes consumed), flattened row-major.
struct Lattice {
  std::size_t letters = 0;
  std::size_t phonemes = 0;
  std::vector<std::vector<Edge>> out;  // per cell
  std::size_t cell(std::size_t i, std::size_t j) const { return i * (phonemes + 1) + j; }
  std::size_t final_cell() const { return cell(letters, phonemes); }
};

using History = std::vector<int>;
using Table = std::map<std::vector<int>, double>;  // history + predicted id -> value

// Maximum-likelihood graphone m-gram; before the first M-step every
// continuation is equally likely. Lattice states carry the last
// state_order - 1 graphones, which may be more than the parameters look at;
// that is how the E-step collects counts for the next order up.
struct MlModel {
  int state_order = 1;
  int param_order = 1;
  bool uniform = true;
  double uniform_p = 0.0;
  Table p;

  double prob(const History& h, int g) const {
    if (uniform) return uniform_p;
    std::vector<int> key(h.end() - (param_order - 1), h.end());
    key.push_back(g);
    auto it = p.find(key);
    return it == p.end() ? 0.0 : it->second;
  }
  History next(const History& h, int g) const {
    if (h.empty()) return h;
    History out(h.begin() + 1, h.end());
    out.push_back(g);
    return out;
  }
  History start() const { return History(static_cast<std::size_t>(state_order - 1), kStart); }
};

struct Forward {
  std::vector<std::map<History, double>> alpha;
  double total = 0.0;
};

inline Forward forward(const Lattice& lat, const MlModel& m) {
  Forward f;
  f.alpha.resize(lat.final_cell() + 1);
  f.alpha[0][m.start()] = 1.0;
  for (std::size_t c = 0; c < f.alpha.size(); ++c) {
    for (const auto& [h, a] : f.alpha[c]) {
      for (const Edge& e : lat.out[c]) {
        double p = m.prob(h, e.graphone);
        if (p > 0.0) f.alpha[e.to][m.next(h, e.graphone)] += a * p;
      }
    }
  }
  for (const auto& [h, a] : f.alpha[lat.final_cell()]) f.total += a * m.prob(h, kEnd);
  return f;
}

// Adds the posterior expected counts of one lattice into `counts`; returns
// the pair's likelihood.
inline double accumulate(const Lattice& lat, const MlModel& m, Table& counts) {
  Forward f = forward(lat, m);
  if (!(f.total > 0.0)) return 0.0;
  std::vector<std::map<History, double>> beta(f.alpha.size());
  const std::size_t last = lat.final_cell();
  for (const auto& [h, a] : f.alpha[last]) beta[last][h] = m.prob(h, kEnd);
  for (std::size_t c = last; c-- > 0;) {
    for (const auto& [h, a] : f.alpha[c]) {
      double b = 0.0;
      for (const Edge& e : lat.out[c]) {
        double p = m.prob(h, e.graphone);
        if (p <= 0.0) continue;
        auto it = beta[e.to].find(m.next(h, e.graphone));
        if (it != beta[e.to].end()) b += p * it->second;
      }
      beta[c][h] = b;
    }
  }
  std::vector<int> key;
  for (std::size_t c = 0; c < last; ++c) {
    for (const auto& [h, a] : f.alpha[c]) {
      for (const Edge& e : lat.out[c]) {
        double p = m.prob(h, e.graphone);
        if (p <= 0.0) continue;
        auto it = beta[e.to].find(m.next(h, e.graphone));
        if (it == beta[e.to].end() || it->second <= 0.0) continue;
        key = h;
        key.push_back(e.graphone);
        counts[key] += a * p * it->second / f.total;
      }
    }
  }
  for (const auto& [h, a] : f.alpha[last]) {
    key = h;
    key.push_back(kEnd);
    counts[key] += a * m.prob(h, kEnd) / f.total;
  }
  return f.total;
}

inline MlModel maximize(const Table& counts, int order) {
  MlModel m;
  m.state_order = m.param_order = order;
  m.uniform = false;
  std::map<History, double> totals;
  for (const auto& [key, c] : counts) totals[History(key.begin(), key.end() - 1)] += c;
  for (const auto& [key, c] : counts) m.p[key] = c / totals.at(History(key.begin(), key.end() - 1));
  return m;
}

// Most likely graphone sequence through the lattice (ties keep the edge
// found first, so the result is deterministic).
inline std::vector<int> viterbi(const Lattice& lat, const MlModel& m) {
  struct Cell {
    double score;
    std::size_t from_cell;
    History from_history;
    int graphone;
  };
  std::vector<std::map<History, Cell>> best(lat.final_cell() + 1);
  best[0][m.start()] = Cell{0.0, 0, {}, -1};
  for (std::size_t c = 0; c < best.size(); ++c) {
    for (const auto& [h, cell] : best[c]) {
      for (const Edge& e : lat.out[c]) {
        double p = m.prob(h, e.graphone);
        if (p <= 0.0) continue;
        double s = cell.score + std::log(p);
        History nh = m.next(h, e.graphone);
        auto [it, fresh] = best[e.to].try_emplace(nh, Cell{s, c, h, e.graphone});
        if (!fresh && s > it->second.score) it->second = Cell{s, c, h, e.graphone};
      }
    }
  }
  const std::size_t last = lat.final_cell();
  const History* end_history = nullptr;
  double end_score = -INFINITY;
  for (const auto& [h, cell] : best[last]) {
    double p = m.prob(h, kEnd);
    if (p <= 0.0) continue;
    double s = cell.score + std::log(p);
    if (!end_history || s > end_score) {
      end_score = s;
      end_history = &h;
    }
  }
  if (!end_history) throw Error("no segmentation has non-zero probability");
  std::vector<int> path;
  std::size_t c = last;
  History h = *end_history;
  while (best[c].at(h).graphone != -1) {
    const Cell& cell = best[c].at(h);
    path.push_back(cell.graphone);
    History prev = cell.from_history;
    c = cell.from_cell;
    h = std::move(prev);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

}  // namespace g2p_detail

inline G2PTraining train_g2p(const Lexicon& lexicon, const G2POptions& opts = {}) {
  using namespace g2p_detail;
  if (lexicon.empty()) throw Error("G2P training needs a non-empty lexicon");
  if (opts.order < 1) throw Error("G2P model order must be at least 1");
  if (opts.max_letters < 1 || opts.max_phonemes < 1) throw Error("graphone size limits must be at least 1");
  if (opts.em_iters < 0) throw Error("EM iteration count must be non-negative");

  std::vector<Graphone> graphones;
  std::map<Graphone, int> graphone_ids;
  std::vector<Lattice> lattices;
  std::vector<SkippedEntry> skipped;
  auto intern = [&](Graphone g) {
    auto [it, fresh] = graphone_ids.try_emplace(g, static_cast<int>(graphones.size()) + 2);
    if (fresh) graphones.push_back(std::move(g));
    return it->second;
  };
  for (const auto& [word, prons] : lexicon.entries()) {
    auto letters = unicode::code_points(word);
    for (const auto& pron : prons) {
      const std::size_t lg = static_cast<std::size_t>(opts.max_letters);
      const std::size_t lp = static_cast<std::size_t>(opts.max_phonemes);
      if (pron.size() > lp * letters.size()) {
        skipped.push_back({word, pron,
                           std::to_string(pron.size()) + " phonemes cannot be spread over " +
                               std::to_string(letters.size()) + " letters with at most " + std::to_string(lp) +
                               " phonemes per graphone"});
        warn("G2P training skips '" + word + "': " + skipped.back().reason);
        continue;
      }
      Lattice lat;
      lat.letters = letters.size();
      lat.phonemes = pron.size();
      lat.out.resize(lat.final_cell() + 1);
      for (std::size_t i = 0; i < lat.letters; ++i)
        for (std::size_t j = 0; j <= lat.phonemes; ++j)
          for (std::size_t a = 1; a <= lg && i + a <= lat.letters; ++a)
            for (std::size_t b = 0; b <= lp && j + b <= lat.phonemes; ++b) {
              Graphone g{{letters.begin() + static_cast<std::ptrdiff_t>(i),
                          letters.begin() + static_cast<std::ptrdiff_t>(i + a)},
                         {pron.begin() + static_cast<std::ptrdiff_t>(j), pron.begin() + static_cast<std::ptrdiff_t>(j + b)}};
              lat.out[lat.cell(i, j)].push_back(Edge{lat.cell(i + a, j + b), intern(std::move(g))});
            }
      lattices.push_back(std::move(lat));
    }
  }
  if (lattices.empty()) throw Error("no lexicon entry can be segmented within the graphone size limits");

  MlModel model;
  model.uniform_p = 1.0 / static_cast<double>(graphones.size() + 1);
  auto e_step = [&](const MlModel& m, Table& counts) {
    counts.clear();
    double ll = 0.0;
    for (const auto& lat : lattices) ll += std::log10(accumulate(lat, m, counts));
    return ll;
  };

  // Each stage re-estimates at one order, starting from the previous stage's
  // model. A higher-order family contains the lower-order model, so the
  // likelihood keeps rising across stage boundaries too.
  std::vector<int> stages;
  for (int k = opts.ramp_up ? 1 : opts.order; k <= opts.order; ++k) stages.push_back(k);
  std::vector<double> history;
  Table counts;
  int iterations = 0;
  double ll = 0.0;
  bool saturated = false;
  for (int stage : stages) {
    if (opts.em_iters == 0 || saturated) break;
    model.state_order = stage;
    ll = e_step(model, counts);
    if (history.empty()) history.push_back(ll);
    for (int it = 0; it < opts.em_iters; ++it) {
      model = maximize(counts, stage);
      double next = e_step(model, counts);
      history.push_back(next);
      ++iterations;
      const double gain = next - ll;
      ll = next;
      // A log-likelihood of zero cannot improve further.
      saturated = ll >= -1e-12;
      if (gain < opts.tol || saturated) break;
    }
  }
  if (history.empty()) history.push_back(e_step(model, counts));
  model.state_order = opts.order;

  Corpus segmented("g2p");
  std::set<std::string> pieces;
  for (const auto& lat : lattices) {
    Sentence tokens;
    for (int id : viterbi(lat, model)) {
      const Graphone& g = graphones[static_cast<std::size_t>(id - 2)];
      tokens.push_back(encode_graphone(g));
      if (opts.letter_units && g.letters.size() > 1 && g.letters.size() == g.phonemes.size())
        for (std::size_t i = 0; i < g.letters.size(); ++i) pieces.insert(encode_graphone({{g.letters[i]}, {g.phonemes[i]}}));
    }
    segmented.add_sentence(std::move(tokens));
  }
  // Letter-aligned pieces of the selected graphones join the vocabulary with
  // zero counts, so words whose letters never line up with a learned
  // multi-letter unit can still be segmented.
  Vocabulary vocab = build_vocabulary(segmented);
  for (const auto& p : pieces) vocab.add(p);
  BackoffLM lm = train_lm(segmented, opts.order, vocab);
  lm.metadata().smoothing = "modified Kneser-Ney over graphones";
  return G2PTraining{JointSequenceModel(opts.max_letters, opts.max_phonemes, std::move(lm)), std::move(history),
                     iterations, std::move(skipped), lattices.size()};
}

struct G2PHypothesis {
  Pronunciation phonemes;
  double log10_score = 0.0;  // joint log10 probability of the best segmentation
};

inline constexpr std::size_t kDefaultBeam = 64;

/// Beam search over graphone sequences spelling `word`. Hypotheses are
/// recombined when they share the LM history and the phonemes so far; each
/// letter position keeps the `beam` best. Results are distinct, non-empty
/// pronunciations ranked by score, then lexicographically.
inline std::vector<G2PHypothesis> apply_g2p(const JointSequenceModel& model, std::string_view word,
                                            std::size_t beam = kDefaultBeam, std::size_t n_best = 1) {
  if (word.empty()) throw Error("cannot transduce an empty word");
  if (beam < 1) throw Error("beam must be at least 1");
  if (n_best < 1) throw Error("n_best must be at least 1");
  auto letters = unicode::code_points(word);
  std::set<std::string> unseen;
  for (const auto& l : letters)
    if (!model.letters().count(l)) unseen.insert(l);
  if (!unseen.empty())
    throw Error("cannot transduce '" + std::string(word) + "': letters never seen in training: " +
                join(std::vector<std::string>(unseen.begin(), unseen.end()), " "));

  const BackoffLM& lm = model.lm();
  const std::size_t context = static_cast<std::size_t>(model.order() - 1);
  struct Key {
    NGram history;
    Pronunciation phonemes;
    auto operator<=>(const Key&) const = default;
  };
  std::vector<std::map<Key, double>> at(letters.size() + 1);
  at[0][Key{{lm.vocab().bos()}, {}}] = 0.0;

  auto ranked = [](const std::map<Key, double>& hyps) {
    std::vector<std::pair<Key, double>> v(hyps.begin(), hyps.end());
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first.phonemes < b.first.phonemes;
    });
    return v;
  };

  for (std::size_t i = 0; i < letters.size(); ++i) {
    auto hyps = ranked(at[i]);
    if (hyps.size() > beam) hyps.resize(beam);
    std::string span;
    for (std::size_t a = 1; a <= static_cast<std::size_t>(model.max_letters()) && i + a <= letters.size(); ++a) {
      span += letters[i + a - 1];
      for (WordId g : model.graphones_for(span)) {
        for (const auto& [key, score] : hyps) {
          Key next{key.history, key.phonemes};
          const auto& ph = model.graphone(g).phonemes;
          next.phonemes.insert(next.phonemes.end(), ph.begin(), ph.end());
          double s = score + lm.prob(g, key.history);
          next.history.push_back(g);
          if (next.history.size() > context) next.history.erase(next.history.begin());
          auto [it, fresh] = at[i + a].try_emplace(std::move(next), s);
          if (!fresh && s > it->second) it->second = s;
        }
      }
    }
  }

  std::map<Pronunciation, double> finished;
  for (const auto& [key, score] : at[letters.size()]) {
    if (key.phonemes.empty()) continue;
    double s = score + lm.prob(lm.vocab().eos(), key.history);
    auto [it, fresh] = finished.try_emplace(key.phonemes, s);
    if (!fresh && s > it->second) it->second = s;
  }
  if (finished.empty())
    throw Error("cannot transduce '" + std::string(word) + "': no graphone sequence spells it");
  std::vector<G2PHypothesis> out;
  for (auto& [p, s] : finished) out.push_back({p, s});
  std::stable_sort(out.begin(), out.end(), [](const G2PHypothesis& a, const G2PHypothesis& b) {
    if (a.log10_score != b.log10_score) return a.log10_score > b.log10_score;
    return a.phonemes < b.phonemes;
  });
  out.resize(std::min({out.size(), n_best, beam}));
  return out;
}

struct ExtendedEntry {
  std::string word;
  Pronunciation phonemes;
  double log10_score = 0.0;
};

struct ExtendReport {
  std::vector<ExtendedEntry> added;  // every G2P pronunciation is provisional
  std::vector<std::pair<std::string, std::string>> failures;  // (word, message)
  std::size_t already_present = 0;
};

inline std::pair<Lexicon, ExtendReport> extend_lexicon(const Lexicon& lexicon, const std::vector<std::string>& words,
                                                       const JointSequenceModel& model,
                                                       std::size_t beam = kDefaultBeam, std::size_t n_best = 1) {
  Lexicon out = lexicon;
  ExtendReport report;
  std::set<std::string> seen;
  for (const auto& word : words) {
    if (!seen.insert(word).second) continue;
    if (lexicon.contains(word)) {
      ++report.already_present;
      continue;
    }
    try {
      auto hyps = apply_g2p(model, word, beam, n_best);
      Lexicon staged = out;
      for (const auto& h : hyps) staged.add(word, h.phonemes);
      out = std::move(staged);
      for (const auto& h : hyps) report.added.push_back({word, h.phonemes, h.log10_score});
    } catch (const Error& e) {
      report.failures.emplace_back(word, e.what());
    }
  }
  if (!report.failures.empty())
    warn(std::to_string(report.failures.size()) + " word(s) could not be added to the lexicon");
  return {std::move(out), report};
}

inline std::string format_extend_report(const ExtendReport& r) {
  std::ostringstream out;
  out << "# added\t" << r.added.size() << "\tfailed\t" << r.failures.size() << "\talready_present\t"
      << r.already_present << '\n';
  for (const auto& e : r.added)
    out << e.word << '\t' << join(e.phonemes, " ") << '\t' << format_g(e.log10_score, 7) << "\tprovisional\n";
  for (const auto& [word, message] : r.failures) out << word << "\tFAILED\t" << message << '\n';
  return out.str();
}

inline constexpr std::string_view kG2PMagic = "lmkit-g2p";

inline std::string format_g2p_model(const JointSequenceModel& model) {
  return std::string(kG2PMagic) + "\tmax_letters=" + std::to_string(model.max_letters()) +
         "\tmax_phonemes=" + std::to_string(model.max_phonemes()) + '\n' + format_arpa(model.lm());
}

inline void write_g2p_model(const JointSequenceModel& model, const std::filesystem::path& path) {
  write_file(path, format_g2p_model(model));
}

inline JointSequenceModel parse_g2p_model(const std::string& text, const std::string& source = "<g2p>") {
  auto newline = text.find('\n');
  if (newline == std::string::npos) throw FormatError(source, 1, "not a G2P model file");
  auto header = split(std::string_view(text).substr(0, newline), '\t');
  if (header.size() != 3 || header[0] != kG2PMagic || !header[1].starts_with("max_letters=") ||
      !header[2].starts_with("max_phonemes="))
    throw FormatError(source, 1, "not a G2P model file");
  int lg = 0;
  int lp = 0;
  try {
    lg = static_cast<int>(parse_int(std::string_view(header[1]).substr(12), "max_letters"));
    lp = static_cast<int>(parse_int(std::string_view(header[2]).substr(13), "max_phonemes"));
  } catch (const Error& e) {
    throw FormatError(source, 1, e.what());
  }
  std::istringstream arpa(text.substr(newline + 1));
  return JointSequenceModel(lg, lp, read_arpa(arpa, source));
}

inline JointSequenceModel read_g2p_model(const std::filesystem::path& path) {
  return parse_g2p_model(read_file(path), path.string());
}

}  // namespace lmkit

#endif  // LMKIT_G2P_HPP
