#ifndef LMKIT_PIPELINE_HPP
#define LMKIT_PIPELINE_HPP

// End-to-end orchestration: LM training, weight estimation, combination,
// pruning and evaluation; lexicon extension and merging; the dialect
// mapping experiment. Every run writes a manifest.json next to its
// artifacts listing parameters, input hashes and output hashes.
//
// Config files are flat `key = value` lines (`#` starts a comment).
// Relative paths resolve against the config file's directory; paths given
// as command-line overrides resolve against the working directory.

#include <openssl/evp.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "lmkit/arpa.hpp"
#include "lmkit/corpus.hpp"
#include "lmkit/dialect.hpp"
#include "lmkit/g2p.hpp"
#include "lmkit/lexicon.hpp"
#include "lmkit/mixture.hpp"
#include "lmkit/ngram_counts.hpp"
#include "lmkit/prune.hpp"
#include "lmkit/recipe.hpp"
#include "lmkit/scoring.hpp"

namespace lmkit {

/// An error tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& cause)
      : Error("[" + stage + "] " + cause), stage_(std::move(stage)), cause_(cause) {}
  const std::string& stage() const { return stage_; }
  const std::string& cause() const { return cause_; }

 private:
  std::string stage_;
  std::string cause_;
};

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

/// A file named in the config: `given` is the text as written (recorded in
/// the manifest), `path` the resolved location.
struct InputFile {
  std::string key;
  std::string given;
  std::filesystem::path path;
};

struct CorpusInput {
  std::string id;
  InputFile file;
};

struct PipelineConfig {
  std::string language = "und";
  std::vector<CorpusInput> corpora;  // config order
  std::optional<InputFile> dev;
  std::optional<InputFile> test;
  NormalizeOptions normalize;
  LmRecipe lm;
  std::optional<double> prune_theta;
  bool prune_until_stable = false;
  std::uint64_t seed = 0;

  std::optional<InputFile> seed_lexicon;
  std::optional<InputFile> phoneme_inventory;
  std::optional<InputFile> lexicon_words;
  std::optional<InputFile> medical_lexicon;
  std::optional<InputFile> phoneme_map;
  G2POptions g2p;
  std::size_t g2p_beam = kDefaultBeam;
  std::size_t g2p_nbest = 1;
  MergePolicy merge_policy = MergePolicy::kUnion;

  std::optional<InputFile> mapping;
  bool map_eval_text = true;
  std::optional<std::string> dialect_corpus;  // a corpus id
  std::size_t dialect_candidates = 200;
  std::optional<InputFile> dialect_ref;
  std::optional<InputFile> dialect_hyp;

  std::filesystem::path output;
  /// Every effective setting except `output`, defaults included, as text.
  std::map<std::string, std::string> settings;

  std::vector<const InputFile*> input_files() const {
    std::vector<const InputFile*> out;
    for (const auto& c : corpora) out.push_back(&c.file);
    for (const auto* f : {&dev, &test, &seed_lexicon, &phoneme_inventory, &lexicon_words, &medical_lexicon,
                          &phoneme_map, &mapping, &dialect_ref, &dialect_hyp})
      if (*f) out.push_back(&**f);
    return out;
  }
};

namespace pipeline_detail {

struct Assignment {
  std::string value;
  std::filesystem::path base;  // for relative paths
  std::string origin;          // "file:line" or "--set"
};

inline bool valid_corpus_id(std::string_view id) {
  if (id.empty()) return false;
  for (char c : id)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return id != "." && id != "..";
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw Error("invalid boolean for " + key + ": '" + v + "'");
}

class ConfigBuilder {
 public:
  /// An empty value unsets the key.
  void assign(std::string key, std::string value, std::filesystem::path base, std::string origin) {
    if (key.rfind("corpus.", 0) == 0) {
      std::string id = key.substr(7);
      if (!valid_corpus_id(id)) throw Error(origin + ": invalid corpus id '" + id + "' (use letters, digits, _ - .)");
      std::erase(corpus_order_, id);
      if (!value.empty()) corpus_order_.push_back(id);
    }
    if (value.empty())
      values_.erase(key);
    else
      values_[key] = {std::move(value), std::move(base), std::move(origin)};
  }

  PipelineConfig build() {
    PipelineConfig c;
    c.language = text("language", c.language);
    for (const auto& id : corpus_order_) c.corpora.push_back({id, *file("corpus." + id)});
    c.dev = file("dev");
    c.test = file("test");
    c.normalize.lowercase = flag("lowercase", false);
    c.normalize.strip_punct = flag("strip_punct", false);
    c.lm.order = static_cast<int>(integer("order", 4));
    c.lm.min_count = static_cast<std::size_t>(integer("min_count", 1));
    if (auto v = optional_text("max_vocab")) c.lm.max_vocab = static_cast<std::size_t>(to_int(*v, "max_vocab"));
    c.lm.interpolate = flag("interpolate", true);
    c.lm.oov = parse_oov_policy(text("oov", "exclude"));
    c.lm.em.tol = number("em_tol", c.lm.em.tol);
    c.lm.em.max_iter = static_cast<int>(integer("em_max_iter", c.lm.em.max_iter));
    if (auto v = optional_text("prune_theta")) c.prune_theta = parse_double(*v, "prune_theta");
    c.prune_until_stable = flag("prune_until_stable", false);
    c.seed = static_cast<std::uint64_t>(integer("seed", 0));

    c.seed_lexicon = file("seed_lexicon");
    c.phoneme_inventory = file("phoneme_inventory");
    c.lexicon_words = file("lexicon_words");
    c.medical_lexicon = file("medical_lexicon");
    c.phoneme_map = file("phoneme_map");
    c.g2p.order = static_cast<int>(integer("g2p_order", c.g2p.order));
    c.g2p.max_letters = static_cast<int>(integer("g2p_max_letters", c.g2p.max_letters));
    c.g2p.max_phonemes = static_cast<int>(integer("g2p_max_phonemes", c.g2p.max_phonemes));
    c.g2p.em_iters = static_cast<int>(integer("g2p_em_iters", c.g2p.em_iters));
    c.g2p_beam = static_cast<std::size_t>(integer("g2p_beam", static_cast<long long>(kDefaultBeam)));
    c.g2p_nbest = static_cast<std::size_t>(integer("g2p_nbest", 1));
    c.merge_policy = parse_merge_policy(text("merge_policy", "union"));

    c.mapping = file("mapping");
    c.map_eval_text = flag("map_eval_text", true);
    c.dialect_corpus = optional_text("dialect_corpus");
    c.dialect_candidates = static_cast<std::size_t>(integer("dialect_candidates", 200));
    c.dialect_ref = file("dialect_ref");
    c.dialect_hyp = file("dialect_hyp");

    if (auto it = values_.find("output"); it != values_.end()) {
      c.output = resolve(it->second);
      values_.erase(it);
    }
    if (!values_.empty()) {
      const auto& [key, a] = *values_.begin();
      throw Error(a.origin + ": unknown config key '" + key + "'");
    }
    c.settings = std::move(settings_);
    return c;
  }

 private:
  static std::filesystem::path resolve(const Assignment& a) {
    std::filesystem::path p(a.value);
    return p.is_absolute() || a.base.empty() ? p : a.base / p;
  }

  std::optional<std::string> optional_text(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    std::string v = it->second.value;
    origin_ = it->second.origin;
    values_.erase(it);
    settings_[key] = v;
    return v;
  }
  std::string text(const std::string& key, const std::string& fallback) {
    auto v = optional_text(key);
    if (!v) settings_[key] = fallback;
    return v.value_or(fallback);
  }
  long long to_int(const std::string& v, const std::string& key) {
    try {
      return parse_int(v, key);
    } catch (const Error& e) {
      throw Error(origin_ + ": " + e.what());
    }
  }
  long long integer(const std::string& key, long long fallback) {
    auto v = optional_text(key);
    if (!v) {
      settings_[key] = std::to_string(fallback);
      return fallback;
    }
    long long n = to_int(*v, key);
    if (n < 0) throw Error(origin_ + ": " + key + " must be non-negative");
    return n;
  }
  double number(const std::string& key, double fallback) {
    auto v = optional_text(key);
    if (!v) {
      settings_[key] = format_g(fallback, 17);
      return fallback;
    }
    try {
      return parse_double(*v, key);
    } catch (const Error& e) {
      throw Error(origin_ + ": " + e.what());
    }
  }
  bool flag(const std::string& key, bool fallback) {
    auto v = optional_text(key);
    if (!v) {
      settings_[key] = fallback ? "true" : "false";
      return fallback;
    }
    try {
      return parse_bool(*v, key);
    } catch (const Error& e) {
      throw Error(origin_ + ": " + e.what());
    }
  }
  std::optional<InputFile> file(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    InputFile f{key, it->second.value, resolve(it->second)};
    settings_[key] = f.given;
    values_.erase(it);
    return f;
  }

  std::map<std::string, Assignment> values_;
  std::vector<std::string> corpus_order_;
  std::map<std::string, std::string> settings_;
  std::string origin_;
};

inline std::pair<std::string, std::string> split_assignment(std::string_view line, const std::string& origin) {
  auto eq = line.find('=');
  if (eq == std::string_view::npos) throw Error(origin + ": expected 'key = value'");
  std::string key(trim(line.substr(0, eq)));
  std::string value(trim(line.substr(eq + 1)));
  if (key.empty()) throw Error(origin + ": empty key");
  return {key, value};
}

}  // namespace pipeline_detail

/// Checks the invariants the stages rely on.
inline void validate_config(const PipelineConfig& c) {
  if (c.lm.order < 1) throw Error("order must be at least 1");
  if (c.corpora.empty()) throw Error("no training corpora (add 'corpus.<id> = path' lines)");
  if (c.output.empty()) throw Error("no output directory (set 'output' or pass --output)");
  if (c.lm.max_vocab && *c.lm.max_vocab < 4) throw Error("max_vocab must leave room for at least one word");
  if (c.lm.min_count < 1) throw Error("min_count must be at least 1");
  if (c.prune_theta && std::isnan(*c.prune_theta)) throw Error("prune_theta is not a number");
  if (c.g2p.order < 1 || c.g2p.max_letters < 1 || c.g2p.max_phonemes < 1)
    throw Error("g2p_order, g2p_max_letters and g2p_max_phonemes must be at least 1");
  if (c.g2p_beam < 1 || c.g2p_nbest < 1) throw Error("g2p_beam and g2p_nbest must be at least 1");
  if (c.dialect_candidates < 1) throw Error("dialect_candidates must be at least 1");
  if (c.dialect_ref.has_value() != c.dialect_hyp.has_value())
    throw Error("dialect_ref and dialect_hyp must be given together");
  if (c.dialect_corpus) {
    bool known = false;
    for (const auto& in : c.corpora) known |= in.id == *c.dialect_corpus;
    if (!known) throw Error("dialect_corpus '" + *c.dialect_corpus + "' is not one of the corpus ids");
    if (c.corpora.size() < 2) throw Error("dialect candidates need at least one other corpus to compare against");
  }
  std::map<std::filesystem::path, std::string> seen;
  for (const InputFile* f : c.input_files()) {
    std::ifstream probe(f->path, std::ios::binary);
    if (!probe) throw Error(f->key + ": cannot read '" + f->path.string() + "'");
    auto canonical = std::filesystem::weakly_canonical(f->path);
    auto [it, inserted] = seen.emplace(canonical, f->key);
    if (!inserted) throw Error(f->key + " and " + it->second + " name the same file '" + f->given + "'");
  }
}

/// Parses config lines; `overrides` are `key=value` strings applied on top.
inline PipelineConfig parse_config(const std::vector<std::string>& lines, const std::string& source,
                                   const std::filesystem::path& base_dir,
                                   const std::vector<std::string>& overrides = {}) {
  pipeline_detail::ConfigBuilder b;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const std::string origin = source + ":" + std::to_string(i + 1);
    auto [key, value] = pipeline_detail::split_assignment(line, origin);
    b.assign(key, value, base_dir, origin);
  }
  for (const auto& o : overrides) {
    auto [key, value] = pipeline_detail::split_assignment(o, "--set " + o);
    b.assign(key, value, {}, "--set " + o);
  }
  PipelineConfig c = b.build();
  validate_config(c);
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {},
                                  const std::optional<std::filesystem::path>& output = std::nullopt) {
  std::vector<std::string> extra = overrides;
  if (output) extra.push_back("output=" + output->string());
  return parse_config(read_lines(path), path.string(), path.parent_path(), extra);
}

struct ArtifactRecord {
  std::string path;  // relative to the output directory, '/'-separated
  std::string sha256;
  std::map<std::string, std::string> inputs;  // input key -> sha256
  bool partial = false;
};

struct StageRecord {
  std::string name;
  std::string status;  // ok, skipped, failed, not_run
  std::string note;
  std::map<std::string, std::string> parameters;
  std::vector<ArtifactRecord> artifacts;
};

/// Owns the output directory for one run: the lock file, lazily loaded
/// inputs, artifact writing and the manifest.
class Workspace {
 public:
  explicit Workspace(const PipelineConfig& config) : config_(config) {
    try {
      std::filesystem::create_directories(config_.output);
    } catch (const std::exception& e) {
      throw StageError("output", std::string("cannot create output directory: ") + e.what());
    }
    lock_path_ = config_.output / ".lock";
    std::FILE* f = std::fopen(lock_path_.string().c_str(), "wx");
    if (!f)
      throw StageError("output", "'" + config_.output.string() +
                                     "' is in use by another run (delete .lock there if that run is gone)");
    std::fputs("lmkit pipeline\n", f);
    std::fclose(f);
    for (const InputFile* in : config_.input_files()) inputs_[in->key] = in;
  }
  ~Workspace() {
    std::error_code ec;
    std::filesystem::remove(lock_path_, ec);
  }
  Workspace(const Workspace&) = delete;
  Workspace& operator=(const Workspace&) = delete;

  const PipelineConfig& config() const { return config_; }

  const std::string& input_hash(const std::string& key) {
    auto it = hashes_.find(key);
    if (it != hashes_.end()) return it->second;
    return hashes_[key] = sha256_hex(read_file(inputs_.at(key)->path));
  }

  const std::vector<Corpus>& corpora() {
    if (!corpora_) {
      std::vector<Corpus> v;
      for (const auto& in : config_.corpora) v.push_back(load_corpus(in.file.path, config_.normalize, in.id));
      for (const auto& c : v)
        if (c.empty()) throw Error("corpus '" + c.id() + "' has no sentences");
      corpora_ = std::move(v);
    }
    return *corpora_;
  }
  std::vector<std::string> corpus_keys() const {
    std::vector<std::string> keys;
    for (const auto& in : config_.corpora) keys.push_back(in.file.key);
    return keys;
  }
  const Corpus& text(const std::optional<InputFile>& f, const std::string& id) {
    auto it = texts_.find(f->key);
    if (it == texts_.end()) {
      Corpus c = load_corpus(f->path, config_.normalize, id);
      if (c.empty()) throw Error(f->key + " text '" + f->given + "' has no sentences");
      it = texts_.emplace(f->key, std::move(c)).first;
    }
    return it->second;
  }

  void plan(const std::vector<std::string>& names) {
    for (const auto& n : names) stages_.push_back({n, "not_run", {}, {}, {}});
  }

  void begin(const std::string& name, const std::vector<std::string>& parameter_keys) {
    current_ = &stage(name);
    current_->status = "running";
    for (const auto& k : parameter_keys) {
      auto it = config_.settings.find(k);
      current_->parameters[k] = it == config_.settings.end() ? "unset" : it->second;
    }
  }
  void skip(const std::string& name, const std::string& why) {
    StageRecord& s = stage(name);
    s.status = "skipped";
    s.note = why;
  }
  void finish() {
    current_->status = "ok";
    current_ = nullptr;
  }

  /// Writes one artifact of the current stage and records its hashes.
  void write(const std::string& relative, const std::string& content, const std::vector<std::string>& input_keys) {
    std::filesystem::path target = config_.output / std::filesystem::path(relative);
    std::filesystem::create_directories(target.parent_path());
    ArtifactRecord rec{relative, sha256_hex(content), {}, false};
    for (const auto& k : input_keys) rec.inputs[k] = input_hash(k);
    write_file(target, content);
    current_->artifacts.push_back(std::move(rec));
  }

  /// Runs one stage body; failures mark the stage and its artifacts
  /// partial, write the manifest, and rethrow tagged with the stage name.
  template <class Body>
  void run(const std::string& name, const std::vector<std::string>& parameter_keys, Body&& body) {
    begin(name, parameter_keys);
    try {
      body();
    } catch (const std::exception& e) {
      current_->status = "failed";
      current_->note = e.what();
      for (auto& a : current_->artifacts) a.partial = true;
      try {
        write_manifest();
      } catch (const std::exception&) {
      }
      throw StageError(name, e.what());
    }
    finish();
  }

  nlohmann::json manifest() {
    nlohmann::json m;
    m["tool"] = "lmkit";
    m["manifest_version"] = 1;
    m["language"] = config_.language;
    m["seed"] = config_.seed;
    m["settings"] = config_.settings;
    nlohmann::json inputs = nlohmann::json::object();
    for (const auto& [key, in] : inputs_) inputs[key] = {{"path", in->given}, {"sha256", input_hash(key)}};
    m["inputs"] = inputs;
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : stages_) {
      nlohmann::json js{{"name", s.name}, {"status", s.status}, {"parameters", s.parameters}};
      if (!s.note.empty()) js["note"] = s.note;
      nlohmann::json arts = nlohmann::json::array();
      for (const auto& a : s.artifacts)
        arts.push_back({{"path", a.path}, {"sha256", a.sha256}, {"inputs", a.inputs}, {"partial", a.partial}});
      js["artifacts"] = arts;
      stages.push_back(std::move(js));
    }
    m["stages"] = stages;
    return m;
  }

  void write_manifest() { write_file(config_.output / "manifest.json", manifest().dump(2) + '\n'); }

  const std::vector<StageRecord>& stages() const { return stages_; }

 private:
  StageRecord& stage(const std::string& name) {
    for (auto& s : stages_)
      if (s.name == name) return s;
    stages_.push_back({name, "not_run", {}, {}, {}});
    return stages_.back();
  }

  const PipelineConfig& config_;
  std::filesystem::path lock_path_;
  std::map<std::string, const InputFile*> inputs_;
  std::map<std::string, std::string> hashes_;
  std::optional<std::vector<Corpus>> corpora_;
  std::map<std::string, Corpus> texts_;
  std::vector<StageRecord> stages_;
  StageRecord* current_ = nullptr;
};

namespace pipeline_detail {

inline std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline std::vector<std::string> optional_keys(std::initializer_list<const std::optional<InputFile>*> files) {
  std::vector<std::string> out;
  for (const auto* f : files)
    if (*f) out.push_back((*f)->key);
  return out;
}

inline std::string ppl_row(const std::string& set, const std::string& model, std::size_t ngrams,
                           const PerplexityReport& r) {
  return set + '\t' + model + '\t' + std::to_string(ngrams) + '\t' + format_g(r.ppl, 10) + '\t' +
         std::to_string(r.scored_tokens) + '\t' + std::to_string(r.oov_tokens) + '\t' +
         format_g(r.log10_prob_sum, 12) + '\n';
}

inline std::string arpa_path(const std::string& id) { return "lm/" + id + ".arpa"; }

}  // namespace pipeline_detail

inline const std::vector<std::string> kLmStages{"corpus", "vocabulary", "train", "weights", "combine", "prune", "evaluate"};
inline const std::vector<std::string> kLexiconStages{"g2p.train", "lexicon.extend", "lexicon.merge"};
inline const std::vector<std::string> kDialectStages{"dialect.candidates", "dialect.evaluate", "dialect.score"};

namespace pipeline_detail {

inline void lm_stages(Workspace& ws) {
  const PipelineConfig& c = ws.config();
  const std::vector<std::string> corpus_keys = ws.corpus_keys();
  const std::vector<std::string> eval_keys = optional_keys({&c.dev, &c.test});

  ws.run("corpus", {"lowercase", "strip_punct"}, [&] {
    std::vector<CorpusStats> stats;
    for (const auto& corpus : ws.corpora()) stats.push_back(corpus_stats(corpus));
    if (c.dev) stats.push_back(corpus_stats(ws.text(c.dev, "dev")));
    if (c.test) stats.push_back(corpus_stats(ws.text(c.test, "test")));
    ws.write("corpus_stats.tsv", format_corpus_stats(stats), concat(corpus_keys, eval_keys));
  });

  Vocabulary vocab;
  ws.run("vocabulary", {"lowercase", "strip_punct", "min_count", "max_vocab"}, [&] {
    vocab = build_vocabulary(ws.corpora(), c.lm.min_count, c.lm.max_vocab);
    std::string out;
    for (const auto& w : vocab.words()) out += w + '\n';
    ws.write("vocab.txt", out, corpus_keys);
  });

  // With interpolation off the corpora are pooled into one model.
  const bool mixing = c.lm.interpolate && ws.corpora().size() > 1;
  std::vector<BackoffLM> lms;
  ws.run("train", {"order", "interpolate"}, [&] {
    if (mixing) {
      for (const auto& corpus : ws.corpora()) lms.push_back(train_lm(corpus, c.lm.order, vocab));
    } else {
      const auto& all = ws.corpora();
      lms.push_back(train_lm(all.size() == 1 ? all[0] : pool_corpora(all), c.lm.order, vocab));
    }
    for (const auto& lm : lms) ws.write(arpa_path(lm.metadata().corpus_id), format_arpa(lm), corpus_keys);
  });

  InterpolationWeights weights;
  const std::vector<std::string> weight_keys = mixing ? concat(corpus_keys, {"dev"}) : corpus_keys;
  ws.run("weights", {"interpolate", "em_tol", "em_max_iter"}, [&] {
    if (mixing) {
      if (!c.dev) throw Error("estimating interpolation weights needs a dev text (set 'dev')");
      weights = em_weights(lms, ws.text(c.dev, "dev"), c.lm.em);
    } else {
      weights.ids = component_ids(lms);
      weights.weights = {1.0};
    }
    ws.write("weights.tsv", format_weights(weights), weight_keys);
    std::string log = "iteration\tdev_log10_likelihood\n";
    for (std::size_t i = 0; i < weights.history.size(); ++i)
      log += std::to_string(i) + '\t' + format_g(weights.history[i], 17) + '\n';
    ws.write("em_log.tsv", log, weight_keys);
  });

  BackoffLM combined;
  std::string combined_text;
  ws.run("combine", {}, [&] {
    if (lms.size() == 1) {
      combined = lms[0];
      combined_text = format_arpa(lms[0]);
    } else {
      combined = interpolate_static(lms, weights.weights);
      combined.metadata().corpus_id = "combined";
      combined_text = format_arpa(combined);
    }
    ws.write("combined.arpa", combined_text, weight_keys);
  });

  std::optional<BackoffLM> pruned;
  if (c.prune_theta) {
    ws.run("prune", {"prune_theta", "prune_until_stable"}, [&] {
      auto [model, report] = prune_entropy(combined, *c.prune_theta, {.until_stable = c.prune_until_stable});
      pruned = std::move(model);
      ws.write("pruned.arpa", format_arpa(*pruned), weight_keys);
      ws.write("prune_report.tsv", format_prune_report(report), weight_keys);
    });
  } else {
    ws.skip("prune", "prune_theta not set");
  }

  if (!c.dev && !c.test) {
    ws.skip("evaluate", "no dev or test text");
    return;
  }
  ws.run("evaluate", {"oov"}, [&] {
    std::string ppl = "set\tmodel\tngrams\tppl\tscored\toov\tlog10_prob\n";
    std::string oov = "set\ttokens\toov_tokens\toov_rate\n";
    for (const auto* f : {&c.dev, &c.test}) {
      if (!*f) continue;
      const std::string set = (*f)->key;
      const Corpus& text = ws.text(*f, set);
      if (lms.size() > 1) {
        for (const auto& lm : lms)
          ppl += ppl_row(set, lm.metadata().corpus_id, lm.total_size(), perplexity(lm, text, c.lm.oov));
        ppl += ppl_row(set, "mixture", 0, perplexity_mixture(lms, weights.weights, text, c.lm.oov));
      }
      ppl += ppl_row(set, "combined", combined.total_size(), perplexity(combined, text, c.lm.oov));
      if (pruned) ppl += ppl_row(set, "pruned", pruned->total_size(), perplexity(*pruned, text, c.lm.oov));
      std::size_t missing = 0;
      for (const auto& s : text.sentences())
        for (const auto& w : s) missing += !vocab.contains(w);
      oov += set + '\t' + std::to_string(text.token_count()) + '\t' + std::to_string(missing) + '\t' +
             format_g(oov_rate(vocab, text), 10) + '\n';
    }
    ws.write("ppl.tsv", ppl, concat(weight_keys, eval_keys));
    ws.write("oov.tsv", oov, concat(corpus_keys, eval_keys));
  });
}

inline void lexicon_stages(Workspace& ws) {
  const PipelineConfig& c = ws.config();
  if (!c.seed_lexicon) throw StageError("g2p.train", "the lexicon pipeline needs 'seed_lexicon'");
  std::vector<std::string> seed_keys = optional_keys({&c.seed_lexicon, &c.phoneme_inventory});

  Lexicon seed;
  std::optional<JointSequenceModel> model;
  ws.run("g2p.train", {"g2p_order", "g2p_max_letters", "g2p_max_phonemes", "g2p_em_iters"}, [&] {
    std::optional<PhonemeInventory> inventory;
    if (c.phoneme_inventory) inventory = read_inventory(c.phoneme_inventory->path);
    seed = read_lexicon(c.seed_lexicon->path, inventory);
    if (seed.empty()) throw Error("seed lexicon is empty");
    G2PTraining t = train_g2p(seed, c.g2p);
    std::string log = "stage_iteration\ttrain_log10_likelihood\n";
    for (std::size_t i = 0; i < t.log_likelihood.size(); ++i)
      log += std::to_string(i) + '\t' + format_g(t.log_likelihood[i], 17) + '\n';
    log += "# entries\t" + std::to_string(t.entries) + "\tskipped\t" + std::to_string(t.skipped.size()) + '\n';
    for (const auto& s : t.skipped) log += "# skipped\t" + s.word + '\t' + join(s.pronunciation, " ") + '\t' + s.reason + '\n';
    ws.write("lexicon/g2p.model", format_g2p_model(t.model), seed_keys);
    ws.write("lexicon/g2p_training.tsv", log, seed_keys);
    model = std::move(t.model);
  });

  Lexicon extended;
  std::vector<std::string> word_keys = c.lexicon_words ? std::vector<std::string>{c.lexicon_words->key} : ws.corpus_keys();
  std::vector<std::string> extend_keys = concat(seed_keys, word_keys);
  std::vector<std::string> extend_params{"g2p_order", "g2p_max_letters", "g2p_max_phonemes", "g2p_em_iters",
                                         "g2p_beam", "g2p_nbest"};
  if (!c.lexicon_words) extend_params.insert(extend_params.end(), {"lowercase", "strip_punct", "min_count", "max_vocab"});
  ws.run("lexicon.extend", extend_params, [&] {
    std::vector<std::string> words;
    if (c.lexicon_words) {
      for (const auto& line : read_lines(c.lexicon_words->path))
        for (auto& w : normalize_line(line, c.normalize)) words.push_back(std::move(w));
    } else {
      // Training vocabulary in frequency order.
      Vocabulary vocab = build_vocabulary(ws.corpora(), c.lm.min_count, c.lm.max_vocab);
      for (const auto& w : vocab.words())
        if (w != kBos && w != kEos && w != kUnk) words.push_back(w);
    }
    auto [lex, report] = extend_lexicon(seed, words, *model, c.g2p_beam, c.g2p_nbest);
    extended = std::move(lex);
    ws.write("lexicon/extended.txt", format_lexicon(extended), extend_keys);
    ws.write("lexicon/extend_report.tsv", format_extend_report(report), extend_keys);
  });

  std::vector<std::string> merge_keys = concat(extend_keys, optional_keys({&c.medical_lexicon, &c.phoneme_map}));
  ws.run("lexicon.merge", concat(extend_params, {"merge_policy"}), [&] {
    Lexicon addon;
    if (c.medical_lexicon) addon = read_lexicon(c.medical_lexicon->path);
    std::map<std::string, std::string> mapping;
    if (c.phoneme_map) mapping = read_phoneme_mapping(c.phoneme_map->path);
    auto [merged, report] = merge_lexicons(extended, addon, c.merge_policy, mapping);
    ws.write("lexicon/final.txt", format_lexicon(merged), merge_keys);
    std::string summary = "seed_words\t" + std::to_string(seed.size()) + "\nextended_words\t" +
                          std::to_string(extended.size()) + '\n' + format_merge_report(report);
    for (const auto* f : {&c.dev, &c.test}) {
      if (!*f) continue;
      const Corpus& text = ws.text(*f, (*f)->key);
      std::size_t seed_oov = 0, final_oov = 0;
      for (const auto& s : text.sentences())
        for (const auto& w : s) {
          seed_oov += !seed.contains(w);
          final_oov += !merged.contains(w);
        }
      summary += (*f)->key + "_tokens\t" + std::to_string(text.token_count()) + '\n' + (*f)->key +
                 "_oov_seed_lexicon\t" + std::to_string(seed_oov) + '\n' + (*f)->key + "_oov_final_lexicon\t" +
                 std::to_string(final_oov) + '\n';
      merge_keys.push_back((*f)->key);
    }
    ws.write("lexicon/report.tsv", summary, merge_keys);
  });
}

inline void dialect_stages(Workspace& ws) {
  const PipelineConfig& c = ws.config();
  if (!c.mapping) throw StageError("dialect.evaluate", "the dialect pipeline needs 'mapping'");
  const std::vector<std::string> corpus_keys = ws.corpus_keys();
  const std::vector<std::string> lm_params{"lowercase", "strip_punct", "order", "min_count", "max_vocab",
                                           "interpolate", "oov", "em_tol", "em_max_iter"};

  if (c.dialect_corpus) {
    ws.run("dialect.candidates", {"lowercase", "strip_punct", "dialect_corpus", "dialect_candidates"}, [&] {
      std::vector<Corpus> others;
      const Corpus* dialect = nullptr;
      for (const auto& corpus : ws.corpora()) {
        if (corpus.id() == *c.dialect_corpus)
          dialect = &corpus;
        else
          others.push_back(corpus);
      }
      auto candidates = select_candidates(*dialect, c.dialect_candidates, build_vocabulary(others));
      ws.write("dialect/candidates.tsv", format_candidates(candidates), corpus_keys);
    });
  } else {
    ws.skip("dialect.candidates", "dialect_corpus not set");
  }

  MappingTable table;
  ws.run("dialect.evaluate", concat(lm_params, {"map_eval_text"}), [&] {
    if (!c.dev) throw Error("the dialect experiment needs a dev text (set 'dev')");
    table = read_mapping(c.mapping->path);
    const std::vector<std::string> keys = concat(corpus_keys, {"dev", "mapping"});
    MappedEvaluation dev = mapped_lm_eval(ws.corpora(), ws.text(c.dev, "dev"), table, c.lm, c.map_eval_text);
    ws.write("dialect/ppl_dev.tsv", format_mapped_evaluation(dev), keys);
    if (c.test) {
      MappedEvaluation test =
          mapped_lm_eval(ws.corpora(), ws.text(c.dev, "dev"), ws.text(c.test, "test"), table, c.lm, c.map_eval_text);
      ws.write("dialect/ppl_test.tsv", format_mapped_evaluation(test), concat(keys, {"test"}));
    }
  });

  if (!c.dialect_ref) {
    ws.skip("dialect.score", "dialect_ref and dialect_hyp not set");
    return;
  }
  ws.run("dialect.score", {}, [&] {
    Transcripts refs = read_transcripts(c.dialect_ref->path);
    Transcripts hyps = read_transcripts(c.dialect_hyp->path);
    Transcripts mapped_refs;
    for (const auto& [id, tokens] : refs) {
      std::vector<std::string> m;
      for (const auto& t : tokens) {
        const std::string* target = table.lookup(t);
        m.push_back(target ? *target : t);
      }
      mapped_refs.emplace(id, std::move(m));
    }
    ScoreReport original = wer(refs, hyps);
    ScoreReport mapped = wer(mapped_refs, hyps);
    const std::vector<std::string> keys{"dialect_ref", "dialect_hyp"};
    const std::vector<std::string> mapped_keys{"dialect_ref", "dialect_hyp", "mapping"};
    ws.write("dialect/wer_original.tsv", format_score_tsv(original), keys);
    ws.write("dialect/wer_mapped.tsv", format_score_tsv(mapped), mapped_keys);
    auto row = [](const std::string& name, const ScoreReport& r) {
      return name + '\t' + std::to_string(r.total.ref_length) + '\t' + std::to_string(r.total.substitutions) + '\t' +
             std::to_string(r.total.deletions) + '\t' + std::to_string(r.total.insertions) + '\t' +
             detail::fixed(r.percent, 4) + '\n';
    };
    ws.write("dialect/wer.tsv", "reference\tN\tS\tD\tI\tWER\n" + row("original", original) + row("mapped", mapped),
             mapped_keys);
  });
}

}  // namespace pipeline_detail

enum class PipelinePart { kLm, kLexicon, kDialect };

inline PipelinePart parse_pipeline_part(std::string_view s) {
  if (s == "lm") return PipelinePart::kLm;
  if (s == "lexicon") return PipelinePart::kLexicon;
  if (s == "dialect") return PipelinePart::kDialect;
  throw Error("unknown pipeline part '" + std::string(s) + "' (expected lm, lexicon or dialect)");
}

/// The parts a config enables: LM always, lexicon with a seed lexicon,
/// dialect with a mapping file.
inline std::vector<PipelinePart> configured_parts(const PipelineConfig& c) {
  std::vector<PipelinePart> parts{PipelinePart::kLm};
  if (c.seed_lexicon) parts.push_back(PipelinePart::kLexicon);
  if (c.mapping) parts.push_back(PipelinePart::kDialect);
  return parts;
}

/// Runs the given parts in pipeline order into one output directory and
/// writes manifest.json. Returns the stage records.
inline std::vector<StageRecord> run_pipeline(const PipelineConfig& config, std::vector<PipelinePart> parts) {
  std::sort(parts.begin(), parts.end());
  parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
  Workspace ws(config);
  for (auto p : parts)
    ws.plan(p == PipelinePart::kLm ? kLmStages : p == PipelinePart::kLexicon ? kLexiconStages : kDialectStages);
  try {
    for (auto p : parts) {
      if (p == PipelinePart::kLm) pipeline_detail::lm_stages(ws);
      if (p == PipelinePart::kLexicon) pipeline_detail::lexicon_stages(ws);
      if (p == PipelinePart::kDialect) pipeline_detail::dialect_stages(ws);
    }
  } catch (const StageError&) {
    ws.write_manifest();
    throw;
  } catch (const std::exception& e) {
    ws.write_manifest();
    throw StageError("pipeline", e.what());
  }
  try {
    ws.write_manifest();
  } catch (const std::exception& e) {
    throw StageError("manifest", e.what());
  }
  return ws.stages();
}

inline std::vector<StageRecord> run_pipeline(const PipelineConfig& config) {
  return run_pipeline(config, configured_parts(config));
}

inline std::vector<StageRecord> run_lm_pipeline(const PipelineConfig& config) {
  return run_pipeline(config, {PipelinePart::kLm});
}
inline std::vector<StageRecord> run_lexicon_pipeline(const PipelineConfig& config) {
  return run_pipeline(config, {PipelinePart::kLexicon});
}
inline std::vector<StageRecord> run_dialect_pipeline(const PipelineConfig& config) {
  return run_pipeline(config, {PipelinePart::kDialect});
}

}  // namespace lmkit

#endif  // LMKIT_PIPELINE_HPP
