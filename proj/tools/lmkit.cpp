// lmkit command-line front end. Each subcommand wraps one module
// operation; `pipeline run` executes a whole config.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lmkit/arpa.hpp"
#include "lmkit/corpus.hpp"
#include "lmkit/dialect.hpp"
#include "lmkit/evaluate.hpp"
#include "lmkit/g2p.hpp"
#include "lmkit/lexicon.hpp"
#include "lmkit/mixture.hpp"
#include "lmkit/mkn.hpp"
#include "lmkit/ngram_counts.hpp"
#include "lmkit/pipeline.hpp"
#include "lmkit/prune.hpp"
#include "lmkit/recipe.hpp"
#include "lmkit/scoring.hpp"

namespace {

using namespace lmkit;

struct TextOptions {
  bool lowercase = false;
  bool strip_punct = false;
  NormalizeOptions normalize() const { return {lowercase, strip_punct}; }
};

void add_text_flags(CLI::App* app, TextOptions& t) {
  app->add_flag("--lowercase", t.lowercase, "Lowercase text before tokenizing");
  app->add_flag("--strip-punct", t.strip_punct, "Remove punctuation before tokenizing");
}

/// Writes to `path`, or to stdout when it is empty or "-".
void emit(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-")
    std::cout << content << std::flush;
  else
    write_file(path, content);
}

std::vector<BackoffLM> read_models(const std::vector<std::string>& paths) {
  std::vector<BackoffLM> lms;
  for (const auto& p : paths) {
    lms.push_back(read_arpa(std::filesystem::path(p)));
    if (lms.back().metadata().corpus_id.empty()) lms.back().metadata().corpus_id = std::filesystem::path(p).stem().string();
  }
  return lms;
}

std::vector<Corpus> read_corpora(const std::vector<std::string>& paths, const TextOptions& t) {
  std::vector<Corpus> out;
  for (const auto& p : paths) out.push_back(load_corpus(p, t.normalize()));
  return out;
}

/// Weights in component order; a weights file must name the same models.
std::vector<double> weights_for(const std::vector<BackoffLM>& lms, const std::string& path) {
  InterpolationWeights w = read_weights(path);
  if (w.weights.size() != lms.size())
    throw Error(path + " has " + std::to_string(w.weights.size()) + " weights for " + std::to_string(lms.size()) +
                " models");
  return w.weights;
}

struct Cli {
  CLI::App app{"lmkit: n-gram language models, lexica and ASR scoring"};
  std::string stage;  // tag for error messages
  std::function<void()> action;

  TextOptions text;
  std::vector<std::string> inputs;
  std::vector<std::string> models;
  std::string input, output, report, vocab_path, dev, eval, weights_path, mapping_path, model_path, addon_path;
  int order = 4;
  std::size_t min_count = 1;
  std::optional<std::size_t> max_vocab;
  std::string oov = "exclude";
  double theta = 0.0;
  bool until_stable = false;
  bool no_interpolate = false;
  bool map_eval_text = false;
  G2POptions g2p_options;
  std::size_t beam = kDefaultBeam, nbest = 1, top = 200;
  std::string inventory, policy = "union", phoneme_map, words_file;
  std::vector<std::string> words;
  std::string ref, hyp;
  bool table = false;
  std::string config;
  std::vector<std::string> overrides;
  std::vector<std::string> only;

  CLI::App* command(CLI::App* parent, const std::string& name, const std::string& help, std::function<void()> fn) {
    CLI::App* sub = parent->add_subcommand(name, help);
    std::string tag = parent == &app ? name : parent->get_name() + " " + name;
    sub->callback([this, tag, fn] {
      stage = tag;
      action = fn;
    });
    return sub;
  }

  Cli() {
    app.require_subcommand(1);
    app.set_version_flag("--version", "lmkit 1.0");

    auto* corpus = app.add_subcommand("corpus", "Corpus statistics")->require_subcommand(1);
    auto* stats = command(corpus, "stats", "Sentences, tokens and types per file", [this] {
      std::vector<CorpusStats> s;
      for (const auto& c : read_corpora(inputs, text)) s.push_back(corpus_stats(c));
      emit(output, format_corpus_stats(s));
    });
    stats->add_option("files", inputs, "Text files, one sentence per line")->required()->check(CLI::ExistingFile);
    stats->add_option("-o,--output", output, "Output file (default stdout)");
    add_text_flags(stats, text);

    auto* lm = app.add_subcommand("lm", "Train and evaluate n-gram models")->require_subcommand(1);
    auto* count = command(lm, "count", "N-gram and continuation counts", [this] {
      Corpus c = load_corpus(input, text.normalize());
      Vocabulary v = vocab_path.empty() ? build_vocabulary(c, min_count, max_vocab) : read_vocabulary(vocab_path);
      emit(output, format_counts(count_ngrams(c, order, v)));
    });
    auto* train = command(lm, "train", "Train a modified Kneser-Ney model", [this] {
      Corpus c = load_corpus(input, text.normalize());
      Vocabulary v = vocab_path.empty() ? build_vocabulary(c, min_count, max_vocab) : read_vocabulary(vocab_path);
      emit(output, format_arpa(train_lm(c, order, v)));
      if (!report.empty()) write_vocabulary(v, report);
    });
    for (auto* sub : {count, train}) {
      sub->add_option("--text", input, "Training text")->required()->check(CLI::ExistingFile);
      sub->add_option("--order", order, "N-gram order")->capture_default_str()->check(CLI::PositiveNumber);
      sub->add_option("--vocab", vocab_path, "Closed vocabulary file (default: built from the text)")
          ->check(CLI::ExistingFile);
      sub->add_option("--min-count", min_count, "Minimum count for a vocabulary word")->capture_default_str();
      sub->add_option("--max-vocab", max_vocab, "Vocabulary size cap, reserved markers included");
      sub->add_option("-o,--output", output, "Output file (default stdout)");
      add_text_flags(sub, text);
    }
    train->add_option("--write-vocab", report, "Also write the vocabulary used");

    auto* ppl = command(lm, "ppl", "Perplexity of a model on a text", [this] {
      BackoffLM model = read_arpa(std::filesystem::path(models.at(0)));
      emit(output, format_report(perplexity(model, load_corpus(input, text.normalize()), parse_oov_policy(oov))));
    });
    ppl->add_option("--lm", models, "ARPA model")->required()->expected(1)->check(CLI::ExistingFile);
    ppl->add_option("--text", input, "Evaluation text")->required()->check(CLI::ExistingFile);
    ppl->add_option("--oov", oov, "OOV policy: exclude or as_unk")->capture_default_str();
    ppl->add_option("-o,--output", output, "Output file (default stdout)");
    add_text_flags(ppl, text);

    auto* oov_cmd = command(lm, "oov", "OOV rate of a text against a vocabulary or model", [this] {
      if (vocab_path.empty() == models.empty()) throw Error("give exactly one of --vocab or --lm");
      Vocabulary v = vocab_path.empty() ? read_arpa(std::filesystem::path(models.at(0))).vocab() : read_vocabulary(vocab_path);
      Corpus c = load_corpus(input, text.normalize());
      std::size_t missing = 0;
      for (const auto& s : c.sentences())
        for (const auto& w : s) missing += !v.contains(w);
      emit(output, "tokens\t" + std::to_string(c.token_count()) + "\noov_tokens\t" + std::to_string(missing) +
                       "\noov_rate\t" + format_g(oov_rate(v, c), 10) + '\n');
    });
    oov_cmd->add_option("--vocab", vocab_path, "Vocabulary file")->check(CLI::ExistingFile);
    oov_cmd->add_option("--lm", models, "ARPA model whose vocabulary to use")->expected(1)->check(CLI::ExistingFile);
    oov_cmd->add_option("--text", input, "Evaluation text")->required()->check(CLI::ExistingFile);
    oov_cmd->add_option("-o,--output", output, "Output file (default stdout)");
    add_text_flags(oov_cmd, text);

    auto* mix = app.add_subcommand("mix", "Interpolate models")->require_subcommand(1);
    auto* em = command(mix, "em", "Estimate interpolation weights on dev text", [this] {
      auto lms = read_models(models);
      auto w = em_weights(lms, load_corpus(dev, text.normalize()));
      emit(output, format_weights(w));
      if (!report.empty()) {
        std::string log = "iteration\tdev_log10_likelihood\n";
        for (std::size_t i = 0; i < w.history.size(); ++i)
          log += std::to_string(i) + '\t' + format_g(w.history[i], 17) + '\n';
        write_file(report, log);
      }
    });
    em->add_option("--dev", dev, "Dev text")->required()->check(CLI::ExistingFile);
    em->add_option("--log", report, "Write the per-iteration dev log-likelihood here");
    auto* merge = command(mix, "merge", "Statically merge models into one ARPA model", [this] {
      auto lms = read_models(models);
      emit(output, format_arpa(interpolate_static(lms, weights_for(lms, weights_path))));
    });
    auto* mix_ppl = command(mix, "ppl", "Perplexity of the dynamic mixture", [this] {
      auto lms = read_models(models);
      emit(output, format_report(perplexity_mixture(lms, weights_for(lms, weights_path),
                                                    load_corpus(input, text.normalize()), parse_oov_policy(oov))));
    });
    mix_ppl->add_option("--text", input, "Evaluation text")->required()->check(CLI::ExistingFile);
    mix_ppl->add_option("--oov", oov, "OOV policy: exclude or as_unk")->capture_default_str();
    for (auto* sub : {em, merge, mix_ppl}) {
      sub->add_option("--lm", models, "Component ARPA models (repeat)")->required()->check(CLI::ExistingFile);
      sub->add_option("-o,--output", output, "Output file (default stdout)");
      add_text_flags(sub, text);
    }
    for (auto* sub : {merge, mix_ppl})
      sub->add_option("--weights", weights_path, "Weights file from 'mix em'")->required()->check(CLI::ExistingFile);

    auto* prune = command(&app, "prune", "Relative-entropy pruning", [this] {
      BackoffLM model = read_arpa(std::filesystem::path(input));
      auto [pruned, r] = prune_entropy(model, theta, {.until_stable = until_stable});
      emit(output, format_arpa(pruned));
      if (!report.empty()) write_file(report, format_prune_report(r));
    });
    prune->add_option("--lm", input, "ARPA model")->required()->check(CLI::ExistingFile);
    prune->add_option("--theta", theta, "Threshold on the relative-entropy increase")->required();
    prune->add_flag("--until-stable", until_stable, "Repeat sweeps until nothing more is removed");
    prune->add_option("-o,--output", output, "Output file (default stdout)");
    prune->add_option("--report", report, "Write per-order counts here");

    auto* g2p_group = app.add_subcommand("g2p", "Grapheme-to-phoneme models")->require_subcommand(1);
    auto* g2p_train = command(g2p_group, "train", "Train a joint-sequence model on a lexicon", [this] {
      std::optional<PhonemeInventory> inv;
      if (!inventory.empty()) inv = read_inventory(inventory);
      G2PTraining t = train_g2p(read_lexicon(input, inv), g2p_options);
      emit(output, format_g2p_model(t.model));
      for (const auto& s : t.skipped) warn("skipped '" + s.word + "': " + s.reason);
    });
    g2p_train->add_option("--lexicon", input, "Training lexicon")->required()->check(CLI::ExistingFile);
    g2p_train->add_option("--inventory", inventory, "Phoneme inventory")->check(CLI::ExistingFile);
    g2p_train->add_option("--order", g2p_options.order, "Graphone n-gram order")->capture_default_str();
    g2p_train->add_option("--max-letters", g2p_options.max_letters, "Letters per graphone")->capture_default_str();
    g2p_train->add_option("--max-phonemes", g2p_options.max_phonemes, "Phonemes per graphone")->capture_default_str();
    g2p_train->add_option("--em-iters", g2p_options.em_iters, "EM iterations per order")->capture_default_str();
    g2p_train->add_option("-o,--output", output, "Output model (default stdout)");

    auto* g2p_apply = command(g2p_group, "apply", "Pronounce words", [this] {
      JointSequenceModel model = read_g2p_model(input);
      std::vector<std::string> list = words;
      if (!words_file.empty())
        for (const auto& line : read_lines(words_file))
          for (auto& w : split_whitespace(line)) list.push_back(std::move(w));
      std::string out;
      for (const auto& w : list) {
        try {
          for (const auto& h : apply_g2p(model, w, beam, nbest))
            out += w + '\t' + join(h.phonemes, " ") + '\t' + format_g(h.log10_score, 7) + '\n';
        } catch (const Error& e) {
          out += w + "\tFAILED\t" + e.what() + '\n';
        }
      }
      emit(output, out);
    });
    g2p_apply->add_option("--model", input, "Model from 'g2p train'")->required()->check(CLI::ExistingFile);
    g2p_apply->add_option("--word", words, "Word to pronounce (repeat)");
    g2p_apply->add_option("--words", words_file, "File of words")->check(CLI::ExistingFile);
    g2p_apply->add_option("--beam", beam, "Beam width")->capture_default_str();
    g2p_apply->add_option("--nbest", nbest, "Pronunciations per word")->capture_default_str();
    g2p_apply->add_option("-o,--output", output, "Output file (default stdout)");

    auto* lexicon = app.add_subcommand("lexicon", "Extend and merge lexica")->require_subcommand(1);
    auto* extend = command(lexicon, "extend", "Add G2P pronunciations for missing words", [this] {
      std::optional<PhonemeInventory> inv;
      if (!inventory.empty()) inv = read_inventory(inventory);
      Lexicon base = read_lexicon(input, inv);
      std::vector<std::string> list;
      for (const auto& line : read_lines(words_file))
        for (auto& w : split_whitespace(line)) list.push_back(std::move(w));
      auto [lex, r] = extend_lexicon(base, list, read_g2p_model(model_path), beam, nbest);
      emit(output, format_lexicon(lex));
      if (!report.empty()) write_file(report, format_extend_report(r));
    });
    extend->add_option("--lexicon", input, "Lexicon to extend")->required()->check(CLI::ExistingFile);
    extend->add_option("--inventory", inventory, "Phoneme inventory")->check(CLI::ExistingFile);
    extend->add_option("--model", model_path, "G2P model")->required()->check(CLI::ExistingFile);
    extend->add_option("--words", words_file, "Words to cover")->required()->check(CLI::ExistingFile);
    extend->add_option("--beam", beam, "Beam width")->capture_default_str();
    extend->add_option("--nbest", nbest, "Pronunciations per word")->capture_default_str();
    extend->add_option("-o,--output", output, "Output lexicon (default stdout)");
    extend->add_option("--report", report, "Write added (provisional) entries and failures here");

    auto* lmerge = command(lexicon, "merge", "Merge an addon lexicon into a base lexicon", [this] {
      std::optional<PhonemeInventory> inv;
      if (!inventory.empty()) inv = read_inventory(inventory);
      std::map<std::string, std::string> m;
      if (!phoneme_map.empty()) m = read_phoneme_mapping(phoneme_map);
      auto [lex, r] = merge_lexicons(read_lexicon(input, inv), read_lexicon(addon_path), parse_merge_policy(policy), m);
      emit(output, format_lexicon(lex));
      if (!report.empty()) write_file(report, format_merge_report(r));
    });
    lmerge->add_option("--base", input, "Base lexicon")->required()->check(CLI::ExistingFile);
    lmerge->add_option("--addon", addon_path, "Addon lexicon")->required()->check(CLI::ExistingFile);
    lmerge->add_option("--inventory", inventory, "Phoneme inventory of the base")->check(CLI::ExistingFile);
    lmerge->add_option("--policy", policy, "union, addon_wins or base_wins")->capture_default_str();
    lmerge->add_option("--phoneme-map", phoneme_map, "addon<TAB>base phoneme mapping")->check(CLI::ExistingFile);
    lmerge->add_option("-o,--output", output, "Output lexicon (default stdout)");
    lmerge->add_option("--report", report, "Write merge counts here");

    auto* dialect = app.add_subcommand("dialect", "Dialect word mapping")->require_subcommand(1);
    auto* candidates = command(dialect, "candidates", "Frequent words missing from reference texts", [this] {
      Corpus c = load_corpus(input, text.normalize());
      auto exclusion = inputs.empty() ? Vocabulary() : build_vocabulary(read_corpora(inputs, text));
      emit(output, format_candidates(select_candidates(c, top, exclusion)));
    });
    candidates->add_option("--text", input, "Dialect text")->required()->check(CLI::ExistingFile);
    candidates->add_option("--exclude", inputs, "Texts whose words are not candidates (repeat)")
        ->check(CLI::ExistingFile);
    candidates->add_option("--top", top, "Number of candidates")->capture_default_str();
    candidates->add_option("-o,--output", output, "Output file (default stdout)");
    add_text_flags(candidates, text);

    auto* apply = command(dialect, "apply", "Rewrite a text through a mapping table", [this] {
      std::size_t replaced = 0;
      Corpus c = apply_mapping(load_corpus(input, text.normalize()), read_mapping(mapping_path), &replaced);
      emit(output, format_corpus(c));
      std::cerr << "replaced " << replaced << " token(s)\n";
    });
    apply->add_option("--text", input, "Text to rewrite")->required()->check(CLI::ExistingFile);
    apply->add_option("-o,--output", output, "Output file (default stdout)");
    add_text_flags(apply, text);

    auto* deval = command(dialect, "eval", "Perplexity before and after mapping the training text", [this] {
      LmRecipe recipe;
      recipe.order = order;
      recipe.min_count = min_count;
      recipe.max_vocab = max_vocab;
      recipe.interpolate = !no_interpolate;
      recipe.oov = parse_oov_policy(oov);
      auto train = read_corpora(inputs, text);
      Corpus dev_text = load_corpus(dev, text.normalize());
      Corpus eval_text = eval.empty() ? dev_text : load_corpus(eval, text.normalize());
      emit(output, format_mapped_evaluation(
                       mapped_lm_eval(train, dev_text, eval_text, read_mapping(mapping_path), recipe, map_eval_text)));
    });
    deval->add_option("--train", inputs, "Training texts (repeat)")->required()->check(CLI::ExistingFile);
    deval->add_option("--dev", dev, "Dev text for the interpolation weights")->required()->check(CLI::ExistingFile);
    deval->add_option("--eval", eval, "Evaluation text (default: the dev text)")->check(CLI::ExistingFile);
    deval->add_option("--order", order, "N-gram order")->capture_default_str();
    deval->add_option("--min-count", min_count, "Minimum count for a vocabulary word")->capture_default_str();
    deval->add_option("--max-vocab", max_vocab, "Vocabulary size cap");
    deval->add_option("--oov", oov, "OOV policy: exclude or as_unk")->capture_default_str();
    deval->add_flag("--no-interpolate", no_interpolate, "Pool the training texts into one model");
    deval->add_flag("--map-eval-text", map_eval_text, "Also map the dev and evaluation text");
    deval->add_option("-o,--output", output, "Output file (default stdout)");
    add_text_flags(deval, text);
    for (auto* sub : {apply, deval})
      sub->add_option("--mapping", mapping_path, "Mapping table")->required()->check(CLI::ExistingFile);

    auto* score = app.add_subcommand("score", "Error rates")->require_subcommand(1);
    auto score_cmd = [this](ScoreUnit unit) {
      return [this, unit] {
        Transcripts r = read_transcripts(ref), h = read_transcripts(hyp);
        ScoreReport s = unit == ScoreUnit::kWord ? wer(r, h) : cer(r, h);
        emit(output, table ? format_score_table(s) : format_score_tsv(s));
        if (!s.missing.empty()) warn(std::to_string(s.missing.size()) + " reference(s) had no hypothesis");
      };
    };
    auto* swer = command(score, "wer", "Word error rate", score_cmd(ScoreUnit::kWord));
    auto* scer = command(score, "cer", "Character error rate", score_cmd(ScoreUnit::kCharacter));
    for (auto* sub : {swer, scer}) {
      sub->add_option("--ref", ref, "Reference transcripts (id<TAB>text)")->required()->check(CLI::ExistingFile);
      sub->add_option("--hyp", hyp, "Hypothesis transcripts (id<TAB>text)")->required()->check(CLI::ExistingFile);
      sub->add_flag("--table", table, "Aligned text table instead of TSV");
      sub->add_option("-o,--output", output, "Output file (default stdout)");
    }

    auto* pipeline = app.add_subcommand("pipeline", "Run a configured pipeline")->require_subcommand(1);
    auto* run = command(pipeline, "run", "Run every stage the config enables", [this] {
      std::optional<std::filesystem::path> out;
      if (!output.empty()) out = output;
      PipelineConfig c;
      try {
        c = load_config(config, overrides, out);
      } catch (const StageError&) {
        throw;
      } catch (const Error& e) {
        throw StageError("config", e.what());
      }
      std::vector<PipelinePart> parts;
      for (const auto& p : only) parts.push_back(parse_pipeline_part(p));
      auto stages = run_pipeline(c, parts.empty() ? configured_parts(c) : parts);
      for (const auto& s : stages)
        std::cerr << s.name << '\t' << s.status << (s.note.empty() ? "" : "\t" + s.note) << '\n';
    });
    run->add_option("--config", config, "Config file")->required()->check(CLI::ExistingFile);
    run->add_option("--set", overrides, "Override a setting, key=value (repeat)");
    run->add_option("--output", output, "Output directory (overrides the config)");
    run->add_option("--only", only, "Run only these parts: lm, lexicon, dialect")->delimiter(',');
  }
};

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  try {
    cli.app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return cli.app.exit(e);
  }
  ScopedWarningSink sink([](const std::string& m) { std::cerr << "warning: " << m << '\n'; });
  try {
    cli.action();
  } catch (const StageError& e) {
    std::cerr << "lmkit: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "lmkit: [" << cli.stage << "] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
