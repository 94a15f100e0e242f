#include <sys/wait.h>

#include <cstdio>

#include <gtest/gtest.h>

#include "integration/test_dirs.hpp"
#include "lmkit/pipeline.hpp"

namespace lmkit {
namespace {

using testing_dirs::ScratchDir;

const std::filesystem::path kFixture = std::filesystem::path(LMKIT_FIXTURE_DIR) / "pipeline";

struct Cli {
  int status = -1;
  std::string output;  // stdout and stderr interleaved
};

Cli lmkit(const std::string& args) {
  std::string cmd = std::string(LMKIT_CLI_PATH) + " " + args + " 2>&1";
  Cli r;
  std::FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
  int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string fixture(const std::string& name) { return (kFixture / name).string(); }

TEST(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(lmkit("--help").status, 0);
  EXPECT_NE(lmkit("").status, 0);
  EXPECT_NE(lmkit("lm frobnicate").status, 0);
  EXPECT_NE(lmkit("lm ppl --lm /nonexistent.arpa --text " + fixture("dev.txt")).status, 0);
}

TEST(CliTest, LanguageModelCommandsMatchTheLibrary) {
  ScratchDir dir("cli_lm");
  const std::string news = (dir / "news.arpa").string(), chat = (dir / "chat.arpa").string();
  // The vocabulary file does not exist yet.
  ASSERT_NE(lmkit("lm train --text " + fixture("news.txt") + " --order 3 --vocab " + (dir / "v.txt").string()).status,
            0);
  ASSERT_EQ(lmkit("lm train --text " + fixture("news.txt") + " --order 3 -o " + news + " --write-vocab " +
                  (dir / "v.txt").string())
                .status,
            0);
  Corpus c = load_corpus(kFixture / "news.txt", {}, "news");
  EXPECT_EQ(read_file(news), format_arpa(train_lm(c, 3, build_vocabulary(c))));

  Cli ppl = lmkit("lm ppl --lm " + news + " --text " + fixture("dev.txt"));
  ASSERT_EQ(ppl.status, 0) << ppl.output;
  EXPECT_EQ(ppl.output, format_report(perplexity(read_arpa(std::filesystem::path(news)), load_corpus(kFixture / "dev.txt"))));

  Cli oov = lmkit("lm oov --vocab " + (dir / "v.txt").string() + " --text " + fixture("dev.txt"));
  ASSERT_EQ(oov.status, 0) << oov.output;
  EXPECT_EQ(oov.output.rfind("tokens\t", 0), 0u);

  Cli counts = lmkit("lm count --text " + fixture("news.txt") + " --order 2");
  ASSERT_EQ(counts.status, 0);
  EXPECT_EQ(counts.output.rfind("1\t", 0), 0u);

  // A shared vocabulary for the mixture.
  std::string vocab = (dir / "shared.txt").string();
  write_file(vocab, read_file(dir / "v.txt"));
  std::vector<Corpus> both{c, load_corpus(kFixture / "chat.txt")};
  write_vocabulary(build_vocabulary(both), vocab);
  ASSERT_EQ(lmkit("lm train --text " + fixture("news.txt") + " --order 3 --vocab " + vocab + " -o " + news).status, 0);
  ASSERT_EQ(lmkit("lm train --text " + fixture("chat.txt") + " --order 3 --vocab " + vocab + " -o " + chat).status, 0);
  const std::string weights = (dir / "w.tsv").string();
  Cli em = lmkit("mix em --lm " + news + " --lm " + chat + " --dev " + fixture("dev.txt") + " -o " + weights);
  ASSERT_EQ(em.status, 0) << em.output;
  InterpolationWeights w = read_weights(weights);
  EXPECT_EQ(w.ids, (std::vector<std::string>{"news", "chat"}));
  Cli merged = lmkit("mix merge --lm " + news + " --lm " + chat + " --weights " + weights);
  ASSERT_EQ(merged.status, 0);
  EXPECT_LT(max_normalization_error(parse_arpa(merged.output)), 1e-5);
  Cli mppl = lmkit("mix ppl --lm " + news + " --lm " + chat + " --weights " + weights + " --text " + fixture("test.txt"));
  ASSERT_EQ(mppl.status, 0);
  EXPECT_NE(mppl.output.find("ppl\t"), std::string::npos);

  Cli pruned = lmkit("prune --lm " + news + " --theta inf --report " + (dir / "r.tsv").string());
  ASSERT_EQ(pruned.status, 0);
  BackoffLM p = parse_arpa(pruned.output);
  EXPECT_EQ(p.total_size(), p.size(1));
  EXPECT_NE(read_file(dir / "r.tsv").find("theta\tinf"), std::string::npos);
}

TEST(CliTest, LexiconAndDialectCommands) {
  ScratchDir dir("cli_lex");
  const std::string model = (dir / "g2p.model").string();
  Cli train = lmkit("g2p train --lexicon " + fixture("seed.lex") + " --inventory " + fixture("phonemes.txt") + " -o " +
                    model);
  ASSERT_EQ(train.status, 0) << train.output;
  Cli apply = lmkit("g2p apply --model " + model + " --word shabe --word qqq --nbest 2");
  ASSERT_EQ(apply.status, 0);
  EXPECT_EQ(apply.output.rfind("shabe\tS ", 0), 0u) << apply.output;
  EXPECT_NE(apply.output.find("\nshabe\t", 1), std::string::npos) << apply.output;
  EXPECT_NE(apply.output.find("qqq\tFAILED\t"), std::string::npos);

  dir.write("words.txt", "shabe kefoto\n");
  Cli extend = lmkit("lexicon extend --lexicon " + fixture("seed.lex") + " --model " + model + " --words " +
                     (dir / "words.txt").string() + " --report " + (dir / "ext.tsv").string() + " -o " +
                     (dir / "ext.lex").string());
  ASSERT_EQ(extend.status, 0) << extend.output;
  EXPECT_TRUE(read_lexicon(dir / "ext.lex").contains("kefoto"));
  EXPECT_NE(read_file(dir / "ext.tsv").find("provisional"), std::string::npos);

  Cli refused = lmkit("lexicon merge --base " + fixture("seed.lex") + " --addon " + fixture("medical.lex"));
  EXPECT_EQ(refused.status, 1);
  EXPECT_NE(refused.output.find("[lexicon merge]"), std::string::npos) << refused.output;
  Cli merged = lmkit("lexicon merge --base " + fixture("seed.lex") + " --addon " + fixture("medical.lex") +
                     " --inventory " + fixture("phonemes.txt") + " --phoneme-map " + fixture("phonemes.map"));
  ASSERT_EQ(merged.status, 0) << merged.output;

  Cli cands = lmkit("dialect candidates --text " + fixture("chat.txt") + " --exclude " + fixture("news.txt") +
                    " --exclude " + fixture("medical.txt") + " --top 5");
  ASSERT_EQ(cands.status, 0);
  EXPECT_EQ(split(cands.output, '\n').size(), 6u);  // five lines and the trailing newline
  Cli mapped = lmkit("dialect apply --text " + fixture("chat.txt") + " --mapping " + fixture("mapping.tsv"));
  ASSERT_EQ(mapped.status, 0);
  EXPECT_NE(mapped.output.find("replaced "), std::string::npos);
  Cli eval = lmkit("dialect eval --train " + fixture("news.txt") + " --train " + fixture("chat.txt") + " --dev " +
                   fixture("dev.txt") + " --mapping " + fixture("mapping.tsv") + " --map-eval-text --order 3");
  ASSERT_EQ(eval.status, 0) << eval.output;
  EXPECT_NE(eval.output.find("model\tppl\tscored\toov\tlog10_prob\nbefore\t"), std::string::npos) << eval.output;

  Cli wer_run = lmkit("score wer --ref " + fixture("ref.txt") + " --hyp " + fixture("hyp.txt"));
  ASSERT_EQ(wer_run.status, 0);
  EXPECT_EQ(wer_run.output,
            format_score_tsv(wer(read_transcripts(kFixture / "ref.txt"), read_transcripts(kFixture / "hyp.txt"))));
  Cli cer_run = lmkit("score cer --table --ref " + fixture("ref.txt") + " --hyp " + fixture("hyp.txt"));
  ASSERT_EQ(cer_run.status, 0);
  EXPECT_NE(cer_run.output.find("CER%"), std::string::npos);
  Cli corpus = lmkit("corpus stats " + fixture("news.txt") + " " + fixture("chat.txt"));
  ASSERT_EQ(corpus.status, 0);
  EXPECT_EQ(corpus.output.rfind("id\tsentences\ttokens\ttypes\nnews\t700\t", 0), 0u) << corpus.output;
}

TEST(CliTest, PipelineRunAndStageTaggedFailures) {
  ScratchDir dir("cli_pipeline");
  Cli ok = lmkit("pipeline run --config " + fixture("pipeline.conf") + " --output " + (dir / "out").string() +
                 " --only lm --set prune_theta=1e-5");
  ASSERT_EQ(ok.status, 0) << ok.output;
  EXPECT_TRUE(std::filesystem::exists(dir / "out/pruned.arpa"));
  EXPECT_FALSE(std::filesystem::exists(dir / "out/lexicon"));
  EXPECT_NE(read_file(dir / "out/manifest.json").find("\"prune_theta\": \"1e-5\""), std::string::npos);

  Cli bad_key = lmkit("pipeline run --config " + fixture("pipeline.conf") + " --output " + (dir / "x").string() +
                      " --set colour=blue");
  EXPECT_EQ(bad_key.status, 1);
  EXPECT_NE(bad_key.output.find("[config] --set colour=blue: unknown config key 'colour'"), std::string::npos)
      << bad_key.output;

  dir.write("bad.conf", "corpus.a = " + fixture("news.txt") + "\ncorpus.b = " + fixture("chat.txt") + "\n");
  Cli no_dev = lmkit("pipeline run --config " + (dir / "bad.conf").string() + " --output " + (dir / "y").string());
  EXPECT_EQ(no_dev.status, 1);
  EXPECT_NE(no_dev.output.find("lmkit: [weights]"), std::string::npos) << no_dev.output;
}

}  // namespace
}  // namespace lmkit
