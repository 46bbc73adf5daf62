// Command-line front end: train, tag, eval, bench.

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "jseg/archive.hpp"
#include "jseg/eval.hpp"
#include "jseg/tagger.hpp"
#include "jseg/trainer.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct TrainArgs {
  std::string train, dev, config, out, embeddings, radicals, glyphs, log;
  std::optional<std::uint64_t> seed;
};

struct TagArgs {
  std::vector<std::string> models;
  std::string input, output;
  int batch = 500;
  int bucket_width = 10;
};

struct EvalArgs {
  std::string gold, pred, train_vocab, compare;
  bool joint = false;
  bool key_values = false;
};

std::vector<std::unique_ptr<jseg::Model>> load_models(const std::vector<std::string>& paths) {
  std::vector<std::unique_ptr<jseg::Model>> out;
  for (const auto& p : paths) out.push_back(std::make_unique<jseg::Model>(jseg::load_model(p).model));
  for (const auto& m : out) {
    if (!(m->labels() == out.front()->labels())) throw jseg::Error("mismatched label spaces in ensemble");
  }
  return out;
}

std::vector<const jseg::Model*> pointers(const std::vector<std::unique_ptr<jseg::Model>>& models) {
  std::vector<const jseg::Model*> out;
  for (const auto& m : models) out.push_back(m.get());
  return out;
}

void write_tagged(const std::string& path, const std::vector<jseg::TaggedSentence>& tagged) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw jseg::Error("cannot write " + path);
  for (const auto& s : tagged) out << jseg::format_tagged(s) << '\n';
  if (!out) throw jseg::Error("failed writing " + path);
}

int run_train(const TrainArgs& a) {
  auto cfg = jseg::TrainConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  jseg::TrainInputs inputs;
  if (!a.embeddings.empty()) {
    inputs.embeddings = a.embeddings;
    cfg.pretrained = true;
  }
  if (!a.radicals.empty()) inputs.radicals = jseg::RadicalTable::load(a.radicals);
  if (!a.glyphs.empty()) inputs.glyphs = jseg::GlyphStore::load(a.glyphs);
  cfg.validate();
  const auto train_corpus = jseg::read_corpus(a.train);
  const auto dev_corpus = jseg::read_corpus(a.dev);

  const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
  std::ofstream log(log_path);
  if (!log) throw jseg::Error("cannot write " + log_path);
  auto result = jseg::train(train_corpus, dev_corpus, cfg, inputs, [&](const jseg::EpochLog& e) {
    log << e.to_text() << '\n';
    log.flush();
    std::cerr << e.to_text() << " seconds=" << std::fixed << std::setprecision(2) << e.seconds << '\n';
    std::cerr.unsetf(std::ios::fixed);
  });
  if (result.coverage) {
    log << "pretrained_coverage=" << result.coverage->covered << '/' << result.coverage->total << '\n';
  }
  log << "best_epoch=" << result.best_epoch << '\n';
  jseg::save_model(a.out, result.model, cfg);
  std::cerr << "best epoch " << result.best_epoch << ", model written to " << a.out << '\n';
  return 0;
}

int run_tag(const TagArgs& a) {
  const auto models = load_models(a.models);
  const auto raw = jseg::read_raw(a.input);
  const auto tagged = jseg::tag_sentences(pointers(models), raw, {a.batch, a.bucket_width});
  write_tagged(a.output, tagged);
  return 0;
}

int run_eval(const EvalArgs& a) {
  const auto gold = jseg::read_corpus(a.gold);
  const auto pred = jseg::read_corpus(a.pred);
  std::optional<std::set<std::u32string>> vocab;
  if (!a.train_vocab.empty()) vocab = jseg::word_vocabulary(jseg::read_corpus(a.train_vocab));
  const auto report = jseg::evaluate(gold, pred, a.joint, vocab ? &*vocab : nullptr);
  std::cout << (a.key_values ? report.to_key_values() : report.to_text());
  if (!a.compare.empty()) {
    const auto other = jseg::read_corpus(a.compare);
    auto significance = [&](const char* name, bool joint) {
      const auto d = jseg::discordant_words(gold, pred, other, joint);
      std::cout << name << ".discordant=" << d.only_a << ',' << d.only_b << '\n';
      if (d.only_a + d.only_b == 0) {
        std::cout << name << ".mcnemar_midp=n/a\n";
      } else {
        std::cout << name << ".mcnemar_midp=" << std::setprecision(6) << jseg::mcnemar_midp(d.only_a, d.only_b)
                  << '\n';
      }
    };
    significance("seg", false);
    if (a.joint) significance("seg_tag", true);
  }
  return 0;
}

int run_bench(const TagArgs& a) {
  const auto t0 = Clock::now();
  const auto models = load_models(a.models);
  const double init = since(t0);
  const auto raw = jseg::read_raw(a.input);
  std::size_t chars = 0;
  for (const auto& s : raw) chars += s.size();

  jseg::TagTimings timings;
  const auto t1 = Clock::now();
  const auto tagged = jseg::tag_sentences(pointers(models), raw, {a.batch, a.bucket_width}, &timings);
  const double total = since(t1);
  if (!a.output.empty()) write_tagged(a.output, tagged);

  std::cout << std::setprecision(6);
  std::cout << "models=" << models.size() << '\n'
            << "labels=" << models.front()->labels().size() << '\n'
            << "sentences=" << raw.size() << '\n'
            << "characters=" << chars << '\n'
            << "init_seconds=" << init << '\n'
            << "tag_seconds=" << total << '\n'
            << "scoring_seconds=" << timings.scoring_seconds << '\n'
            << "viterbi_seconds=" << timings.viterbi_seconds << '\n'
            << "sentences_per_second=" << static_cast<double>(raw.size()) / total << '\n'
            << "chars_per_second=" << static_cast<double>(chars) / total << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint Chinese word segmentation and POS tagging"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "train a model");
  t->add_option("--train", train.train, "training corpus (surface_POS tokens)")->required()->check(CLI::ExistingFile);
  t->add_option("--dev", train.dev, "development corpus")->required()->check(CLI::ExistingFile);
  t->add_option("--config", train.config, "key=value training configuration")->required()->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "model archive to write")->required();
  t->add_option("--embeddings", train.embeddings, "pre-trained character vectors")->check(CLI::ExistingFile);
  t->add_option("--radicals", train.radicals, "radical range table")->check(CLI::ExistingFile);
  t->add_option("--glyphs", train.glyphs, "glyph bitmaps")->check(CLI::ExistingFile);
  t->add_option("--seed", train.seed, "overrides the config seed");
  t->add_option("--log", train.log, "epoch log (default: <out>.log)");

  TagArgs tag;
  auto* g = app.add_subcommand("tag", "segment and tag raw text");
  g->add_option("--model", tag.models, "model archive; repeat for an ensemble")->required()->check(CLI::ExistingFile);
  g->add_option("--input", tag.input, "raw text, one sentence per line")->required()->check(CLI::ExistingFile);
  g->add_option("--output", tag.output, "tagged output")->required();
  g->add_option("--batch", tag.batch, "sentences per batch")->check(CLI::PositiveNumber);
  g->add_option("--bucket-width", tag.bucket_width, "length bucket width")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score predictions against gold");
  e->add_option("--gold", ev.gold, "gold corpus")->required()->check(CLI::ExistingFile);
  e->add_option("--pred", ev.pred, "predicted corpus")->required()->check(CLI::ExistingFile);
  e->add_option("--train-vocab", ev.train_vocab, "training corpus for OOV recall")->check(CLI::ExistingFile);
  e->add_option("--compare", ev.compare, "second system for the mid-p McNemar test")->check(CLI::ExistingFile);
  e->add_flag("--joint", ev.joint, "also score Seg&Tag");
  e->add_flag("--kv", ev.key_values, "key=value output");

  TagArgs bench;
  auto* b = app.add_subcommand("bench", "measure tagging throughput");
  b->add_option("--model", bench.models, "model archive; repeat for an ensemble")->required()->check(CLI::ExistingFile);
  b->add_option("--input", bench.input, "raw text")->required()->check(CLI::ExistingFile);
  b->add_option("--output", bench.output, "optionally write the tagged output");
  b->add_option("--batch", bench.batch, "sentences per batch")->check(CLI::PositiveNumber);
  b->add_option("--bucket-width", bench.bucket_width, "length bucket width")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*t) return run_train(train);
    if (*g) return run_tag(tag);
    if (*e) return run_eval(ev);
    if (*b) return run_bench(bench);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 2;
}
