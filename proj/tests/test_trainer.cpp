#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "jseg/eval.hpp"
#include "jseg/tagger.hpp"
#include "jseg/trainer.hpp"
#include "model_fixtures.hpp"

using namespace jseg;
using namespace jseg::testing;

TEST_SUITE("trainer") {

TEST_CASE("learning-rate schedule") {
  const TrainConfig cfg;
  CHECK(lr_at_epoch(1, cfg) == 0.1);
  CHECK(std::abs(lr_at_epoch(2, cfg) - 0.0952381) < 1e-7);
  CHECK(std::abs(lr_at_epoch(21, cfg) - 0.05) < 1e-15);
  for (int t = 1; t < 40; ++t) CHECK(lr_at_epoch(t + 1, cfg) < lr_at_epoch(t, cfg));
  CHECK_THROWS_AS(lr_at_epoch(0, cfg), Error);
}

TEST_CASE("gradient clipping") {
  Matrix a(1, 2), b = Matrix::Zero(2, 2);
  auto run = [&](double x, double y) {
    a << x, y;
    b.setZero();
    std::vector<TensorMap> views = {TensorMap(a.data(), 1, 2), TensorMap(b.data(), 2, 2)};
    return clip_gradients(views, 5.0);
  };
  CHECK(run(3, 4) == 5.0);
  CHECK(a(0, 0) == 3.0);
  CHECK(a(0, 1) == 4.0);
  CHECK(run(6, 8) == 10.0);
  CHECK(std::abs(a(0, 0) - 3.0) < 1e-15);
  CHECK(std::abs(a(0, 1) - 4.0) < 1e-15);
  run(1.2, 1.6);
  CHECK(a(0, 0) == 1.2);

  // direction is preserved exactly
  Rng rng(1);
  Matrix g = glorot_init(10, 10, rng) * 100.0;
  const Matrix before = g;
  std::vector<TensorMap> views = {TensorMap(g.data(), 10, 10)};
  clip_gradients(views, 5.0);
  const double cosine = g.cwiseProduct(before).sum() / (g.norm() * before.norm());
  CHECK(std::abs(cosine - 1.0) < 1e-12);
  CHECK(std::abs(g.norm() - 5.0) < 1e-12);

  a << std::nan(""), 0;
  std::vector<TensorMap> bad = {TensorMap(a.data(), 1, 2)};
  CHECK_THROWS_AS(clip_gradients(bad, 5.0), Error);
}

TEST_CASE("adagrad") {
  Matrix p = Matrix::Constant(1, 2, 1.0), acc = Matrix::Zero(1, 2), g = Matrix::Zero(1, 2);
  auto step = [&] {
    adagrad_step(TensorMap(p.data(), 1, 2), ConstTensorMap(g.data(), 1, 2), TensorMap(acc.data(), 1, 2), 0.1);
  };
  step();
  CHECK(p == Matrix::Constant(1, 2, 1.0));
  g << 3.0, -0.02;
  step();
  CHECK(std::abs(p(0, 0) - 0.9) < 1e-9);
  // 0.02 is only 200 sqrt(eps) away from zero, hence the looser bound
  CHECK(std::abs(p(0, 1) - 1.1) < 2e-6);
  const Matrix after_one = p;
  step();
  CHECK(std::abs((after_one(0, 0) - p(0, 0)) - 0.1 / std::sqrt(2.0)) < 1e-9);
  CHECK(acc(0, 0) == 18.0);
  Matrix wrong(2, 2);
  CHECK_THROWS_AS(adagrad_step(TensorMap(wrong.data(), 2, 2), ConstTensorMap(g.data(), 1, 2),
                               TensorMap(acc.data(), 1, 2), 0.1),
                  Error);
}

TEST_CASE("adagrad state touches only rows with gradients") {
  const Corpus corpus = toy_corpus(4, 10, 1);
  ModelConfig cfg;
  cfg.repr.max_order = 2;
  cfg.repr.ngram_dim = 3;
  cfg.repr.radicals = true;
  cfg.repr.radical_dim = 2;
  cfg.gru_state = 3;
  auto model = make_model(corpus, cfg);
  randomize(model, 1);
  AdagradState state(model.params());
  const auto before = model.params();
  auto grads = model.zero_grads();
  grads.repr.ngram[0].add(2, RowVector::Constant(3, 0.5));
  grads.crf.T(0, 0) = -1.0;
  state.update(model.params(), grads, 0.1);
  const auto& p = model.params();
  CHECK(std::abs(p.repr.ngram[0](2, 0) - (before.repr.ngram[0](2, 0) - 0.1)) < 1e-7);
  CHECK(p.repr.ngram[0].row(1) == before.repr.ngram[0].row(1));
  CHECK(p.repr.radical == before.repr.radical);
  CHECK(std::abs(p.crf.T(0, 0) - (before.crf.T(0, 0) + 0.1)) < 1e-7);
  CHECK(p.crf.T(0, 1) == before.crf.T(0, 1));
  for (const auto& acc : state.accumulators()) CHECK((acc.array() >= 0).all());
}

TEST_CASE("glorot initialisation") {
  Rng rng(2);
  const Matrix a = glorot_init(3, 3, rng);
  CHECK(a.cwiseAbs().maxCoeff() <= 1.0);
  const Matrix b = glorot_init(100, 200, rng);
  const double bound = std::sqrt(6.0 / 300.0);
  CHECK(std::abs(bound - 0.1414) < 1e-4);
  CHECK(b.cwiseAbs().maxCoeff() <= bound);
  const double mean = b.mean();
  const double var = (b.array() - mean).square().mean();
  const double expected = 2.0 / 300.0;
  CHECK(std::abs(var - expected) < 0.2 * expected);
  Rng r1(3), r2(3);
  CHECK(glorot_init(4, 5, r1) == glorot_init(4, 5, r2));
}

TEST_CASE("init_params zeroes biases and boundary scores") {
  const Corpus corpus = toy_corpus(3, 8, 2);
  ModelConfig cfg;
  cfg.repr.max_order = 2;
  cfg.repr.radicals = true;
  cfg.gru_state = 6;
  auto model = make_model(corpus, cfg);
  Rng rng(4);
  init_params(model, rng);
  const auto& p = model.params();
  CHECK(p.fwd.b.isZero(0.0));
  CHECK(p.bwd.b.isZero(0.0));
  CHECK(p.crf.b.isZero(0.0));
  CHECK(p.crf.start.isZero(0.0));
  CHECK(p.crf.end.isZero(0.0));
  const double emb_bound = std::sqrt(6.0 / (p.repr.ngram[0].rows() + 64.0));
  CHECK(p.repr.ngram[0].cwiseAbs().maxCoeff() <= emb_bound);
  CHECK(p.repr.ngram[0].cwiseAbs().maxCoeff() > 0.0);
  const double gate_bound = std::sqrt(6.0 / (6.0 + 6.0));
  CHECK(p.fwd.U.cwiseAbs().maxCoeff() <= gate_bound);
}

TEST_CASE("bucketing") {
  std::vector<std::size_t> lengths = {3, 9, 10};
  auto buckets = make_buckets(lengths, 10, 10);
  REQUIRE(buckets.size() == 1);
  CHECK(buckets[0].max_len == 10);
  CHECK(buckets[0].members == std::vector<std::size_t>{0, 1, 2});
  const Matrix mask = buckets[0].mask();
  CHECK(mask.row(0).sum() == 3);
  CHECK(mask.row(2).sum() == 10);

  std::vector<std::size_t> equal(7, 4);
  buckets = make_buckets(equal, 4, 3);
  CHECK(buckets.size() == 3);
  for (const auto& b : buckets) CHECK((b.mask().array() == 1.0).all());

  std::mt19937_64 rng(5);
  std::vector<std::size_t> mixed(53);
  for (auto& l : mixed) l = 1 + rng() % 40;
  for (int width : {1, 5, 10}) {
    buckets = make_buckets(mixed, width, 4);
    std::vector<std::size_t> seen;
    int last = 0;
    for (const auto& b : buckets) {
      CHECK(b.max_len >= last);
      last = b.max_len;
      CHECK(b.members.size() <= 4);
      CHECK(b.max_len % width == 0);
      for (std::size_t i = 0; i < b.members.size(); ++i) {
        CHECK(mixed[b.members[i]] <= static_cast<std::size_t>(b.max_len));
        CHECK(mixed[b.members[i]] + width > static_cast<std::size_t>(b.max_len));
        CHECK(b.lengths[i] == static_cast<int>(mixed[b.members[i]]));
        seen.push_back(b.members[i]);
      }
    }
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> all(mixed.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(seen == all);
  }
  CHECK_THROWS_AS(make_buckets(mixed, 0, 4), Error);
}

TEST_CASE("config files") {
  const TrainConfig defaults;
  CHECK(defaults.initial_lr == 0.1);
  CHECK(defaults.decay == 0.05);
  CHECK(defaults.clip_norm == 5.0);
  CHECK(defaults.dropout == 0.5);
  CHECK(defaults.batch_size == 10);
  CHECK(defaults.epochs == 30);
  CHECK(defaults.min_adopt_epoch == 5);
  CHECK(TrainConfig::parse(defaults.to_text()) == defaults);
  const auto c = TrainConfig::parse("# comment\nepochs = 7\nglyphs=true\n\nseed=12\n");
  CHECK(c.epochs == 7);
  CHECK(c.glyphs);
  CHECK(c.seed == 12);
  CHECK_THROWS_WITH_AS(TrainConfig::parse("epochs=3\nbogus=1\n"), doctest::Contains("line 2"), Error);
  CHECK_THROWS_AS(TrainConfig::parse("epochs=x\n"), Error);
  CHECK_THROWS_AS(TrainConfig::parse("dropout=1.5\n"), Error);
  CHECK_THROWS_AS(TrainConfig::parse("batch_size=0\n"), Error);
}

TEST_CASE("training") {
  const Corpus train_corpus = toy_corpus(10, 12, 3);
  TrainConfig cfg;
  cfg.max_order = 2;
  cfg.ngram_dim = 16;
  cfg.radical_dim = 8;
  cfg.gru_state = 16;
  cfg.epochs = 5;
  cfg.min_adopt_epoch = 5;

  SUBCASE("deterministic and selects the only candidate") {
    std::vector<std::string> lines;
    const auto a = train(train_corpus, train_corpus, cfg, {}, [&](const EpochLog& l) { lines.push_back(l.to_text()); });
    const auto b = train(train_corpus, train_corpus, cfg);
    CHECK(a.best_epoch == 5);
    REQUIRE(a.log.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(a.log[i].to_text() == b.log[i].to_text());
      CHECK(lines[i] == a.log[i].to_text());
      CHECK(a.log[i].lr == lr_at_epoch(static_cast<int>(i) + 1, cfg));
    }
    CHECK(a.model.params().crf.T == b.model.params().crf.T);
    CHECK(a.model.params().repr.ngram[1] == b.model.params().repr.ngram[1]);
  }
  SUBCASE("fewer epochs than the adoption threshold") {
    cfg.epochs = 2;
    const auto r = train(train_corpus, train_corpus, cfg);
    CHECK(r.best_epoch == 2);
  }
  SUBCASE("selection maximises the dev product") {
    cfg.epochs = 8;
    cfg.min_adopt_epoch = 3;
    const auto r = train(train_corpus, train_corpus, cfg);
    double best = -1;
    int best_epoch = 0;
    for (const auto& l : r.log)
      if (l.epoch >= 3 && l.product > best) {
        best = l.product;
        best_epoch = l.epoch;
      }
    CHECK(r.best_epoch == best_epoch);
    const auto predicted = tag_sentences(r.model, [&] {
      std::vector<std::u32string> raw;
      for (const auto& s : train_corpus) raw.push_back(s.chars());
      return raw;
    }());
    const double product = word_f1(train_corpus, predicted, false).f1 * word_f1(train_corpus, predicted, true).f1;
    CHECK(product == best);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(train({}, train_corpus, cfg), Error);
    CHECK_THROWS_AS(train(train_corpus, {}, cfg), Error);
    cfg.pretrained = true;
    CHECK_THROWS_AS(train(train_corpus, train_corpus, cfg), Error);
  }
}

TEST_CASE("loss on a fixed batch decreases over the first epochs") {
  const Corpus corpus = toy_corpus(10, 20, 5);
  TrainConfig cfg;
  cfg.max_order = 2;
  cfg.ngram_dim = 16;
  cfg.radical_dim = 8;
  cfg.gru_state = 16;
  auto model = make_model(corpus, cfg.model_config());
  Rng rng(6);
  init_params(model, rng);
  std::vector<Example> batch;
  for (const auto& s : corpus) batch.push_back(model.make_example(s));
  AdagradState state(model.params());
  std::vector<double> losses = {model.loss(batch)};
  for (int epoch = 1; epoch <= 6; ++epoch) {
    for (std::size_t start = 0; start < batch.size(); start += 5) {
      const std::vector<Example> mini(batch.begin() + static_cast<long>(start), batch.begin() + static_cast<long>(start + 5));
      auto grads = model.zero_grads();
      model.loss_and_grad(mini, true, rng, grads);
      auto views = gradient_views(grads);
      clip_gradients(views, cfg.clip_norm);
      state.update(model.params(), grads, lr_at_epoch(epoch, cfg));
    }
    losses.push_back(model.loss(batch));
  }
  for (std::size_t i = 1; i < losses.size(); ++i) {
    CAPTURE(i);
    CHECK(losses[i] <= 1.05 * losses[i - 1]);
  }
  CHECK(losses.back() < 0.5 * losses.front());
}

TEST_CASE("overfitting a tiny corpus") {
  const Corpus corpus = toy_corpus(10, 15, 6);
  TrainConfig cfg;
  cfg.max_order = 2;
  cfg.ngram_dim = 32;
  cfg.radical_dim = 8;
  cfg.gru_state = 32;
  cfg.epochs = 30;
  const auto r = train(corpus, corpus, cfg);
  CHECK(r.best_epoch >= cfg.min_adopt_epoch);
  CHECK(r.log[static_cast<std::size_t>(r.best_epoch - 1)].product >= 0.99);
}

TEST_CASE("pretrained embeddings reach the unigram table") {
  const Corpus corpus = toy_corpus(4, 8, 4);
  TrainConfig cfg;
  cfg.max_order = 1;
  cfg.gru_state = 4;
  cfg.epochs = 1;
  cfg.pretrained = true;
  const auto path = std::filesystem::temp_directory_path() / "jseg_test_pretrained.txt";
  {
    std::ofstream out(path);
    out << "夏";
    for (int i = 0; i < 64; ++i) out << " 0.5";
    out << '\n';
  }
  TrainInputs inputs;
  inputs.embeddings = path;
  const auto r = train(corpus, corpus, cfg, inputs);
  REQUIRE(r.coverage.has_value());
  CHECK(r.coverage->covered == 1);
}

}  // TEST_SUITE
