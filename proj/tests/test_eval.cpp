#include <random>

#include "doctest.h"
#include "jseg/eval.hpp"
#include "test_support.hpp"

using namespace jseg;
using namespace jseg::testing;

namespace {

// Binomial(n, 1/2) probabilities from Pascal's triangle, n small.
std::vector<double> half_binomial(int n) {
  std::vector<double> row = {1.0};
  for (int i = 0; i < n; ++i) {
    std::vector<double> next(row.size() + 1, 0.0);
    for (std::size_t j = 0; j < row.size(); ++j) {
      next[j] += row[j] / 2;
      next[j + 1] += row[j] / 2;
    }
    row = std::move(next);
  }
  return row;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("word spans") {
  const auto spans = word_spans(sent({{"夏天", "NT"}, {"太", "AD"}, {"热", "VA"}}));
  REQUIRE(spans.size() == 3);
  CHECK(spans[0] == WordSpan{0, 1, "NT"});
  CHECK(spans[1] == WordSpan{2, 2, "AD"});
  CHECK(spans[2] == WordSpan{3, 3, "VA"});
}

TEST_CASE("fixture scores") {
  const Corpus gold = {sent({{"ab", "N"}, {"c", "V"}})};
  const Corpus pred = {sent({{"a", "N"}, {"b", "N"}, {"c", "V"}})};
  const auto seg = word_f1(gold, pred, false);
  CHECK(seg.precision == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(seg.recall == 0.5);
  CHECK(std::abs(seg.f1 - 0.4) < 1e-15);
  CHECK(seg.correct == 1);

  const Corpus pred_w = {sent({{"a", "N"}, {"b", "N"}, {"c", "W"}})};
  const auto joint = word_f1(gold, pred_w, true);
  CHECK(joint.precision == 0.0);
  CHECK(joint.recall == 0.0);
  CHECK(joint.f1 == 0.0);

  const auto same = word_f1(gold, gold, true);
  CHECK(same.precision == 1.0);
  CHECK(same.recall == 1.0);
  CHECK(same.f1 == 1.0);
}

TEST_CASE("alignment errors name the sentence") {
  const Corpus gold = {sent({{"ab", "N"}}), sent({{"cd", "N"}})};
  const Corpus pred = {sent({{"ab", "N"}}), sent({{"ce", "N"}})};
  CHECK_THROWS_WITH_AS(word_f1(gold, pred, false), doctest::Contains("sentence 2"), Error);
  CHECK_THROWS_AS(word_f1(gold, Corpus{gold[0]}, false), Error);
}

TEST_CASE("metric properties on random pairs") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    Corpus gold, pred;
    for (int s = 0; s < 3; ++s) {
      const auto g = random_sentence(rng);
      auto p = random_sentence(rng, 12, 3);
      // resegment the gold characters with p's random word lengths and tags
      TaggedSentence q;
      const auto chars = g.chars();
      std::size_t pos = 0, w = 0;
      while (pos < chars.size()) {
        const auto& src = p.words[w++ % p.words.size()];
        const auto len = std::min(src.surface.size(), chars.size() - pos);
        q.words.push_back({chars.substr(pos, len), src.pos});
        pos += len;
      }
      gold.push_back(g);
      pred.push_back(q);
    }
    const auto ab = word_f1(gold, pred, false), ba = word_f1(pred, gold, false);
    CHECK(ab.precision == ba.recall);
    CHECK(ab.recall == ba.precision);
    const auto joint = word_f1(gold, pred, true);
    CHECK(joint.f1 <= ab.f1);
    if (ab.precision + ab.recall > 0)
      CHECK(std::abs(ab.f1 - 2 * ab.precision * ab.recall / (ab.precision + ab.recall)) < 1e-12);
  }
}

TEST_CASE("OOV recall") {
  const std::set<std::u32string> vocab = {U"ab", U"c"};
  const Corpus gold = {sent({{"ab", "N"}, {"c", "V"}})};
  CHECK_FALSE(oov_recall(gold, gold, vocab, false).has_value());

  const Corpus one = {sent({{"xy", "N"}, {"c", "V"}})};
  CHECK(*oov_recall(one, one, vocab, false) == 1.0);
  CHECK(*oov_recall(one, one, vocab, true) == 1.0);

  // two OOV words: xy gets the right span but the wrong tag
  const Corpus two = {sent({{"xy", "N"}, {"zw", "V"}})};
  SUBCASE("other word mis-segmented") {
    const Corpus pred = {sent({{"xy", "V"}, {"z", "V"}, {"w", "V"}})};
    CHECK(*oov_recall(two, pred, vocab, false) == 0.5);
    CHECK(*oov_recall(two, pred, vocab, true) == 0.0);
  }
  SUBCASE("other word correct") {
    const Corpus pred = {sent({{"xy", "V"}, {"zw", "V"}})};
    CHECK(*oov_recall(two, pred, vocab, false) == 1.0);
    CHECK(*oov_recall(two, pred, vocab, true) == 0.5);
  }
  // membership is by surface only
  const std::set<std::u32string> v2 = {U"xy"};
  const Corpus tagged = {sent({{"xy", "Q"}})};
  CHECK_FALSE(oov_recall(tagged, tagged, v2, true).has_value());
}

TEST_CASE("reports") {
  const Corpus gold = {sent({{"ab", "N"}, {"c", "V"}})};
  const Corpus pred = {sent({{"a", "N"}, {"b", "N"}, {"c", "V"}})};
  const auto r = evaluate(gold, pred, true, nullptr);
  CHECK(r.seg_tag.has_value());
  CHECK_FALSE(r.oov_recall_seg.has_value());
  const auto kv = r.to_key_values();
  CHECK(kv.find("seg.f1=0.4") != std::string::npos);
  CHECK(kv.find("oov.recall_seg=n/a") != std::string::npos);
  const auto no_joint = evaluate(gold, pred, false, nullptr);
  CHECK_FALSE(no_joint.seg_tag.has_value());
  const auto vocab = word_vocabulary(gold);
  CHECK(vocab == std::set<std::u32string>{U"ab", U"c"});
  CHECK(label_accuracy(gold, pred) == doctest::Approx(1.0 / 3));
}

TEST_CASE("discordant words") {
  const Corpus gold = {sent({{"ab", "N"}, {"c", "V"}, {"d", "P"}})};
  const Corpus a = {sent({{"ab", "N"}, {"c", "X"}, {"d", "P"}})};
  const Corpus b = {sent({{"a", "N"}, {"b", "N"}, {"c", "V"}, {"d", "P"}})};
  const auto seg = discordant_words(gold, a, b, false);
  CHECK(seg.only_a == 1);
  CHECK(seg.only_b == 0);
  const auto joint = discordant_words(gold, a, b, true);
  CHECK(joint.only_a == 1);
  CHECK(joint.only_b == 1);
}

TEST_CASE("mid-p McNemar") {
  CHECK(mcnemar_midp(1, 1) == 1.0);
  CHECK(mcnemar_midp(0, 5) == 0.03125);
  CHECK(mcnemar_midp(5, 0) == 0.03125);
  CHECK_THROWS_WITH_AS(mcnemar_midp(0, 0), "no discordant pairs", Error);
  CHECK_THROWS_AS(mcnemar_midp(-1, 3), Error);
  for (int b = 0; b <= 30; ++b)
    for (int c = 0; c <= 30; ++c) {
      if (b + c == 0) continue;
      const auto probs = half_binomial(b + c);
      const int m = std::min(b, c);
      double cdf = 0.0;
      for (int i = 0; i <= m; ++i) cdf += probs[static_cast<std::size_t>(i)];
      const double exact = std::min(1.0, 2 * cdf);
      const double mid = std::min(1.0, 2 * cdf - probs[static_cast<std::size_t>(m)]);
      const double p = mcnemar_midp(b, c);
      CHECK(p == doctest::Approx(mid).epsilon(1e-12));
      CHECK(p <= exact + 1e-15);
      CHECK(p == mcnemar_midp(c, b));
      if (b == c) CHECK(p >= 0.5);
    }
  // Large counts: compare against a long-double lgamma summation.
  auto oracle = [](long n, long m) {
    long double cdf = 0, at_m = 0;
    for (long i = 0; i <= m; ++i) {
      const long double term =
          std::exp(std::lgamma((long double)n + 1) - std::lgamma((long double)i + 1) -
                   std::lgamma((long double)(n - i) + 1) - (long double)n * std::log(2.0L));
      cdf += term;
      if (i == m) at_m = term;
    }
    return static_cast<double>(std::min<long double>(1.0L, 2 * cdf - at_m));
  };
  for (auto [b, c] : {std::pair{9900L, 10100L}, {9901L, 10101L}, {15000L, 15500L}, {30000L, 30000L}}) {
    const double expected = oracle(b + c, std::min(b, c));
    CHECK(mcnemar_midp(b, c) == doctest::Approx(expected).epsilon(1e-8));
  }
}

}  // TEST_SUITE
