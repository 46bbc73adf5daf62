#include "jseg/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <boost/multiprecision/cpp_int.hpp>

#include "jseg/common.hpp"

namespace jseg {

namespace {

void check_aligned(const Corpus& gold, const Corpus& pred) {
  if (gold.size() != pred.size()) {
    throw Error("corpora differ in sentence count: " + std::to_string(gold.size()) + " gold vs " +
                std::to_string(pred.size()) + " predicted");
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].chars() != pred[i].chars()) {
      throw Error("sentence " + std::to_string(i + 1) + ": gold and predicted characters differ");
    }
  }
}

bool same_word(const WordSpan& a, const WordSpan& b, bool joint) {
  return a.start == b.start && a.end == b.end && (!joint || a.pos == b.pos);
}

// For each gold word, whether `pred` contains the same span (and POS).
std::vector<bool> gold_hits(const TaggedSentence& gold, const TaggedSentence& pred, bool joint) {
  const auto g = word_spans(gold);
  const auto p = word_spans(pred);
  std::vector<bool> hit(g.size(), false);
  std::size_t j = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    while (j < p.size() && p[j].start < g[i].start) ++j;
    hit[i] = j < p.size() && same_word(g[i], p[j], joint);
  }
  return hit;
}

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

void put(std::ostream& os, const std::string& key, std::optional<double> v) {
  os << key << '=';
  if (v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, *v);
    os.write(buf, r.ptr - buf);
  } else {
    os << "n/a";
  }
  os << '\n';
}

}  // namespace

std::vector<WordSpan> word_spans(const TaggedSentence& sentence) {
  std::vector<WordSpan> out;
  std::size_t pos = 0;
  for (const auto& w : sentence.words) {
    if (w.surface.empty()) throw Error("empty word surface");
    out.push_back({pos, pos + w.surface.size() - 1, w.pos});
    pos += w.surface.size();
  }
  return out;
}

Prf word_f1(const Corpus& gold, const Corpus& pred, bool joint) {
  check_aligned(gold, pred);
  Prf r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto hits = gold_hits(gold[i], pred[i], joint);
    r.correct += std::count(hits.begin(), hits.end(), true);
    r.gold_words += static_cast<std::int64_t>(gold[i].words.size());
    r.pred_words += static_cast<std::int64_t>(pred[i].words.size());
  }
  r.precision = r.pred_words > 0 ? static_cast<double>(r.correct) / static_cast<double>(r.pred_words) : 0.0;
  r.recall = r.gold_words > 0 ? static_cast<double>(r.correct) / static_cast<double>(r.gold_words) : 0.0;
  r.f1 = f1_of(r.precision, r.recall);
  return r;
}

std::optional<double> oov_recall(const Corpus& gold, const Corpus& pred,
                                 const std::set<std::u32string>& train_vocab, bool joint) {
  check_aligned(gold, pred);
  std::int64_t total = 0;
  std::int64_t found = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto hits = gold_hits(gold[i], pred[i], joint);
    for (std::size_t w = 0; w < hits.size(); ++w) {
      if (train_vocab.contains(gold[i].words[w].surface)) continue;
      ++total;
      if (hits[w]) ++found;
    }
  }
  if (total == 0) return std::nullopt;
  return static_cast<double>(found) / static_cast<double>(total);
}

std::set<std::u32string> word_vocabulary(const Corpus& corpus) {
  std::set<std::u32string> out;
  for (const auto& s : corpus) {
    for (const auto& w : s.words) out.insert(w.surface);
  }
  return out;
}

double label_accuracy(const Corpus& gold, const Corpus& pred) {
  check_aligned(gold, pred);
  std::int64_t total = 0;
  std::int64_t same = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].words.empty()) continue;
    const auto g = encode_labels(gold[i]);
    const auto p = encode_labels(pred[i]);
    total += static_cast<std::int64_t>(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) same += g[j] == p[j] ? 1 : 0;
  }
  return total > 0 ? static_cast<double>(same) / static_cast<double>(total) : 1.0;
}

EvalReport evaluate(const Corpus& gold, const Corpus& pred, bool joint,
                    const std::set<std::u32string>* train_vocab) {
  EvalReport r;
  r.sentences = static_cast<std::int64_t>(gold.size());
  r.seg = word_f1(gold, pred, false);
  if (joint) r.seg_tag = word_f1(gold, pred, true);
  if (train_vocab) {
    for (const auto& s : gold) {
      for (const auto& w : s.words) r.oov_words += train_vocab->contains(w.surface) ? 0 : 1;
    }
    r.oov_recall_seg = oov_recall(gold, pred, *train_vocab, false);
    if (joint) r.oov_recall_seg_tag = oov_recall(gold, pred, *train_vocab, true);
  }
  return r;
}

std::string EvalReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  auto line = [&](const char* name, const Prf& m) {
    os << std::left << std::setw(10) << name << "P " << 100.0 * m.precision << "  R " << 100.0 * m.recall
       << "  F " << 100.0 * m.f1 << "  (" << m.correct << " correct / " << m.gold_words << " gold / "
       << m.pred_words << " predicted)\n";
  };
  os << "sentences " << sentences << '\n';
  line("Seg", seg);
  if (seg_tag) line("Seg&Tag", *seg_tag);
  auto oov = [&](const char* name, std::optional<double> v) {
    os << std::left << std::setw(10) << name;
    if (v) os << "R_oov " << 100.0 * *v << '\n';
    else os << "R_oov n/a\n";
  };
  oov("Seg", oov_recall_seg);
  if (seg_tag) oov("Seg&Tag", oov_recall_seg_tag);
  return os.str();
}

std::string EvalReport::to_key_values() const {
  std::ostringstream os;
  os << "sentences=" << sentences << '\n';
  put(os, "seg.precision", seg.precision);
  put(os, "seg.recall", seg.recall);
  put(os, "seg.f1", seg.f1);
  put(os, "seg_tag.precision", seg_tag ? std::optional(seg_tag->precision) : std::nullopt);
  put(os, "seg_tag.recall", seg_tag ? std::optional(seg_tag->recall) : std::nullopt);
  put(os, "seg_tag.f1", seg_tag ? std::optional(seg_tag->f1) : std::nullopt);
  put(os, "oov.words", oov_recall_seg ? std::optional(static_cast<double>(oov_words)) : std::nullopt);
  put(os, "oov.recall_seg", oov_recall_seg);
  put(os, "oov.recall_seg_tag", oov_recall_seg_tag);
  return os.str();
}

Discordance discordant_words(const Corpus& gold, const Corpus& a, const Corpus& b, bool joint) {
  check_aligned(gold, a);
  check_aligned(gold, b);
  Discordance d;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto ha = gold_hits(gold[i], a[i], joint);
    const auto hb = gold_hits(gold[i], b[i], joint);
    for (std::size_t w = 0; w < ha.size(); ++w) {
      if (ha[w] && !hb[w]) ++d.only_a;
      if (!ha[w] && hb[w]) ++d.only_b;
    }
  }
  return d;
}

namespace {

// Exact rational evaluation stays affordable up to this many discordant pairs.
constexpr std::int64_t kExactLimit = 20000;

double midp_exact(std::int64_t n, std::int64_t m) {
  using boost::multiprecision::cpp_int;
  cpp_int coeff = 1;  // C(n, i)
  cpp_int cumulative = 0;
  for (std::int64_t i = 0; i <= m; ++i) {
    if (i > 0) coeff = coeff * (n - i + 1) / i;
    cumulative += coeff;
  }
  const cpp_int numerator = 2 * cumulative - coeff;
  // numerator / 2^n, rounded once.
  const auto bits = static_cast<std::int64_t>(msb(numerator)) + 1;
  const std::int64_t shift = std::max<std::int64_t>(0, bits - 64);
  const cpp_int top = numerator >> static_cast<unsigned>(shift);
  const double mantissa = static_cast<double>(top.convert_to<unsigned long long>());
  return std::ldexp(mantissa, static_cast<int>(shift - n));
}

double midp_log_space(std::int64_t n, std::int64_t m) {
  const double log_half_n = -static_cast<double>(n) * std::log(2.0);
  auto log_pmf = [&](std::int64_t i) {
    return std::lgamma(static_cast<double>(n + 1)) - std::lgamma(static_cast<double>(i + 1)) -
           std::lgamma(static_cast<double>(n - i + 1)) + log_half_n;
  };
  // Terms grow towards i = m, so sum from the top down.
  const double top = log_pmf(m);
  double sum = 0.0;
  for (std::int64_t i = m; i >= 0; --i) {
    const double term = std::exp(log_pmf(i) - top);
    sum += term;
    if (term < 1e-18 * sum) break;
  }
  return std::exp(top) * (2.0 * sum - 1.0);
}

}  // namespace

double mcnemar_midp(std::int64_t b, std::int64_t c) {
  if (b < 0 || c < 0) throw Error("discordant counts must be non-negative");
  if (b + c == 0) throw Error("no discordant pairs");
  const std::int64_t n = b + c;
  const std::int64_t m = std::min(b, c);
  const double p = n <= kExactLimit ? midp_exact(n, m) : midp_log_space(n, m);
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace jseg
