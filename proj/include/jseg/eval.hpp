#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "jseg/labels.hpp"

namespace jseg {

struct WordSpan {
  std::size_t start;
  std::size_t end;  // inclusive
  std::string pos;

  bool operator==(const WordSpan&) const = default;
};

/// Character spans of the words of a sentence, in order.
std::vector<WordSpan> word_spans(const TaggedSentence& sentence);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t correct = 0;
  std::int64_t gold_words = 0;
  std::int64_t pred_words = 0;
};

/// Word-level precision, recall and F1. A predicted word is correct when its
/// span (and POS, if `joint`) matches a gold word. Throws if any sentence
/// pair has different characters.
Prf word_f1(const Corpus& gold, const Corpus& pred, bool joint);

/// Recall over gold words whose surface never occurs in `train_vocab`.
/// Returns nullopt when there are no such words.
std::optional<double> oov_recall(const Corpus& gold, const Corpus& pred,
                                 const std::set<std::u32string>& train_vocab, bool joint);

std::set<std::u32string> word_vocabulary(const Corpus& corpus);

/// Fraction of characters whose combinatory label matches.
double label_accuracy(const Corpus& gold, const Corpus& pred);

struct EvalReport {
  Prf seg;
  std::optional<Prf> seg_tag;
  std::optional<double> oov_recall_seg;
  std::optional<double> oov_recall_seg_tag;
  std::int64_t sentences = 0;
  std::int64_t oov_words = 0;

  std::string to_text() const;
  /// One "key=value" pair per line; absent values are written as n/a.
  std::string to_key_values() const;
};

/// Seg metrics always; Seg&Tag metrics when `joint`; OOV recall when a
/// training vocabulary is given.
EvalReport evaluate(const Corpus& gold, const Corpus& pred, bool joint,
                    const std::set<std::u32string>* train_vocab);

struct Discordance {
  std::int64_t only_a = 0;  // gold words system A gets right and B gets wrong
  std::int64_t only_b = 0;
};

/// Discordant gold-word counts between two systems.
Discordance discordant_words(const Corpus& gold, const Corpus& a, const Corpus& b, bool joint);

/// Two-sided mid-p McNemar test on discordant counts b and c:
/// p = 2 P(X <= min(b, c)) - P(X = min(b, c)), X ~ Binomial(b + c, 1/2).
double mcnemar_midp(std::int64_t b, std::int64_t c);

}  // namespace jseg
