#pragma once

#include <span>
#include <string>
#include <vector>

#include "jseg/labels.hpp"
#include "jseg/model.hpp"

namespace jseg {

struct TagOptions {
  int batch_size = 500;
  int bucket_width = 10;
};

/// Wall-clock split of a tagging run.
struct TagTimings {
  double scoring_seconds = 0.0;  // representations, encoder, emissions, averaging
  double viterbi_seconds = 0.0;
};

/// Tags raw sentences with one model or an averaged ensemble. Sentences are
/// bucketed and batched; results come back in input order. Empty sentences
/// give empty results.
std::vector<TaggedSentence> tag_sentences(std::span<const Model* const> models,
                                          std::span<const std::u32string> sentences,
                                          const TagOptions& options = {},
                                          TagTimings* timings = nullptr);

std::vector<TaggedSentence> tag_sentences(const Model& model, std::span<const std::u32string> sentences,
                                          const TagOptions& options = {});

}  // namespace jseg
