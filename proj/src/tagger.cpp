#include "jseg/tagger.hpp"

#include <chrono>

#include "jseg/trainer.hpp"

namespace jseg {

std::vector<TaggedSentence> tag_sentences(std::span<const Model* const> models,
                                          std::span<const std::u32string> sentences,
                                          const TagOptions& options, TagTimings* timings) {
  if (models.empty()) throw Error("no model given");
  const auto& mask = models.front()->mask();
  const auto& space = models.front()->labels();

  std::vector<std::size_t> nonempty;
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (sentences[i].empty()) continue;
    nonempty.push_back(i);
    lengths.push_back(sentences[i].size());
  }
  std::vector<TaggedSentence> out(sentences.size());
  using clock = std::chrono::steady_clock;
  for (const auto& bucket : make_buckets(lengths, options.bucket_width, options.batch_size)) {
    std::vector<std::u32string> batch;
    for (auto m : bucket.members) batch.push_back(sentences[nonempty[m]]);
    const auto t0 = clock::now();
    const auto lats = ensemble_lattices(models, batch, bucket.max_len);
    const auto t1 = clock::now();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto path = viterbi(lats[b], mask);
      out[nonempty[bucket.members[b]]] = decode_labels(batch[b], path, space);
    }
    const auto t2 = clock::now();
    if (timings) {
      timings->scoring_seconds += std::chrono::duration<double>(t1 - t0).count();
      timings->viterbi_seconds += std::chrono::duration<double>(t2 - t1).count();
    }
  }
  return out;
}

std::vector<TaggedSentence> tag_sentences(const Model& model, std::span<const std::u32string> sentences,
                                          const TagOptions& options) {
  const Model* one = &model;
  return tag_sentences(std::span(&one, 1), sentences, options);
}

}  // namespace jseg
