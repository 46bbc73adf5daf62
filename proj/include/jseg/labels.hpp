#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace jseg {

struct Word {
  std::u32string surface;
  std::string pos;

  bool operator==(const Word&) const = default;
};

/// A segmented and POS-tagged sentence. Concatenating the surfaces gives the
/// raw character sequence.
struct TaggedSentence {
  std::vector<Word> words;

  std::u32string chars() const;
  std::size_t char_count() const;
  bool operator==(const TaggedSentence&) const = default;
};

using Corpus = std::vector<TaggedSentence>;

enum class Boundary : std::uint8_t { B = 0, I = 1, E = 2, S = 3 };

char boundary_char(Boundary b);

struct ComboLabel {
  Boundary boundary;
  std::string pos;

  /// "B-NT" style rendering.
  std::string str() const;
  static ComboLabel parse(std::string_view text);

  bool operator==(const ComboLabel&) const = default;
  /// Orders by POS first, then B < I < E < S.
  std::strong_ordering operator<=>(const ComboLabel& other) const;
};

/// The pruned universe of combinatory labels, indexed 0..k-1 in sorted order.
/// Immutable once built.
class LabelSpace {
 public:
  LabelSpace() = default;
  /// Builds from an explicit label set; duplicates are rejected.
  explicit LabelSpace(std::vector<ComboLabel> labels);

  int size() const { return static_cast<int>(labels_.size()); }
  const std::vector<ComboLabel>& labels() const { return labels_; }
  const ComboLabel& label(int index) const { return labels_.at(static_cast<std::size_t>(index)); }

  std::optional<int> find(const ComboLabel& label) const;
  /// Throws jseg::Error if the label was pruned.
  int index_of(const ComboLabel& label) const;

  /// Longest word observed under each POS tag (derived from the label set).
  const std::map<std::string, int>& pos_max_len() const { return pos_max_len_; }
  std::vector<std::string> pos_tags() const;

  /// BIES well-formedness constraints used for transition masking.
  bool allowed_start(int j) const;
  bool allowed_end(int i) const;
  bool allowed_transition(int from, int to) const;

  bool operator==(const LabelSpace& other) const { return labels_ == other.labels_; }

 private:
  std::vector<ComboLabel> labels_;
  std::map<ComboLabel, int> index_;
  std::map<std::string, int> pos_max_len_;
};

/// Character-level labels for a sentence: S for single-character words,
/// B E for two characters, B I..I E for longer words.
std::vector<ComboLabel> encode_labels(const TaggedSentence& sentence);

/// Rebuilds words from character labels. Ill-formed sequences are repaired
/// greedily: B and S open a word, I and E continue the open word (or open
/// one if none is open), E and S close it. A word takes the POS of its first
/// character.
TaggedSentence decode_labels(std::u32string_view chars, std::span<const ComboLabel> labels);
TaggedSentence decode_labels(std::u32string_view chars, std::span<const int> labels,
                             const LabelSpace& space);

/// Keeps exactly the labels realizable from the training data: S-p needs a
/// one-character word under p, B-p and E-p need a word of length >= 2, I-p
/// needs length >= 3.
LabelSpace build_label_space(const Corpus& corpus);

// Corpus text format: one sentence per line, tokens separated by single
// spaces, each token "surface_POS" split at the last underscore.

TaggedSentence parse_tagged_line(std::string_view line);
std::string format_tagged(const TaggedSentence& sentence);

/// Reads a tagged corpus, skipping blank lines. Errors name the file and line.
Corpus read_corpus(const std::filesystem::path& path);
void write_corpus(const std::filesystem::path& path, const Corpus& corpus);

/// Reads raw text, one sentence per line; blank lines are kept as empty and
/// whitespace inside a line is dropped.
std::vector<std::u32string> read_raw(const std::filesystem::path& path);

}  // namespace jseg
