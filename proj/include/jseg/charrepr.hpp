#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "jseg/common.hpp"
#include "jseg/labels.hpp"

namespace jseg {

/// Stands in for characters beyond either sentence edge inside an n-gram.
inline constexpr char32_t kPadChar = U'\u0000';

struct Span {
  long start;
  long end;  // inclusive

  bool operator==(const Span&) const = default;
};

/// Character span of the order-`order` n-gram pivoted on position `i`,
/// extending left first for even orders. May reach outside [0, n-1].
Span ngram_span(long i, int order, long n);

/// The n-gram string for a span, with out-of-range positions padded.
std::u32string ngram_at(std::u32string_view chars, long i, int order);

/// Per-order n-gram dictionaries. Id 0 of every order is the unknown n-gram.
class NgramVocab {
 public:
  static constexpr int kUnk = 0;

  NgramVocab() = default;
  explicit NgramVocab(int max_order);

  int max_order() const { return static_cast<int>(entries_.size()); }
  /// Number of ids for an order, UNK included.
  int size(int order) const;
  /// UNK when unseen.
  int id(int order, std::u32string_view gram) const;
  std::optional<int> find(int order, std::u32string_view gram) const;
  int add(int order, std::u32string gram);
  /// Id-indexed strings; entry 0 (UNK) is empty.
  const std::vector<std::u32string>& entries(int order) const;

  bool operator==(const NgramVocab& other) const { return entries_ == other.entries_; }

 private:
  std::vector<std::vector<std::u32string>> entries_;
  std::vector<std::unordered_map<std::u32string, int>> index_;
};

/// Every n-gram of orders 1..max_order occurring in the corpus, plus the
/// padding unigram. Ids are assigned in code point order.
NgramVocab build_vocab(const Corpus& corpus, int max_order);

/// Code point ranges of the CJK Unified Ideographs block mapped onto the 214
/// Kangxi radicals. Index 0 is reserved for everything else.
class RadicalTable {
 public:
  static constexpr int kNumRadicals = 214;
  static constexpr int kOther = 0;
  static constexpr char32_t kFirst = 0x4E00;
  static constexpr char32_t kLast = 0x9FFF;

  struct Range {
    char32_t first;
    char32_t last;
    int radical;
    bool operator==(const Range&) const = default;
  };

  RadicalTable() = default;
  explicit RadicalTable(std::vector<Range> ranges);

  /// Built-in table derived from the radical-stroke order of U+4E00..U+9FA5.
  static const RadicalTable& kangxi();
  /// Lines of "U+XXXX U+YYYY idx"; '#' starts a comment.
  static RadicalTable load(const std::filesystem::path& path);

  int radical_of(char32_t ch) const;
  const std::vector<Range>& ranges() const { return ranges_; }
  bool operator==(const RadicalTable&) const = default;

 private:
  std::vector<Range> ranges_;
};

/// Radical index under the built-in table.
int radical_of(char32_t ch);

struct GlyphShape {
  int image = 30;
  int kernel = 5;
  int filters = 32;
  int fc = 100;

  int pooled1() const { return (image + 1) / 2; }
  int pooled2() const { return (pooled1() + 1) / 2; }
  int flat() const { return filters * pooled2() * pooled2(); }
  bool operator==(const GlyphShape&) const = default;
};

/// Grayscale character bitmaps keyed by code point. Id 0 is a blank bitmap
/// used for characters without a rendering.
class GlyphStore {
 public:
  GlyphStore() = default;
  explicit GlyphStore(int image_size);

  /// Lines of "U+XXXX" followed by image_size^2 values in [0,1], row-major.
  static GlyphStore load(const std::filesystem::path& path, int image_size = 30);

  int image_size() const { return image_; }
  int size() const { return static_cast<int>(bitmaps_.size()); }
  int add(char32_t ch, Matrix bitmap);
  int id_of(char32_t ch) const;
  const Matrix& bitmap(int id) const { return bitmaps_.at(static_cast<std::size_t>(id)); }
  /// Code points in id order (entry 0 is the blank and has no code point).
  const std::vector<char32_t>& codepoints() const { return codepoints_; }

  bool operator==(const GlyphStore& other) const;

 private:
  int image_ = 30;
  std::vector<Matrix> bitmaps_;
  std::vector<char32_t> codepoints_;
  std::unordered_map<char32_t, int> index_;
};

/// Two same-padded 5x5 convolutions with ReLU, each followed by 2x2 max
/// pooling (ceil), then a ReLU dense layer. Feature maps are stored as
/// [channels x (rows*cols)].
struct GlyphCnnParams {
  GlyphShape shape;
  Matrix conv1_w;  // filters x (kernel*kernel)
  Vector conv1_b;
  Matrix conv2_w;  // filters x (filters*kernel*kernel)
  Vector conv2_b;
  Matrix fc_w;  // fc x flat
  Vector fc_b;

  static GlyphCnnParams zeros(const GlyphShape& shape);
};

struct GlyphTrace {
  Matrix cols1, act1;
  std::vector<int> pool1_arg;
  Matrix pooled1, cols2, act2;
  std::vector<int> pool2_arg;
  Vector flat, fc_out, dropout_mask;
};

/// Glyph features for one bitmap. Dropout is applied only when training.
Vector glyph_forward(const Matrix& bitmap, const GlyphCnnParams& params, double dropout,
                     bool training, Rng& rng, GlyphTrace* trace = nullptr);

/// Accumulates parameter gradients into `grads` and returns d(loss)/d(bitmap).
Matrix glyph_backward(const GlyphTrace& trace, const Vector& d_out, const GlyphCnnParams& params,
                      GlyphCnnParams& grads);

struct CharReprConfig {
  int max_order = 1;
  int ngram_dim = 64;
  bool radicals = false;
  int radical_dim = 30;
  bool glyphs = false;
  GlyphShape glyph;
  double glyph_dropout = 0.5;

  int output_dim() const;
  bool operator==(const CharReprConfig&) const = default;
};

struct CharContext {
  std::vector<int> ngram_ids;  // one per order, order 1 first
  int radical = -1;            // -1 when radicals are disabled
  int glyph = -1;              // -1 when glyphs are disabled
};

struct CharReprParams {
  std::vector<Matrix> ngram;  // per order: vocab size x ngram_dim
  Matrix radical;             // (214 + 1) x radical_dim
  GlyphCnnParams glyph;
};

/// Row-sparse gradient of an embedding table.
struct SparseRows {
  int cols = 0;
  std::map<int, RowVector> rows;

  void add(int row, const Eigen::Ref<const RowVector>& g);
};

struct CharReprGrads {
  std::vector<SparseRows> ngram;
  SparseRows radical;
  GlyphCnnParams glyph;

  static CharReprGrads zeros_like(const CharReprConfig& config, const CharReprParams& params);
};

/// Lookup resources shared by every sentence.
struct CharResources {
  const NgramVocab* vocab = nullptr;
  const RadicalTable* radicals = nullptr;
  const GlyphStore* glyphs = nullptr;
};

std::vector<CharContext> make_contexts(std::u32string_view chars, const CharReprConfig& config,
                                       const CharResources& res);

/// Concatenation of the n-gram rows (orders 1..max_order), the radical row
/// and the glyph CNN output, in that order.
Vector embed_char(const CharContext& ctx, const CharReprConfig& config, const CharReprParams& params,
                  const GlyphStore* glyphs, bool training, Rng& rng, GlyphTrace* trace = nullptr);

struct EmbedTrace {
  std::vector<GlyphTrace> glyph;
};

/// One embedded row per character.
Matrix embed_sentence(std::span<const CharContext> ctxs, const CharReprConfig& config,
                      const CharReprParams& params, const GlyphStore* glyphs, bool training,
                      Rng& rng, EmbedTrace* trace = nullptr);

void embed_backward(std::span<const CharContext> ctxs, const EmbedTrace& trace, const Matrix& d_x,
                    const CharReprConfig& config, const CharReprParams& params,
                    CharReprGrads& grads);

struct PretrainedCoverage {
  int covered = 0;
  int total = 0;  // vocabulary characters, excluding UNK and padding
};

/// Overwrites unigram rows for characters listed in a whitespace-separated
/// "token v1 ... vdim" embedding file. Other rows keep their values.
PretrainedCoverage load_pretrained(const std::filesystem::path& path, const NgramVocab& vocab,
                                   Matrix& unigram_table);

}  // namespace jseg
