#include "jseg/charrepr.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "jseg/utf8.hpp"

namespace jseg {

Span ngram_span(long i, int order, long n) {
  if (order < 1) throw Error("n-gram order must be >= 1");
  if (i < 0 || i >= n) throw Error("n-gram pivot out of range");
  const long left = order / 2;  // ceil((order - 1) / 2)
  const long right = (order - 1) / 2;
  return {i - left, i + right};
}

std::u32string ngram_at(std::u32string_view chars, long i, int order) {
  const long n = static_cast<long>(chars.size());
  const auto span = ngram_span(i, order, n);
  std::u32string out;
  out.reserve(static_cast<std::size_t>(order));
  for (long p = span.start; p <= span.end; ++p) {
    out.push_back(p < 0 || p >= n ? kPadChar : chars[static_cast<std::size_t>(p)]);
  }
  return out;
}

NgramVocab::NgramVocab(int max_order) {
  if (max_order < 1) throw Error("max n-gram order must be >= 1");
  entries_.assign(static_cast<std::size_t>(max_order), std::vector<std::u32string>{U""});
  index_.resize(static_cast<std::size_t>(max_order));
}

int NgramVocab::size(int order) const { return static_cast<int>(entries(order).size()); }

const std::vector<std::u32string>& NgramVocab::entries(int order) const {
  if (order < 1 || order > max_order()) throw Error("n-gram order out of range");
  return entries_[static_cast<std::size_t>(order - 1)];
}

std::optional<int> NgramVocab::find(int order, std::u32string_view gram) const {
  if (order < 1 || order > max_order()) throw Error("n-gram order out of range");
  const auto& idx = index_[static_cast<std::size_t>(order - 1)];
  auto it = idx.find(std::u32string(gram));
  if (it == idx.end()) return std::nullopt;
  return it->second;
}

int NgramVocab::id(int order, std::u32string_view gram) const {
  return find(order, gram).value_or(kUnk);
}

int NgramVocab::add(int order, std::u32string gram) {
  if (order < 1 || order > max_order()) throw Error("n-gram order out of range");
  if (gram.size() != static_cast<std::size_t>(order)) {
    throw Error("n-gram length does not match its order");
  }
  auto& idx = index_[static_cast<std::size_t>(order - 1)];
  auto& ent = entries_[static_cast<std::size_t>(order - 1)];
  auto [it, inserted] = idx.emplace(gram, static_cast<int>(ent.size()));
  if (inserted) ent.push_back(std::move(gram));
  return it->second;
}

NgramVocab build_vocab(const Corpus& corpus, int max_order) {
  std::vector<std::set<std::u32string>> grams(static_cast<std::size_t>(max_order));
  grams[0].insert(std::u32string(1, kPadChar));
  for (const auto& s : corpus) {
    const auto chars = s.chars();
    for (long i = 0; i < static_cast<long>(chars.size()); ++i) {
      for (int o = 1; o <= max_order; ++o) grams[static_cast<std::size_t>(o - 1)].insert(ngram_at(chars, i, o));
    }
  }
  NgramVocab vocab(max_order);
  for (int o = 1; o <= max_order; ++o) {
    for (const auto& g : grams[static_cast<std::size_t>(o - 1)]) vocab.add(o, g);
  }
  return vocab;
}

// ---------------------------------------------------------------------------
// Radicals

namespace {

// First code point of each Kangxi radical's run in U+4E00..U+9FA5; radical i
// spans up to the start of radical i + 1.
constexpr char32_t kRadicalStarts[RadicalTable::kNumRadicals] = {
    0x4E00, 0x4E28, 0x4E36, 0x4E3F, 0x4E59, 0x4E85, 0x4E8C, 0x4EA0,
    0x4EBA, 0x513F, 0x5165, 0x516B, 0x5182, 0x5196, 0x51AB, 0x51E0,
    0x51F5, 0x5200, 0x529B, 0x52F9, 0x5315, 0x531A, 0x5338, 0x5341,
    0x535C, 0x5369, 0x5382, 0x53B6, 0x53C8, 0x53E3, 0x56D7, 0x571F,
    0x58EB, 0x5902, 0x590A, 0x5915, 0x5927, 0x5973, 0x5B50, 0x5B80,
    0x5BF8, 0x5C0F, 0x5C22, 0x5C38, 0x5C6E, 0x5C71, 0x5DDB, 0x5DE5,
    0x5DF1, 0x5DFE, 0x5E72, 0x5E7A, 0x5E7F, 0x5EF4, 0x5EFE, 0x5F0B,
    0x5F13, 0x5F50, 0x5F61, 0x5F73, 0x5FC3, 0x6208, 0x6236, 0x624B,
    0x652F, 0x6534, 0x6587, 0x6597, 0x65A4, 0x65B9, 0x65E0, 0x65E5,
    0x66F0, 0x6708, 0x6728, 0x6B20, 0x6B62, 0x6B79, 0x6BB3, 0x6BCB,
    0x6BD4, 0x6BDB, 0x6C0F, 0x6C14, 0x6C34, 0x706B, 0x722A, 0x7236,
    0x723B, 0x723F, 0x7247, 0x7259, 0x725B, 0x72AC, 0x7384, 0x7389,
    0x74DC, 0x74E6, 0x7518, 0x751F, 0x7528, 0x7530, 0x758B, 0x7592,
    0x7676, 0x767D, 0x76AE, 0x76BF, 0x76EE, 0x77DB, 0x77E2, 0x77F3,
    0x793A, 0x79B8, 0x79BE, 0x7A74, 0x7ACB, 0x7AF9, 0x7C73, 0x7CF8,
    0x7F36, 0x7F51, 0x7F8A, 0x7FBD, 0x8001, 0x800C, 0x8012, 0x8033,
    0x807F, 0x8089, 0x81E3, 0x81EA, 0x81F3, 0x81FC, 0x820C, 0x821B,
    0x821F, 0x826E, 0x8272, 0x8278, 0x864D, 0x866B, 0x8840, 0x884C,
    0x8863, 0x897E, 0x898B, 0x89D2, 0x8A00, 0x8C37, 0x8C46, 0x8C55,
    0x8C78, 0x8C9D, 0x8D64, 0x8D70, 0x8DB3, 0x8EAB, 0x8ECA, 0x8F9B,
    0x8FB0, 0x8FB5, 0x9091, 0x9149, 0x91C6, 0x91CC, 0x91D1, 0x9577,
    0x9580, 0x961C, 0x96B6, 0x96B9, 0x96E8, 0x9751, 0x975E, 0x9762,
    0x9769, 0x97CB, 0x97ED, 0x97F3, 0x9801, 0x98A8, 0x98DB, 0x98DF,
    0x9996, 0x9999, 0x99AC, 0x9AA8, 0x9AD8, 0x9ADF, 0x9B25, 0x9B2F,
    0x9B32, 0x9B3C, 0x9B5A, 0x9CE5, 0x9E75, 0x9E7F, 0x9EA5, 0x9EBB,
    0x9EC3, 0x9ECD, 0x9ED1, 0x9EF9, 0x9EFD, 0x9F0E, 0x9F13, 0x9F20,
    0x9F3B, 0x9F4A, 0x9F52, 0x9F8D, 0x9F9C, 0x9FA0,
};

// Ideographs appended after the radical-stroke ordered run are not covered.
constexpr char32_t kOrderedLast = 0x9FA5;

}  // namespace

RadicalTable::RadicalTable(std::vector<Range> ranges) : ranges_(std::move(ranges)) {
  std::sort(ranges_.begin(), ranges_.end(),
            [](const Range& a, const Range& b) { return a.first < b.first; });
  for (std::size_t i = 0; i < ranges_.size(); ++i) {
    const auto& r = ranges_[i];
    if (r.first > r.last) throw Error("radical range with first > last");
    if (r.first < kFirst || r.last > kLast) throw Error("radical range outside U+4E00..U+9FFF");
    if (r.radical < 1 || r.radical > kNumRadicals) throw Error("radical index outside 1..214");
    if (i > 0 && ranges_[i - 1].last >= r.first) throw Error("overlapping radical ranges");
  }
}

const RadicalTable& RadicalTable::kangxi() {
  static const RadicalTable table = [] {
    std::vector<Range> ranges;
    for (int r = 0; r < kNumRadicals; ++r) {
      const char32_t last = r + 1 < kNumRadicals ? kRadicalStarts[r + 1] - 1 : kOrderedLast;
      ranges.push_back({kRadicalStarts[r], last, r + 1});
    }
    return RadicalTable(std::move(ranges));
  }();
  return table;
}

RadicalTable RadicalTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Range> ranges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string a, b;
    int idx = 0;
    if (!(ss >> a)) continue;
    std::string rest;
    try {
      if (!(ss >> b >> idx) || (ss >> rest)) throw Error("expected 'U+XXXX U+YYYY idx'");
      ranges.push_back({utf8::parse_codepoint(a), utf8::parse_codepoint(b), idx});
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  try {
    return RadicalTable(std::move(ranges));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

int RadicalTable::radical_of(char32_t ch) const {
  if (ch < kFirst || ch > kLast) return kOther;
  auto it = std::upper_bound(ranges_.begin(), ranges_.end(), ch,
                             [](char32_t c, const Range& r) { return c < r.first; });
  if (it == ranges_.begin()) return kOther;
  --it;
  return ch <= it->last ? it->radical : kOther;
}

int radical_of(char32_t ch) { return RadicalTable::kangxi().radical_of(ch); }

// ---------------------------------------------------------------------------
// Glyph bitmaps

GlyphStore::GlyphStore(int image_size) : image_(image_size) {
  if (image_size < 1) throw Error("glyph image size must be positive");
  bitmaps_.push_back(Matrix::Zero(image_, image_));
  codepoints_.push_back(0);
}

GlyphStore GlyphStore::load(const std::filesystem::path& path, int image_size) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  GlyphStore store(image_size);
  const int count = image_size * image_size;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string cp;
    if (!(ss >> cp)) continue;
    try {
      Matrix bmp(image_size, image_size);
      std::string tok;
      int n = 0;
      while (ss >> tok) {
        if (n >= count) throw Error("more than " + std::to_string(count) + " pixel values");
        double v = 0;
        auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc{} || p != tok.data() + tok.size()) throw Error("bad pixel value '" + tok + "'");
        if (!(v >= 0.0 && v <= 1.0)) throw Error("pixel value outside [0,1]");
        bmp(n / image_size, n % image_size) = v;
        ++n;
      }
      if (n != count) throw Error("expected " + std::to_string(count) + " pixel values, got " + std::to_string(n));
      store.add(utf8::parse_codepoint(cp), std::move(bmp));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return store;
}

int GlyphStore::add(char32_t ch, Matrix bitmap) {
  if (bitmap.rows() != image_ || bitmap.cols() != image_) throw Error("glyph bitmap has wrong shape");
  if (auto it = index_.find(ch); it != index_.end()) {
    bitmaps_[static_cast<std::size_t>(it->second)] = std::move(bitmap);
    return it->second;
  }
  const int id = size();
  bitmaps_.push_back(std::move(bitmap));
  codepoints_.push_back(ch);
  index_.emplace(ch, id);
  return id;
}

int GlyphStore::id_of(char32_t ch) const {
  auto it = index_.find(ch);
  return it == index_.end() ? 0 : it->second;
}

bool GlyphStore::operator==(const GlyphStore& other) const {
  if (image_ != other.image_ || codepoints_ != other.codepoints_) return false;
  for (std::size_t i = 0; i < bitmaps_.size(); ++i) {
    if (bitmaps_[i] != other.bitmaps_[i]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Glyph CNN

GlyphCnnParams GlyphCnnParams::zeros(const GlyphShape& s) {
  GlyphCnnParams p;
  p.shape = s;
  const int kk = s.kernel * s.kernel;
  p.conv1_w = Matrix::Zero(s.filters, kk);
  p.conv1_b = Vector::Zero(s.filters);
  p.conv2_w = Matrix::Zero(s.filters, s.filters * kk);
  p.conv2_b = Vector::Zero(s.filters);
  p.fc_w = Matrix::Zero(s.fc, s.flat());
  p.fc_b = Vector::Zero(s.fc);
  return p;
}

namespace {

// in: channels x (size*size) -> (channels*k*k) x (size*size)
Matrix im2col(const Matrix& in, int size, int k) {
  const int channels = static_cast<int>(in.rows());
  const int pad = k / 2;
  Matrix cols = Matrix::Zero(channels * k * k, size * size);
  for (int c = 0; c < channels; ++c) {
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx) {
        const int row = (c * k + dy) * k + dx;
        for (int y = 0; y < size; ++y) {
          const int sy = y + dy - pad;
          if (sy < 0 || sy >= size) continue;
          for (int x = 0; x < size; ++x) {
            const int sx = x + dx - pad;
            if (sx < 0 || sx >= size) continue;
            cols(row, y * size + x) = in(c, sy * size + sx);
          }
        }
      }
    }
  }
  return cols;
}

Matrix col2im(const Matrix& cols, int channels, int size, int k) {
  const int pad = k / 2;
  Matrix out = Matrix::Zero(channels, size * size);
  for (int c = 0; c < channels; ++c) {
    for (int dy = 0; dy < k; ++dy) {
      for (int dx = 0; dx < k; ++dx) {
        const int row = (c * k + dy) * k + dx;
        for (int y = 0; y < size; ++y) {
          const int sy = y + dy - pad;
          if (sy < 0 || sy >= size) continue;
          for (int x = 0; x < size; ++x) {
            const int sx = x + dx - pad;
            if (sx < 0 || sx >= size) continue;
            out(c, sy * size + sx) += cols(row, y * size + x);
          }
        }
      }
    }
  }
  return out;
}

// 2x2 stride-2 max pooling; windows at an odd edge are clipped.
Matrix max_pool(const Matrix& in, int size, std::vector<int>& arg) {
  const int out_size = (size + 1) / 2;
  Matrix out(in.rows(), out_size * out_size);
  arg.assign(static_cast<std::size_t>(out.size()), 0);
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    for (int py = 0; py < out_size; ++py) {
      for (int px = 0; px < out_size; ++px) {
        int best = (2 * py) * size + 2 * px;
        for (int y = 2 * py; y < std::min(2 * py + 2, size); ++y) {
          for (int x = 2 * px; x < std::min(2 * px + 2, size); ++x) {
            if (in(c, y * size + x) > in(c, best)) best = y * size + x;
          }
        }
        const int o = py * out_size + px;
        out(c, o) = in(c, best);
        arg[static_cast<std::size_t>(c * out_size * out_size + o)] = best;
      }
    }
  }
  return out;
}

Matrix max_pool_backward(const Matrix& d_out, const std::vector<int>& arg, int size) {
  Matrix d_in = Matrix::Zero(d_out.rows(), size * size);
  const Eigen::Index per = d_out.cols();
  for (Eigen::Index c = 0; c < d_out.rows(); ++c) {
    for (Eigen::Index o = 0; o < per; ++o) d_in(c, arg[static_cast<std::size_t>(c * per + o)]) += d_out(c, o);
  }
  return d_in;
}

}  // namespace

Vector glyph_forward(const Matrix& bitmap, const GlyphCnnParams& p, double dropout, bool training,
                     Rng& rng, GlyphTrace* trace) {
  const auto& s = p.shape;
  if (bitmap.rows() != s.image || bitmap.cols() != s.image) {
    throw Error("glyph input must be " + std::to_string(s.image) + "x" + std::to_string(s.image));
  }
  GlyphTrace local;
  GlyphTrace& t = trace ? *trace : local;

  const Matrix input = Eigen::Map<const Matrix>(bitmap.data(), 1, s.image * s.image);
  t.cols1 = im2col(input, s.image, s.kernel);
  t.act1 = ((p.conv1_w * t.cols1).colwise() + p.conv1_b).cwiseMax(0.0);
  t.pooled1 = max_pool(t.act1, s.image, t.pool1_arg);

  const int p1 = s.pooled1();
  t.cols2 = im2col(t.pooled1, p1, s.kernel);
  t.act2 = ((p.conv2_w * t.cols2).colwise() + p.conv2_b).cwiseMax(0.0);
  const Matrix pooled2 = max_pool(t.act2, p1, t.pool2_arg);

  t.flat = Eigen::Map<const Vector>(pooled2.data(), pooled2.size());
  t.fc_out = (p.fc_w * t.flat + p.fc_b).cwiseMax(0.0);
  if (!training || dropout <= 0.0) {
    t.dropout_mask.resize(0);
    return t.fc_out;
  }
  std::bernoulli_distribution keep(1.0 - dropout);
  t.dropout_mask.resize(t.fc_out.size());
  for (Eigen::Index i = 0; i < t.dropout_mask.size(); ++i) {
    t.dropout_mask[i] = keep(rng) ? 1.0 / (1.0 - dropout) : 0.0;
  }
  return t.fc_out.cwiseProduct(t.dropout_mask);
}

Matrix glyph_backward(const GlyphTrace& t, const Vector& d_out, const GlyphCnnParams& p,
                      GlyphCnnParams& g) {
  const auto& s = p.shape;
  Vector d_fc = d_out;
  if (t.dropout_mask.size() > 0) d_fc = d_fc.cwiseProduct(t.dropout_mask);
  d_fc = (t.fc_out.array() > 0.0).select(d_fc, 0.0);
  g.fc_w.noalias() += d_fc * t.flat.transpose();
  g.fc_b += d_fc;

  const int p1 = s.pooled1();
  const int p2 = s.pooled2();
  const Vector d_flat = p.fc_w.transpose() * d_fc;
  const Matrix d_pooled2 = Eigen::Map<const Matrix>(d_flat.data(), s.filters, p2 * p2);
  Matrix d_act2 = max_pool_backward(d_pooled2, t.pool2_arg, p1);
  d_act2 = (t.act2.array() > 0.0).select(d_act2, 0.0);
  g.conv2_w.noalias() += d_act2 * t.cols2.transpose();
  g.conv2_b += d_act2.rowwise().sum();

  const Matrix d_pooled1 = col2im(p.conv2_w.transpose() * d_act2, s.filters, p1, s.kernel);
  Matrix d_act1 = max_pool_backward(d_pooled1, t.pool1_arg, s.image);
  d_act1 = (t.act1.array() > 0.0).select(d_act1, 0.0);
  g.conv1_w.noalias() += d_act1 * t.cols1.transpose();
  g.conv1_b += d_act1.rowwise().sum();

  const Matrix d_input = col2im(p.conv1_w.transpose() * d_act1, 1, s.image, s.kernel);
  return Eigen::Map<const Matrix>(d_input.data(), s.image, s.image);
}

// ---------------------------------------------------------------------------
// Character representation

int CharReprConfig::output_dim() const {
  return ngram_dim * max_order + (radicals ? radical_dim : 0) + (glyphs ? glyph.fc : 0);
}

void SparseRows::add(int row, const Eigen::Ref<const RowVector>& g) {
  auto [it, inserted] = rows.try_emplace(row, g);
  if (!inserted) it->second += g;
}

CharReprGrads CharReprGrads::zeros_like(const CharReprConfig& config, const CharReprParams& params) {
  CharReprGrads g;
  for (const auto& t : params.ngram) g.ngram.push_back({static_cast<int>(t.cols()), {}});
  g.radical.cols = static_cast<int>(params.radical.cols());
  if (config.glyphs) g.glyph = GlyphCnnParams::zeros(params.glyph.shape);
  return g;
}

std::vector<CharContext> make_contexts(std::u32string_view chars, const CharReprConfig& config,
                                       const CharResources& res) {
  if (!res.vocab) throw Error("n-gram vocabulary missing");
  if (res.vocab->max_order() != config.max_order) throw Error("vocabulary order mismatch");
  std::vector<CharContext> out(chars.size());
  for (std::size_t i = 0; i < chars.size(); ++i) {
    auto& ctx = out[i];
    for (int o = 1; o <= config.max_order; ++o) {
      ctx.ngram_ids.push_back(res.vocab->id(o, ngram_at(chars, static_cast<long>(i), o)));
    }
    if (config.radicals) {
      ctx.radical = res.radicals ? res.radicals->radical_of(chars[i]) : radical_of(chars[i]);
    }
    if (config.glyphs) {
      if (!res.glyphs) throw Error("glyph features enabled but no glyph bitmaps loaded");
      ctx.glyph = res.glyphs->id_of(chars[i]);
    }
  }
  return out;
}

namespace {

void check_ids(const CharContext& ctx, const CharReprConfig& config, const CharReprParams& params,
               const GlyphStore* glyphs) {
  if (static_cast<int>(ctx.ngram_ids.size()) != config.max_order) throw Error("context has wrong number of n-gram ids");
  for (int o = 0; o < config.max_order; ++o) {
    const int id = ctx.ngram_ids[static_cast<std::size_t>(o)];
    if (id < 0 || id >= params.ngram[static_cast<std::size_t>(o)].rows()) {
      throw Error("invalid n-gram id " + std::to_string(id) + " for order " + std::to_string(o + 1));
    }
  }
  if (config.radicals && (ctx.radical < 0 || ctx.radical >= params.radical.rows())) {
    throw Error("invalid radical id " + std::to_string(ctx.radical));
  }
  if (config.glyphs && (!glyphs || ctx.glyph < 0 || ctx.glyph >= glyphs->size())) {
    throw Error("invalid glyph id " + std::to_string(ctx.glyph));
  }
}

}  // namespace

Vector embed_char(const CharContext& ctx, const CharReprConfig& config, const CharReprParams& params,
                  const GlyphStore* glyphs, bool training, Rng& rng, GlyphTrace* trace) {
  check_ids(ctx, config, params, glyphs);
  Vector out(config.output_dim());
  Eigen::Index off = 0;
  for (int o = 0; o < config.max_order; ++o) {
    out.segment(off, config.ngram_dim) = params.ngram[static_cast<std::size_t>(o)].row(ctx.ngram_ids[static_cast<std::size_t>(o)]).transpose();
    off += config.ngram_dim;
  }
  if (config.radicals) {
    out.segment(off, config.radical_dim) = params.radical.row(ctx.radical).transpose();
    off += config.radical_dim;
  }
  if (config.glyphs) {
    out.segment(off, config.glyph.fc) =
        glyph_forward(glyphs->bitmap(ctx.glyph), params.glyph, config.glyph_dropout, training, rng, trace);
  }
  return out;
}

Matrix embed_sentence(std::span<const CharContext> ctxs, const CharReprConfig& config,
                      const CharReprParams& params, const GlyphStore* glyphs, bool training,
                      Rng& rng, EmbedTrace* trace) {
  Matrix x(static_cast<Eigen::Index>(ctxs.size()), config.output_dim());
  if (trace) trace->glyph.assign(config.glyphs ? ctxs.size() : 0, GlyphTrace{});
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    GlyphTrace* gt = trace && config.glyphs ? &trace->glyph[i] : nullptr;
    x.row(static_cast<Eigen::Index>(i)) = embed_char(ctxs[i], config, params, glyphs, training, rng, gt).transpose();
  }
  return x;
}

void embed_backward(std::span<const CharContext> ctxs, const EmbedTrace& trace, const Matrix& d_x,
                    const CharReprConfig& config, const CharReprParams& params,
                    CharReprGrads& grads) {
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    const auto row = d_x.row(static_cast<Eigen::Index>(i));
    Eigen::Index off = 0;
    for (int o = 0; o < config.max_order; ++o) {
      grads.ngram[static_cast<std::size_t>(o)].add(ctxs[i].ngram_ids[static_cast<std::size_t>(o)],
                                                   row.segment(off, config.ngram_dim));
      off += config.ngram_dim;
    }
    if (config.radicals) {
      grads.radical.add(ctxs[i].radical, row.segment(off, config.radical_dim));
      off += config.radical_dim;
    }
    if (config.glyphs) {
      glyph_backward(trace.glyph[i], row.segment(off, config.glyph.fc).transpose(), params.glyph,
                     grads.glyph);
    }
  }
}

PretrainedCoverage load_pretrained(const std::filesystem::path& path, const NgramVocab& vocab,
                                   Matrix& table) {
  if (table.rows() != vocab.size(1)) throw Error("unigram table does not match the vocabulary");
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<bool> covered(static_cast<std::size_t>(table.rows()), false);
  std::string line;
  std::size_t lineno = 0;
  RowVector values(table.cols());
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string token;
    if (!(ss >> token)) continue;
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    std::vector<double> v;
    std::string tok;
    while (ss >> tok) {
      double x = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
      if (ec != std::errc{} || p != tok.data() + tok.size() || !std::isfinite(x)) {
        throw Error(where + "malformed value '" + tok + "'");
      }
      v.push_back(x);
    }
    if (v.empty()) throw Error(where + "malformed line (no vector values)");
    if (static_cast<Eigen::Index>(v.size()) != table.cols()) {
      throw Error(where + "dimension mismatch: file has " + std::to_string(v.size()) +
                  ", table has " + std::to_string(table.cols()));
    }
    std::u32string chars;
    try {
      chars = utf8::decode(token);
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    if (chars.size() != 1) continue;
    const auto id = vocab.find(1, chars);
    if (!id) continue;
    for (std::size_t j = 0; j < v.size(); ++j) values[static_cast<Eigen::Index>(j)] = v[j];
    table.row(*id) = values;
    covered[static_cast<std::size_t>(*id)] = true;
  }
  PretrainedCoverage report;
  const auto& entries = vocab.entries(1);
  for (std::size_t id = 1; id < entries.size(); ++id) {
    if (entries[id] == std::u32string(1, kPadChar)) continue;
    ++report.total;
    if (covered[id]) ++report.covered;
  }
  return report;
}

}  // namespace jseg
