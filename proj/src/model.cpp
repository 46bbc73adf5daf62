#include "jseg/model.hpp"

namespace jseg {

Model::Model(ModelConfig config, LabelSpace labels, NgramVocab vocab, RadicalTable radicals,
             std::optional<GlyphStore> glyphs)
    : config_(std::move(config)),
      labels_(std::move(labels)),
      vocab_(std::move(vocab)),
      radicals_(std::move(radicals)),
      glyphs_(std::move(glyphs)) {
  if (labels_.size() == 0) throw Error("model needs a non-empty label space");
  if (vocab_.max_order() != config_.repr.max_order) throw Error("vocabulary order does not match the configuration");
  if (config_.repr.glyphs) {
    if (!glyphs_) throw Error("glyph features enabled but no glyph bitmaps given");
    if (glyphs_->image_size() != config_.repr.glyph.image) throw Error("glyph bitmap size does not match the configuration");
  }
  if (config_.gru_state < 1) throw Error("GRU state size must be positive");
  if (config_.dropout < 0.0 || config_.dropout >= 1.0) throw Error("dropout rate must be in [0, 1)");
  mask_ = TransitionMask::from(labels_);
  params_ = zero_params();
}

ModelParams Model::zero_params() const {
  const auto& r = config_.repr;
  ModelParams p;
  for (int o = 1; o <= r.max_order; ++o) p.repr.ngram.push_back(Matrix::Zero(vocab_.size(o), r.ngram_dim));
  if (r.radicals) p.repr.radical = Matrix::Zero(RadicalTable::kNumRadicals + 1, r.radical_dim);
  if (r.glyphs) p.repr.glyph = GlyphCnnParams::zeros(r.glyph);
  p.fwd = GruParams::zeros(r.output_dim(), config_.gru_state);
  p.bwd = GruParams::zeros(r.output_dim(), config_.gru_state);
  p.crf = CrfParams::zeros(2 * config_.gru_state, labels_.size());
  return p;
}

ModelGrads Model::zero_grads() const {
  ModelGrads g;
  const auto zero = zero_params();
  g.repr = CharReprGrads::zeros_like(config_.repr, zero.repr);
  g.fwd = zero.fwd;
  g.bwd = zero.bwd;
  g.crf = zero.crf;
  return g;
}

CharResources Model::resources() const {
  return {&vocab_, &radicals_, glyphs_ ? &*glyphs_ : nullptr};
}

std::vector<CharContext> Model::contexts(std::u32string_view chars) const {
  return make_contexts(chars, config_.repr, resources());
}

Example Model::make_example(const TaggedSentence& sentence) const {
  Example ex{sentence.chars(), {}};
  for (const auto& l : encode_labels(sentence)) ex.gold.push_back(labels_.index_of(l));
  return ex;
}

std::vector<ScoreLattice> Model::lattices(std::span<const std::u32string> batch, int pad_to) const {
  Rng unused(0);
  const GlyphStore* glyphs = glyphs_ ? &*glyphs_ : nullptr;
  std::vector<Matrix> xs;
  xs.reserve(batch.size());
  for (const auto& chars : batch) {
    if (chars.empty()) throw Error("cannot score an empty sentence");
    const auto ctxs = contexts(chars);
    xs.push_back(embed_sentence(ctxs, config_.repr, params_.repr, glyphs, false, unused));
  }
  const auto hs = bigru_forward_batch(xs, params_.fwd, params_.bwd, config_.dropout, false, unused,
                                      nullptr, pad_to);
  std::vector<ScoreLattice> out;
  out.reserve(batch.size());
  for (const auto& h : hs) {
    out.push_back({emissions(h, params_.crf), params_.crf.T, params_.crf.start, params_.crf.end});
  }
  return out;
}

ScoreLattice Model::lattice(std::u32string_view chars) const {
  const std::u32string one(chars);
  return std::move(lattices(std::span(&one, 1)).front());
}

std::vector<int> Model::decode(std::u32string_view chars) const {
  if (chars.empty()) return {};
  return viterbi(lattice(chars), mask_);
}

TaggedSentence Model::tag(std::u32string_view chars) const {
  const auto labels = decode(chars);
  return decode_labels(chars, labels, labels_);
}

double Model::loss_and_grad(std::span<const Example> batch, bool training, Rng& rng,
                            ModelGrads& grads, int pad_to) const {
  if (batch.empty()) throw Error("empty training batch");
  const GlyphStore* glyphs = glyphs_ ? &*glyphs_ : nullptr;
  const auto B = batch.size();
  const double scale = 1.0 / static_cast<double>(B);

  std::vector<std::vector<CharContext>> ctxs(B);
  std::vector<EmbedTrace> embed_traces(B);
  std::vector<Matrix> xs(B);
  for (std::size_t b = 0; b < B; ++b) {
    if (batch[b].gold.size() != batch[b].chars.size()) throw Error("gold labels do not match the sentence length");
    ctxs[b] = contexts(batch[b].chars);
    xs[b] = embed_sentence(ctxs[b], config_.repr, params_.repr, glyphs, training, rng, &embed_traces[b]);
  }
  BiGruTrace gru_trace;
  const auto hs = bigru_forward_batch(xs, params_.fwd, params_.bwd, config_.dropout, training, rng,
                                      &gru_trace, pad_to);

  double total = 0.0;
  std::vector<Matrix> d_hs(B);
  for (std::size_t b = 0; b < B; ++b) {
    const ScoreLattice lat{emissions(hs[b], params_.crf), params_.crf.T, params_.crf.start, params_.crf.end};
    const auto g = nll_and_grad(lat, batch[b].gold);
    total += g.loss;
    grads.crf.W.noalias() += scale * (hs[b].transpose() * g.dS);
    grads.crf.b += scale * g.dS.colwise().sum().transpose();
    grads.crf.T += scale * g.dT;
    grads.crf.start += scale * g.dstart;
    grads.crf.end += scale * g.dend;
    d_hs[b] = scale * (g.dS * params_.crf.W.transpose());
  }
  const auto d_xs = bigru_backward_batch(gru_trace, xs, d_hs, params_.fwd, params_.bwd, grads.fwd, grads.bwd);
  for (std::size_t b = 0; b < B; ++b) {
    embed_backward(ctxs[b], embed_traces[b], d_xs[b], config_.repr, params_.repr, grads.repr);
  }
  return total * scale;
}

double Model::loss(std::span<const Example> batch) const {
  std::vector<std::u32string> chars;
  for (const auto& ex : batch) chars.push_back(ex.chars);
  const auto lats = lattices(chars);
  double total = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) total += nll_and_grad(lats[b], batch[b].gold).loss;
  return total / static_cast<double>(batch.size());
}

namespace {

template <typename T>
auto as_map(T& m) {
  using Scalar = std::remove_reference_t<decltype(*m.data())>;
  using Target = std::conditional_t<std::is_const_v<Scalar>, const Matrix, Matrix>;
  return Eigen::Map<Target>(m.data(), m.rows(), m.cols());
}

template <typename Params, typename Visit>
void visit_tensors(Params& p, Visit&& visit) {
  for (std::size_t o = 0; o < p.repr.ngram.size(); ++o) visit("ngram." + std::to_string(o + 1), as_map(p.repr.ngram[o]));
  if (p.repr.radical.size() > 0) visit("radical", as_map(p.repr.radical));
  if (p.repr.glyph.conv1_w.size() > 0) {
    visit("glyph.conv1_w", as_map(p.repr.glyph.conv1_w));
    visit("glyph.conv1_b", as_map(p.repr.glyph.conv1_b));
    visit("glyph.conv2_w", as_map(p.repr.glyph.conv2_w));
    visit("glyph.conv2_b", as_map(p.repr.glyph.conv2_b));
    visit("glyph.fc_w", as_map(p.repr.glyph.fc_w));
    visit("glyph.fc_b", as_map(p.repr.glyph.fc_b));
  }
  visit("gru_fwd.W", as_map(p.fwd.W));
  visit("gru_fwd.U", as_map(p.fwd.U));
  visit("gru_fwd.b", as_map(p.fwd.b));
  visit("gru_bwd.W", as_map(p.bwd.W));
  visit("gru_bwd.U", as_map(p.bwd.U));
  visit("gru_bwd.b", as_map(p.bwd.b));
  visit("crf.W", as_map(p.crf.W));
  visit("crf.b", as_map(p.crf.b));
  visit("crf.T", as_map(p.crf.T));
  visit("crf.start", as_map(p.crf.start));
  visit("crf.end", as_map(p.crf.end));
}

}  // namespace

void Model::for_each_tensor(ModelParams& params,
                            const std::function<void(const std::string&, TensorMap)>& visit) {
  visit_tensors(params, visit);
}

void Model::for_each_tensor(const ModelParams& params,
                            const std::function<void(const std::string&, ConstTensorMap)>& visit) {
  visit_tensors(params, visit);
}

void Model::for_each_slot(ModelParams& p, ModelGrads& g, const std::function<void(DenseSlot&)>& dense,
                          const std::function<void(SparseSlot&)>& sparse) {
  for (std::size_t o = 0; o < p.repr.ngram.size(); ++o) {
    SparseSlot s{"ngram." + std::to_string(o + 1), p.repr.ngram[o], g.repr.ngram[o]};
    sparse(s);
  }
  if (p.repr.radical.size() > 0) {
    SparseSlot s{"radical", p.repr.radical, g.repr.radical};
    sparse(s);
  }
  auto d = [&](const char* name, auto& param, auto& grad) {
    if (param.size() != grad.size()) throw Error(std::string("gradient shape mismatch for ") + name);
    DenseSlot slot{name, as_map(param), TensorMap(grad.data(), param.rows(), param.cols())};
    dense(slot);
  };
  if (p.repr.glyph.conv1_w.size() > 0) {
    d("glyph.conv1_w", p.repr.glyph.conv1_w, g.repr.glyph.conv1_w);
    d("glyph.conv1_b", p.repr.glyph.conv1_b, g.repr.glyph.conv1_b);
    d("glyph.conv2_w", p.repr.glyph.conv2_w, g.repr.glyph.conv2_w);
    d("glyph.conv2_b", p.repr.glyph.conv2_b, g.repr.glyph.conv2_b);
    d("glyph.fc_w", p.repr.glyph.fc_w, g.repr.glyph.fc_w);
    d("glyph.fc_b", p.repr.glyph.fc_b, g.repr.glyph.fc_b);
  }
  d("gru_fwd.W", p.fwd.W, g.fwd.W);
  d("gru_fwd.U", p.fwd.U, g.fwd.U);
  d("gru_fwd.b", p.fwd.b, g.fwd.b);
  d("gru_bwd.W", p.bwd.W, g.bwd.W);
  d("gru_bwd.U", p.bwd.U, g.bwd.U);
  d("gru_bwd.b", p.bwd.b, g.bwd.b);
  d("crf.W", p.crf.W, g.crf.W);
  d("crf.b", p.crf.b, g.crf.b);
  d("crf.T", p.crf.T, g.crf.T);
  d("crf.start", p.crf.start, g.crf.start);
  d("crf.end", p.crf.end, g.crf.end);
}

std::vector<ScoreLattice> ensemble_lattices(std::span<const Model* const> models,
                                            std::span<const std::u32string> batch, int pad_to) {
  if (models.empty()) throw Error("ensemble needs at least one model");
  for (const auto* m : models) {
    if (!(m->labels() == models.front()->labels())) throw Error("mismatched label spaces in ensemble");
  }
  if (models.size() == 1) return models.front()->lattices(batch, pad_to);
  std::vector<std::vector<ScoreLattice>> per_model;
  for (const auto* m : models) per_model.push_back(m->lattices(batch, pad_to));
  std::vector<ScoreLattice> out;
  std::vector<ScoreLattice> column(models.size());
  for (std::size_t s = 0; s < batch.size(); ++s) {
    for (std::size_t m = 0; m < models.size(); ++m) column[m] = std::move(per_model[m][s]);
    out.push_back(average_lattices(column));
  }
  return out;
}

ScoreLattice ensemble_scores(std::span<const Model* const> models, std::u32string_view chars) {
  const std::u32string one(chars);
  return std::move(ensemble_lattices(models, std::span(&one, 1)).front());
}

}  // namespace jseg
