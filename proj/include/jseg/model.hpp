#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jseg/charrepr.hpp"
#include "jseg/crf.hpp"
#include "jseg/encoder.hpp"
#include "jseg/labels.hpp"

namespace jseg {

struct ModelConfig {
  CharReprConfig repr;
  int gru_state = 200;
  double dropout = 0.5;

  bool operator==(const ModelConfig&) const = default;
};

struct ModelParams {
  CharReprParams repr;
  GruParams fwd;
  GruParams bwd;
  CrfParams crf;
};

struct ModelGrads {
  CharReprGrads repr;
  GruParams fwd;
  GruParams bwd;
  CrfParams crf;
};

using TensorMap = Eigen::Map<Matrix>;
using ConstTensorMap = Eigen::Map<const Matrix>;

/// A dense parameter tensor and its gradient, for optimisers and checks.
/// Vectors are viewed as single-column matrices.
struct DenseSlot {
  std::string name;
  TensorMap param;
  TensorMap grad;
};

/// An embedding table with its row-sparse gradient.
struct SparseSlot {
  std::string name;
  Matrix& param;
  SparseRows& grad;
};

/// Character sequence plus gold label indices, ready for training.
struct Example {
  std::u32string chars;
  std::vector<int> gold;
};

/// Everything needed to score and decode: configuration, label space,
/// vocabularies and parameters.
class Model {
 public:
  Model() = default;
  Model(ModelConfig config, LabelSpace labels, NgramVocab vocab, RadicalTable radicals,
        std::optional<GlyphStore> glyphs);

  const ModelConfig& config() const { return config_; }
  const LabelSpace& labels() const { return labels_; }
  const NgramVocab& vocab() const { return vocab_; }
  const RadicalTable& radicals() const { return radicals_; }
  const std::optional<GlyphStore>& glyphs() const { return glyphs_; }
  const TransitionMask& mask() const { return mask_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  /// Zero-filled parameters of the right shapes.
  ModelParams zero_params() const;
  ModelGrads zero_grads() const;

  std::vector<CharContext> contexts(std::u32string_view chars) const;
  Example make_example(const TaggedSentence& sentence) const;

  /// Inference-mode lattices for a batch of non-empty sentences, padded to
  /// at least `pad_to` encoder steps.
  std::vector<ScoreLattice> lattices(std::span<const std::u32string> batch, int pad_to = 0) const;
  ScoreLattice lattice(std::u32string_view chars) const;

  std::vector<int> decode(std::u32string_view chars) const;
  TaggedSentence tag(std::u32string_view chars) const;

  /// Mean NLL over the batch. Accumulates the gradient of that mean into
  /// `grads`. Dropout is active only when training.
  double loss_and_grad(std::span<const Example> batch, bool training, Rng& rng, ModelGrads& grads,
                       int pad_to = 0) const;

  /// Mean NLL without gradients.
  double loss(std::span<const Example> batch) const;

  static void for_each_slot(ModelParams& params, ModelGrads& grads,
                            const std::function<void(DenseSlot&)>& dense,
                            const std::function<void(SparseSlot&)>& sparse);
  /// Visits every parameter tensor in a fixed order.
  static void for_each_tensor(ModelParams& params,
                              const std::function<void(const std::string&, TensorMap)>& visit);
  static void for_each_tensor(const ModelParams& params,
                              const std::function<void(const std::string&, ConstTensorMap)>& visit);

 private:
  CharResources resources() const;

  ModelConfig config_;
  LabelSpace labels_;
  NgramVocab vocab_;
  RadicalTable radicals_;
  std::optional<GlyphStore> glyphs_;
  TransitionMask mask_;
  ModelParams params_;
};

/// Emission, transition and boundary scores averaged over several models
/// sharing one label space.
std::vector<ScoreLattice> ensemble_lattices(std::span<const Model* const> models,
                                            std::span<const std::u32string> batch, int pad_to = 0);
ScoreLattice ensemble_scores(std::span<const Model* const> models, std::u32string_view chars);

}  // namespace jseg
