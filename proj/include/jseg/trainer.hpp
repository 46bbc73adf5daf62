#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jseg/model.hpp"

namespace jseg {

/// Training hyper-parameters. The representation defaults to 3-grams with
/// radicals.
struct TrainConfig {
  double initial_lr = 0.1;
  double decay = 0.05;
  double clip_norm = 5.0;
  double dropout = 0.5;
  int batch_size = 10;
  int epochs = 30;
  int min_adopt_epoch = 5;
  int max_order = 3;
  int ngram_dim = 64;
  int radical_dim = 30;
  int gru_state = 200;
  bool radicals = true;
  bool glyphs = false;
  bool pretrained = false;
  int bucket_width = 10;
  std::uint64_t seed = 1;

  ModelConfig model_config() const;
  void validate() const;

  /// Flat "key=value" lines; '#' starts a comment. Unknown keys are errors.
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::filesystem::path& path);
  std::string to_text() const;

  bool operator==(const TrainConfig&) const = default;
};

/// eta_t = eta_0 / (decay * (t - 1) + 1) for epoch t >= 1.
double lr_at_epoch(int epoch, const TrainConfig& cfg);

/// Scales all tensors jointly so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_gradients(std::span<TensorMap> grads, double max_norm);

/// Views over every gradient entry of a model (sparse rows included).
std::vector<TensorMap> gradient_views(ModelGrads& grads);

inline constexpr double kAdagradEpsilon = 1e-8;

/// accum += g^2; param -= lr * g / sqrt(accum + eps).
void adagrad_step(TensorMap param, const ConstTensorMap& grad, TensorMap accum, double lr,
                  double eps = kAdagradEpsilon);

/// Accumulated squared gradients for every parameter of a model. Embedding
/// rows are only touched when they received a gradient.
class AdagradState {
 public:
  explicit AdagradState(const ModelParams& params);

  void update(ModelParams& params, ModelGrads& grads, double lr);
  /// Accumulators in the same order as Model::for_each_tensor.
  const std::vector<Matrix>& accumulators() const { return accum_; }

 private:
  std::vector<Matrix> accum_;
};

/// Uniform on +-sqrt(6 / (fan_in + fan_out)).
Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out, Rng& rng);
/// Fan-in and fan-out taken from the shape (cols, rows).
Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Glorot for every weight tensor (embeddings included), zero for biases and
/// boundary scores.
void init_params(Model& model, Rng& rng);

/// Sentences of similar length padded to a common length.
struct Bucket {
  int max_len = 0;
  std::vector<std::size_t> members;  // indices into the input
  std::vector<int> lengths;

  /// 1 for real positions, 0 for padding; members x max_len.
  Matrix mask() const;
};

/// Groups sentences by ceil(len / width) * width (ascending) and splits each
/// group into batches of at most batch_size, keeping input order inside a
/// group.
std::vector<Bucket> make_buckets(std::span<const std::size_t> lengths, int bucket_width, int batch_size);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_seg_f1 = 0.0;
  double dev_seg_tag_f1 = 0.0;
  double product = 0.0;
  double seconds = 0.0;

  std::string to_text() const;
};

struct TrainInputs {
  std::optional<std::filesystem::path> embeddings;
  RadicalTable radicals = RadicalTable::kangxi();
  std::optional<GlyphStore> glyphs;
};

struct TrainResult {
  Model model;
  int best_epoch = 0;
  std::vector<EpochLog> log;
  std::optional<PretrainedCoverage> coverage;
};

/// Trains for cfg.epochs epochs and keeps the parameters of the epoch with
/// the best dev F1_Seg * F1_Seg&Tag among epochs >= min_adopt_epoch (or the
/// last epoch when fewer epochs run).
TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus, const TrainConfig& cfg,
                  const TrainInputs& inputs = {},
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace jseg
