#include "jseg/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "jseg/eval.hpp"
#include "jseg/tagger.hpp"

namespace jseg {

// ---------------------------------------------------------------------------
// Configuration

ModelConfig TrainConfig::model_config() const {
  ModelConfig m;
  m.repr.max_order = max_order;
  m.repr.ngram_dim = ngram_dim;
  m.repr.radicals = radicals;
  m.repr.radical_dim = radical_dim;
  m.repr.glyphs = glyphs;
  m.repr.glyph_dropout = dropout;
  m.gru_state = gru_state;
  m.dropout = dropout;
  return m;
}

void TrainConfig::validate() const {
  auto positive = [](bool ok, const char* key) {
    if (!ok) throw Error(std::string("config: ") + key + " must be positive");
  };
  positive(initial_lr > 0, "initial_lr");
  positive(decay >= 0, "decay");
  positive(clip_norm > 0, "clip_norm");
  if (dropout < 0 || dropout >= 1) throw Error("config: dropout must be in [0, 1)");
  positive(batch_size > 0, "batch_size");
  positive(epochs > 0, "epochs");
  positive(min_adopt_epoch > 0, "min_adopt_epoch");
  positive(max_order > 0, "max_order");
  positive(ngram_dim > 0, "ngram_dim");
  positive(radical_dim > 0, "radical_dim");
  positive(gru_state > 0, "gru_state");
  positive(bucket_width > 0, "bucket_width");
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || p != value.data() + value.size()) {
    throw Error("invalid value '" + std::string(value) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw Error("invalid boolean '" + std::string(value) + "' for " + std::string(key));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

}  // namespace

TrainConfig TrainConfig::parse(std::string_view text) {
  TrainConfig cfg;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw Error("expected key=value");
      const auto key = trim(line.substr(0, eq));
      const auto value = trim(line.substr(eq + 1));
      if (key == "initial_lr") cfg.initial_lr = parse_number<double>(key, value);
      else if (key == "decay") cfg.decay = parse_number<double>(key, value);
      else if (key == "clip_norm") cfg.clip_norm = parse_number<double>(key, value);
      else if (key == "dropout") cfg.dropout = parse_number<double>(key, value);
      else if (key == "batch_size") cfg.batch_size = parse_number<int>(key, value);
      else if (key == "epochs") cfg.epochs = parse_number<int>(key, value);
      else if (key == "min_adopt_epoch") cfg.min_adopt_epoch = parse_number<int>(key, value);
      else if (key == "max_order") cfg.max_order = parse_number<int>(key, value);
      else if (key == "ngram_dim") cfg.ngram_dim = parse_number<int>(key, value);
      else if (key == "radical_dim") cfg.radical_dim = parse_number<int>(key, value);
      else if (key == "gru_state") cfg.gru_state = parse_number<int>(key, value);
      else if (key == "radicals") cfg.radicals = parse_bool(key, value);
      else if (key == "glyphs") cfg.glyphs = parse_bool(key, value);
      else if (key == "pretrained") cfg.pretrained = parse_bool(key, value);
      else if (key == "bucket_width") cfg.bucket_width = parse_number<int>(key, value);
      else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
      else throw Error("unknown key '" + std::string(key) + "'");
    } catch (const Error& e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "initial_lr=" << initial_lr << '\n'
     << "decay=" << decay << '\n'
     << "clip_norm=" << clip_norm << '\n'
     << "dropout=" << dropout << '\n'
     << "batch_size=" << batch_size << '\n'
     << "epochs=" << epochs << '\n'
     << "min_adopt_epoch=" << min_adopt_epoch << '\n'
     << "max_order=" << max_order << '\n'
     << "ngram_dim=" << ngram_dim << '\n'
     << "radical_dim=" << radical_dim << '\n'
     << "gru_state=" << gru_state << '\n'
     << "radicals=" << (radicals ? "true" : "false") << '\n'
     << "glyphs=" << (glyphs ? "true" : "false") << '\n'
     << "pretrained=" << (pretrained ? "true" : "false") << '\n'
     << "bucket_width=" << bucket_width << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Optimisation primitives

double lr_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 1) throw Error("epoch index must be >= 1");
  return cfg.initial_lr / (cfg.decay * static_cast<double>(epoch - 1) + 1.0);
}

double clip_gradients(std::span<TensorMap> grads, double max_norm) {
  double sq = 0.0;
  for (const auto& g : grads) {
    if (!g.allFinite()) throw Error("non-finite gradient");
    sq += g.squaredNorm();
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& g : grads) g *= scale;
  }
  return norm;
}

std::vector<TensorMap> gradient_views(ModelGrads& g) {
  std::vector<TensorMap> out;
  auto sparse = [&](SparseRows& rows) {
    for (auto& [row, v] : rows.rows) out.emplace_back(v.data(), 1, v.size());
  };
  for (auto& t : g.repr.ngram) sparse(t);
  sparse(g.repr.radical);
  auto dense = [&](auto& m) {
    if (m.size() > 0) out.emplace_back(m.data(), m.rows(), m.cols());
  };
  dense(g.repr.glyph.conv1_w);
  dense(g.repr.glyph.conv1_b);
  dense(g.repr.glyph.conv2_w);
  dense(g.repr.glyph.conv2_b);
  dense(g.repr.glyph.fc_w);
  dense(g.repr.glyph.fc_b);
  for (auto* gru : {&g.fwd, &g.bwd}) {
    dense(gru->W);
    dense(gru->U);
    dense(gru->b);
  }
  dense(g.crf.W);
  dense(g.crf.b);
  dense(g.crf.T);
  dense(g.crf.start);
  dense(g.crf.end);
  return out;
}

void adagrad_step(TensorMap param, const ConstTensorMap& grad, TensorMap accum, double lr, double eps) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols() || accum.rows() != param.rows() ||
      accum.cols() != param.cols()) {
    throw Error("adagrad: shape mismatch");
  }
  accum.array() += grad.array().square();
  param.array() -= lr * grad.array() / (accum.array() + eps).sqrt();
}

AdagradState::AdagradState(const ModelParams& params) {
  Model::for_each_tensor(params, [&](const std::string&, ConstTensorMap t) {
    accum_.push_back(Matrix::Zero(t.rows(), t.cols()));
  });
}

void AdagradState::update(ModelParams& params, ModelGrads& grads, double lr) {
  std::size_t slot = 0;
  Model::for_each_slot(
      params, grads,
      [&](DenseSlot& d) {
        auto& acc = accum_.at(slot++);
        adagrad_step(d.param, ConstTensorMap(d.grad.data(), d.grad.rows(), d.grad.cols()),
                     TensorMap(acc.data(), acc.rows(), acc.cols()), lr);
      },
      [&](SparseSlot& s) {
        auto& acc = accum_.at(slot++);
        for (const auto& [row, g] : s.grad.rows) {
          adagrad_step(TensorMap(s.param.row(row).data(), 1, s.param.cols()),
                       ConstTensorMap(g.data(), 1, g.size()),
                       TensorMap(acc.row(row).data(), 1, acc.cols()), lr);
        }
      });
}

Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, double fan_in, double fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix glorot_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  return glorot_init(rows, cols, static_cast<double>(cols), static_cast<double>(rows), rng);
}

void init_params(Model& model, Rng& rng) {
  auto& p = model.params();
  const auto& cfg = model.config();
  // Embedding tables are [vocab x dim]: fan-in is the vocabulary size.
  for (auto& t : p.repr.ngram) t = glorot_init(t.rows(), t.cols(), double(t.rows()), double(t.cols()), rng);
  if (p.repr.radical.size() > 0) {
    auto& t = p.repr.radical;
    t = glorot_init(t.rows(), t.cols(), double(t.rows()), double(t.cols()), rng);
  }
  if (cfg.repr.glyphs) {
    auto& g = p.repr.glyph;
    const double kk = g.shape.kernel * g.shape.kernel;
    g.conv1_w = glorot_init(g.conv1_w.rows(), g.conv1_w.cols(), kk, kk * g.shape.filters, rng);
    g.conv2_w = glorot_init(g.conv2_w.rows(), g.conv2_w.cols(), kk * g.shape.filters, kk * g.shape.filters, rng);
    g.fc_w = glorot_init(g.fc_w.rows(), g.fc_w.cols(), rng);
  }
  const int S = cfg.gru_state;
  for (auto* gru : {&p.fwd, &p.bwd}) {
    for (int gate = 0; gate < 3; ++gate) {
      gru->W.middleRows(gate * S, S) = glorot_init(S, gru->W.cols(), rng);
      gru->U.middleRows(gate * S, S) = glorot_init(S, S, rng);
    }
  }
  // crf.W is [input x k].
  p.crf.W = glorot_init(p.crf.W.rows(), p.crf.W.cols(), double(p.crf.W.rows()), double(p.crf.W.cols()), rng);
  p.crf.T = glorot_init(p.crf.T.rows(), p.crf.T.cols(), rng);
}

// ---------------------------------------------------------------------------
// Bucketing

Matrix Bucket::mask() const {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(members.size()), max_len);
  for (std::size_t i = 0; i < lengths.size(); ++i) m.row(static_cast<Eigen::Index>(i)).head(lengths[i]).setOnes();
  return m;
}

std::vector<Bucket> make_buckets(std::span<const std::size_t> lengths, int bucket_width, int batch_size) {
  if (bucket_width < 1) throw Error("bucket width must be >= 1");
  if (batch_size < 1) throw Error("batch size must be >= 1");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  const auto width = static_cast<std::size_t>(bucket_width);
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    groups[(lengths[i] + width - 1) / width * width].push_back(i);
  }
  std::vector<Bucket> out;
  for (const auto& [max_len, members] : groups) {
    for (std::size_t start = 0; start < members.size(); start += static_cast<std::size_t>(batch_size)) {
      Bucket b;
      b.max_len = static_cast<int>(max_len);
      const auto stop = std::min(members.size(), start + static_cast<std::size_t>(batch_size));
      for (std::size_t j = start; j < stop; ++j) {
        b.members.push_back(members[j]);
        b.lengths.push_back(static_cast<int>(lengths[members[j]]));
      }
      out.push_back(std::move(b));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

std::string EpochLog::to_text() const {
  std::ostringstream os;
  os.precision(10);
  os << "epoch=" << epoch << " lr=" << lr << " train_loss=" << train_loss << " dev_f1_seg=" << dev_seg_f1
     << " dev_f1_seg_tag=" << dev_seg_tag_f1 << " product=" << product;
  return os.str();
}

TrainResult train(const Corpus& train_corpus, const Corpus& dev_corpus, const TrainConfig& cfg,
                  const TrainInputs& inputs, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_corpus.empty()) throw Error("training corpus is empty");
  if (dev_corpus.empty()) throw Error("development corpus is empty");
  if (cfg.pretrained && !inputs.embeddings) throw Error("pretrained=true but no embedding file given");

  std::optional<GlyphStore> glyphs;
  if (cfg.glyphs) {
    if (!inputs.glyphs) throw Error("glyphs=true but no glyph bitmaps given");
    glyphs = inputs.glyphs;
  }
  Model model(cfg.model_config(), build_label_space(train_corpus), build_vocab(train_corpus, cfg.max_order),
              inputs.radicals, std::move(glyphs));
  Rng rng(cfg.seed);
  init_params(model, rng);

  TrainResult result;
  if (inputs.embeddings) {
    result.coverage = load_pretrained(*inputs.embeddings, model.vocab(), model.params().repr.ngram.front());
  }

  std::vector<Example> examples;
  examples.reserve(train_corpus.size());
  for (const auto& s : train_corpus) {
    if (s.words.empty()) continue;
    examples.push_back(model.make_example(s));
  }
  std::vector<std::u32string> dev_raw;
  for (const auto& s : dev_corpus) dev_raw.push_back(s.chars());

  AdagradState adagrad(model.params());
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const int first_candidate = std::min(cfg.min_adopt_epoch, cfg.epochs);
  double best = -1.0;
  ModelParams best_params;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_at_epoch(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> lengths;
    for (auto i : order) lengths.push_back(examples[i].chars.size());
    auto batches = make_buckets(lengths, cfg.bucket_width, cfg.batch_size);
    std::shuffle(batches.begin(), batches.end(), rng);

    double loss_sum = 0.0;
    for (const auto& bucket : batches) {
      std::vector<Example> batch;
      for (auto m : bucket.members) batch.push_back(examples[order[m]]);
      auto grads = model.zero_grads();
      loss_sum += model.loss_and_grad(batch, true, rng, grads, bucket.max_len);
      auto views = gradient_views(grads);
      clip_gradients(views, cfg.clip_norm);
      adagrad.update(model.params(), grads, lr);
    }

    const auto predicted = tag_sentences(model, dev_raw, {500, cfg.bucket_width});
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    log.train_loss = loss_sum / static_cast<double>(std::max<std::size_t>(1, batches.size()));
    log.dev_seg_f1 = word_f1(dev_corpus, predicted, false).f1;
    log.dev_seg_tag_f1 = word_f1(dev_corpus, predicted, true).f1;
    log.product = log.dev_seg_f1 * log.dev_seg_tag_f1;
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (epoch >= first_candidate && log.product > best) {
      best = log.product;
      best_params = model.params();
      result.best_epoch = epoch;
    }
  }
  model.params() = std::move(best_params);
  result.model = std::move(model);
  return result;
}

}  // namespace jseg
