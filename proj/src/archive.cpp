#include "jseg/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "jseg/utf8.hpp"

namespace jseg {

namespace {

constexpr std::string_view kMagic = "JSEG-MODEL";

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  std::string& str() { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string_view bytes() {
    const auto n = u32();
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error("model archive is truncated");
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string model_config_text(const ModelConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "max_order=" << c.repr.max_order << '\n'
     << "ngram_dim=" << c.repr.ngram_dim << '\n'
     << "radicals=" << (c.repr.radicals ? 1 : 0) << '\n'
     << "radical_dim=" << c.repr.radical_dim << '\n'
     << "glyphs=" << (c.repr.glyphs ? 1 : 0) << '\n'
     << "glyph_image=" << c.repr.glyph.image << '\n'
     << "glyph_kernel=" << c.repr.glyph.kernel << '\n'
     << "glyph_filters=" << c.repr.glyph.filters << '\n'
     << "glyph_fc=" << c.repr.glyph.fc << '\n'
     << "glyph_dropout=" << c.repr.glyph_dropout << '\n'
     << "gru_state=" << c.gru_state << '\n'
     << "dropout=" << c.dropout << '\n';
  return os.str();
}

ModelConfig parse_model_config(const std::map<std::string, std::string>& kv) {
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(std::string("model archive: missing model key ") + key);
    return it->second;
  };
  auto as_int = [&](const char* key) { return std::stoi(get(key)); };
  auto as_double = [&](const char* key) { return std::stod(get(key)); };
  ModelConfig c;
  c.repr.max_order = as_int("max_order");
  c.repr.ngram_dim = as_int("ngram_dim");
  c.repr.radicals = as_int("radicals") != 0;
  c.repr.radical_dim = as_int("radical_dim");
  c.repr.glyphs = as_int("glyphs") != 0;
  c.repr.glyph.image = as_int("glyph_image");
  c.repr.glyph.kernel = as_int("glyph_kernel");
  c.repr.glyph.filters = as_int("glyph_filters");
  c.repr.glyph.fc = as_int("glyph_fc");
  c.repr.glyph_dropout = as_double("glyph_dropout");
  c.gru_state = as_int("gru_state");
  c.dropout = as_double("dropout");
  return c;
}

std::string hex_cp(char32_t c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(c));
  return buf;
}

}  // namespace

std::string serialize_model(const Model& model, const TrainConfig& cfg) {
  std::ostringstream head;
  head << kMagic << ' ' << kArchiveVersion << '\n';
  head << "[model]\n" << model_config_text(model.config());
  head << "[train]\n" << cfg.to_text();
  head << "[labels]\n";
  for (const auto& l : model.labels().labels()) head << l.str() << '\n';
  head << "[radicals]\n";
  for (const auto& r : model.radicals().ranges()) head << hex_cp(r.first) << ' ' << hex_cp(r.last) << ' ' << r.radical << '\n';
  head << "END\n";

  Writer w;
  w.str() = head.str();
  const auto& vocab = model.vocab();
  for (int o = 1; o <= vocab.max_order(); ++o) {
    const auto& entries = vocab.entries(o);
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) w.bytes(utf8::encode(e));
  }
  if (model.glyphs()) {
    const auto& g = *model.glyphs();
    w.u32(static_cast<std::uint32_t>(g.size()));
    for (int id = 0; id < g.size(); ++id) {
      w.u32(static_cast<std::uint32_t>(g.codepoints()[static_cast<std::size_t>(id)]));
      const auto& bmp = g.bitmap(id);
      for (Eigen::Index i = 0; i < bmp.size(); ++i) w.f64(bmp.data()[i]);
    }
  } else {
    w.u32(0);
  }
  std::vector<std::pair<std::string, ConstTensorMap>> tensors;
  Model::for_each_tensor(model.params(), [&](const std::string& name, ConstTensorMap t) {
    tensors.emplace_back(name, t);
  });
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.bytes(name);
    w.u64(static_cast<std::uint64_t>(t.rows()));
    w.u64(static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f64(t.data()[i]);
  }
  return std::move(w.str());
}

ModelArchive deserialize_model(std::string_view bytes) {
  const auto end_marker = bytes.find("\nEND\n");
  if (end_marker == std::string_view::npos) throw Error("not a model archive (no header terminator)");
  std::istringstream head{std::string(bytes.substr(0, end_marker + 1))};
  std::string line;
  if (!std::getline(head, line)) throw Error("empty model archive");
  {
    std::istringstream first(line);
    std::string magic;
    int version = 0;
    if (!(first >> magic >> version) || magic != kMagic) throw Error("not a model archive");
    if (version != kArchiveVersion) {
      throw Error("unsupported model archive version " + std::to_string(version) + " (expected " +
                  std::to_string(kArchiveVersion) + ")");
    }
  }
  std::string section;
  std::map<std::string, std::string> model_kv;
  std::string train_text;
  std::vector<ComboLabel> labels;
  std::vector<RadicalTable::Range> ranges;
  while (std::getline(head, line)) {
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line;
      continue;
    }
    if (section == "[model]") {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw Error("model archive: malformed line '" + line + "'");
      model_kv[line.substr(0, eq)] = line.substr(eq + 1);
    } else if (section == "[train]") {
      train_text += line + '\n';
    } else if (section == "[labels]") {
      labels.push_back(ComboLabel::parse(line));
    } else if (section == "[radicals]") {
      std::istringstream ss(line);
      std::string a, b;
      int idx = 0;
      if (!(ss >> a >> b >> idx)) throw Error("model archive: malformed radical range '" + line + "'");
      ranges.push_back({utf8::parse_codepoint(a), utf8::parse_codepoint(b), idx});
    } else {
      throw Error("model archive: unexpected header line '" + line + "'");
    }
  }

  ModelArchive out;
  out.train_config = TrainConfig::parse(train_text);
  const auto config = parse_model_config(model_kv);

  Reader r(bytes.substr(end_marker + 5));
  NgramVocab vocab(config.repr.max_order);
  for (int o = 1; o <= config.repr.max_order; ++o) {
    const auto count = r.u32();
    if (count == 0 || !r.bytes().empty()) throw Error("model archive: vocabulary must start with UNK");
    for (std::uint32_t i = 1; i < count; ++i) {
      if (vocab.add(o, utf8::decode(r.bytes())) != static_cast<int>(i)) throw Error("model archive: duplicate n-gram");
    }
  }
  std::optional<GlyphStore> glyphs;
  const auto glyph_count = r.u32();
  if (glyph_count > 0) {
    const int image = config.repr.glyph.image;
    glyphs.emplace(image);
    for (std::uint32_t id = 0; id < glyph_count; ++id) {
      const auto cp = static_cast<char32_t>(r.u32());
      Matrix bmp(image, image);
      for (Eigen::Index i = 0; i < bmp.size(); ++i) bmp.data()[i] = r.f64();
      if (id > 0) glyphs->add(cp, std::move(bmp));
    }
  }

  Model model(config, LabelSpace(std::move(labels)), std::move(vocab), RadicalTable(std::move(ranges)),
              std::move(glyphs));
  std::map<std::string, TensorMap> slots;
  Model::for_each_tensor(model.params(), [&](const std::string& name, TensorMap t) { slots.emplace(name, t); });
  const auto tensor_count = r.u32();
  if (tensor_count != slots.size()) throw Error("model archive: unexpected number of tensors");
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    const std::string name(r.bytes());
    auto it = slots.find(name);
    if (it == slots.end()) throw Error("model archive: unknown tensor '" + name + "'");
    auto& t = it->second;
    const auto rows = r.u64();
    const auto cols = r.u64();
    if (rows != static_cast<std::uint64_t>(t.rows()) || cols != static_cast<std::uint64_t>(t.cols())) {
      throw Error("model archive: tensor '" + name + "' has the wrong shape");
    }
    for (Eigen::Index j = 0; j < t.size(); ++j) t.data()[j] = r.f64();
  }
  if (!r.done()) throw Error("model archive: trailing bytes");
  out.model = std::move(model);
  return out;
}

void save_model(const std::filesystem::path& path, const Model& model, const TrainConfig& cfg) {
  const auto bytes = serialize_model(model, cfg);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

ModelArchive load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_model(ss.str());
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace jseg
