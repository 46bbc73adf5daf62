#include "jseg/labels.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "jseg/common.hpp"
#include "jseg/utf8.hpp"

namespace jseg {

std::u32string TaggedSentence::chars() const {
  std::u32string out;
  out.reserve(char_count());
  for (const auto& w : words) out += w.surface;
  return out;
}

std::size_t TaggedSentence::char_count() const {
  std::size_t n = 0;
  for (const auto& w : words) n += w.surface.size();
  return n;
}

char boundary_char(Boundary b) {
  static constexpr char kChars[] = {'B', 'I', 'E', 'S'};
  return kChars[static_cast<int>(b)];
}

std::string ComboLabel::str() const { return std::string(1, boundary_char(boundary)) + "-" + pos; }

ComboLabel ComboLabel::parse(std::string_view text) {
  if (text.size() < 3 || text[1] != '-') throw Error("malformed label '" + std::string(text) + "'");
  Boundary b;
  switch (text[0]) {
    case 'B': b = Boundary::B; break;
    case 'I': b = Boundary::I; break;
    case 'E': b = Boundary::E; break;
    case 'S': b = Boundary::S; break;
    default: throw Error("malformed label '" + std::string(text) + "'");
  }
  return {b, std::string(text.substr(2))};
}

std::strong_ordering ComboLabel::operator<=>(const ComboLabel& other) const {
  if (auto c = pos <=> other.pos; c != 0) return c;
  return boundary <=> other.boundary;
}

LabelSpace::LabelSpace(std::vector<ComboLabel> labels) : labels_(std::move(labels)) {
  std::sort(labels_.begin(), labels_.end());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const auto& l = labels_[i];
    if (l.pos.empty()) throw Error("label with empty POS tag");
    if (!index_.emplace(l, static_cast<int>(i)).second) throw Error("duplicate label " + l.str());
    int len = 1;
    if (l.boundary == Boundary::B || l.boundary == Boundary::E) len = 2;
    if (l.boundary == Boundary::I) len = 3;
    auto& m = pos_max_len_[l.pos];
    m = std::max(m, len);
  }
}

std::optional<int> LabelSpace::find(const ComboLabel& label) const {
  auto it = index_.find(label);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int LabelSpace::index_of(const ComboLabel& label) const {
  auto idx = find(label);
  if (!idx) throw Error("label " + label.str() + " is not in the label space");
  return *idx;
}

std::vector<std::string> LabelSpace::pos_tags() const {
  std::vector<std::string> out;
  for (const auto& [pos, len] : pos_max_len_) out.push_back(pos);
  return out;
}

bool LabelSpace::allowed_start(int j) const {
  const auto b = label(j).boundary;
  return b == Boundary::B || b == Boundary::S;
}

bool LabelSpace::allowed_end(int i) const {
  const auto b = label(i).boundary;
  return b == Boundary::E || b == Boundary::S;
}

bool LabelSpace::allowed_transition(int from, int to) const {
  const auto& a = label(from);
  const auto& b = label(to);
  const bool open = a.boundary == Boundary::B || a.boundary == Boundary::I;
  const bool continues = b.boundary == Boundary::I || b.boundary == Boundary::E;
  if (open) return continues && a.pos == b.pos;
  return !continues;
}

std::vector<ComboLabel> encode_labels(const TaggedSentence& sentence) {
  if (sentence.words.empty()) throw Error("empty input");
  std::vector<ComboLabel> out;
  out.reserve(sentence.char_count());
  for (const auto& w : sentence.words) {
    const auto len = w.surface.size();
    if (len == 0) throw Error("empty word surface");
    if (len == 1) {
      out.push_back({Boundary::S, w.pos});
      continue;
    }
    out.push_back({Boundary::B, w.pos});
    for (std::size_t i = 1; i + 1 < len; ++i) out.push_back({Boundary::I, w.pos});
    out.push_back({Boundary::E, w.pos});
  }
  return out;
}

TaggedSentence decode_labels(std::u32string_view chars, std::span<const ComboLabel> labels) {
  if (chars.size() != labels.size()) {
    throw Error("decode_labels: " + std::to_string(chars.size()) + " characters but " +
                std::to_string(labels.size()) + " labels");
  }
  TaggedSentence out;
  bool open = false;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    const auto& l = labels[i];
    const bool starts = l.boundary == Boundary::B || l.boundary == Boundary::S || !open;
    if (starts) out.words.push_back({std::u32string(1, chars[i]), l.pos});
    else out.words.back().surface.push_back(chars[i]);
    open = l.boundary == Boundary::B || l.boundary == Boundary::I;
  }
  return out;
}

TaggedSentence decode_labels(std::u32string_view chars, std::span<const int> labels,
                             const LabelSpace& space) {
  std::vector<ComboLabel> combos;
  combos.reserve(labels.size());
  for (int idx : labels) {
    if (idx < 0 || idx >= space.size()) throw Error("label index out of range");
    combos.push_back(space.label(idx));
  }
  return decode_labels(chars, combos);
}

LabelSpace build_label_space(const Corpus& corpus) {
  std::set<ComboLabel> seen;
  for (const auto& s : corpus) {
    for (const auto& w : s.words) {
      const auto len = w.surface.size();
      if (len == 0) continue;
      if (len == 1) {
        seen.insert({Boundary::S, w.pos});
        continue;
      }
      seen.insert({Boundary::B, w.pos});
      seen.insert({Boundary::E, w.pos});
      if (len >= 3) seen.insert({Boundary::I, w.pos});
    }
  }
  return LabelSpace(std::vector<ComboLabel>(seen.begin(), seen.end()));
}

TaggedSentence parse_tagged_line(std::string_view line) {
  TaggedSentence out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const auto space = line.find(' ', pos);
    const auto token = line.substr(pos, space == std::string_view::npos ? line.npos : space - pos);
    if (token.empty()) throw Error("empty token (tokens must be separated by single spaces)");
    const auto sep = token.rfind('_');
    if (sep == std::string_view::npos) throw Error("token '" + std::string(token) + "' has no _POS suffix");
    const auto surface = token.substr(0, sep);
    const auto tag = token.substr(sep + 1);
    if (surface.empty()) throw Error("token '" + std::string(token) + "' has an empty surface");
    if (tag.empty()) throw Error("token '" + std::string(token) + "' has an empty POS tag");
    out.words.push_back({utf8::decode(surface), std::string(tag)});
    if (space == std::string_view::npos) break;
    pos = space + 1;
  }
  return out;
}

std::string format_tagged(const TaggedSentence& sentence) {
  std::string out;
  for (std::size_t i = 0; i < sentence.words.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += utf8::encode(sentence.words[i].surface);
    out.push_back('_');
    out += sentence.words[i].pos;
  }
  return out;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

Corpus read_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    try {
      corpus.push_back(parse_tagged_line(line));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : corpus) out << format_tagged(s) << '\n';
}

std::vector<std::u32string> read_raw(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::u32string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    try {
      auto text = utf8::decode(line);
      std::erase_if(text, [](char32_t c) { return c == U' ' || c == U'\t' || c == U'\u3000'; });
      out.push_back(std::move(text));
    } catch (const Error& e) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace jseg
