#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "jseg/model.hpp"
#include "jseg/trainer.hpp"

namespace jseg {

inline constexpr int kArchiveVersion = 1;

/// A trained model together with the configuration that produced it.
///
/// File layout: a UTF-8 text header
///
///   JSEG-MODEL <version>
///   [model]      key=value model configuration
///   [train]      key=value training configuration
///   [labels]     one combinatory label per line
///   [radicals]   "U+XXXX U+YYYY idx" ranges
///   END
///
/// followed by a little-endian binary section: per n-gram order a u32 entry
/// count and length-prefixed UTF-8 entries; a u32 glyph count with
/// (u32 code point, image*image f64) records; a u32 tensor count with
/// (u32 name length, name, u64 rows, u64 cols, rows*cols f64) records.
struct ModelArchive {
  TrainConfig train_config;
  Model model;
};

std::string serialize_model(const Model& model, const TrainConfig& cfg);
ModelArchive deserialize_model(std::string_view bytes);

void save_model(const std::filesystem::path& path, const Model& model, const TrainConfig& cfg);
ModelArchive load_model(const std::filesystem::path& path);

}  // namespace jseg
