#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sise/model.hpp"

namespace sise {

/// One named tensor of a weights container.
struct WeightEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const WeightEntry&, const WeightEntry&) = default;
};

/// Magic prefix of the weights container ("SISEW1" plus a NUL byte).
inline constexpr char kWeightsMagic[7] = {'S', 'I', 'S', 'E', 'W', '1', '\0'};

/// Container layout after the magic, repeated until end of file:
///   u64 name length, name bytes, u64 rank, rank x u64 extents,
///   product(extents) x f32 values. All integers and floats little-endian.
std::vector<WeightEntry> read_weights(const std::filesystem::path& path);
void write_weights(const std::filesystem::path& path, const std::vector<WeightEntry>& entries);

std::string encode_weights(const std::vector<WeightEntry>& entries);
std::vector<WeightEntry> decode_weights(const std::string& bytes, const std::string& origin);

/// JSON manifest: {"format", "name", "input": {height,width,channels},
/// "classes", "pooling": [layer names], "layers": [{name, kind, in, out, bias}]}.
Architecture parse_manifest(const std::string& text);
std::string format_manifest(const Architecture& arch);

/// Bias entries are named "<layer>.bias".
MicroCnn<float> assemble_model(Architecture arch, const std::vector<WeightEntry>& entries);
std::vector<WeightEntry> weight_entries(const MicroCnn<float>& model);

MicroCnn<float> load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path);
void save_model(const MicroCnn<float>& model, const std::filesystem::path& manifest_path,
                const std::filesystem::path& weights_path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace sise
