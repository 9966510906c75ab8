#include "sise/model_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sise/errors.hpp"

namespace sise {

namespace {

using nlohmann::json;

constexpr const char* kManifestFormat = "sise-manifest/1";

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  float f32() {
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return std::bit_cast<float>(bits);
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw IoError(origin_ + ": truncated weights container while reading " + what);
  }

  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::size_t require_count(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number_unsigned()) {
    throw ModelError(where + ": missing or non-integer '" + key + "'");
  }
  return j.at(key).get<std::size_t>();
}

}  // namespace

std::string encode_weights(const std::vector<WeightEntry>& entries) {
  std::string out(kWeightsMagic, sizeof(kWeightsMagic));
  for (const auto& e : entries) {
    if (shape_volume(e.shape) != e.values.size()) {
      throw ShapeMismatch("weight entry '" + e.name + "': shape " + shape_to_string(e.shape) + " does not match " +
                          std::to_string(e.values.size()) + " values");
    }
    put_u64(out, e.name.size());
    out += e.name;
    put_u64(out, e.shape.size());
    for (const std::size_t extent : e.shape) put_u64(out, extent);
    for (const float v : e.values) put_f32(out, v);
  }
  return out;
}

std::vector<WeightEntry> decode_weights(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < sizeof(kWeightsMagic) || std::memcmp(bytes.data(), kWeightsMagic, sizeof(kWeightsMagic)) != 0) {
    throw IoError(origin + ": not a weights container (bad magic)");
  }
  ByteReader reader(bytes, origin);
  reader.str(sizeof(kWeightsMagic), "magic");
  std::vector<WeightEntry> entries;
  while (!reader.at_end()) {
    WeightEntry e;
    const std::uint64_t name_len = reader.u64("name length");
    e.name = reader.str(name_len, "entry name");
    const std::uint64_t rank = reader.u64("rank");
    if (rank > 8) throw IoError(origin + ": entry '" + e.name + "' declares implausible rank " + std::to_string(rank));
    std::uint64_t count = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      e.shape.push_back(reader.u64("extent"));
      count *= e.shape.back();
    }
    if (reader.remaining() / 4 < count) {
      throw ShapeMismatch(origin + ": entry '" + e.name + "' declares shape " + shape_to_string(e.shape) + " (" +
                          std::to_string(count) + " floats) but only " + std::to_string(reader.remaining()) +
                          " payload bytes remain");
    }
    e.values.resize(count);
    for (auto& v : e.values) v = reader.f32();
    entries.push_back(std::move(e));
  }
  return entries;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path.string() + "'");
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<WeightEntry> read_weights(const std::filesystem::path& path) {
  return decode_weights(read_text_file(path), path.string());
}

void write_weights(const std::filesystem::path& path, const std::vector<WeightEntry>& entries) {
  write_text_file(path, encode_weights(entries));
}

Architecture parse_manifest(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ModelError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ModelError("manifest must be a JSON object");
  if (j.value("format", std::string()) != kManifestFormat) {
    throw ModelError(std::string("manifest format must be '") + kManifestFormat + "'");
  }
  Architecture arch;
  arch.name = j.value("name", std::string("model"));
  if (!j.contains("input") || !j.at("input").is_object()) throw ModelError("manifest: missing 'input' object");
  const json& input = j.at("input");
  arch.input.height = require_count(input, "height", "manifest input");
  arch.input.width = require_count(input, "width", "manifest input");
  arch.input.channels = input.contains("channels") ? require_count(input, "channels", "manifest input") : 3;
  arch.num_classes = require_count(j, "classes", "manifest");

  if (!j.contains("layers") || !j.at("layers").is_array()) throw ModelError("manifest: missing 'layers' array");
  std::map<std::string, std::size_t> index_of;
  for (const json& lj : j.at("layers")) {
    LayerSpec layer;
    layer.name = lj.value("name", std::string());
    if (layer.name.empty()) throw ModelError("manifest: every layer needs a name");
    if (index_of.count(layer.name)) throw ModelError("manifest: duplicate layer name '" + layer.name + "'");
    layer.kind = parse_layer_kind(lj.value("kind", std::string()));
    if (layer.has_weights()) {
      layer.in = require_count(lj, "in", "layer '" + layer.name + "'");
      layer.out = require_count(lj, "out", "layer '" + layer.name + "'");
      layer.bias = lj.value("bias", false);
    }
    index_of[layer.name] = arch.layers.size();
    arch.layers.push_back(std::move(layer));
  }
  if (j.contains("pooling")) {
    for (const json& pj : j.at("pooling")) {
      const auto name = pj.get<std::string>();
      const auto it = index_of.find(name);
      if (it == index_of.end()) throw ModelError("manifest: pooling entry '" + name + "' names no layer");
      arch.pooling.push_back(it->second);
    }
  }
  if (arch.pooling.empty()) throw ModelError("manifest: at least one pooling layer is required");
  return arch;
}

std::string format_manifest(const Architecture& arch) {
  json j;
  j["format"] = kManifestFormat;
  j["name"] = arch.name;
  j["input"] = {{"height", arch.input.height}, {"width", arch.input.width}, {"channels", arch.input.channels}};
  j["classes"] = arch.num_classes;
  json pooling = json::array();
  for (const std::size_t idx : arch.pooling) pooling.push_back(arch.layers.at(idx).name);
  j["pooling"] = pooling;
  json layers = json::array();
  for (const auto& layer : arch.layers) {
    json lj = {{"name", layer.name}, {"kind", std::string(to_string(layer.kind))}};
    if (layer.has_weights()) {
      lj["in"] = layer.in;
      lj["out"] = layer.out;
      lj["bias"] = layer.bias;
    }
    layers.push_back(lj);
  }
  j["layers"] = layers;
  return j.dump(2) + "\n";
}

MicroCnn<float> assemble_model(Architecture arch, const std::vector<WeightEntry>& entries) {
  std::map<std::string, const WeightEntry*> by_name;
  for (const auto& e : entries) {
    if (!by_name.emplace(e.name, &e).second) throw ModelError("weights: duplicate entry '" + e.name + "'");
  }
  std::set<std::string> used;
  std::vector<LayerParams<float>> params(arch.layers.size());
  auto take = [&](const LayerSpec& layer, const std::string& key, const Shape& expected) {
    const auto it = by_name.find(key);
    if (it == by_name.end()) throw ModelError("weights: missing entry '" + key + "' for layer '" + layer.name + "'");
    if (it->second->shape != expected) {
      throw ShapeMismatch("layer '" + layer.name + "': weights entry '" + key + "' has shape " +
                          shape_to_string(it->second->shape) + ", manifest implies " + shape_to_string(expected));
    }
    used.insert(key);
    return Tensor<float>(expected, it->second->values);
  };
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const LayerSpec& layer = arch.layers[l];
    if (!layer.has_weights()) continue;
    params[l].weight = take(layer, layer.name, weight_shape(layer));
    if (layer.bias) params[l].bias = take(layer, layer.name + ".bias", bias_shape(layer));
  }
  for (const auto& e : entries) {
    if (!used.count(e.name)) throw ModelError("weights: entry '" + e.name + "' matches no layer in the manifest");
  }
  return MicroCnn<float>(std::move(arch), std::move(params));
}

std::vector<WeightEntry> weight_entries(const MicroCnn<float>& model) {
  std::vector<WeightEntry> entries;
  const auto& arch = model.architecture();
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const LayerSpec& layer = arch.layers[l];
    if (!layer.has_weights()) continue;
    const auto& p = model.parameters()[l];
    entries.push_back({layer.name, p.weight.shape(), {p.weight.values().begin(), p.weight.values().end()}});
    if (layer.bias) {
      entries.push_back({layer.name + ".bias", p.bias.shape(), {p.bias.values().begin(), p.bias.values().end()}});
    }
  }
  return entries;
}

MicroCnn<float> load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path) {
  Architecture arch = parse_manifest(read_text_file(manifest_path));
  return assemble_model(std::move(arch), read_weights(weights_path));
}

void save_model(const MicroCnn<float>& model, const std::filesystem::path& manifest_path,
                const std::filesystem::path& weights_path) {
  write_text_file(manifest_path, format_manifest(model.architecture()));
  write_weights(weights_path, weight_entries(model));
}

}  // namespace sise
