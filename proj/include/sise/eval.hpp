#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sise/aggregate.hpp"

namespace sise {

/// Pixel box covering columns [x_min, x_max) and rows [y_min, y_max).
struct Box {
  std::size_t x_min = 0;
  std::size_t y_min = 0;
  std::size_t x_max = 0;
  std::size_t y_max = 0;

  friend bool operator==(const Box&, const Box&) = default;
};

struct GroundTruthAnnotation {
  std::string image_id;  ///< file name inside the dataset directory
  std::size_t class_label = 0;
  std::vector<Box> boxes;
};

/// Row-major H x W membership mask of the union of `boxes`. Throws when a box
/// is empty or leaves the image.
std::vector<bool> box_union(std::size_t height, std::size_t width, std::span<const Box> boxes);

/// Energy-based pointing game: 100 * (map mass inside the boxes) / (total mass).
/// An all-zero map scores 0.
template <typename T>
double ebpg(const Tensor<T>& map, std::span<const Box> boxes);

/// Share (in percent) of the k most salient pixels that fall inside the boxes,
/// k being the union area. Equal values rank in row-major order.
template <typename T>
double bbox_metric(const Tensor<T>& map, std::span<const Box> boxes);

class UndefinedDrop : public Error {
 public:
  using Error::Error;
};

struct DropIncrease {
  double base_score = 0.0;    ///< y0, class probability on the image
  double masked_score = 0.0;  ///< y1, class probability on image * map
  double drop = 0.0;          ///< 100 * max(0, y0 - y1) / y0
  bool increased = false;     ///< y1 > y0
};

/// Throws UndefinedDrop when y0 == 0.
template <typename T>
DropIncrease drop_increase(const InspectableModel<T>& model, const Tensor<T>& image, std::size_t class_index,
                           const Tensor<T>& map);

struct BenchmarkRecord {
  std::string image_id;
  std::string method;
  std::size_t class_index = 0;
  double confidence = 0.0;
  double ebpg = 0.0;
  double bbox = 0.0;
  std::optional<double> drop;  ///< absent when the unmasked score is zero
  bool increased = false;
  std::size_t num_forwards = 0;
  std::vector<std::size_t> kept_per_layer;
  PhaseTimings timings;
};

struct MethodAggregate {
  std::string method;
  std::size_t records = 0;
  double ebpg = 0.0;
  double bbox = 0.0;
  double drop_pct = 0.0;      ///< mean drop over records with a defined drop
  double increase_pct = 0.0;  ///< 100 * fraction increased over the same records
  std::size_t drop_records = 0;
  double mean_num_forwards = 0.0;
  std::vector<double> mean_kept_per_layer;
  PhaseTimings mean_timings;
};

struct BenchmarkResult {
  std::vector<BenchmarkRecord> records;
  /// One entry per requested method; empty when no image was evaluated.
  std::vector<MethodAggregate> aggregates;
  std::vector<std::string> skipped;
};

struct BenchmarkOptions {
  std::vector<SelectionPolicy> methods;
  std::size_t workers = 1;
};

/// Aggregates `records` whose method equals `method`, in record order.
MethodAggregate aggregate_records(std::span<const BenchmarkRecord> records, const std::string& method,
                                  std::size_t num_layers);

/// JSON: {"schema": "sise-annotations/1", "images": [{"file", "class", "boxes": [[x0,y0,x1,y1], ...]}]}
std::vector<GroundTruthAnnotation> parse_annotations(const std::string& text);
std::vector<GroundTruthAnnotation> load_annotations(const std::filesystem::path& path);
std::string format_annotations(std::span<const GroundTruthAnnotation> annotations);

/// Evaluates every .ppm/.pgm image of `dataset_dir` (sorted by name) with each
/// method. Images without an annotation are skipped with a warning; an
/// annotated image that cannot be read is an IoError naming the file. Images
/// are spread over `workers`; records come out in (image, method) order.
template <typename T>
BenchmarkResult run_benchmark(const InspectableModel<T>& model, const std::filesystem::path& dataset_dir,
                              std::span<const GroundTruthAnnotation> annotations, const BenchmarkOptions& options);

/// CSV, one row per record; schema line "# sise-benchmark-records/1" then the
/// header. Timing columns (t_*) come last.
std::string format_records_csv(std::span<const BenchmarkRecord> records);
/// JSON summary, schema "sise-benchmark-summary/1".
std::string format_summary(const BenchmarkResult& result);

/// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace sise
