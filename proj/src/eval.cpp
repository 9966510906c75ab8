#include "sise/eval.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>

#include <json.hpp>

#include "sise/errors.hpp"
#include "sise/image_io.hpp"
#include "sise/log.hpp"
#include "sise/model_io.hpp"
#include "sise/numcore.hpp"
#include "sise/parallel.hpp"

namespace sise {

namespace {

using nlohmann::json;

template <typename T>
void require_map(const Tensor<T>& map, const char* what) {
  if (map.rank() != 2) throw ShapeMismatch(std::string(what) + ": expects an H x W map");
}

PhaseTimings& operator+=(PhaseTimings& a, const PhaseTimings& b) {
  a.extract += b.extract;
  a.select += b.select;
  a.score += b.score;
  a.fuse += b.fuse;
  return a;
}

}  // namespace

std::vector<bool> box_union(std::size_t height, std::size_t width, std::span<const Box> boxes) {
  std::vector<bool> inside(height * width, false);
  for (const Box& b : boxes) {
    if (b.x_min >= b.x_max || b.y_min >= b.y_max || b.x_max > width || b.y_max > height) {
      throw InvalidArgument("box (" + std::to_string(b.x_min) + "," + std::to_string(b.y_min) + "," +
                            std::to_string(b.x_max) + "," + std::to_string(b.y_max) + ") is empty or outside a " +
                            std::to_string(width) + "x" + std::to_string(height) + " image");
    }
    for (std::size_t y = b.y_min; y < b.y_max; ++y) {
      for (std::size_t x = b.x_min; x < b.x_max; ++x) inside[y * width + x] = true;
    }
  }
  return inside;
}

template <typename T>
double ebpg(const Tensor<T>& map, std::span<const Box> boxes) {
  require_map(map, "ebpg");
  const auto inside = box_union(map.dim(0), map.dim(1), boxes);
  double in_mass = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < map.size(); ++i) {
    const auto v = static_cast<double>(map[i]);
    total += v;
    if (inside[i]) in_mass += v;
  }
  if (total == 0.0) return 0.0;
  return 100.0 * in_mass / total;
}

template <typename T>
double bbox_metric(const Tensor<T>& map, std::span<const Box> boxes) {
  require_map(map, "bbox_metric");
  const auto inside = box_union(map.dim(0), map.dim(1), boxes);
  const auto k = static_cast<std::size_t>(std::count(inside.begin(), inside.end(), true));
  if (k == 0) return 0.0;
  std::vector<std::size_t> order(map.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto ranks_before = [&](std::size_t a, std::size_t b) { return map[a] > map[b] || (map[a] == map[b] && a < b); };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), ranks_before);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += inside[order[i]] ? 1 : 0;
  return 100.0 * static_cast<double>(hits) / static_cast<double>(k);
}

template <typename T>
DropIncrease drop_increase(const InspectableModel<T>& model, const Tensor<T>& image, std::size_t class_index,
                           const Tensor<T>& map) {
  DropIncrease out;
  out.base_score = static_cast<double>(model.forward_score(image, class_index));
  if (out.base_score == 0.0) throw UndefinedDrop("drop is undefined: unmasked class score is zero");
  const Tensor<T> masked = hadamard(image, map);
  out.masked_score = static_cast<double>(model.forward_score(masked, class_index));
  out.drop = 100.0 * std::max(0.0, out.base_score - out.masked_score) / out.base_score;
  out.increased = out.masked_score > out.base_score;
  return out;
}

MethodAggregate aggregate_records(std::span<const BenchmarkRecord> records, const std::string& method,
                                  std::size_t num_layers) {
  MethodAggregate agg;
  agg.method = method;
  agg.mean_kept_per_layer.assign(num_layers, 0.0);
  double drop_sum = 0.0;
  std::size_t increased = 0;
  double forwards = 0.0;
  for (const BenchmarkRecord& r : records) {
    if (r.method != method) continue;
    ++agg.records;
    agg.ebpg += r.ebpg;
    agg.bbox += r.bbox;
    forwards += static_cast<double>(r.num_forwards);
    agg.mean_timings += r.timings;
    for (std::size_t p = 0; p < std::min(num_layers, r.kept_per_layer.size()); ++p) {
      agg.mean_kept_per_layer[p] += static_cast<double>(r.kept_per_layer[p]);
    }
    if (r.drop) {
      ++agg.drop_records;
      drop_sum += *r.drop;
      increased += r.increased ? 1 : 0;
    }
  }
  if (agg.records > 0) {
    const auto n = static_cast<double>(agg.records);
    agg.ebpg /= n;
    agg.bbox /= n;
    agg.mean_num_forwards = forwards / n;
    for (double& k : agg.mean_kept_per_layer) k /= n;
    agg.mean_timings.extract /= n;
    agg.mean_timings.select /= n;
    agg.mean_timings.score /= n;
    agg.mean_timings.fuse /= n;
  }
  if (agg.drop_records > 0) {
    agg.drop_pct = drop_sum / static_cast<double>(agg.drop_records);
    agg.increase_pct = 100.0 * static_cast<double>(increased) / static_cast<double>(agg.drop_records);
  }
  return agg;
}

std::vector<GroundTruthAnnotation> parse_annotations(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("annotations are not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", std::string()) != "sise-annotations/1" || !j.contains("images") ||
      !j.at("images").is_array()) {
    throw IoError("annotations must be an object with schema 'sise-annotations/1' and an 'images' array");
  }
  std::vector<GroundTruthAnnotation> out;
  try {
    for (const json& ij : j.at("images")) {
      GroundTruthAnnotation ann;
      ann.image_id = ij.at("file").get<std::string>();
      ann.class_label = ij.at("class").get<std::size_t>();
      for (const json& bj : ij.at("boxes")) {
        const auto v = bj.get<std::vector<std::size_t>>();
        if (v.size() != 4) throw IoError("annotation for '" + ann.image_id + "': a box needs four coordinates");
        const Box box{v[0], v[1], v[2], v[3]};
        if (box.x_min >= box.x_max || box.y_min >= box.y_max) {
          throw IoError("annotation for '" + ann.image_id + "': box must satisfy x_min < x_max and y_min < y_max");
        }
        ann.boxes.push_back(box);
      }
      if (ann.boxes.empty()) throw IoError("annotation for '" + ann.image_id + "' has no boxes");
      out.push_back(std::move(ann));
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed annotation entry: ") + e.what());
  }
  return out;
}

std::vector<GroundTruthAnnotation> load_annotations(const std::filesystem::path& path) {
  try {
    return parse_annotations(read_text_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

std::string format_annotations(std::span<const GroundTruthAnnotation> annotations) {
  json images = json::array();
  for (const auto& ann : annotations) {
    json boxes = json::array();
    for (const Box& b : ann.boxes) boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max});
    images.push_back({{"file", ann.image_id}, {"class", ann.class_label}, {"boxes", boxes}});
  }
  return json{{"schema", "sise-annotations/1"}, {"images", images}}.dump(2) + "\n";
}

template <typename T>
BenchmarkResult run_benchmark(const InspectableModel<T>& model, const std::filesystem::path& dataset_dir,
                              std::span<const GroundTruthAnnotation> annotations, const BenchmarkOptions& options) {
  if (options.methods.empty()) throw InvalidArgument("benchmark needs at least one method");
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dataset_dir, ec)) throw IoError("dataset directory '" + dataset_dir.string() + "' not found");

  std::map<std::string, const GroundTruthAnnotation*> by_file;
  for (const auto& ann : annotations) by_file[ann.image_id] = &ann;

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dataset_dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  BenchmarkResult result;
  struct Job {
    std::string id;
    const GroundTruthAnnotation* ann;
    Tensor<T> image;
    std::vector<BenchmarkRecord> records;
    std::vector<std::string> warnings;
  };
  // Images are read up front so a bad file fails before any work starts.
  std::vector<Job> jobs;
  for (const fs::path& file : files) {
    const std::string id = file.filename().string();
    const auto it = by_file.find(id);
    if (it == by_file.end()) {
      log_warning("no annotation for '" + file.string() + "', skipped");
      result.skipped.push_back(id);
      continue;
    }
    jobs.push_back({id, it->second, read_image<T>(file), {}, {}});
  }

  // One image per worker; a lone image spends the workers on its masked forwards.
  const std::size_t inner_workers = jobs.size() > 1 ? 1 : options.workers;
  parallel_for(jobs.size(), options.workers, [&](std::size_t j) {
    Job& job = jobs[j];
    const GroundTruthAnnotation& ann = *job.ann;
    for (const SelectionPolicy& policy : options.methods) {
      const ExplanationMap<T> expl = explain(model, job.image, ann.class_label, policy, ExplainOptions{inner_workers});
      BenchmarkRecord rec;
      rec.image_id = job.id;
      rec.method = expl.method;
      rec.class_index = ann.class_label;
      rec.confidence = expl.confidence;
      rec.ebpg = ebpg(expl.map, std::span<const Box>(ann.boxes));
      rec.bbox = bbox_metric(expl.map, std::span<const Box>(ann.boxes));
      try {
        const DropIncrease di = drop_increase(model, job.image, ann.class_label, expl.map);
        rec.drop = di.drop;
        rec.increased = di.increased;
      } catch (const UndefinedDrop& e) {
        job.warnings.push_back("'" + job.id + "': " + e.what() + "; excluded from Drop%/Increase%");
      }
      rec.num_forwards = expl.num_forwards;
      for (const auto& layer : expl.layers) rec.kept_per_layer.push_back(layer.kept);
      rec.timings = expl.timings;
      job.records.push_back(std::move(rec));
    }
  });
  for (Job& job : jobs) {
    for (const auto& w : job.warnings) log_warning(w);
    for (auto& rec : job.records) result.records.push_back(std::move(rec));
  }
  if (!result.records.empty()) {
    for (const SelectionPolicy& policy : options.methods) {
      result.aggregates.push_back(aggregate_records(result.records, method_name(policy), model.num_pooling_layers()));
    }
  }
  return result;
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_records_csv(std::span<const BenchmarkRecord> records) {
  std::string out =
      "# sise-benchmark-records/1\n"
      "image_id,method,class,confidence,ebpg,bbox,drop,increase,num_forwards,kept_per_layer,"
      "t_extract,t_select,t_score,t_fuse,t_total\n";
  for (const BenchmarkRecord& r : records) {
    std::string kept;
    for (std::size_t p = 0; p < r.kept_per_layer.size(); ++p) {
      kept += (p ? ";" : "") + std::to_string(r.kept_per_layer[p]);
    }
    out += r.image_id + "," + r.method + "," + std::to_string(r.class_index) + "," + format_number(r.confidence) +
           "," + format_number(r.ebpg) + "," + format_number(r.bbox) + "," + (r.drop ? format_number(*r.drop) : "") +
           "," + (r.increased ? "1" : "0") + "," + std::to_string(r.num_forwards) + "," + kept + "," +
           format_number(r.timings.extract) + "," + format_number(r.timings.select) + "," +
           format_number(r.timings.score) + "," + format_number(r.timings.fuse) + "," +
           format_number(r.timings.total()) + "\n";
  }
  return out;
}

std::string format_summary(const BenchmarkResult& result) {
  json methods = json::array();
  for (const MethodAggregate& agg : result.aggregates) {
    methods.push_back({
        {"method", agg.method},
        {"records", agg.records},
        {"ebpg", agg.ebpg},
        {"bbox", agg.bbox},
        {"drop_pct", agg.drop_pct},
        {"increase_pct", agg.increase_pct},
        {"drop_records", agg.drop_records},
        {"mean_num_forwards", agg.mean_num_forwards},
        {"mean_kept_per_layer", agg.mean_kept_per_layer},
        {"mean_phase_seconds",
         {{"extract", agg.mean_timings.extract},
          {"select", agg.mean_timings.select},
          {"score", agg.mean_timings.score},
          {"fuse", agg.mean_timings.fuse},
          {"total", agg.mean_timings.total()}}},
    });
  }
  std::size_t images = 0;
  for (std::size_t i = 0; i < result.records.size(); ++i) {
    if (i == 0 || result.records[i].image_id != result.records[i - 1].image_id) ++images;
  }
  const json j = {{"schema", "sise-benchmark-summary/1"},
                  {"images", images},
                  {"skipped", result.skipped},
                  {"aggregates_present", !result.aggregates.empty()},
                  {"methods", methods}};
  return j.dump(2) + "\n";
}

#define SISE_INSTANTIATE_EVAL(T)                                                                                 \
  template double ebpg(const Tensor<T>&, std::span<const Box>);                                                 \
  template double bbox_metric(const Tensor<T>&, std::span<const Box>);                                          \
  template DropIncrease drop_increase(const InspectableModel<T>&, const Tensor<T>&, std::size_t,                \
                                      const Tensor<T>&);                                                        \
  template BenchmarkResult run_benchmark(const InspectableModel<T>&, const std::filesystem::path&,             \
                                         std::span<const GroundTruthAnnotation>, const BenchmarkOptions&);

SISE_INSTANTIATE_EVAL(float)
SISE_INSTANTIATE_EVAL(double)

#undef SISE_INSTANTIATE_EVAL

}  // namespace sise
