#include "sise/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "sise/aggregate.hpp"
#include "sise/errors.hpp"
#include "sise/eval.hpp"
#include "sise/extract.hpp"
#include "sise/fixtures.hpp"
#include "sise/image_io.hpp"
#include "sise/log.hpp"
#include "sise/model_io.hpp"
#include "sise/parallel.hpp"
#include "sise/select.hpp"

namespace sise::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  std::string command;
  std::string model;
  std::string weights;
  std::string image;
  std::string dataset;
  std::string annotations;
  std::string class_arg = "argmax";
  std::vector<std::string> methods;
  std::optional<double> mu;
  bool exclusive_high_sum = false;
  std::size_t workers = 0;
  std::string precision = "f32";
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::size_t bins = 32;
  std::string fixture_kind = "planted";
  std::size_t fixture_images = 3;
};

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError(std::string(flag) + ": file '" + path + "' not found");
}

SelectionPolicy policy_for(const std::string& method, const RunConfig& cfg) {
  if (method == "sise") return FixedThreshold{cfg.mu.value_or(0.0)};
  return AdaptiveOtsu{cfg.exclusive_high_sum ? HighSumMode::exclusive : HighSumMode::inclusive};
}

// All flag checks that need no file access.
void validate(RunConfig& cfg) {
  if (cfg.methods.empty()) {
    cfg.methods = cfg.command == "benchmark" ? std::vector<std::string>{"sise", "ada-sise"}
                                             : std::vector<std::string>{"ada-sise"};
  }
  if (cfg.command != "benchmark" && cfg.methods.size() != 1) {
    throw UsageError("--method takes a single value for '" + cfg.command + "'");
  }
  const bool has_sise = std::find(cfg.methods.begin(), cfg.methods.end(), "sise") != cfg.methods.end();
  if (cfg.mu && !has_sise && cfg.command != "inspect") {
    throw UsageError("--mu only applies to --method sise");
  }
  if (cfg.mu && !std::isfinite(*cfg.mu)) throw UsageError("--mu must be finite");
  if (cfg.class_arg != "argmax") {
    std::size_t pos = 0;
    try {
      (void)std::stoull(cfg.class_arg, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != cfg.class_arg.size() || cfg.class_arg.front() == '-') {
      throw UsageError("--class must be a non-negative integer or 'argmax'");
    }
  }
  if (cfg.workers == 0) cfg.workers = default_workers();
}

template <typename T>
std::size_t resolve_class(const MicroCnn<T>& model, const Tensor<T>& image, const std::string& class_arg) {
  const std::size_t c = class_arg == "argmax" ? argmax_class(model, image) : std::stoull(class_arg);
  if (c >= model.num_classes()) {
    throw UsageError("--class " + class_arg + " out of range: model has " + std::to_string(model.num_classes()) +
                     " classes");
  }
  return c;
}

json layer_json(const LayerSummary& s) {
  return {{"layer", s.layer + 1},       {"maps", s.num_maps}, {"positive", s.positive_count},
          {"kept", s.kept},             {"mu", s.mu},         {"rho", s.rho},
          {"num_forwards", s.num_forwards}};
}

template <typename T>
MicroCnn<T> load_for(const RunConfig& cfg) {
  if constexpr (std::is_same_v<T, float>) {
    return load_model(cfg.model, cfg.weights);
  } else {
    return load_model(cfg.model, cfg.weights).template cast<T>();
  }
}

template <typename T>
int explain_command(const RunConfig& cfg) {
  const MicroCnn<T> model = load_for<T>(cfg);
  const Tensor<T> image = read_image<T>(cfg.image);
  const std::size_t c = resolve_class(model, image, cfg.class_arg);
  const SelectionPolicy policy = policy_for(cfg.methods.front(), cfg);
  const ExplanationMap<T> expl = explain(model, image, c, policy, ExplainOptions{cfg.workers});

  const fs::path out = cfg.out_dir;
  write_gray(out / "heatmap.pgm", expl.map);
  write_rgb(out / "overlay.ppm", overlay(image, expl.map));

  json layers = json::array();
  for (const auto& s : expl.layers) layers.push_back(layer_json(s));
  const json report = {
      {"schema", "sise-explain-report/1"},
      {"image", cfg.image},
      {"method", expl.method},
      {"policy", expl.policy},
      {"class", expl.class_index},
      {"class_mode", cfg.class_arg == "argmax" ? "argmax" : "fixed"},
      {"confidence", expl.confidence},
      {"precision", cfg.precision},
      {"seed", cfg.seed},
      {"num_forwards", expl.num_forwards},
      {"layers", layers},
      {"phase_seconds",
       {{"extract", expl.timings.extract},
        {"select", expl.timings.select},
        {"score", expl.timings.score},
        {"fuse", expl.timings.fuse},
        {"total", expl.timings.total()}}},
  };
  write_text_file(out / "report.json", report.dump(2) + "\n");
  std::cout << expl.method << ": class " << expl.class_index << " (p=" << expl.confidence << "), "
            << expl.num_forwards << " masked forwards, wrote " << (out / "heatmap.pgm").string() << '\n';
  return kOk;
}

template <typename T>
int benchmark_command(const RunConfig& cfg) {
  const MicroCnn<T> model = load_for<T>(cfg);
  const auto annotations = load_annotations(cfg.annotations);
  BenchmarkOptions options;
  for (const auto& m : cfg.methods) options.methods.push_back(policy_for(m, cfg));
  options.workers = cfg.workers;
  const BenchmarkResult result = run_benchmark(model, cfg.dataset, annotations, options);

  const fs::path out = cfg.out_dir;
  write_text_file(out / "records.csv", format_records_csv(result.records));
  write_text_file(out / "summary.json", format_summary(result));
  for (const auto& agg : result.aggregates) {
    std::cout << agg.method << ": " << agg.records << " images, EBPG " << agg.ebpg << ", Bbox " << agg.bbox
              << ", Drop% " << agg.drop_pct << ", Increase% " << agg.increase_pct << ", mean score phase "
              << agg.mean_timings.score << " s\n";
  }
  return kOk;
}

template <typename T>
int inspect_command(const RunConfig& cfg) {
  const MicroCnn<T> model = load_for<T>(cfg);
  const Tensor<T> image = read_image<T>(cfg.image);
  const std::size_t c = resolve_class(model, image, cfg.class_arg);
  const auto reports = extract_layers(model, image, c);
  const SelectionPolicy fixed = FixedThreshold{cfg.mu.value_or(0.0)};
  const SelectionPolicy adaptive = policy_for("ada-sise", cfg);

  const fs::path out = cfg.out_dir;
  std::string table = "layer,maps,positive,sise_kept,ada_sise_kept,sise_mu,ada_sise_mu\n";
  for (const auto& report : reports) {
    std::string hist = "bin_edge,count\n";
    for (const auto& bin : gradient_histogram(report, cfg.bins)) {
      hist += format_number(bin.edge) + "," + std::to_string(bin.count) + "\n";
    }
    write_text_file(out / ("histogram_p" + std::to_string(report.layer + 1) + ".csv"), hist);

    const SelectionOutcome base = select_maps(report, fixed);
    const SelectionOutcome ada = select_maps(report, adaptive);
    table += std::to_string(report.layer + 1) + "," + std::to_string(report.num_maps()) + "," +
             std::to_string(ada.positive_count) + "," + std::to_string(base.kept_indices.size()) + "," +
             std::to_string(ada.kept_indices.size()) + "," + format_number(base.mu) + "," + format_number(ada.mu) +
             "\n";
  }
  write_text_file(out / "selection_counts.csv", table);
  std::cout << "class " << c << ": wrote " << reports.size() << " histograms and "
            << (out / "selection_counts.csv").string() << '\n';
  return kOk;
}

int fixture_command(const RunConfig& cfg) {
  if (cfg.fixture_kind == "planted") {
    fixtures::write_planted_dataset(cfg.out_dir, cfg.fixture_images, cfg.seed);
  } else {
    fixtures::write_profile_dataset(cfg.out_dir, cfg.fixture_images, cfg.seed);
  }
  std::cout << "wrote " << cfg.fixture_kind << " fixture (" << cfg.fixture_images << " images) to " << cfg.out_dir
            << '\n';
  return kOk;
}

template <typename T>
int dispatch(const RunConfig& cfg) {
  if (cfg.command == "explain") return explain_command<T>(cfg);
  if (cfg.command == "benchmark") return benchmark_command<T>(cfg);
  return inspect_command<T>(cfg);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  RunConfig cfg;
  CLI::App app{"SISE / Ada-SISE visual explanations for micro-CNNs", "sise"};
  app.require_subcommand(1);

  const std::vector<std::string> method_names = {"sise", "ada-sise"};
  auto add_model_flags = [&](CLI::App* sub) {
    sub->add_option("--model", cfg.model, "Model manifest (JSON)")->required();
    sub->add_option("--weights", cfg.weights, "Weights container")->required();
    sub->add_option("--precision", cfg.precision, "Arithmetic precision")
        ->check(CLI::IsMember({"f32", "f64"}));
    sub->add_option("--workers", cfg.workers,
                    std::string("Worker threads for masked forwards (default: $") + kWorkersEnv +
                        " or hardware concurrency)");
    sub->add_option("--out-dir", cfg.out_dir, "Output directory");
    sub->add_option("--seed", cfg.seed, "Run seed, echoed in reports");
    sub->add_flag("--exclusive-high-sum", cfg.exclusive_high_sum,
                  "Ada-SISE: high class sums from i+1 instead of i");
  };

  CLI::App* explain = app.add_subcommand("explain", "Explain one image");
  add_model_flags(explain);
  explain->add_option("--image", cfg.image, "Input image (binary PPM/PGM)")->required();
  explain->add_option("--class", cfg.class_arg, "Target class index or 'argmax'");
  explain->add_option("--method", cfg.methods, "sise or ada-sise")->check(CLI::IsMember(method_names));
  explain->add_option("--mu", cfg.mu, "Fixed threshold for sise (default 0)");

  CLI::App* bench = app.add_subcommand("benchmark", "Evaluate methods over an annotated dataset");
  add_model_flags(bench);
  bench->add_option("--dataset", cfg.dataset, "Directory of PPM/PGM images")->required();
  bench->add_option("--annotations", cfg.annotations, "Annotations (JSON)")->required();
  bench->add_option("--method", cfg.methods, "Methods to run (default: both)")->check(CLI::IsMember(method_names));
  bench->add_option("--mu", cfg.mu, "Fixed threshold for sise (default 0)");

  CLI::App* inspect = app.add_subcommand("inspect", "Gradient histograms and per-layer selection counts");
  add_model_flags(inspect);
  inspect->add_option("--image", cfg.image, "Input image (binary PPM/PGM)")->required();
  inspect->add_option("--class", cfg.class_arg, "Target class index or 'argmax'");
  inspect->add_option("--mu", cfg.mu, "Fixed threshold for the sise column (default 0)");
  inspect->add_option("--bins", cfg.bins, "Histogram bins")->check(CLI::PositiveNumber);

  CLI::App* fixture = app.add_subcommand("make-fixture", "Write a synthetic model and dataset");
  fixture->add_option("--kind", cfg.fixture_kind, "planted or profile")
      ->check(CLI::IsMember({"planted", "profile"}));
  fixture->add_option("--images", cfg.fixture_images, "Number of images");
  fixture->add_option("--out-dir", cfg.out_dir, "Output directory")->required();
  fixture->add_option("--seed", cfg.seed, "Generator seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  for (CLI::App* sub : app.get_subcommands()) cfg.command = sub->get_name();
  try {
    if (cfg.command == "make-fixture") {
      fs::create_directories(cfg.out_dir);
      return fixture_command(cfg);
    }
    validate(cfg);
    require_file(cfg.model, "--model");
    require_file(cfg.weights, "--weights");
    if (cfg.command == "benchmark") {
      require_file(cfg.annotations, "--annotations");
      std::error_code ec;
      if (!fs::is_directory(cfg.dataset, ec)) throw IoError("--dataset: directory '" + cfg.dataset + "' not found");
    } else {
      require_file(cfg.image, "--image");
    }
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("--out-dir: cannot create '" + cfg.out_dir + "': " + ec.message());
    return cfg.precision == "f64" ? dispatch<double>(cfg) : dispatch<float>(cfg);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const ModelError& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kModel;
  } catch (const ShapeMismatch& e) {
    std::cerr << "model error: " << e.what() << '\n';
    return kModel;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace sise::cli
