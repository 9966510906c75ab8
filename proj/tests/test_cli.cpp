#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "scratch_dir.hpp"
#include "sise/cli.hpp"
#include "sise/log.hpp"
#include "sise/image_io.hpp"
#include "sise/model_io.hpp"
#include "test_models.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using sise::cli::run;

namespace {

std::string slurp(const fs::path& p) { return sise::read_text_file(p); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  REQUIRE(it != header.end());
  return static_cast<std::size_t>(it - header.begin());
}

std::vector<std::string> model_args(const fs::path& dir) {
  return {"--model", (dir / "model.json").string(), "--weights", (dir / "model.bin").string()};
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("explain on the planted fixture") {
  testutil::ScratchDir dir("cli-explain");
  REQUIRE(run({"make-fixture", "--kind", "planted", "--images", "2", "--seed", "4", "--out-dir", dir.path().string()}) ==
          0);
  const std::string image = (dir / "images/img_000.ppm").string();
  const fs::path out1 = dir / "run1", out2 = dir / "run2", out3 = dir / "run3";

  const auto base = concat({"explain"}, model_args(dir.path()));
  REQUIRE(run(concat(base, {"--image", image, "--method", "ada-sise", "--class", "argmax", "--out-dir", out1.string()})) == 0);
  for (const char* f : {"heatmap.pgm", "overlay.ppm", "report.json"}) CHECK(fs::exists(out1 / f));
  const json report = json::parse(slurp(out1 / "report.json"));
  CHECK(report["method"] == "ada-sise");
  CHECK(report["policy"] == "adaptive-otsu");
  CHECK(report["class"] == 0);
  std::size_t total = 0;
  for (const auto& layer : report["layers"]) {
    CHECK(layer["kept"].get<std::size_t>() <= layer["positive"].get<std::size_t>());
    total += layer["kept"].get<std::size_t>();
  }
  CHECK(report["num_forwards"].get<std::size_t>() == total);

  REQUIRE(run(concat(base, {"--image", image, "--method", "ada-sise", "--class", "argmax", "--out-dir", out2.string(),
                            "--workers", "3"})) == 0);
  CHECK(slurp(out1 / "heatmap.pgm") == slurp(out2 / "heatmap.pgm"));
  CHECK(slurp(out1 / "overlay.ppm") == slurp(out2 / "overlay.ppm"));

  REQUIRE(run(concat(base, {"--image", image, "--method", "sise", "--mu", "0.0", "--class", "0", "--out-dir",
                            out3.string(), "--precision", "f64"})) == 0);
  const json sise_report = json::parse(slurp(out3 / "report.json"));
  CHECK(sise_report["policy"] == "fixed(0)");
  CHECK(sise_report["precision"] == "f64");
  CHECK(sise_report["num_forwards"].get<std::size_t>() >= report["num_forwards"].get<std::size_t>());
}

TEST_CASE("benchmark writes consistent records and summary") {
  testutil::ScratchDir dir("cli-bench");
  REQUIRE(run({"make-fixture", "--kind", "profile", "--images", "3", "--seed", "2", "--out-dir", dir.path().string()}) ==
          0);
  const auto args = concat(concat({"benchmark"}, model_args(dir.path())),
                           {"--dataset", (dir / "images").string(), "--annotations",
                            (dir / "annotations.json").string(), "--out-dir", (dir / "out").string()});
  REQUIRE(run(args) == 0);
  const auto rows = read_csv(dir / "out/records.csv");
  REQUIRE(rows.size() == 7);
  const auto& header = rows[0];
  const json summary = json::parse(slurp(dir / "out/summary.json"));
  CHECK(summary["aggregates_present"] == true);
  CHECK(summary["images"] == 3);
  double score_time[2] = {0, 0};
  for (const auto& m : summary["methods"]) {
    const std::string method = m["method"];
    double drop = 0;
    std::size_t n = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r][column(header, "method")] != method) continue;
      drop += std::stod(rows[r][column(header, "drop")]);
      ++n;
    }
    CHECK(n == 3);
    CHECK(m["drop_pct"].get<double>() == doctest::Approx(drop / 3.0).epsilon(1e-12));
    score_time[method == "sise" ? 0 : 1] = m["mean_phase_seconds"]["score"].get<double>();
  }
  CHECK(score_time[1] <= score_time[0]);
}

TEST_CASE("inspect emits one histogram per pooling layer and the count table") {
  testutil::ScratchDir dir("cli-inspect");
  std::mt19937_64 rng(40);
  const auto arch = testmodels::two_block_arch();
  const sise::MicroCnn<float> model(arch, testmodels::random_params<float>(arch, rng));
  sise::save_model(model, dir / "model.json", dir / "model.bin");
  sise::write_rgb(dir / "img.ppm", testmodels::random_image<float>(rng, arch.input));

  const auto args = concat(concat({"inspect"}, model_args(dir.path())),
                           {"--image", (dir / "img.ppm").string(), "--bins", "7", "--out-dir", (dir / "out").string()});
  REQUIRE(run(args) == 0);
  const std::size_t maps[] = {4, 5};
  for (std::size_t p = 1; p <= 2; ++p) {
    const auto hist = read_csv(dir / "out" / ("histogram_p" + std::to_string(p) + ".csv"));
    REQUIRE(hist.size() == 8);
    std::size_t count = 0;
    for (std::size_t r = 1; r < hist.size(); ++r) count += std::stoul(hist[r][1]);
    CHECK(count == maps[p - 1]);
  }
  CHECK_FALSE(fs::exists(dir / "out/histogram_p3.csv"));
  const auto table = read_csv(dir / "out/selection_counts.csv");
  REQUIRE(table.size() == 3);
  for (std::size_t r = 1; r < table.size(); ++r) {
    const auto ada = std::stoul(table[r][column(table[0], "ada_sise_kept")]);
    const auto sise_kept = std::stoul(table[r][column(table[0], "sise_kept")]);
    CHECK(ada <= sise_kept);
    CHECK(sise_kept <= std::stoul(table[r][column(table[0], "positive")]));
  }
}

TEST_CASE("exit codes") {
  testutil::ScratchDir dir("cli-errors");
  sise::set_log_level(sise::LogLevel::quiet);
  REQUIRE(run({"make-fixture", "--images", "1", "--out-dir", dir.path().string()}) == 0);
  const std::string image = (dir / "images/img_000.ppm").string();
  const auto explain = concat({"explain"}, model_args(dir.path()));

  CHECK(run({}) == 1);
  CHECK(run({"frobnicate"}) == 1);
  CHECK(run(concat(explain, {"--image", image, "--bogus"})) == 1);
  CHECK(run(concat(explain, {"--image", image, "--precision", "f16"})) == 1);
  CHECK(run(concat(explain, {"--image", image, "--class", "-1"})) == 1);
  CHECK(run(concat(explain, {"--image", image, "--class", "9"})) == 1);
  // Flag conflicts are reported before any file is touched.
  CHECK(run({"explain", "--model", "missing.json", "--weights", "missing.bin", "--image", "missing.ppm", "--method",
             "ada-sise", "--mu", "0.2"}) == 1);

  CHECK(run(concat(explain, {"--image", (dir / "nope.ppm").string()})) == 2);
  CHECK(run({"explain", "--model", (dir / "nope.json").string(), "--weights", (dir / "model.bin").string(), "--image",
             image}) == 2);
  sise::write_text_file(dir / "broken.ppm", "P6\n4 4\n255\n");
  CHECK(run(concat(explain, {"--image", (dir / "broken.ppm").string(), "--out-dir", (dir / "o").string()})) == 2);

  sise::write_text_file(dir / "bad.json", R"({"schema":"sise-manifest/1","name":"x"})");
  CHECK(run({"explain", "--model", (dir / "bad.json").string(), "--weights", (dir / "model.bin").string(), "--image",
             image, "--out-dir", (dir / "o").string()}) == 3);
  const std::string weights = slurp(dir / "model.bin");
  sise::write_text_file(dir / "short.bin", weights.substr(0, weights.size() / 2));
  CHECK(run({"explain", "--model", (dir / "model.json").string(), "--weights", (dir / "short.bin").string(), "--image",
             image, "--out-dir", (dir / "o").string()}) == 3);
  sise::set_log_level(sise::LogLevel::warning);
}

TEST_CASE("worker count from the environment does not change outputs") {
  testutil::ScratchDir dir("cli-env");
  REQUIRE(run({"make-fixture", "--images", "1", "--out-dir", dir.path().string()}) == 0);
  const auto args = concat(concat({"explain"}, model_args(dir.path())),
                           {"--image", (dir / "images/img_000.ppm").string(), "--method", "sise"});
  ::setenv("SISE_WORKERS", "4", 1);
  REQUIRE(run(concat(args, {"--out-dir", (dir / "a").string()})) == 0);
  ::unsetenv("SISE_WORKERS");
  REQUIRE(run(concat(args, {"--out-dir", (dir / "b").string(), "--workers", "1"})) == 0);
  CHECK(slurp(dir / "a/heatmap.pgm") == slurp(dir / "b/heatmap.pgm"));
}
