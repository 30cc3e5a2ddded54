#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "minnet/train.hpp"
#include "support/synth.hpp"
#include "support/testutil.hpp"

namespace fs = std::filesystem;
using namespace minnet;
using namespace minnet::testsupport;

namespace {

const std::string& synth_dir() {
  static const std::string dir = [] {
    const std::string d = test_outdir("train_synth_data");
    write_synth_mnist_dir(d, 1600, 512, 4242);
    return d;
  }();
  return dir;
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::string((std::istreambuf_iterator<char>(is)), {});
}

RunManifest base_manifest(const std::string& out_tag, const TinyConfig& tc) {
  RunManifest m;
  m.data_dir = synth_dir();
  m.out_dir = test_outdir(out_tag);
  m.config_path = write_tiny_mnist_config(m.out_dir, tc);
  m.deterministic = true;
  return m;
}

}  // namespace

TEST_CASE("cmd_train writes one csv row per epoch plus checkpoints") {
  RunManifest m = base_manifest("train_basic", TinyConfig{});
  m.epochs = 2;
  m.batch = 32;
  m.train_subset = 512;
  m.test_subset = 128;
  const TrainOutcome out = cmd_train(m);
  CHECK(out.rows.size() == 2);
  CHECK(fs::exists(out.metrics_csv));
  CHECK(fs::exists(out.last_checkpoint));
  CHECK(fs::exists(out.best_checkpoint));

  const auto rows = read_csv(out.metrics_csv);
  REQUIRE(rows.size() == 3);  // header + 2 epochs
  CHECK(rows[0] == std::vector<std::string>{"epoch", "train_loss", "train_err", "test_err",
                                            "lr", "wall_secs"});
  CHECK(rows[1][0] == "0");
  CHECK(rows[2][0] == "1");
  // learning happened at all
  CHECK(std::stod(rows[2][1]) < std::log(10.0));
}

TEST_CASE("same seed, deterministic flag: identical metrics csv") {
  RunManifest m = base_manifest("train_det_a", TinyConfig{});
  m.epochs = 2;
  m.batch = 32;
  m.train_subset = 384;
  m.test_subset = 128;
  m.seed = 0;
  const TrainOutcome a = cmd_train(m);
  const std::string bytes_a = file_bytes(a.metrics_csv);

  m.out_dir = test_outdir("train_det_b");
  m.config_path = write_tiny_mnist_config(m.out_dir, TinyConfig{});
  const TrainOutcome b = cmd_train(m);
  CHECK(bytes_a == file_bytes(b.metrics_csv));

  m.seed = 1;
  m.out_dir = test_outdir("train_det_c");
  m.config_path = write_tiny_mnist_config(m.out_dir, TinyConfig{});
  const TrainOutcome c = cmd_train(m);
  CHECK(bytes_a != file_bytes(c.metrics_csv));
}

TEST_CASE("tiny network overfits 64 samples to zero training error") {
  TinyConfig tc;
  tc.lr = 0.05;
  RunManifest m = base_manifest("train_overfit", tc);
  m.epochs = 50;
  m.batch = 16;
  m.train_subset = 64;
  m.test_subset = 64;
  const TrainOutcome out = cmd_train(m);
  double best_train_err = 100.0;
  for (const EpochRow& row : out.rows) best_train_err = std::min(best_train_err, row.train_err);
  CHECK(best_train_err == 0.0);

  // the memorized split evaluates to exactly 0% through the eval path
  NetworkConfig cfg = resolve_config(m);
  Network net = build_network(cfg, m.seed);
  net.load_checkpoint(out.last_checkpoint);
  DatasetPair data = load_dataset_pair(cfg, m.data_dir, 64, 1);
  if (out.rows.back().train_err == 0.0) {
    CHECK(evaluate(net, data.train) == 0.0);
  }
}

TEST_CASE("cmd_eval is deterministic across calls") {
  RunManifest m = base_manifest("train_eval", TinyConfig{});
  m.epochs = 1;
  m.batch = 32;
  m.train_subset = 256;
  m.test_subset = 128;
  const TrainOutcome out = cmd_train(m);
  m.checkpoint = out.last_checkpoint;
  const double e1 = cmd_eval(m);
  const double e2 = cmd_eval(m);
  CHECK(e1 == e2);
  CHECK(e1 == doctest::Approx(out.rows.back().test_err).epsilon(0.02));  // f32 checkpoint
}

TEST_CASE("a uniform random predictor sits near 90% error on balanced labels") {
  const DatasetSplit split = make_synth_digits(10000, 99);
  std::mt19937_64 rng(123);
  std::size_t wrong = 0;
  for (int label : split.labels) {
    if (static_cast<int>(rng() % 10) != label) ++wrong;
  }
  const double err = 100.0 * static_cast<double>(wrong) / 10000.0;
  CHECK(err > 87.0);
  CHECK(err < 93.0);
}

TEST_CASE("non-finite loss aborts with the epoch number") {
  TinyConfig tc;
  tc.lr = 1e308;
  RunManifest m = base_manifest("train_diverge", tc);
  m.epochs = 3;
  m.batch = 16;
  m.train_subset = 64;
  m.test_subset = 32;
  CHECK_THROWS_WITH_AS(cmd_train(m), doctest::Contains("epoch"), TrainingDiverged);
}

TEST_CASE("sweep-pieces writes one row per k with identical hyperparameters") {
  RunManifest m = base_manifest("train_sweep", TinyConfig{});
  m.epochs = 1;
  m.batch = 32;
  m.train_subset = 192;
  m.test_subset = 96;
  m.k_list = {1, 2};
  const std::string csv = cmd_sweep_pieces(m);
  const auto rows = read_csv(csv);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][0] == "k");
  CHECK(rows[1][0] == "1");
  CHECK(rows[2][0] == "2");
  // hyperparameter columns identical across rows
  for (std::size_t col = 3; col < rows[0].size(); ++col) {
    CHECK(rows[1][col] == rows[2][col]);
  }
  CHECK(std::isfinite(std::stod(rows[1][2])));
}

TEST_CASE("compare-pooling emits exactly the avg and max rows") {
  RunManifest m = base_manifest("train_pooling", TinyConfig{});
  m.epochs = 1;
  m.batch = 32;
  m.train_subset = 192;
  m.test_subset = 96;
  const std::string csv = cmd_compare_pooling(m);
  const auto rows = read_csv(csv);
  REQUIRE(rows.size() == 3);
  CHECK(rows[1][0] == "avg");
  CHECK(rows[2][0] == "max");
  CHECK(std::isfinite(std::stod(rows[1][2])));
  CHECK(std::isfinite(std::stod(rows[2][2])));
}

TEST_CASE("region bound table formats the requested rows") {
  const std::string table = region_bound_table({{true, 2, 4, 2}, {false, 2, 4, 2}});
  CHECK(table.find("maxout") != std::string::npos);
  CHECK(table.find("32") != std::string::npos);
  CHECK(table.find("relu") != std::string::npos);
  CHECK(table.find("64") != std::string::npos);
}

TEST_CASE("extract writes one pgm per channel and a summary csv, deterministically") {
  TinyConfig tc;
  tc.conv_units = 6;
  tc.mlp_units = 6;
  RunManifest m = base_manifest("train_extract", tc);
  m.epochs = 1;
  m.batch = 32;
  m.train_subset = 192;
  m.test_subset = 64;
  const TrainOutcome out = cmd_train(m);

  m.checkpoint = out.last_checkpoint;
  m.layer = "block1.mlp2";
  m.top_percent = 50.0;
  m.extract_count = 2;
  const std::string csv = cmd_extract(m);
  const auto rows = read_csv(csv);
  REQUIRE(rows.size() == 1 + 2 * 6);  // header + images x channels
  CHECK(rows[0][0] == "image");
  const std::string pgm0 = (fs::path(m.out_dir) / "extract" / "img0_ch0.pgm").string();
  REQUIRE(fs::exists(pgm0));
  const Pgm pgm = read_pgm(pgm0);
  CHECK(pgm.w == 28);
  CHECK(pgm.h == 28);
  // kept fraction close to the requested half, ties aside
  const double kept = std::stod(rows[1][3]);
  CHECK(kept > 0.35);
  CHECK(kept <= 0.65);

  const std::string bytes_first = file_bytes(pgm0);
  cmd_extract(m);  // rerun overwrites with identical content
  CHECK(file_bytes(pgm0) == bytes_first);

  m.top_percent = 10.0;
  const std::string csv10 = cmd_extract(m);
  const auto rows10 = read_csv(csv10);
  CHECK(std::stod(rows10[1][3]) <= 0.15);
}
