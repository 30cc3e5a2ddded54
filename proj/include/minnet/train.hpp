#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minnet/data.hpp"
#include "minnet/model.hpp"
#include "minnet/optim.hpp"

namespace minnet {

/// Loss went non-finite; names the epoch.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything a command run needs; the seed fixes all randomness (init,
/// shuffle, dropout, augmentation).
struct RunManifest {
  std::string config_path;
  std::string data_dir;
  std::string out_dir = "out";
  std::string checkpoint;  // eval / extract
  std::uint64_t seed = 0;
  int epochs = -1;  // -1: preset default (desk 10, paper 80)
  int batch = 64;
  std::string preset = "paper";  // "desk" | "paper"
  std::vector<int> k_list;       // sweep-pieces
  std::vector<std::uint64_t> seeds;  // sweep/pooling; empty -> {seed}
  std::string layer;             // extract
  double top_percent = 50.0;
  int extract_count = 4;
  long train_subset = -1;  // cap on training samples (-1: preset default)
  long test_subset = -1;   // cap on test samples (harness speed)
  bool deterministic = false;  // write wall_secs as 0 for identical reruns
};

struct EpochRow {
  int epoch = 0;
  double train_loss = 0.0, train_err = 0.0, test_err = 0.0, lr = 0.0, wall_secs = 0.0;
};

struct TrainOutcome {
  std::vector<EpochRow> rows;
  double final_test_err = 100.0;
  double best_test_err = 100.0;
  std::string metrics_csv, last_checkpoint, best_checkpoint;
};

/// Loads, preprocesses and (optionally) subsets the train/test pair named by
/// the config's dataset field.
struct DatasetPair {
  DatasetSplit train, test;
};
DatasetPair load_dataset_pair(const NetworkConfig& cfg, const std::string& data_dir,
                              long train_subset, long test_subset);

/// Config after the manifest's preset is applied.
NetworkConfig resolve_config(const RunManifest& m);

/// Error percentage (100 * (1 - accuracy)) of eval-mode predictions.
double evaluate(Network& net, const DatasetSplit& split, int batch = 256);

TrainOutcome cmd_train(const RunManifest& m);

/// Core training loop (cmd_train after config resolution); sweeps call this
/// with an edited config.
TrainOutcome train_with_config(const NetworkConfig& cfg, const RunManifest& m);

double cmd_eval(const RunManifest& m);

/// One training run per k in k_list per seed, identical hyperparameters;
/// writes <out>/sweep.csv and returns its path.
std::string cmd_sweep_pieces(const RunManifest& m);

/// Trains with avg then max pooling in the first two pooling layers (the
/// last stays global average); writes <out>/pooling.csv and returns its path.
std::string cmd_compare_pooling(const RunManifest& m);

struct RegionQuery {
  bool maxout = true;  // false: relu
  long layers = 1, width = 1, pieces_or_n0 = 1;
};
std::string region_bound_table(const std::vector<RegionQuery>& queries);

/// Writes one PGM per channel of the captured layer (thresholded to the top
/// p percent) for the first extract_count test images, plus a summary CSV.
std::string cmd_extract(const RunManifest& m);

}  // namespace minnet
