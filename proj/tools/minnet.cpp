#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minnet/train.hpp"

namespace {

std::vector<minnet::RegionQuery> parse_region_args(const std::vector<std::string>& maxout_args,
                                                   const std::vector<std::string>& relu_args) {
  auto parse_triple = [](const std::string& s, bool maxout) {
    minnet::RegionQuery q;
    q.maxout = maxout;
    if (std::sscanf(s.c_str(), "%ld,%ld,%ld", &q.layers, &q.width, &q.pieces_or_n0) != 3) {
      throw CLI::ValidationError(std::string(maxout ? "--maxout" : "--relu") +
                                 " expects L,n," + (maxout ? "k" : "n0"));
    }
    return q;
  };
  std::vector<minnet::RegionQuery> queries;
  for (const std::string& s : maxout_args) queries.push_back(parse_triple(s, true));
  for (const std::string& s : relu_args) queries.push_back(parse_triple(s, false));
  return queries;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minnet: maxout-in-network convolutional networks from scratch"};
  app.require_subcommand(1);

  minnet::RunManifest m;
  std::string k_csv, seeds_csv;

  auto add_common = [&](CLI::App* cmd, bool needs_data) {
    cmd->add_option("--config", m.config_path, "architecture config (JSON)")->required();
    auto* data = cmd->add_option("--data", m.data_dir, "dataset directory");
    if (needs_data) data->required();
    cmd->add_option("--seed", m.seed, "run seed (fixes all randomness)");
    cmd->add_option("--epochs", m.epochs, "training epochs (default: preset)");
    cmd->add_option("--batch", m.batch, "batch size");
    cmd->add_option("--out", m.out_dir, "output directory");
    cmd->add_option("--preset", m.preset, "desk|paper (desk: widths/4, k=2, 10k subset)")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--train-subset", m.train_subset, "cap training samples");
    cmd->add_option("--test-subset", m.test_subset, "cap test samples");
    cmd->add_flag("--deterministic", m.deterministic,
                  "write wall_secs as 0 so reruns match exactly");
  };

  auto* train = app.add_subcommand("train", "train a model, write metrics CSV + checkpoints");
  add_common(train, true);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint, print test error %");
  add_common(eval, true);
  eval->add_option("--checkpoint", m.checkpoint, "checkpoint path")->required();

  auto* sweep = app.add_subcommand("sweep-pieces",
                                   "train once per k with fixed hyperparameters");
  add_common(sweep, true);
  sweep->add_option("--k", k_csv, "comma-separated maxout piece counts, e.g. 1,2,4")
      ->required();
  sweep->add_option("--seeds", seeds_csv, "comma-separated seeds (default: --seed)");

  auto* pooling = app.add_subcommand("compare-pooling",
                                     "train with avg vs max pooling in the first two pools");
  add_common(pooling, true);
  pooling->add_option("--seeds", seeds_csv, "comma-separated seeds (default: --seed)");

  auto* region = app.add_subcommand("region-bound", "print linear-region lower bounds");
  std::vector<std::string> maxout_args, relu_args;
  region->add_option("--maxout", maxout_args, "L,n,k (repeatable)");
  region->add_option("--relu", relu_args, "L,n,n0 (repeatable)");

  auto* extract = app.add_subcommand("extract",
                                     "dump thresholded feature maps as PGM + summary CSV");
  add_common(extract, true);
  extract->add_option("--checkpoint", m.checkpoint, "checkpoint path")->required();
  extract->add_option("--layer", m.layer, "layer name, e.g. block1.mlp2")->required();
  extract->add_option("--top-percent", m.top_percent, "keep top p% per channel (default 50)");
  extract->add_option("--count", m.extract_count, "number of test images (default 4)");

  CLI11_PARSE(app, argc, argv);

  auto parse_csv_list = [](const std::string& csv, auto push) {
    std::string cur;
    for (char ch : csv + ",") {
      if (ch == ',') {
        if (!cur.empty()) push(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
  };
  parse_csv_list(k_csv, [&](const std::string& s) { m.k_list.push_back(std::stoi(s)); });
  parse_csv_list(seeds_csv, [&](const std::string& s) { m.seeds.push_back(std::stoull(s)); });

  try {
    if (train->parsed()) {
      const minnet::TrainOutcome out = minnet::cmd_train(m);
      std::cout << "final test error: " << out.final_test_err << "% (best "
                << out.best_test_err << "%)\nmetrics: " << out.metrics_csv
                << "\ncheckpoints: " << out.last_checkpoint << ", " << out.best_checkpoint
                << "\n";
    } else if (eval->parsed()) {
      minnet::cmd_eval(m);
    } else if (sweep->parsed()) {
      std::cout << "sweep written: " << minnet::cmd_sweep_pieces(m) << "\n";
    } else if (pooling->parsed()) {
      std::cout << "comparison written: " << minnet::cmd_compare_pooling(m) << "\n";
    } else if (region->parsed()) {
      if (maxout_args.empty() && relu_args.empty()) {
        std::cerr << "region-bound: give at least one --maxout L,n,k or --relu L,n,n0\n";
        return 2;
      }
      std::cout << minnet::region_bound_table(parse_region_args(maxout_args, relu_args));
    } else if (extract->parsed()) {
      std::cout << "extract written: " << minnet::cmd_extract(m) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
