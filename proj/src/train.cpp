#include "minnet/train.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "minnet/analysis.hpp"

namespace fs = std::filesystem;

namespace minnet {

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

DatasetSplit subset_split(DatasetSplit split, long cap) {
  if (cap < 0 || static_cast<std::size_t>(cap) >= split.count()) return split;
  DatasetSplit out;
  out.preprocessing = split.preprocessing;
  out.labels.assign(split.labels.begin(), split.labels.begin() + cap);
  out.images = Tensor(static_cast<int>(cap), split.images.c, split.images.h, split.images.w);
  const std::size_t dim = static_cast<std::size_t>(split.images.c) * split.images.h *
                          split.images.w;
  std::copy(split.images.data.begin(),
            split.images.data.begin() + static_cast<long>(dim * cap),
            out.images.data.begin());
  return out;
}

void preprocess_pair(const NetworkConfig& cfg, DatasetSplit& train, DatasetSplit& test) {
  if (cfg.preprocess == "none") return;
  train.images = gcn(std::move(train.images));
  test.images = gcn(std::move(test.images));
  train.preprocessing.gcn = true;
  test.preprocessing.gcn = true;
  if (cfg.preprocess == "gcn_zca") {
    auto fit = std::make_shared<ZcaFit>(zca_fit(train.images));
    train.images = zca_apply(std::move(train.images), *fit);
    test.images = zca_apply(std::move(test.images), *fit);
    train.preprocessing.zca = fit;
    test.preprocessing.zca = fit;
  }
}

Tensor slice_image(const DatasetSplit& split, int i) {
  Tensor img(1, split.images.c, split.images.h, split.images.w);
  const std::size_t dim = img.size();
  std::copy_n(split.images.data.begin() + static_cast<long>(dim) * i, dim, img.data.begin());
  return img;
}

int default_epochs(const std::string& preset) { return preset == "desk" ? 10 : 80; }

}  // namespace

NetworkConfig resolve_config(const RunManifest& m) {
  NetworkConfig cfg = load_config(m.config_path);
  if (m.preset == "desk") {
    apply_desk_preset(cfg);
  } else if (m.preset != "paper") {
    throw InvalidInput("unknown preset '" + m.preset + "' (desk|paper)");
  }
  return cfg;
}

DatasetPair load_dataset_pair(const NetworkConfig& cfg, const std::string& data_dir,
                              long train_subset, long test_subset) {
  if (data_dir.empty()) throw IoError("no data directory given");
  DatasetPair pair;
  if (cfg.dataset == "mnist") {
    pair.train = load_mnist_idx(join(data_dir, "train-images-idx3-ubyte"),
                                join(data_dir, "train-labels-idx1-ubyte"));
    pair.test = load_mnist_idx(join(data_dir, "t10k-images-idx3-ubyte"),
                               join(data_dir, "t10k-labels-idx1-ubyte"));
  } else {
    std::string base = data_dir;
    if (fs::exists(fs::path(data_dir) / "cifar-10-batches-bin")) {
      base = (fs::path(data_dir) / "cifar-10-batches-bin").string();
    }
    std::vector<std::string> train_files;
    for (int i = 1; i <= 5; ++i) {
      train_files.push_back(join(base, "data_batch_" + std::to_string(i) + ".bin"));
    }
    pair.train = load_cifar10_binary(train_files);
    pair.test = load_cifar10_binary({join(base, "test_batch.bin")});
  }
  pair.train = subset_split(std::move(pair.train), train_subset);
  pair.test = subset_split(std::move(pair.test), test_subset);
  preprocess_pair(cfg, pair.train, pair.test);
  return pair;
}

double evaluate(Network& net, const DatasetSplit& split, int batch) {
  const std::size_t n = split.count();
  std::size_t wrong = 0;
  std::vector<int> idx;
  Tensor images;
  std::vector<int> labels;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch));
    idx.resize(end - start);
    for (std::size_t i = start; i < end; ++i) idx[i - start] = static_cast<int>(i);
    gather_batch(split, idx, images, labels);
    const std::vector<int> pred = net.predict(images);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] != labels[i]) ++wrong;
    }
  }
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(std::max<std::size_t>(1, n));
}

TrainOutcome cmd_train(const RunManifest& m) {
  return train_with_config(resolve_config(m), m);
}

TrainOutcome train_with_config(const NetworkConfig& cfg, const RunManifest& m) {
  const long train_cap = (m.train_subset >= 0) ? m.train_subset
                          : (m.preset == "desk" ? 10000 : -1);
  DatasetPair data = load_dataset_pair(cfg, m.data_dir, train_cap, m.test_subset);

  Network net = build_network(cfg, m.seed);
  OptimState optim;
  optim.base_lr = cfg.optim.lr;
  optim.momentum = cfg.optim.momentum;
  optim.weight_decay = cfg.optim.weight_decay;
  optim.schedule = cfg.optim.schedule;
  const std::vector<ParamRef> params = net.params();
  optim.init(params);

  const int epochs = (m.epochs > 0) ? m.epochs : default_epochs(m.preset);
  const bool do_augment = cfg.augment && cfg.dataset == "cifar10";
  std::mt19937_64 augment_rng(sub_seed(m.seed, 0xa06));

  fs::create_directories(m.out_dir);
  TrainOutcome out;
  out.metrics_csv = join(m.out_dir, "metrics.csv");
  out.last_checkpoint = join(m.out_dir, "last.ckpt");
  out.best_checkpoint = join(m.out_dir, "best.ckpt");
  std::ofstream csv(out.metrics_csv);
  if (!csv) throw IoError("cannot open '" + out.metrics_csv + "' for writing");
  csv << "# metrics-v1\n";
  csv << "epoch,train_loss,train_err,test_err,lr,wall_secs\n";

  const std::size_t ntrain = data.train.count();
  Tensor images;
  std::vector<int> labels;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    apply_schedule(optim, epoch);
    const auto batches = make_batches(ntrain, static_cast<std::size_t>(m.batch),
                                      sub_seed(m.seed, 0x5bff + static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t wrong = 0;
    for (const std::vector<int>& bidx : batches) {
      gather_batch(data.train, bidx, images, labels);
      if (do_augment) {
        for (std::size_t i = 0; i < bidx.size(); ++i) {
          Tensor img(1, images.c, images.h, images.w);
          const std::size_t dim = img.size();
          std::copy_n(images.data.begin() + static_cast<long>(dim * i), dim, img.data.begin());
          const Tensor aug = augment(img, augment_rng);
          std::copy_n(aug.data.begin(), dim, images.data.begin() + static_cast<long>(dim * i));
        }
      }
      const Tensor logits = net.forward(images, Mode::Train);
      const SoftmaxResult sm = softmax_xent(logits, labels);
      if (!std::isfinite(sm.loss)) {
        throw TrainingDiverged("training diverged (non-finite loss) at epoch " +
                               std::to_string(epoch));
      }
      net.zero_grads();
      net.backward(sm.grad);
      sgd_step(params, optim);

      loss_sum += sm.loss * static_cast<double>(bidx.size());
      const std::vector<int> pred = argmax_rows(sm.probs);
      for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] != labels[i]) ++wrong;
      }
    }
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(ntrain);
    row.train_err = 100.0 * static_cast<double>(wrong) / static_cast<double>(ntrain);
    row.test_err = evaluate(net, data.test);
    row.lr = optim.lr;
    const auto t1 = std::chrono::steady_clock::now();
    row.wall_secs = m.deterministic
                        ? 0.0
                        : std::chrono::duration<double>(t1 - t0).count();
    out.rows.push_back(row);
    csv << row.epoch << "," << fmt(row.train_loss) << "," << fmt(row.train_err) << ","
        << fmt(row.test_err) << "," << fmt(row.lr) << "," << fmt(row.wall_secs, 3) << "\n";
    csv.flush();

    net.save_checkpoint(out.last_checkpoint);
    if (row.test_err < out.best_test_err) {
      out.best_test_err = row.test_err;
      net.save_checkpoint(out.best_checkpoint);
    }
    out.final_test_err = row.test_err;
  }
  return out;
}

double cmd_eval(const RunManifest& m) {
  NetworkConfig cfg = resolve_config(m);
  if (m.checkpoint.empty()) throw InvalidInput("eval: no checkpoint given");
  Network net = build_network(cfg, m.seed);
  net.load_checkpoint(m.checkpoint);
  DatasetPair data = load_dataset_pair(cfg, m.data_dir, 0, m.test_subset);
  const double err = evaluate(net, data.test);
  std::cout << "test error: " << fmt(err, 4) << "%\n";
  return err;
}

namespace {

std::vector<std::uint64_t> seeds_of(const RunManifest& m) {
  return m.seeds.empty() ? std::vector<std::uint64_t>{m.seed} : m.seeds;
}

std::string hyper_columns(const NetworkConfig& cfg, const RunManifest& m, int epochs) {
  std::ostringstream os;
  os << epochs << "," << m.batch << "," << fmt(cfg.optim.lr) << "," << fmt(cfg.optim.momentum)
     << "," << fmt(cfg.optim.weight_decay);
  return os.str();
}

}  // namespace

std::string cmd_sweep_pieces(const RunManifest& m) {
  if (m.k_list.empty()) throw InvalidInput("sweep-pieces: k list is empty");
  for (int k : m.k_list) {
    if (k < 1) throw InvalidInput("sweep-pieces: k must be >= 1");
  }
  fs::create_directories(m.out_dir);
  const std::string csv_path = join(m.out_dir, "sweep.csv");
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open '" + csv_path + "' for writing");
  csv << "# sweep-v1\n";
  csv << "k,seed,test_err,epochs,batch,lr,momentum,weight_decay\n";
  const int epochs = (m.epochs > 0) ? m.epochs : default_epochs(m.preset);
  for (int k : m.k_list) {
    for (std::uint64_t seed : seeds_of(m)) {
      RunManifest run = m;
      run.seed = seed;
      run.seeds.clear();
      run.out_dir = join(m.out_dir, "sweep_k" + std::to_string(k) + "_s" + std::to_string(seed));
      // identical hyperparameters per run; only k changes
      NetworkConfig cfg = resolve_config(run);
      for (BlockConfig& b : cfg.blocks) {
        b.mlp1.k = k;
        b.mlp2.k = k;
      }
      TrainOutcome outcome = train_with_config(cfg, run);
      csv << k << "," << seed << "," << fmt(outcome.final_test_err) << ","
          << hyper_columns(cfg, run, epochs) << "\n";
      csv.flush();
    }
  }
  return csv_path;
}

std::string cmd_compare_pooling(const RunManifest& m) {
  fs::create_directories(m.out_dir);
  const std::string csv_path = join(m.out_dir, "pooling.csv");
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open '" + csv_path + "' for writing");
  csv << "# pooling-v1\n";
  csv << "mode,seed,test_err,epochs,batch,lr,momentum,weight_decay\n";
  const int epochs = (m.epochs > 0) ? m.epochs : default_epochs(m.preset);
  for (PoolMode mode : {PoolMode::Avg, PoolMode::Max}) {
    for (std::uint64_t seed : seeds_of(m)) {
      RunManifest run = m;
      run.seed = seed;
      run.seeds.clear();
      run.out_dir = join(m.out_dir, std::string("pool_") + pool_mode_name(mode) + "_s" +
                                        std::to_string(seed));
      NetworkConfig cfg = resolve_config(run);
      // first two pools switch; the last stays global average
      cfg.blocks[0].pool.mode = mode;
      cfg.blocks[1].pool.mode = mode;
      TrainOutcome outcome = train_with_config(cfg, run);
      csv << pool_mode_name(mode) << "," << seed << "," << fmt(outcome.final_test_err) << ","
          << hyper_columns(cfg, run, epochs) << "\n";
      csv.flush();
    }
  }
  return csv_path;
}

std::string region_bound_table(const std::vector<RegionQuery>& queries) {
  if (queries.empty()) throw InvalidInput("region-bound: no queries given");
  std::vector<std::array<std::string, 5>> rows;
  rows.push_back({"kind", "L", "n", "k/n0", "regions"});
  for (const RegionQuery& q : queries) {
    const BigUint bound = q.maxout
                              ? maxout_region_bound(q.layers, q.width, q.pieces_or_n0)
                              : relu_region_bound(q.layers, q.width, q.pieces_or_n0);
    rows.push_back({q.maxout ? "maxout" : "relu", std::to_string(q.layers),
                    std::to_string(q.width), std::to_string(q.pieces_or_n0), bound.str()});
  }
  std::array<std::size_t, 5> width{};
  for (const auto& r : rows) {
    for (int i = 0; i < 5; ++i) width[i] = std::max(width[i], r[i].size());
  }
  std::ostringstream os;
  for (const auto& r : rows) {
    for (int i = 0; i < 5; ++i) {
      os << r[i] << std::string(width[i] - r[i].size() + (i == 4 ? 0 : 2), ' ');
    }
    os << "\n";
  }
  return os.str();
}

std::string cmd_extract(const RunManifest& m) {
  NetworkConfig cfg = resolve_config(m);
  if (m.checkpoint.empty()) throw InvalidInput("extract: no checkpoint given");
  if (m.layer.empty()) throw InvalidInput("extract: no layer given");
  Network net = build_network(cfg, m.seed);
  net.load_checkpoint(m.checkpoint);
  DatasetPair data = load_dataset_pair(cfg, m.data_dir, 0, m.test_subset);

  const fs::path dir = fs::path(m.out_dir) / "extract";
  fs::create_directories(dir);
  const std::string csv_path = (dir / "extract.csv").string();
  std::ofstream csv(csv_path);
  if (!csv) throw IoError("cannot open '" + csv_path + "' for writing");
  csv << "# extract-v1\n";
  csv << "image,layer,channel,kept_fraction,top1,top1_prob,top2,top2_prob\n";

  const int count = std::min<int>(m.extract_count, static_cast<int>(data.test.count()));
  for (int i = 0; i < count; ++i) {
    const Tensor img = slice_image(data.test, i);
    FeatureMapDump dump = extract_feature_maps(net, img, m.layer, m.top_percent);
    const Tensor kept = threshold_top_percent(dump.maps, m.top_percent);
    for (int c = 0; c < kept.c; ++c) {
      Tensor map(1, 1, kept.h, kept.w);
      std::copy_n(kept.plane_ptr(0, c), kept.plane(), map.data.begin());
      const std::string name = "img" + std::to_string(i) + "_ch" + std::to_string(c) + ".pgm";
      export_map_image(map, (dir / name).string());
      csv << i << "," << dump.layer << "," << c << "," << fmt(kept_fraction(kept, c), 4) << ","
          << dump.top1 << "," << fmt(dump.top1_prob, 4) << "," << dump.top2 << ","
          << fmt(dump.top2_prob, 4) << "\n";
    }
  }
  return csv_path;
}

}  // namespace minnet
