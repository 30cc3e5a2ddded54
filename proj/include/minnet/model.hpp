#pragma once

#include <string>
#include <vector>

#include "minnet/network.hpp"
#include "minnet/optim.hpp"

namespace minnet {

struct ConvSpecCfg {
  int kh = 5, kw = 5;
  int units = 0;
  int stride = 1;
  int pad = 0;
  bool bn = true;
};

struct MlpSpecCfg {
  int units = 0;
  int k = 1;
};

struct PoolSpecCfg {
  PoolMode mode = PoolMode::Avg;
  int size = 3;
  int stride = 2;
};

struct BlockConfig {
  ConvSpecCfg conv;
  MlpSpecCfg mlp1, mlp2;
  PoolSpecCfg pool;
  double dropout = 0.0;  // 0 disables
};

struct OptimConfig {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<ScheduleMilestone> schedule;
};

/// Three-block architecture description (the Table-1 style schema).
struct NetworkConfig {
  std::string arch = "min";     // "min" | "nin"
  std::string dataset;          // "mnist" | "cifar10"
  int in_channels = 1, in_h = 28, in_w = 28;
  int classes = 10;
  std::string preprocess = "none";  // "none" | "gcn" | "gcn_zca"
  bool augment = false;
  OptimConfig optim;
  std::vector<BlockConfig> blocks;  // exactly 3
};

/// Parses and validates a JSON config document. Violations throw ConfigError
/// naming the offending field path.
NetworkConfig parse_config(const std::string& json_text);
NetworkConfig load_config(const std::string& path);

/// MIN block stack: [conv, BN, maxout MLP, maxout MLP, pool, (dropout)] x3;
/// the final block's pool is global average and feeds the softmax head.
Network build_min(const NetworkConfig& cfg, std::uint64_t seed);

/// NIN baseline: [conv, ReLU, two 1x1 conv + ReLU, pool, (dropout)] x3, no
/// batch normalization; the k fields are ignored (with a warning).
Network build_nin(const NetworkConfig& cfg, std::uint64_t seed);

/// Dispatches on cfg.arch.
Network build_network(const NetworkConfig& cfg, std::uint64_t seed);

/// Desk-scale preset: conv/MLP widths divided by 4 (the class head is kept)
/// and k forced to 2.
void apply_desk_preset(NetworkConfig& cfg);

}  // namespace minnet
