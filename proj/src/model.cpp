#include "minnet/model.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace minnet {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
  throw ConfigError("config: " + path + ": " + msg);
}

const json& field(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.is_object()) fail(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) fail(path + "." + key, "missing field");
  return *it;
}

int int_field(const json& obj, const std::string& path, const std::string& key) {
  const json& v = field(obj, path, key);
  if (!v.is_number_integer()) fail(path + "." + key, "expected an integer");
  return v.get<int>();
}

double num_field(const json& obj, const std::string& path, const std::string& key,
                 double fallback, bool required = false) {
  if (!obj.contains(key)) {
    if (required) fail(path + "." + key, "missing field");
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

void check_known_keys(const json& obj, const std::string& path,
                      std::initializer_list<const char*> known) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) fail(path + "." + it.key(), "unknown field");
  }
}

PoolMode parse_pool_mode(const std::string& s, const std::string& path) {
  if (s == "avg") return PoolMode::Avg;
  if (s == "max") return PoolMode::Max;
  if (s == "global_avg") return PoolMode::GlobalAvg;
  fail(path, "unknown pool mode '" + s + "' (avg|max|global_avg)");
}

BlockConfig parse_block(const json& jb, const std::string& path) {
  check_known_keys(jb, path, {"conv", "mlp1", "mlp2", "pool", "dropout"});
  BlockConfig b;

  const json& jc = field(jb, path, "conv");
  check_known_keys(jc, path + ".conv", {"kernel", "units", "stride", "pad", "bn"});
  const json& kernel = field(jc, path + ".conv", "kernel");
  if (!kernel.is_array() || kernel.size() != 2) fail(path + ".conv.kernel", "expected [kh, kw]");
  b.conv.kh = kernel[0].get<int>();
  b.conv.kw = kernel[1].get<int>();
  b.conv.units = int_field(jc, path + ".conv", "units");
  b.conv.stride = jc.value("stride", 1);
  b.conv.pad = jc.value("pad", 0);
  b.conv.bn = jc.value("bn", true);
  if (b.conv.kh < 1 || b.conv.kw < 1) fail(path + ".conv.kernel", "kernel extents must be >= 1");
  if (b.conv.units < 1) fail(path + ".conv.units", "must be >= 1");
  if (b.conv.stride < 1) fail(path + ".conv.stride", "must be >= 1");
  if (b.conv.pad < 0) fail(path + ".conv.pad", "must be >= 0");

  for (const char* key : {"mlp1", "mlp2"}) {
    const json& jm = field(jb, path, key);
    const std::string mpath = path + "." + key;
    check_known_keys(jm, mpath, {"units", "k"});
    MlpSpecCfg& m = (std::string(key) == "mlp1") ? b.mlp1 : b.mlp2;
    m.units = int_field(jm, mpath, "units");
    m.k = jm.value("k", 1);
    if (m.units < 1) fail(mpath + ".units", "must be >= 1");
    if (m.k < 1) fail(mpath + ".k", "must be >= 1");
  }

  const json& jp = field(jb, path, "pool");
  check_known_keys(jp, path + ".pool", {"mode", "size", "stride"});
  const json& jmode = field(jp, path + ".pool", "mode");
  if (!jmode.is_string()) fail(path + ".pool.mode", "expected a string");
  b.pool.mode = parse_pool_mode(jmode.get<std::string>(), path + ".pool.mode");
  b.pool.size = jp.value("size", 3);
  b.pool.stride = jp.value("stride", 2);
  if (b.pool.mode != PoolMode::GlobalAvg && (b.pool.size < 1 || b.pool.stride < 1)) {
    fail(path + ".pool", "size and stride must be >= 1");
  }

  b.dropout = jb.value("dropout", 0.0);
  if (b.dropout < 0.0 || b.dropout >= 1.0) fail(path + ".dropout", "must be in [0,1)");
  return b;
}

}  // namespace

NetworkConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  check_known_keys(j, "$", {"arch", "dataset", "input", "classes", "preprocess", "augment",
                            "optim", "blocks"});
  NetworkConfig cfg;
  cfg.arch = j.value("arch", "min");
  if (cfg.arch != "min" && cfg.arch != "nin") fail("$.arch", "expected 'min' or 'nin'");

  const json& jd = field(j, "$", "dataset");
  if (!jd.is_string()) fail("$.dataset", "expected a string");
  cfg.dataset = jd.get<std::string>();
  if (cfg.dataset != "mnist" && cfg.dataset != "cifar10") {
    fail("$.dataset", "expected 'mnist' or 'cifar10'");
  }

  const json& ji = field(j, "$", "input");
  check_known_keys(ji, "$.input", {"channels", "height", "width"});
  cfg.in_channels = int_field(ji, "$.input", "channels");
  cfg.in_h = int_field(ji, "$.input", "height");
  cfg.in_w = int_field(ji, "$.input", "width");
  if (cfg.in_channels < 1 || cfg.in_h < 1 || cfg.in_w < 1) fail("$.input", "must be >= 1");

  cfg.classes = int_field(j, "$", "classes");
  if (cfg.classes < 2) fail("$.classes", "must be >= 2");

  cfg.preprocess = j.value("preprocess", "none");
  if (cfg.preprocess != "none" && cfg.preprocess != "gcn" && cfg.preprocess != "gcn_zca") {
    fail("$.preprocess", "expected none|gcn|gcn_zca");
  }
  cfg.augment = j.value("augment", false);

  if (j.contains("optim")) {
    const json& jo = j.at("optim");
    check_known_keys(jo, "$.optim", {"lr", "momentum", "weight_decay", "schedule"});
    cfg.optim.lr = num_field(jo, "$.optim", "lr", cfg.optim.lr);
    cfg.optim.momentum = num_field(jo, "$.optim", "momentum", cfg.optim.momentum);
    cfg.optim.weight_decay = num_field(jo, "$.optim", "weight_decay", cfg.optim.weight_decay);
    if (cfg.optim.lr <= 0.0) fail("$.optim.lr", "must be > 0");
    if (cfg.optim.momentum < 0.0 || cfg.optim.momentum >= 1.0) {
      fail("$.optim.momentum", "must be in [0,1)");
    }
    if (cfg.optim.weight_decay < 0.0) fail("$.optim.weight_decay", "must be >= 0");
    if (jo.contains("schedule")) {
      const json& js = jo.at("schedule");
      if (!js.is_array()) fail("$.optim.schedule", "expected an array of [epoch, multiplier]");
      for (std::size_t i = 0; i < js.size(); ++i) {
        const json& ms = js[i];
        if (!ms.is_array() || ms.size() != 2) {
          fail("$.optim.schedule[" + std::to_string(i) + "]", "expected [epoch, multiplier]");
        }
        cfg.optim.schedule.push_back({ms[0].get<int>(), ms[1].get<double>()});
      }
    }
  }

  const json& jblocks = field(j, "$", "blocks");
  if (!jblocks.is_array()) fail("$.blocks", "expected an array");
  for (std::size_t i = 0; i < jblocks.size(); ++i) {
    cfg.blocks.push_back(parse_block(jblocks[i], "$.blocks[" + std::to_string(i) + "]"));
  }
  if (cfg.blocks.size() != 3) {
    fail("$.blocks", "exactly 3 blocks required, got " + std::to_string(cfg.blocks.size()));
  }
  if (cfg.blocks.back().mlp2.units != cfg.classes) {
    fail("$.blocks[2].mlp2.units", "final MLP width must equal classes (" +
                                       std::to_string(cfg.classes) + ")");
  }
  if (cfg.blocks.back().pool.mode != PoolMode::GlobalAvg) {
    fail("$.blocks[2].pool.mode", "final pool must be global_avg");
  }
  if (cfg.blocks.back().dropout != 0.0) {
    fail("$.blocks[2].dropout", "no dropout after the final block");
  }
  return cfg;
}

NetworkConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config(buf.str());
}

Network build_min(const NetworkConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(sub_seed(seed, 0x1717));
  Network net;
  int channels = cfg.in_channels;
  for (std::size_t bi = 0; bi < cfg.blocks.size(); ++bi) {
    const BlockConfig& b = cfg.blocks[bi];
    const std::string base = "block" + std::to_string(bi + 1);

    auto conv = std::make_unique<ConvLayer>(
        base + ".conv",
        ConvParams{b.conv.units, channels, b.conv.kh, b.conv.kw, b.conv.stride, b.conv.pad});
    conv->init_he(rng);
    net.add(std::move(conv));
    if (b.conv.bn) {
      net.add(std::make_unique<BatchNormLayer>(base + ".bn", b.conv.units));
    }

    auto mlp1 = std::make_unique<MaxoutMlpLayer>(base + ".mlp1", b.mlp1.units, b.conv.units,
                                                 b.mlp1.k);
    mlp1->init_he(rng);
    net.add(std::move(mlp1));
    auto mlp2 = std::make_unique<MaxoutMlpLayer>(base + ".mlp2", b.mlp2.units, b.mlp1.units,
                                                 b.mlp2.k);
    mlp2->init_he(rng);
    net.add(std::move(mlp2));

    net.add(std::make_unique<PoolLayer>(base + ".pool",
                                        PoolSpec{b.pool.mode, b.pool.size, b.pool.stride}));
    if (b.dropout > 0.0) {
      net.add(std::make_unique<DropoutLayer>(
          base + ".drop", DropoutSpec{b.dropout, sub_seed(seed, 0xd0 + bi)}));
    }
    channels = b.mlp2.units;
  }
  return net;
}

Network build_nin(const NetworkConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(sub_seed(seed, 0x1717));
  Network net;
  int channels = cfg.in_channels;
  bool warned = false;
  for (std::size_t bi = 0; bi < cfg.blocks.size(); ++bi) {
    const BlockConfig& b = cfg.blocks[bi];
    if ((b.mlp1.k > 1 || b.mlp2.k > 1) && !warned) {
      std::cerr << "warning: nin architecture ignores maxout pieces (k)\n";
      warned = true;
    }
    const std::string base = "block" + std::to_string(bi + 1);

    auto conv = std::make_unique<ConvLayer>(
        base + ".conv",
        ConvParams{b.conv.units, channels, b.conv.kh, b.conv.kw, b.conv.stride, b.conv.pad});
    conv->init_he(rng);
    net.add(std::move(conv));
    net.add(std::make_unique<ReluLayer>(base + ".relu"));

    auto mlp = std::make_unique<MlpconvReluLayer>(base + ".mlp", b.mlp1.units, b.mlp2.units,
                                                  b.conv.units);
    mlp->init_he(rng);
    net.add(std::move(mlp));

    net.add(std::make_unique<PoolLayer>(base + ".pool",
                                        PoolSpec{b.pool.mode, b.pool.size, b.pool.stride}));
    if (b.dropout > 0.0) {
      net.add(std::make_unique<DropoutLayer>(
          base + ".drop", DropoutSpec{b.dropout, sub_seed(seed, 0xd0 + bi)}));
    }
    channels = b.mlp2.units;
  }
  return net;
}

Network build_network(const NetworkConfig& cfg, std::uint64_t seed) {
  return cfg.arch == "nin" ? build_nin(cfg, seed) : build_min(cfg, seed);
}

void apply_desk_preset(NetworkConfig& cfg) {
  for (std::size_t bi = 0; bi < cfg.blocks.size(); ++bi) {
    BlockConfig& b = cfg.blocks[bi];
    b.conv.units = std::max(1, b.conv.units / 4);
    b.mlp1.units = std::max(1, b.mlp1.units / 4);
    if (bi + 1 < cfg.blocks.size()) {
      b.mlp2.units = std::max(1, b.mlp2.units / 4);
    }  // final MLP keeps the class count
    b.mlp1.k = 2;
    b.mlp2.k = 2;
  }
}

}  // namespace minnet
