#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>

#include "minnet/analysis.hpp"
#include "minnet/model.hpp"
#include "support/testutil.hpp"

using namespace minnet;
using namespace minnet::testsupport;

TEST_CASE("maxout region bound: k^(L-1) * k^n") {
  CHECK(maxout_region_bound(2, 4, 2).str() == "32");
  CHECK(maxout_region_bound(2, 3, 5).str() == "625");
  CHECK(maxout_region_bound(7, 11, 1).str() == "1");
  // 5^59, cross-checked by independent big-integer arithmetic
  CHECK(maxout_region_bound(10, 50, 5).str() ==
        "173472347597680709441192448139190673828125");
}

TEST_CASE("relu region bound: floor(n/n0)^((L-1)n0) * n^n0") {
  CHECK(relu_region_bound(2, 4, 2).str() == "64");
  CHECK(relu_region_bound(1, 3, 3).str() == "27");
  CHECK(relu_region_bound(3, 3, 3).str() == "27");  // ratio 1 for n = n0
  CHECK(relu_region_bound(2, 5, 2).str() == "100");  // floor(5/2)=2: 2^2*5^2
}

TEST_CASE("region bounds reject invalid arguments") {
  CHECK_THROWS_AS(maxout_region_bound(0, 4, 2), InvalidInput);
  CHECK_THROWS_AS(maxout_region_bound(2, -1, 2), InvalidInput);
  CHECK_THROWS_AS(maxout_region_bound(2, 4, 0), InvalidInput);
  CHECK_THROWS_AS(relu_region_bound(2, 2, 4), InvalidInput);  // n < n0
  CHECK_THROWS_AS(relu_region_bound(2, 4, 0), InvalidInput);
}

TEST_CASE("region bounds are monotone nondecreasing in each argument") {
  for (long L = 1; L <= 4; ++L) {
    for (long n = 1; n <= 5; ++n) {
      for (long k = 1; k <= 4; ++k) {
        const BigUint base = maxout_region_bound(L, n, k);
        CHECK(base <= maxout_region_bound(L + 1, n, k));
        CHECK(base <= maxout_region_bound(L, n + 1, k));
        CHECK(base <= maxout_region_bound(L, n, k + 1));
      }
    }
  }
  for (long L = 1; L <= 4; ++L) {
    for (long n0 = 1; n0 <= 3; ++n0) {
      for (long n = n0; n <= 6; ++n) {
        const BigUint base = relu_region_bound(L, n, n0);
        CHECK(base <= relu_region_bound(L + 1, n, n0));
        CHECK(base <= relu_region_bound(L, n + 1, n0));
      }
    }
  }
}

TEST_CASE("threshold keeps the top half of {1,2,3,4}") {
  Tensor map(1, 1, 2, 2);
  map.data = {1.0, 2.0, 3.0, 4.0};
  const Tensor out = threshold_top_percent(map, 50.0);
  CHECK(out.data == std::vector<double>{0.0, 0.0, 3.0, 4.0});
}

TEST_CASE("threshold with p=100 and on constant maps is the identity") {
  const Tensor map = random_tensor(1, 2, 3, 3, 3);
  CHECK(threshold_top_percent(map, 100.0).data == map.data);
  Tensor flat(1, 1, 2, 2);
  std::fill(flat.data.begin(), flat.data.end(), 0.7);
  CHECK(threshold_top_percent(flat, 10.0).data == flat.data);
}

TEST_CASE("threshold matches a sort-based oracle on random maps") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor map = random_tensor(1, 3, 4, 5, 100 + trial);
    const double p = 5.0 + static_cast<double>(rng() % 95);
    const Tensor out = threshold_top_percent(map, p);
    for (int c = 0; c < 3; ++c) {
      std::vector<double> vals(map.plane_ptr(0, c), map.plane_ptr(0, c) + map.plane());
      std::sort(vals.begin(), vals.end(), std::greater<>());
      const std::size_t m = static_cast<std::size_t>(
          std::ceil(p / 100.0 * static_cast<double>(vals.size())));
      const double cutoff = vals[m - 1];
      for (std::size_t i = 0; i < map.plane(); ++i) {
        const double v = map.plane_ptr(0, c)[i];
        const double kept = out.plane_ptr(0, c)[i];
        if (v >= cutoff) {
          CHECK(kept == v);  // top-m values and their ties survive
        } else {
          CHECK(kept == 0.0);
        }
      }
    }
  }
}

TEST_CASE("threshold rejects p outside (0,100]") {
  const Tensor map = random_tensor(1, 1, 2, 2, 5);
  CHECK_THROWS_AS(threshold_top_percent(map, 0.0), InvalidInput);
  CHECK_THROWS_AS(threshold_top_percent(map, 101.0), InvalidInput);
}

TEST_CASE("pgm export quantizes {0,1,2,3} to {0,85,170,255}") {
  const std::string dir = test_outdir("analysis_pgm");
  Tensor map(1, 1, 2, 2);
  map.data = {0.0, 1.0, 2.0, 3.0};
  const std::string path = dir + "/map.pgm";
  export_map_image(map, path);
  const Pgm pgm = read_pgm(path);
  CHECK(pgm.w == 2);
  CHECK(pgm.h == 2);
  CHECK(pgm.maxval == 255);
  CHECK(pgm.bytes == std::vector<unsigned char>{0, 85, 170, 255});
}

TEST_CASE("pgm export of a constant map is all zeros") {
  const std::string dir = test_outdir("analysis_pgm_const");
  Tensor map(1, 1, 3, 2);
  std::fill(map.data.begin(), map.data.end(), 9.5);
  const std::string path = dir + "/flat.pgm";
  export_map_image(map, path);
  const Pgm pgm = read_pgm(path);
  for (unsigned char b : pgm.bytes) CHECK(b == 0);
}

TEST_CASE("pgm round-trips byte-exactly through export and parse") {
  const std::string dir = test_outdir("analysis_pgm_rt");
  const Tensor map = random_tensor(1, 1, 5, 7, 7);
  export_map_image(map, dir + "/a.pgm");
  const Pgm first = read_pgm(dir + "/a.pgm");
  // re-export the quantized image: quantization is idempotent
  Tensor again(1, 1, 5, 7);
  for (std::size_t i = 0; i < first.bytes.size(); ++i) again.data[i] = first.bytes[i];
  export_map_image(again, dir + "/b.pgm");
  const Pgm second = read_pgm(dir + "/b.pgm");
  CHECK(first.bytes == second.bytes);
}

TEST_CASE("pgm export to an unwritable path raises an io error") {
  Tensor map(1, 1, 1, 1);
  CHECK_THROWS_AS(export_map_image(map, "/nonexistent_dir_zz/map.pgm"), IoError);
}

namespace {

NetworkConfig small_cfg() {
  NetworkConfig cfg;
  cfg.dataset = "mnist";
  cfg.in_channels = 1;
  cfg.in_h = 12;
  cfg.in_w = 12;
  cfg.classes = 10;
  for (int b = 0; b < 3; ++b) {
    BlockConfig blk;
    blk.conv = {3, 3, 4, 1, 1, true};
    blk.mlp1 = {4, 2};
    blk.mlp2 = {(b == 2) ? 10 : 4, 2};
    blk.pool = (b == 2) ? PoolSpecCfg{PoolMode::GlobalAvg, 0, 0}
                        : PoolSpecCfg{PoolMode::Avg, 2, 2};
    cfg.blocks.push_back(blk);
  }
  return cfg;
}

}  // namespace

TEST_CASE("extract captures the named layer with matching shapes") {
  Network net = build_min(small_cfg(), 3);
  net.forward(random_tensor(4, 1, 12, 12, 5), Mode::Train);  // init running stats
  const Tensor img = random_tensor(1, 1, 12, 12, 7);
  const FeatureMapDump dump = extract_feature_maps(net, img, "block1.mlp2", 50.0);
  CHECK(dump.layer == "block1.mlp2");
  CHECK(dump.maps.c == 4);
  CHECK(dump.maps.h == 12);
  CHECK(dump.maps.w == 12);
  CHECK(dump.top1_prob >= dump.top2_prob);
  CHECK(dump.top1 != dump.top2);

  const FeatureMapDump pooled = extract_feature_maps(net, img, "block2.pool", 50.0);
  CHECK(pooled.maps.h == 3);  // 12 -> 6 -> 3
}

TEST_CASE("extract on a zero-weight net reports uniform candidates") {
  Network net = build_min(small_cfg(), 9);
  for (const ParamRef& p : net.params()) {
    if (p.name.ends_with(".weight") || p.name.ends_with(".bias")) {
      std::fill(p.value->begin(), p.value->end(), 0.0);
    }
  }
  net.forward(random_tensor(4, 1, 12, 12, 11), Mode::Train);
  const Tensor img = random_tensor(1, 1, 12, 12, 13);
  const FeatureMapDump dump = extract_feature_maps(net, img, "block3.mlp2", 10.0);
  CHECK(dump.top1_prob == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(dump.top2_prob == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("extract rejects unknown layer ids, listing what exists") {
  Network net = build_min(small_cfg(), 15);
  net.forward(random_tensor(4, 1, 12, 12, 17), Mode::Train);
  const Tensor img = random_tensor(1, 1, 12, 12, 19);
  CHECK_THROWS_WITH_AS(extract_feature_maps(net, img, "nope", 50.0),
                       doctest::Contains("block1.conv"), InvalidInput);
}

TEST_CASE("kept_fraction counts nonzero cells") {
  Tensor maps(1, 1, 2, 2);
  maps.data = {0.0, 0.0, 3.0, 4.0};
  CHECK(kept_fraction(maps, 0) == doctest::Approx(0.5));
}
