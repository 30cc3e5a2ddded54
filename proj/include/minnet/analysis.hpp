#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minnet/network.hpp"

namespace minnet {

/// Arbitrary-precision unsigned integer, base 1e9 limbs. Just enough for the
/// exact region-bound arithmetic.
struct BigUint {
  std::vector<std::uint32_t> limbs;  // little-endian, each < 1e9

  static BigUint from_u64(std::uint64_t v);
  void mul_u32(std::uint32_t factor);
  std::string str() const;

  bool operator==(const BigUint& o) const { return limbs == o.limbs; }
  bool operator<(const BigUint& o) const;
  bool operator<=(const BigUint& o) const { return *this < o || *this == o; }
};

/// Exact k^(L-1) * k^n: linear regions a depth-L width-n maxout network with
/// k pieces can at least attain.
BigUint maxout_region_bound(long layers, long width, long pieces);

/// Exact floor(n/n0)^((L-1)*n0) * n^n0: the leading expression of the ReLU
/// lower bound (a witness, not an exact region count). Requires n >= n0.
BigUint relu_region_bound(long layers, long width, long input_width);

/// One captured layer's activations plus the softmax verdict for the image.
struct FeatureMapDump {
  std::string layer;
  Tensor maps;  // (1, C, H, W)
  double top_percent = 100.0;
  int top1 = 0, top2 = 0;
  double top1_prob = 0.0, top2_prob = 0.0;
};

/// Eval-mode forward of one image capturing the named layer's output and the
/// top-1/top-2 softmax candidates.
FeatureMapDump extract_feature_maps(Network& net, const Tensor& image,
                                    const std::string& layer_id, double top_percent);

/// Keeps the top ceil(p/100 * count) values of each channel (ties at the
/// threshold kept); everything below the threshold is zeroed.
Tensor threshold_top_percent(const Tensor& maps, double p);

/// Fraction of nonzero cells in channel c of (1,C,H,W) maps.
double kept_fraction(const Tensor& maps, int channel);

/// Min-max normalizes one map (1,1,H,W) to [0,255] and writes binary PGM
/// (P5). A zero-range map becomes an all-zero image.
void export_map_image(const Tensor& map, const std::string& path);

}  // namespace minnet
