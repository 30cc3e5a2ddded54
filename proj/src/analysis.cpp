#include "minnet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace minnet {

namespace {
constexpr std::uint32_t kBase = 1000000000u;
}

BigUint BigUint::from_u64(std::uint64_t v) {
  BigUint b;
  do {
    b.limbs.push_back(static_cast<std::uint32_t>(v % kBase));
    v /= kBase;
  } while (v != 0);
  return b;
}

void BigUint::mul_u32(std::uint32_t factor) {
  std::uint64_t carry = 0;
  for (std::uint32_t& limb : limbs) {
    const std::uint64_t cur = static_cast<std::uint64_t>(limb) * factor + carry;
    limb = static_cast<std::uint32_t>(cur % kBase);
    carry = cur / kBase;
  }
  while (carry != 0) {
    limbs.push_back(static_cast<std::uint32_t>(carry % kBase));
    carry /= kBase;
  }
}

std::string BigUint::str() const {
  if (limbs.empty()) return "0";
  std::string s = std::to_string(limbs.back());
  for (auto it = limbs.rbegin() + 1; it != limbs.rend(); ++it) {
    std::string part = std::to_string(*it);
    s += std::string(9 - part.size(), '0') + part;
  }
  return s;
}

bool BigUint::operator<(const BigUint& o) const {
  if (limbs.size() != o.limbs.size()) return limbs.size() < o.limbs.size();
  for (std::size_t i = limbs.size(); i-- > 0;) {
    if (limbs[i] != o.limbs[i]) return limbs[i] < o.limbs[i];
  }
  return false;
}

namespace {

BigUint pow_u32(std::uint64_t base, long exponent) {
  BigUint r = BigUint::from_u64(1);
  if (base > 0xffffffffull) throw InvalidInput("region bound: base too large");
  for (long i = 0; i < exponent; ++i) r.mul_u32(static_cast<std::uint32_t>(base));
  return r;
}

}  // namespace

BigUint maxout_region_bound(long layers, long width, long pieces) {
  if (layers < 1 || width < 1 || pieces < 1) {
    throw InvalidInput("maxout_region_bound: L, n, k must all be >= 1");
  }
  // k^(L-1) * k^n = k^(L-1+n)
  return pow_u32(static_cast<std::uint64_t>(pieces), layers - 1 + width);
}

BigUint relu_region_bound(long layers, long width, long input_width) {
  if (layers < 1 || input_width < 1) {
    throw InvalidInput("relu_region_bound: L and n0 must be >= 1");
  }
  if (width < input_width) {
    throw InvalidInput("relu_region_bound: requires width n >= input width n0");
  }
  const std::uint64_t ratio = static_cast<std::uint64_t>(width / input_width);
  BigUint r = pow_u32(ratio, (layers - 1) * input_width);
  for (long i = 0; i < input_width; ++i) r.mul_u32(static_cast<std::uint32_t>(width));
  return r;
}

FeatureMapDump extract_feature_maps(Network& net, const Tensor& image,
                                    const std::string& layer_id, double top_percent) {
  if (image.n != 1) {
    throw InvalidInput("extract_feature_maps: expected a single image, got " +
                       image.shape_str());
  }
  if (top_percent <= 0.0 || top_percent > 100.0) {
    throw InvalidInput("extract_feature_maps: top percent must be in (0,100]");
  }
  Network::Tap tap = net.forward_tap(image, layer_id);

  FeatureMapDump dump;
  dump.layer = layer_id;
  dump.maps = std::move(tap.activation);
  dump.top_percent = top_percent;

  // softmax over the logits row
  const int classes = tap.logits.c;
  if (classes < 2 || tap.logits.h != 1 || tap.logits.w != 1) {
    throw InvalidInput("extract_feature_maps: network head is not (1,classes,1,1)");
  }
  std::vector<double> probs(classes);
  double mx = tap.logits.data[0];
  for (int ic = 1; ic < classes; ++ic) mx = std::max(mx, tap.logits.data[ic]);
  double sum = 0.0;
  for (int ic = 0; ic < classes; ++ic) sum += std::exp(tap.logits.data[ic] - mx);
  for (int ic = 0; ic < classes; ++ic) probs[ic] = std::exp(tap.logits.data[ic] - mx) / sum;

  int top1 = 0;
  for (int ic = 1; ic < classes; ++ic) {
    if (probs[ic] > probs[top1]) top1 = ic;
  }
  int top2 = (top1 == 0) ? 1 : 0;
  for (int ic = 0; ic < classes; ++ic) {
    if (ic != top1 && probs[ic] > probs[top2]) top2 = ic;
  }
  dump.top1 = top1;
  dump.top2 = top2;
  dump.top1_prob = probs[top1];
  dump.top2_prob = probs[top2];
  return dump;
}

Tensor threshold_top_percent(const Tensor& maps, double p) {
  if (p <= 0.0 || p > 100.0) {
    throw InvalidInput("threshold_top_percent: p must be in (0,100]");
  }
  Tensor out = maps;
  const std::size_t count = maps.plane();
  if (count == 0) return out;
  std::vector<double> sorted(count);
  for (int in = 0; in < maps.n; ++in) {
    for (int ic = 0; ic < maps.c; ++ic) {
      const double* src = maps.plane_ptr(in, ic);
      std::copy(src, src + count, sorted.begin());
      std::sort(sorted.begin(), sorted.end());
      // keep the m-th largest value and everything above it, ties included
      const std::size_t keep = static_cast<std::size_t>(
          std::ceil(p / 100.0 * static_cast<double>(count)));
      const double threshold = sorted[count - std::min(keep, count)];
      double* dst = out.plane_ptr(in, ic);
      for (std::size_t i = 0; i < count; ++i) {
        if (dst[i] < threshold) dst[i] = 0.0;
      }
    }
  }
  return out;
}

double kept_fraction(const Tensor& maps, int channel) {
  if (channel < 0 || channel >= maps.c) {
    throw InvalidInput("kept_fraction: channel out of range");
  }
  const double* p = maps.plane_ptr(0, channel);
  std::size_t nz = 0;
  for (std::size_t i = 0; i < maps.plane(); ++i) {
    if (p[i] != 0.0) ++nz;
  }
  return static_cast<double>(nz) / static_cast<double>(maps.plane());
}

void export_map_image(const Tensor& map, const std::string& path) {
  if (map.n != 1 || map.c != 1) {
    throw InvalidInput("export_map_image: expected a single map (1,1,H,W), got " +
                       map.shape_str());
  }
  double lo = map.data[0], hi = map.data[0];
  for (double v : map.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double range = hi - lo;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("export_map_image: cannot open '" + path + "' for writing");
  os << "P5\n" << map.w << " " << map.h << "\n255\n";
  for (double v : map.data) {
    const int q = (range > 0.0) ? static_cast<int>(std::lround((v - lo) * 255.0 / range)) : 0;
    os.put(static_cast<char>(static_cast<unsigned char>(std::clamp(q, 0, 255))));
  }
  if (!os) throw IoError("export_map_image: write to '" + path + "' failed");
}

}  // namespace minnet
