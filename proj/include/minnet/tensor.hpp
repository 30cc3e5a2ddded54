#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "minnet/common.hpp"

namespace minnet {

/// Dense 4-D array of doubles in row-major (N, C, H, W) order.
/// Operations never leave NaN/Inf behind when fed finite inputs.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_);

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }

  double& at(int in, int ic, int iy, int ix) {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }
  double at(int in, int ic, int iy, int ix) const {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
  }

  // Start of the (in, ic) spatial plane.
  double* plane_ptr(int in, int ic) {
    return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane();
  }
  const double* plane_ptr(int in, int ic) const {
    return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane();
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_str() const;

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.n, t.c, t.h, t.w); }
};

struct ChannelMoments {
  std::vector<double> mean;
  std::vector<double> var;  // biased (divide by count)
};

/// Per-channel mean and biased variance taken over N, H, W.
/// Throws InvalidInput on an empty tensor.
ChannelMoments channel_moments(const Tensor& t);

/// Zero-pads the spatial dims by `pad` on every side.
Tensor pad_spatial(const Tensor& t, int pad);

/// Crops the spatial center region of size (out_h, out_w).
Tensor center_crop(const Tensor& t, int out_h, int out_w);

/// Row-major 2-D matrix.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

/// Standard matrix product. Throws InvalidInput on inner-dimension mismatch.
Mat matmul(const Mat& a, const Mat& b);

// Raw gemm kernels on row-major buffers. No threading inside; callers
// parallelize over disjoint outputs. Each output element is accumulated in a
// fixed sequential order, so results are reproducible.

/// c (m x p) = a (m x k) * b (k x p), overwriting unless accumulate.
void gemm_nn(const double* a, std::size_t m, std::size_t k,
             const double* b, std::size_t p, double* c, bool accumulate = false);

/// c (m x p) = a (m x k) * b (p x k)^T.
void gemm_nt(const double* a, std::size_t m, std::size_t k,
             const double* b, std::size_t p, double* c, bool accumulate = false);

/// c (m x p) = a (k x m)^T * b (k x p).
void gemm_tn(const double* a, std::size_t k, std::size_t m,
             const double* b, std::size_t p, double* c, bool accumulate = false);

}  // namespace minnet
