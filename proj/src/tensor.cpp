#include "minnet/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

namespace minnet {

Tensor::Tensor(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
  if (n < 0 || c < 0 || h < 0 || w < 0) {
    throw InvalidInput("tensor: negative dimension in shape (" + std::to_string(n_) +
                       "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
                       std::to_string(w_) + ")");
  }
  data.assign(static_cast<std::size_t>(n) * c * h * w, 0.0);
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

ChannelMoments channel_moments(const Tensor& t) {
  const std::size_t count = static_cast<std::size_t>(t.n) * t.h * t.w;
  if (count == 0 || t.c == 0) {
    throw InvalidInput("channel_moments: empty tensor " + t.shape_str());
  }
  ChannelMoments m;
  m.mean.assign(t.c, 0.0);
  m.var.assign(t.c, 0.0);
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < t.c; ++ic) {
    double sum = 0.0;
    for (int in = 0; in < t.n; ++in) {
      const double* p = t.plane_ptr(in, ic);
      for (std::size_t i = 0; i < t.plane(); ++i) sum += p[i];
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (int in = 0; in < t.n; ++in) {
      const double* p = t.plane_ptr(in, ic);
      for (std::size_t i = 0; i < t.plane(); ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    }
    m.mean[ic] = mean;
    m.var[ic] = sq / static_cast<double>(count);
  }
  return m;
}

Tensor pad_spatial(const Tensor& t, int pad) {
  if (pad < 0) throw InvalidInput("pad_spatial: negative pad");
  if (pad == 0) return t;
  Tensor out(t.n, t.c, t.h + 2 * pad, t.w + 2 * pad);
  for (int in = 0; in < t.n; ++in) {
    for (int ic = 0; ic < t.c; ++ic) {
      const double* src = t.plane_ptr(in, ic);
      double* dst = out.plane_ptr(in, ic);
      for (int y = 0; y < t.h; ++y) {
        std::memcpy(dst + static_cast<std::size_t>(y + pad) * out.w + pad,
                    src + static_cast<std::size_t>(y) * t.w,
                    sizeof(double) * static_cast<std::size_t>(t.w));
      }
    }
  }
  return out;
}

Tensor center_crop(const Tensor& t, int out_h, int out_w) {
  if (out_h > t.h || out_w > t.w || out_h < 0 || out_w < 0) {
    throw InvalidInput("center_crop: crop " + std::to_string(out_h) + "x" +
                       std::to_string(out_w) + " does not fit in " + t.shape_str());
  }
  const int oy = (t.h - out_h) / 2;
  const int ox = (t.w - out_w) / 2;
  Tensor out(t.n, t.c, out_h, out_w);
  for (int in = 0; in < t.n; ++in)
    for (int ic = 0; ic < t.c; ++ic)
      for (int y = 0; y < out_h; ++y)
        std::memcpy(out.plane_ptr(in, ic) + static_cast<std::size_t>(y) * out_w,
                    t.plane_ptr(in, ic) + static_cast<std::size_t>(y + oy) * t.w + ox,
                    sizeof(double) * static_cast<std::size_t>(out_w));
  return out;
}

void gemm_nn(const double* a, std::size_t m, std::size_t k,
             const double* b, std::size_t p, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * p;
    if (!accumulate) std::fill(ci, ci + p, 0.0);
    const double* ai = a + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      if (av == 0.0) continue;
      const double* bk = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += av * bk[j];
    }
  }
}

void gemm_nt(const double* a, std::size_t m, std::size_t k,
             const double* b, std::size_t p, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * p;
    for (std::size_t j = 0; j < p; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      if (accumulate) ci[j] += s; else ci[j] = s;
    }
  }
}

void gemm_tn(const double* a, std::size_t k, std::size_t m,
             const double* b, std::size_t p, double* c, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * p;
    if (!accumulate) std::fill(ci, ci + p, 0.0);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a[kk * m + i];
      if (av == 0.0) continue;
      const double* bk = b + kk * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += av * bk[j];
    }
  }
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) {
    throw InvalidInput("matmul: inner dimensions disagree, " + std::to_string(a.rows) +
                       "x" + std::to_string(a.cols) + " * " + std::to_string(b.rows) +
                       "x" + std::to_string(b.cols));
  }
  Mat out(a.rows, b.cols);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(a.rows); ++i) {
    gemm_nn(a.v.data() + static_cast<std::size_t>(i) * a.cols, 1, a.cols,
            b.v.data(), b.cols, out.v.data() + static_cast<std::size_t>(i) * b.cols);
  }
  return out;
}

}  // namespace minnet
