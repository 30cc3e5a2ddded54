#include "minnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace minnet {

namespace {

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
  return omp_get_thread_num();
#else
  return 0;
#endif
}

// cols is (in_channels*kh*kw) x (out_h*out_w), row-major. Out-of-range source
// cells read as zero, so padding never needs to be materialized.
void im2col(const Tensor& x, int n, const ConvParams& p, int out_h, int out_w,
            double* cols) {
  const std::size_t patch = static_cast<std::size_t>(out_h) * out_w;
  int r = 0;
  for (int ic = 0; ic < p.in_channels; ++ic) {
    const double* plane = x.plane_ptr(n, ic);
    for (int ky = 0; ky < p.kh; ++ky) {
      for (int kx = 0; kx < p.kw; ++kx, ++r) {
        double* dst = cols + r * patch;
        std::size_t j = 0;
        for (int oy = 0; oy < out_h; ++oy) {
          const int sy = oy * p.stride + ky - p.pad;
          if (sy < 0 || sy >= x.h) {
            for (int ox = 0; ox < out_w; ++ox) dst[j++] = 0.0;
            continue;
          }
          const double* row = plane + static_cast<std::size_t>(sy) * x.w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int sx = ox * p.stride + kx - p.pad;
            dst[j++] = (sx >= 0 && sx < x.w) ? row[sx] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvParams& p, int out_h, int out_w,
                Tensor& dx, int n) {
  const std::size_t patch = static_cast<std::size_t>(out_h) * out_w;
  int r = 0;
  for (int ic = 0; ic < p.in_channels; ++ic) {
    double* plane = dx.plane_ptr(n, ic);
    for (int ky = 0; ky < p.kh; ++ky) {
      for (int kx = 0; kx < p.kw; ++kx, ++r) {
        const double* src = cols + r * patch;
        std::size_t j = 0;
        for (int oy = 0; oy < out_h; ++oy) {
          const int sy = oy * p.stride + ky - p.pad;
          if (sy < 0 || sy >= dx.h) {
            j += out_w;
            continue;
          }
          double* row = plane + static_cast<std::size_t>(sy) * dx.w;
          for (int ox = 0; ox < out_w; ++ox, ++j) {
            const int sx = ox * p.stride + kx - p.pad;
            if (sx >= 0 && sx < dx.w) row[sx] += src[j];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvLayer
// ---------------------------------------------------------------------------

int ConvLayer::out_extent(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

ConvLayer::ConvLayer(std::string name, ConvParams p) : Layer(std::move(name)), p_(p) {
  if (p_.units < 1 || p_.in_channels < 1) fail_input("units and in_channels must be >= 1");
  if (p_.kh < 1 || p_.kw < 1) fail_input("kernel extents must be >= 1");
  if (p_.stride < 1) fail_input("stride must be >= 1");
  if (p_.pad < 0) fail_input("pad must be >= 0");
  const std::size_t wn = static_cast<std::size_t>(p_.units) * p_.in_channels * p_.kh * p_.kw;
  w_.assign(wn, 0.0);
  dw_.assign(wn, 0.0);
  b_.assign(p_.units, 0.0);
  db_.assign(p_.units, 0.0);
}

void ConvLayer::init_he(std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(p_.in_channels) * p_.kh * p_.kw;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& v : w_) v = dist(rng);
  std::fill(b_.begin(), b_.end(), 0.0);
}

Tensor ConvLayer::forward(const Tensor& x, Mode mode) {
  if (x.c != p_.in_channels) {
    fail_input("expected " + std::to_string(p_.in_channels) + " input channels, got shape " +
               x.shape_str());
  }
  if (x.h + 2 * p_.pad < p_.kh || x.w + 2 * p_.pad < p_.kw) {
    fail_input("kernel " + std::to_string(p_.kh) + "x" + std::to_string(p_.kw) +
               " does not fit input " + x.shape_str() + " with pad " + std::to_string(p_.pad));
  }
  const int oh = out_extent(x.h, p_.kh, p_.stride, p_.pad);
  const int ow = out_extent(x.w, p_.kw, p_.stride, p_.pad);
  const std::size_t patch = static_cast<std::size_t>(oh) * ow;
  const std::size_t kdim = static_cast<std::size_t>(p_.in_channels) * p_.kh * p_.kw;
  const bool direct = (p_.kh == 1 && p_.kw == 1 && p_.stride == 1 && p_.pad == 0);

  Tensor y(x.n, p_.units, oh, ow);
#pragma omp parallel
  {
    std::vector<double> cols;
#pragma omp for schedule(static)
    for (int in = 0; in < x.n; ++in) {
      const double* colp;
      if (direct) {
        colp = x.plane_ptr(in, 0);
      } else {
        cols.resize(kdim * patch);
        im2col(x, in, p_, oh, ow, cols.data());
        colp = cols.data();
      }
      double* yp = y.plane_ptr(in, 0);
      gemm_nn(w_.data(), p_.units, kdim, colp, patch, yp);
      for (int u = 0; u < p_.units; ++u) {
        const double bu = b_[u];
        double* row = yp + u * patch;
        for (std::size_t j = 0; j < patch; ++j) row[j] += bu;
      }
    }
  }
  if (mode == Mode::Train) {
    x_ = x;
    has_cache_ = true;
  } else {
    has_cache_ = false;
  }
  return y;
}

Tensor ConvLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) fail_state("backward without a train-mode forward cache");
  const int oh = out_extent(x_.h, p_.kh, p_.stride, p_.pad);
  const int ow = out_extent(x_.w, p_.kw, p_.stride, p_.pad);
  if (grad_out.n != x_.n || grad_out.c != p_.units || grad_out.h != oh || grad_out.w != ow) {
    fail_input("grad_out shape " + grad_out.shape_str() + " does not match forward output");
  }
  const std::size_t patch = static_cast<std::size_t>(oh) * ow;
  const std::size_t kdim = static_cast<std::size_t>(p_.in_channels) * p_.kh * p_.kw;
  const bool direct = (p_.kh == 1 && p_.kw == 1 && p_.stride == 1 && p_.pad == 0);

  Tensor dx = Tensor::zeros_like(x_);
  const int nth = max_threads();
  std::vector<std::vector<double>> pdw(nth), pdb(nth);

#pragma omp parallel
  {
    const int tid = thread_id();
    pdw[tid].assign(w_.size(), 0.0);
    pdb[tid].assign(b_.size(), 0.0);
    std::vector<double> cols, dcols;
#pragma omp for schedule(static)
    for (int in = 0; in < x_.n; ++in) {
      const double* gp = grad_out.plane_ptr(in, 0);
      for (int u = 0; u < p_.units; ++u) {
        const double* row = gp + u * patch;
        double s = 0.0;
        for (std::size_t j = 0; j < patch; ++j) s += row[j];
        pdb[tid][u] += s;
      }
      const double* colp;
      if (direct) {
        colp = x_.plane_ptr(in, 0);
      } else {
        cols.resize(kdim * patch);
        im2col(x_, in, p_, oh, ow, cols.data());
        colp = cols.data();
      }
      gemm_nt(gp, p_.units, patch, colp, kdim, pdw[tid].data(), true);
      if (direct) {
        gemm_tn(w_.data(), p_.units, kdim, gp, patch, dx.plane_ptr(in, 0));
      } else {
        dcols.resize(kdim * patch);
        gemm_tn(w_.data(), p_.units, kdim, gp, patch, dcols.data());
        col2im_add(dcols.data(), p_, oh, ow, dx, in);
      }
    }
  }
  // fixed-order reduction keeps results reproducible for a given thread count
  for (int t = 0; t < nth; ++t) {
    if (pdw[t].empty()) continue;
    for (std::size_t i = 0; i < w_.size(); ++i) dw_[i] += pdw[t][i];
    for (std::size_t i = 0; i < b_.size(); ++i) db_[i] += pdb[t][i];
  }
  return dx;
}

void ConvLayer::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name() + ".weight", &w_, &dw_, true});
  out.push_back({name() + ".bias", &b_, &db_, true});
}

std::vector<std::uint32_t> ConvLayer::spec_ints() const {
  return {static_cast<std::uint32_t>(p_.units), static_cast<std::uint32_t>(p_.in_channels),
          static_cast<std::uint32_t>(p_.kh),    static_cast<std::uint32_t>(p_.kw),
          static_cast<std::uint32_t>(p_.stride), static_cast<std::uint32_t>(p_.pad)};
}

// ---------------------------------------------------------------------------
// BatchNormLayer
// ---------------------------------------------------------------------------

BatchNormLayer::BatchNormLayer(std::string name, int channels, double epsilon,
                               double momentum)
    : Layer(std::move(name)), channels_(channels), epsilon_(epsilon), momentum_(momentum) {
  if (channels_ < 1) fail_input("channels must be >= 1");
  if (epsilon_ <= 0.0) fail_input("epsilon must be > 0");
  if (momentum_ <= 0.0 || momentum_ >= 1.0) fail_input("momentum must be in (0,1)");
  gamma_.assign(channels_, 1.0);
  beta_.assign(channels_, 0.0);
  dgamma_.assign(channels_, 0.0);
  dbeta_.assign(channels_, 0.0);
  running_mean_.assign(channels_, 0.0);
  running_var_.assign(channels_, 1.0);
}

void BatchNormLayer::set_running(std::vector<double> mean, std::vector<double> var) {
  if (mean.size() != static_cast<std::size_t>(channels_) || var.size() != mean.size()) {
    fail_input("running stats size mismatch");
  }
  running_mean_ = std::move(mean);
  running_var_ = std::move(var);
  initialized_ = true;
}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode) {
  if (x.c != channels_) {
    fail_input("expected " + std::to_string(channels_) + " channels, got shape " + x.shape_str());
  }
  const std::size_t m = static_cast<std::size_t>(x.n) * x.h * x.w;
  Tensor y = Tensor::zeros_like(x);
  inv_std_.assign(channels_, 0.0);

  const bool batch_path = (mode == Mode::Train && !frozen_);
  if (batch_path) {
    if (m < 2) fail_input("train mode needs N*H*W >= 2 per channel, got shape " + x.shape_str());
    const ChannelMoments mom = channel_moments(x);
    xhat_ = Tensor::zeros_like(x);
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < channels_; ++ic) {
      const double mu = mom.mean[ic];
      const double is = 1.0 / std::sqrt(mom.var[ic] + epsilon_);
      inv_std_[ic] = is;
      const double g = gamma_[ic], bt = beta_[ic];
      for (int in = 0; in < x.n; ++in) {
        const double* xp = x.plane_ptr(in, ic);
        double* hp = xhat_.plane_ptr(in, ic);
        double* yp = y.plane_ptr(in, ic);
        for (std::size_t i = 0; i < x.plane(); ++i) {
          const double h = (xp[i] - mu) * is;
          hp[i] = h;
          yp[i] = g * h + bt;
        }
      }
    }
    for (int ic = 0; ic < channels_; ++ic) {
      running_mean_[ic] = momentum_ * running_mean_[ic] + (1.0 - momentum_) * mom.mean[ic];
      running_var_[ic] = momentum_ * running_var_[ic] + (1.0 - momentum_) * mom.var[ic];
    }
    initialized_ = true;
    cache_path_ = CachePath::Batch;
  } else {
    if (!initialized_) fail_state("eval mode before any running-stat update");
    const bool keep_cache = (mode == Mode::Train);
    if (keep_cache) xhat_ = Tensor::zeros_like(x);
#pragma omp parallel for schedule(static)
    for (int ic = 0; ic < channels_; ++ic) {
      const double mu = running_mean_[ic];
      const double is = 1.0 / std::sqrt(running_var_[ic] + epsilon_);
      inv_std_[ic] = is;
      const double g = gamma_[ic], bt = beta_[ic];
      for (int in = 0; in < x.n; ++in) {
        const double* xp = x.plane_ptr(in, ic);
        double* yp = y.plane_ptr(in, ic);
        double* hp = keep_cache ? xhat_.plane_ptr(in, ic) : nullptr;
        for (std::size_t i = 0; i < x.plane(); ++i) {
          const double h = (xp[i] - mu) * is;
          if (hp) hp[i] = h;
          yp[i] = g * h + bt;
        }
      }
    }
    cache_path_ = keep_cache ? CachePath::Running : CachePath::None;
  }
  return y;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
  if (cache_path_ == CachePath::None) fail_state("backward without a train-mode forward cache");
  if (!grad_out.same_shape(xhat_)) {
    fail_input("grad_out shape " + grad_out.shape_str() + " does not match forward output");
  }
  Tensor dx = Tensor::zeros_like(grad_out);
  const double m = static_cast<double>(static_cast<std::size_t>(grad_out.n) * grad_out.h *
                                       grad_out.w);
#pragma omp parallel for schedule(static)
  for (int ic = 0; ic < channels_; ++ic) {
    const double g = gamma_[ic];
    const double is = inv_std_[ic];
    double sum_dy = 0.0, sum_dy_h = 0.0;
    for (int in = 0; in < grad_out.n; ++in) {
      const double* gp = grad_out.plane_ptr(in, ic);
      const double* hp = xhat_.plane_ptr(in, ic);
      for (std::size_t i = 0; i < grad_out.plane(); ++i) {
        sum_dy += gp[i];
        sum_dy_h += gp[i] * hp[i];
      }
    }
    dgamma_[ic] += sum_dy_h;
    dbeta_[ic] += sum_dy;
    if (cache_path_ == CachePath::Batch) {
      const double s1 = g * sum_dy / m;
      const double s2 = g * sum_dy_h / m;
      for (int in = 0; in < grad_out.n; ++in) {
        const double* gp = grad_out.plane_ptr(in, ic);
        const double* hp = xhat_.plane_ptr(in, ic);
        double* dp = dx.plane_ptr(in, ic);
        for (std::size_t i = 0; i < grad_out.plane(); ++i) {
          dp[i] = is * (g * gp[i] - s1 - hp[i] * s2);
        }
      }
    } else {
      const double scale = g * is;
      for (int in = 0; in < grad_out.n; ++in) {
        const double* gp = grad_out.plane_ptr(in, ic);
        double* dp = dx.plane_ptr(in, ic);
        for (std::size_t i = 0; i < grad_out.plane(); ++i) dp[i] = scale * gp[i];
      }
    }
  }
  return dx;
}

void BatchNormLayer::collect_params(std::vector<ParamRef>& out) {
  out.push_back({name() + ".gamma", &gamma_, &dgamma_, false});
  out.push_back({name() + ".beta", &beta_, &dbeta_, false});
}

void BatchNormLayer::collect_stats(std::vector<StatRef>& out) {
  out.push_back({name(), &running_mean_, &running_var_, &initialized_});
}

std::vector<std::uint32_t> BatchNormLayer::spec_ints() const {
  return {static_cast<std::uint32_t>(channels_)};
}

// ---------------------------------------------------------------------------
// MaxoutMlpLayer
// ---------------------------------------------------------------------------

MaxoutMlpLayer::MaxoutMlpLayer(std::string name, int units, int in_channels, int pieces,
                               double bn_epsilon, double bn_momentum)
    : Layer(std::move(name)), units_(units), in_channels_(in_channels), pieces_(pieces) {
  if (pieces_ < 1) fail_input("pieces must be >= 1");
  if (pieces_ > 255) fail_input("pieces must be <= 255");
  for (int m = 0; m < pieces_; ++m) {
    const std::string base = this->name() + ".piece" + std::to_string(m);
    convs_.push_back(std::make_unique<ConvLayer>(
        base, ConvParams{units_, in_channels_, 1, 1, 1, 0}));
    bns_.push_back(std::make_unique<BatchNormLayer>(base + ".bn", units_, bn_epsilon,
                                                    bn_momentum));
  }
}

void MaxoutMlpLayer::init_he(std::mt19937_64& rng) {
  for (auto& c : convs_) c->init_he(rng);
}

void MaxoutMlpLayer::set_frozen(bool f) {
  for (auto& bn : bns_) bn->set_frozen(f);
}

Tensor MaxoutMlpLayer::forward(const Tensor& x, Mode mode) {
  if (x.c != in_channels_) {
    fail_input("expected " + std::to_string(in_channels_) + " input channels, got shape " +
               x.shape_str());
  }
  Tensor y = bns_[0]->forward(convs_[0]->forward(x, mode), mode);
  argmax_.assign(y.size(), 0);
  for (int m = 1; m < pieces_; ++m) {
    const Tensor um = bns_[m]->forward(convs_[m]->forward(x, mode), mode);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(y.size()); ++i) {
      if (um.data[i] > y.data[i]) {  // ties keep the lowest piece index
        y.data[i] = um.data[i];
        argmax_[i] = static_cast<std::uint8_t>(m);
      }
    }
  }
  has_cache_ = (mode == Mode::Train);
  return y;
}

Tensor MaxoutMlpLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) fail_state("backward without a train-mode forward cache");
  if (grad_out.size() != argmax_.size()) {
    fail_input("grad_out shape " + grad_out.shape_str() + " does not match forward output");
  }
  Tensor grad_in;
  for (int m = 0; m < pieces_; ++m) {
    Tensor gm = Tensor::zeros_like(grad_out);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(grad_out.size()); ++i) {
      if (argmax_[i] == m) gm.data[i] = grad_out.data[i];
    }
    Tensor gx = convs_[m]->backward(bns_[m]->backward(gm));
    if (m == 0) {
      grad_in = std::move(gx);
    } else {
      for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in.data[i] += gx.data[i];
    }
  }
  return grad_in;
}

void MaxoutMlpLayer::collect_params(std::vector<ParamRef>& out) {
  for (int m = 0; m < pieces_; ++m) {
    convs_[m]->collect_params(out);
    bns_[m]->collect_params(out);
  }
}

void MaxoutMlpLayer::collect_stats(std::vector<StatRef>& out) {
  for (auto& bn : bns_) bn->collect_stats(out);
}

std::vector<std::uint32_t> MaxoutMlpLayer::spec_ints() const {
  return {static_cast<std::uint32_t>(units_), static_cast<std::uint32_t>(in_channels_),
          static_cast<std::uint32_t>(pieces_)};
}

// ---------------------------------------------------------------------------
// MlpconvReluLayer
// ---------------------------------------------------------------------------

MlpconvReluLayer::MlpconvReluLayer(std::string name, int mid_units, int out_units,
                                   int in_channels)
    : Layer(name),
      c1_(name + ".fc1", ConvParams{mid_units, in_channels, 1, 1, 1, 0}),
      c2_(name + ".fc2", ConvParams{out_units, mid_units, 1, 1, 1, 0}) {}

void MlpconvReluLayer::init_he(std::mt19937_64& rng) {
  c1_.init_he(rng);
  c2_.init_he(rng);
}

Tensor MlpconvReluLayer::forward(const Tensor& x, Mode mode) {
  Tensor f1 = c1_.forward(x, mode);
  mask1_.assign(f1.size(), 0);
  for (std::size_t i = 0; i < f1.size(); ++i) {
    if (f1.data[i] > 0.0) {
      mask1_[i] = 1;
    } else {
      f1.data[i] = 0.0;
    }
  }
  Tensor y = c2_.forward(f1, mode);
  mask2_.assign(y.size(), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y.data[i] > 0.0) {
      mask2_[i] = 1;
    } else {
      y.data[i] = 0.0;
    }
  }
  has_cache_ = (mode == Mode::Train);
  return y;
}

Tensor MlpconvReluLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) fail_state("backward without a train-mode forward cache");
  if (grad_out.size() != mask2_.size()) {
    fail_input("grad_out shape " + grad_out.shape_str() + " does not match forward output");
  }
  Tensor g2 = grad_out;
  for (std::size_t i = 0; i < g2.size(); ++i) {
    if (!mask2_[i]) g2.data[i] = 0.0;
  }
  Tensor gf1 = c2_.backward(g2);
  for (std::size_t i = 0; i < gf1.size(); ++i) {
    if (!mask1_[i]) gf1.data[i] = 0.0;
  }
  return c1_.backward(gf1);
}

void MlpconvReluLayer::collect_params(std::vector<ParamRef>& out) {
  c1_.collect_params(out);
  c2_.collect_params(out);
}

std::vector<std::uint32_t> MlpconvReluLayer::spec_ints() const {
  const auto& a = c1_.conv_params();
  const auto& b = c2_.conv_params();
  return {static_cast<std::uint32_t>(a.units), static_cast<std::uint32_t>(b.units),
          static_cast<std::uint32_t>(a.in_channels)};
}

// ---------------------------------------------------------------------------
// ReluLayer
// ---------------------------------------------------------------------------

Tensor ReluLayer::forward(const Tensor& x, Mode mode) {
  Tensor y = x;
  mask_.assign(y.size(), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y.data[i] > 0.0) {
      mask_[i] = 1;
    } else {
      y.data[i] = 0.0;
    }
  }
  has_cache_ = (mode == Mode::Train);
  return y;
}

Tensor ReluLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) fail_state("backward without a train-mode forward cache");
  if (grad_out.size() != mask_.size()) {
    fail_input("grad_out shape " + grad_out.shape_str() + " does not match forward output");
  }
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!mask_[i]) dx.data[i] = 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// PoolLayer
// ---------------------------------------------------------------------------

const char* pool_mode_name(PoolMode m) {
  switch (m) {
    case PoolMode::Avg: return "avg";
    case PoolMode::Max: return "max";
    case PoolMode::GlobalAvg: return "global_avg";
  }
  return "?";
}

int PoolLayer::out_extent(int in, int size, int stride) {
  int out = (in - size + stride - 1) / stride + 1;  // ceil: clipped windows allowed
  if ((out - 1) * stride >= in) --out;
  return out;
}

PoolLayer::PoolLayer(std::string name, PoolSpec spec) : Layer(std::move(name)), spec_(spec) {
  if (spec_.mode != PoolMode::GlobalAvg && (spec_.size < 1 || spec_.stride < 1)) {
    fail_input("pool size and stride must be >= 1");
  }
}

Tensor PoolLayer::forward(const Tensor& x, Mode mode) {
  in_n_ = x.n;
  in_c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  if (spec_.mode == PoolMode::GlobalAvg) {
    Tensor y(x.n, x.c, 1, 1);
    const double inv = 1.0 / static_cast<double>(x.plane());
#pragma omp parallel for schedule(static)
    for (long pl = 0; pl < static_cast<long>(x.n) * x.c; ++pl) {
      const double* p = x.data.data() + pl * x.plane();
      double s = 0.0;
      for (std::size_t i = 0; i < x.plane(); ++i) s += p[i];
      y.data[pl] = s * inv;
    }
    has_cache_ = (mode == Mode::Train);
    return y;
  }

  if (x.h < spec_.size || x.w < spec_.size) {
    fail_input("input " + x.shape_str() + " smaller than pool window " +
               std::to_string(spec_.size));
  }
  const int oh = out_extent(x.h, spec_.size, spec_.stride);
  const int ow = out_extent(x.w, spec_.size, spec_.stride);
  Tensor y(x.n, x.c, oh, ow);
  if (spec_.mode == PoolMode::Max) max_idx_.assign(y.size(), -1);

#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < static_cast<long>(x.n) * x.c; ++pl) {
    const double* src = x.data.data() + pl * x.plane();
    double* dst = y.data.data() + pl * static_cast<std::size_t>(oh) * ow;
    std::int32_t* idx =
        spec_.mode == PoolMode::Max ? max_idx_.data() + pl * static_cast<std::size_t>(oh) * ow
                                    : nullptr;
    for (int oy = 0; oy < oh; ++oy) {
      const int sy = oy * spec_.stride;
      const int ey = std::min(sy + spec_.size, x.h);
      for (int ox = 0; ox < ow; ++ox) {
        const int sx = ox * spec_.stride;
        const int ex = std::min(sx + spec_.size, x.w);
        if (spec_.mode == PoolMode::Avg) {
          double s = 0.0;
          for (int yy = sy; yy < ey; ++yy)
            for (int xx = sx; xx < ex; ++xx) s += src[yy * x.w + xx];
          dst[oy * ow + ox] = s / static_cast<double>((ey - sy) * (ex - sx));
        } else {
          double best = src[sy * x.w + sx];
          std::int32_t bi = sy * x.w + sx;
          for (int yy = sy; yy < ey; ++yy) {
            for (int xx = sx; xx < ex; ++xx) {
              const double v = src[yy * x.w + xx];
              if (v > best) {  // first max in scan order wins ties
                best = v;
                bi = yy * x.w + xx;
              }
            }
          }
          dst[oy * ow + ox] = best;
          idx[oy * ow + ox] = bi;
        }
      }
    }
  }
  has_cache_ = (mode == Mode::Train);
  return y;
}

Tensor PoolLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) fail_state("backward without a train-mode forward cache");
  Tensor dx(in_n_, in_c_, in_h_, in_w_);

  if (spec_.mode == PoolMode::GlobalAvg) {
    if (grad_out.n != in_n_ || grad_out.c != in_c_ || grad_out.h != 1 || grad_out.w != 1) {
      fail_input("grad_out shape " + grad_out.shape_str() + " does not match forward output");
    }
    const double inv = 1.0 / static_cast<double>(dx.plane());
#pragma omp parallel for schedule(static)
    for (long pl = 0; pl < static_cast<long>(in_n_) * in_c_; ++pl) {
      const double g = grad_out.data[pl] * inv;
      double* p = dx.data.data() + pl * dx.plane();
      for (std::size_t i = 0; i < dx.plane(); ++i) p[i] = g;
    }
    return dx;
  }

  const int oh = out_extent(in_h_, spec_.size, spec_.stride);
  const int ow = out_extent(in_w_, spec_.size, spec_.stride);
  if (grad_out.n != in_n_ || grad_out.c != in_c_ || grad_out.h != oh || grad_out.w != ow) {
    fail_input("grad_out shape " + grad_out.shape_str() + " does not match forward output");
  }
#pragma omp parallel for schedule(static)
  for (long pl = 0; pl < static_cast<long>(in_n_) * in_c_; ++pl) {
    const double* gp = grad_out.data.data() + pl * static_cast<std::size_t>(oh) * ow;
    double* dp = dx.data.data() + pl * dx.plane();
    if (spec_.mode == PoolMode::Max) {
      const std::int32_t* idx = max_idx_.data() + pl * static_cast<std::size_t>(oh) * ow;
      for (int j = 0; j < oh * ow; ++j) dp[idx[j]] += gp[j];
    } else {
      for (int oy = 0; oy < oh; ++oy) {
        const int sy = oy * spec_.stride;
        const int ey = std::min(sy + spec_.size, in_h_);
        for (int ox = 0; ox < ow; ++ox) {
          const int sx = ox * spec_.stride;
          const int ex = std::min(sx + spec_.size, in_w_);
          const double g = gp[oy * ow + ox] / static_cast<double>((ey - sy) * (ex - sx));
          for (int yy = sy; yy < ey; ++yy)
            for (int xx = sx; xx < ex; ++xx) dp[yy * in_w_ + xx] += g;
        }
      }
    }
  }
  return dx;
}

std::vector<std::uint32_t> PoolLayer::spec_ints() const {
  return {static_cast<std::uint32_t>(spec_.mode), static_cast<std::uint32_t>(spec_.size),
          static_cast<std::uint32_t>(spec_.stride)};
}

// ---------------------------------------------------------------------------
// DropoutLayer
// ---------------------------------------------------------------------------

DropoutLayer::DropoutLayer(std::string name, DropoutSpec spec)
    : Layer(std::move(name)), spec_(spec), engine_(spec.rng_seed) {
  if (spec_.rate < 0.0 || spec_.rate >= 1.0) fail_input("dropout rate must be in [0,1)");
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode) {
  if (mode == Mode::Eval || spec_.rate == 0.0) {
    identity_ = true;
    has_cache_ = (mode == Mode::Train);
    return x;
  }
  identity_ = false;
  const double scale = 1.0 / (1.0 - spec_.rate);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  mask_.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask_[i] = (unif(engine_) < spec_.rate) ? 0.0 : scale;
  }
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] *= mask_[i];
  has_cache_ = true;
  return y;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
  if (!has_cache_) fail_state("backward without a train-mode forward cache");
  if (identity_) return grad_out;
  if (grad_out.size() != mask_.size()) {
    fail_input("grad_out shape " + grad_out.shape_str() + " does not match forward output");
  }
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask_[i];
  return dx;
}

std::vector<std::uint32_t> DropoutLayer::spec_ints() const {
  return {static_cast<std::uint32_t>(std::llround(spec_.rate * 1e6))};
}

// ---------------------------------------------------------------------------
// softmax_xent
// ---------------------------------------------------------------------------

SoftmaxResult softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.h != 1 || logits.w != 1) {
    throw InvalidInput("softmax_xent: logits must be (N,classes,1,1), got " +
                       logits.shape_str());
  }
  if (labels.size() != static_cast<std::size_t>(logits.n)) {
    throw InvalidInput("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(logits.n) + " rows");
  }
  const int classes = logits.c;
  for (int label : labels) {
    if (label < 0 || label >= classes) {
      throw InvalidInput("softmax_xent: label " + std::to_string(label) + " out of [0," +
                         std::to_string(classes) + ")");
    }
  }
  SoftmaxResult r;
  r.probs = Tensor(logits.n, classes, 1, 1);
  r.grad = Tensor(logits.n, classes, 1, 1);
  const double invn = 1.0 / static_cast<double>(logits.n);
  double loss = 0.0;
  for (int in = 0; in < logits.n; ++in) {
    const double* z = logits.data.data() + static_cast<std::size_t>(in) * classes;
    double* p = r.probs.data.data() + static_cast<std::size_t>(in) * classes;
    double* g = r.grad.data.data() + static_cast<std::size_t>(in) * classes;
    double mx = z[0];
    for (int ic = 1; ic < classes; ++ic) mx = std::max(mx, z[ic]);
    double sum = 0.0;
    for (int ic = 0; ic < classes; ++ic) sum += std::exp(z[ic] - mx);
    const double lse = mx + std::log(sum);
    for (int ic = 0; ic < classes; ++ic) {
      p[ic] = std::exp(z[ic] - mx) / sum;
      g[ic] = p[ic] * invn;
    }
    g[labels[in]] -= invn;
    loss += lse - z[labels[in]];
  }
  r.loss = loss * invn;
  return r;
}

}  // namespace minnet
