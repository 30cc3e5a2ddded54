#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "minnet/tensor.hpp"

namespace minnet {

/// One learnable parameter array and its gradient slot.
struct ParamRef {
  std::string name;
  std::vector<double>* value;
  std::vector<double>* grad;
  bool decay;  // weight decay applies
};

/// Batch-norm running statistics, exposed for checkpointing.
struct StatRef {
  std::string name;
  std::vector<double>* mean;
  std::vector<double>* var;
  bool* initialized;
};

/// Base class for all network layers. A layer owns its parameters, gradients
/// and the cache written by the most recent train-mode forward. backward()
/// accumulates into parameter gradients and returns the gradient w.r.t. the
/// layer input.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  virtual const char* kind() const = 0;
  const std::string& name() const { return name_; }

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual void collect_params(std::vector<ParamRef>&) {}
  virtual void collect_stats(std::vector<StatRef>&) {}

  /// Shape-identifying integers written to checkpoints.
  virtual std::vector<std::uint32_t> spec_ints() const = 0;

 protected:
  [[noreturn]] void fail_input(const std::string& msg) const {
    throw InvalidInput("layer '" + name_ + "': " + msg);
  }
  [[noreturn]] void fail_state(const std::string& msg) const {
    throw InvalidState("layer '" + name_ + "': " + msg);
  }

 private:
  std::string name_;
};

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

struct ConvParams {
  int units = 0;
  int in_channels = 0;
  int kh = 1, kw = 1;
  int stride = 1;
  int pad = 0;
};

/// Linear convolution, no activation. Reference path is im2col + matmul;
/// 1x1/stride-1/no-pad kernels skip the im2col copy.
class ConvLayer : public Layer {
 public:
  ConvLayer(std::string name, ConvParams p);

  const char* kind() const override { return "conv"; }

  /// Gaussian weights with sd sqrt(2/fan_in); zero biases.
  void init_he(std::mt19937_64& rng);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::vector<std::uint32_t> spec_ints() const override;

  const ConvParams& conv_params() const { return p_; }
  std::vector<double>& weights() { return w_; }
  std::vector<double>& bias() { return b_; }

  static int out_extent(int in, int kernel, int stride, int pad);

 private:
  ConvParams p_;
  std::vector<double> w_, b_, dw_, db_;
  Tensor x_;
  bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

/// Per-channel standardization by batch statistics with learnable scale and
/// shift. Train mode normalizes with batch moments and updates running stats
/// as running <- momentum*running + (1-momentum)*batch; eval mode (or a
/// frozen layer) normalizes with the running stats.
class BatchNormLayer : public Layer {
 public:
  BatchNormLayer(std::string name, int channels, double epsilon = 1e-5,
                 double momentum = 0.9);

  const char* kind() const override { return "batchnorm"; }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void collect_stats(std::vector<StatRef>& out) override;
  std::vector<std::uint32_t> spec_ints() const override;

  /// When frozen, train-mode forwards also use the running statistics
  /// (gradients then treat the normalization as a fixed affine map).
  void set_frozen(bool f) { frozen_ = f; }

  int channels() const { return channels_; }
  double epsilon() const { return epsilon_; }
  std::vector<double>& gamma() { return gamma_; }
  std::vector<double>& beta() { return beta_; }
  std::vector<double>& running_mean() { return running_mean_; }
  std::vector<double>& running_var() { return running_var_; }
  bool initialized() const { return initialized_; }
  void set_running(std::vector<double> mean, std::vector<double> var);

 private:
  enum class CachePath { None, Batch, Running };

  int channels_;
  double epsilon_, momentum_;
  bool frozen_ = false;
  std::vector<double> gamma_, beta_, dgamma_, dbeta_;
  std::vector<double> running_mean_, running_var_;
  bool initialized_ = false;

  Tensor xhat_;
  std::vector<double> inv_std_;
  CachePath cache_path_ = CachePath::None;
};

// ---------------------------------------------------------------------------
// Maxout MLP (1x1 conv pieces, per-piece BN, cross-channel max)
// ---------------------------------------------------------------------------

/// k affine pieces, each a 1x1 convolution followed by its own batch
/// normalization; the output is the elementwise max across pieces. The argmax
/// piece per location is recorded and is the only piece that receives
/// gradient (ties break toward the lowest piece index).
class MaxoutMlpLayer : public Layer {
 public:
  MaxoutMlpLayer(std::string name, int units, int in_channels, int pieces,
                 double bn_epsilon = 1e-5, double bn_momentum = 0.9);

  const char* kind() const override { return "maxout_mlp"; }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  void collect_stats(std::vector<StatRef>& out) override;
  std::vector<std::uint32_t> spec_ints() const override;

  void set_frozen(bool f);

  int units() const { return units_; }
  int in_channels() const { return in_channels_; }
  int pieces() const { return pieces_; }
  ConvLayer& piece_conv(int m) { return *convs_[m]; }
  BatchNormLayer& piece_bn(int m) { return *bns_[m]; }
  const std::vector<std::uint8_t>& argmax() const { return argmax_; }

  void init_he(std::mt19937_64& rng);

 private:
  int units_, in_channels_, pieces_;
  std::vector<std::unique_ptr<ConvLayer>> convs_;
  std::vector<std::unique_ptr<BatchNormLayer>> bns_;
  std::vector<std::uint8_t> argmax_;
  Tensor x_;
  bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// mlpconv MLP (two 1x1 convs with ReLU): the NIN building block
// ---------------------------------------------------------------------------

class MlpconvReluLayer : public Layer {
 public:
  MlpconvReluLayer(std::string name, int mid_units, int out_units, int in_channels);

  const char* kind() const override { return "mlpconv_relu"; }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_params(std::vector<ParamRef>& out) override;
  std::vector<std::uint32_t> spec_ints() const override;

  ConvLayer& conv1() { return c1_; }
  ConvLayer& conv2() { return c2_; }
  void init_he(std::mt19937_64& rng);

 private:
  ConvLayer c1_, c2_;
  std::vector<std::uint8_t> mask1_, mask2_;
  bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

class ReluLayer : public Layer {
 public:
  explicit ReluLayer(std::string name) : Layer(std::move(name)) {}

  const char* kind() const override { return "relu"; }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<std::uint32_t> spec_ints() const override { return {}; }

 private:
  std::vector<std::uint8_t> mask_;
  Tensor shape_;
  bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

enum class PoolMode { Avg, Max, GlobalAvg };

struct PoolSpec {
  PoolMode mode = PoolMode::Avg;
  int size = 2;
  int stride = 2;
};

const char* pool_mode_name(PoolMode m);

/// Spatial avg/max pooling plus global average pooling. Windows overhanging
/// the border contribute only their valid cells; averages divide by the
/// valid-cell count.
class PoolLayer : public Layer {
 public:
  PoolLayer(std::string name, PoolSpec spec);

  const char* kind() const override { return "pool"; }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<std::uint32_t> spec_ints() const override;

  const PoolSpec& pool_spec() const { return spec_; }
  PoolSpec& pool_spec() { return spec_; }

  static int out_extent(int in, int size, int stride);

 private:
  PoolSpec spec_;
  int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
  std::vector<std::int32_t> max_idx_;
  bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

struct DropoutSpec {
  double rate = 0.5;
  std::uint64_t rng_seed = 0;
};

/// Inverted dropout: each unit is zeroed independently with probability
/// `rate` at train time and survivors scale by 1/(1-rate); eval mode is
/// exactly the identity.
class DropoutLayer : public Layer {
 public:
  DropoutLayer(std::string name, DropoutSpec spec);

  const char* kind() const override { return "dropout"; }

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<std::uint32_t> spec_ints() const override;

  double rate() const { return spec_.rate; }
  /// Resets the mask stream; lets tests pin a fixed mask.
  void reseed(std::uint64_t seed) { engine_.seed(seed); }

 private:
  DropoutSpec spec_;
  std::mt19937_64 engine_;
  std::vector<double> mask_;  // 0 or 1/(1-rate)
  bool identity_ = true;
  bool has_cache_ = false;
};

// ---------------------------------------------------------------------------
// Softmax cross-entropy loss
// ---------------------------------------------------------------------------

struct SoftmaxResult {
  double loss = 0.0;
  Tensor probs;
  Tensor grad;  // (probs - onehot) / N
};

/// Numerically stabilized softmax + mean negative log-likelihood over the
/// batch. Logits must be (N, classes, 1, 1).
SoftmaxResult softmax_xent(const Tensor& logits, const std::vector<int>& labels);

}  // namespace minnet
