#pragma once

#include <memory>
#include <string>
#include <vector>

#include "minnet/layers.hpp"

namespace minnet {

/// An ordered stack of layers with a parameter registry. Forward in train
/// mode leaves each layer's cache behind for one matching backward pass.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  Layer* find(const std::string& name);
  std::vector<std::string> layer_names() const;

  /// Runs the full stack. Train mode retains caches; eval mode does not.
  Tensor forward(const Tensor& batch, Mode mode);

  /// Backpropagates from the loss gradient; requires a preceding train-mode
  /// forward on the same parameters. Returns the gradient w.r.t. the input.
  Tensor backward(const Tensor& loss_grad);

  /// Eval-mode forward then per-row argmax; ties break to the lowest class.
  std::vector<int> predict(const Tensor& batch);

  /// Eval-mode forward that also captures one named layer's output.
  struct Tap {
    Tensor activation;
    Tensor logits;
  };
  Tap forward_tap(const Tensor& batch, const std::string& layer_name);

  std::vector<ParamRef> params();
  std::vector<StatRef> stats();
  void zero_grads();
  std::size_t param_count();

  // Versioned binary checkpoint: magic "MINCKPT1", little-endian layer count,
  // per-layer spec + float32 parameter payloads, then BN running stats.
  void save_checkpoint(const std::string& path);
  void load_checkpoint(const std::string& path);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  bool have_train_cache_ = false;
};

/// Per-row argmax of (N, classes, 1, 1) scores; ties break low.
std::vector<int> argmax_rows(const Tensor& scores);

}  // namespace minnet
