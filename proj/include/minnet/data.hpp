#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "minnet/tensor.hpp"

namespace minnet {

/// Symmetric whitening transform fitted on a training split.
struct ZcaFit {
  std::vector<double> mean;  // length C*H*W
  Mat transform;             // (C*H*W) x (C*H*W)
  double epsilon = 1e-2;
};

/// Record of what preprocessing produced a split's images.
struct PreprocessRecord {
  bool gcn = false;
  double gcn_scale = 55.0, gcn_lambda = 10.0, gcn_epsilon = 1e-8;
  std::shared_ptr<const ZcaFit> zca;  // fitted on the training split only
};

struct DatasetSplit {
  Tensor images;  // (N, C, H, W), values scaled to [0,1] at load time
  std::vector<int> labels;
  PreprocessRecord preprocessing;

  std::size_t count() const { return labels.size(); }
};

// --- loaders (and bit-exact writers for fixtures) --------------------------

/// Big-endian IDX files: image magic 0x803, label magic 0x801. Pixels are
/// scaled to [0,1]; shape comes out (N, 1, rows, cols).
DatasetSplit load_mnist_idx(const std::string& images_path, const std::string& labels_path);
void write_mnist_idx(const std::string& images_path, const std::string& labels_path,
                     const DatasetSplit& split);

/// CIFAR-10 binary batches: 3073-byte records, 1 label byte then R/G/B
/// planes. Shape (N, 3, 32, 32), values in [0,1].
DatasetSplit load_cifar10_binary(const std::vector<std::string>& paths);
void write_cifar10_binary(const std::string& path, const DatasetSplit& split);

// --- preprocessing ----------------------------------------------------------

/// Global contrast normalization, per image: subtract the image mean, divide
/// by max(epsilon, sqrt(lambda + image variance)), multiply by scale.
Tensor gcn(Tensor images, double scale = 55.0, double lambda = 10.0, double epsilon = 1e-8);

/// transform = U diag(1/sqrt(eig+epsilon)) U^T of the training covariance.
ZcaFit zca_fit(const Tensor& train_images, double epsilon = 1e-2);
Tensor zca_apply(Tensor images, const ZcaFit& fit);

// --- augmentation -----------------------------------------------------------

/// Pad a 32x32 image to 36x36, crop a 32x32 window at offsets drawn from
/// {0..4}^2, flip horizontally with probability 1/2.
Tensor augment(const Tensor& image, std::mt19937_64& rng);

/// Deterministic core of augment. Offset (2,2) is the identity; offset (0,0)
/// shifts content up-left so zero rows/cols enter at the bottom-right (the
/// crop window's origin in the padded image is (4-oy, 4-ox)).
Tensor augment_crop_flip(const Tensor& image, int oy, int ox, bool flip);

// --- batching ---------------------------------------------------------------

/// Index batches after a seed-determined shuffle; the final short batch is
/// included. Throws InvalidInput when batch_size < 1.
std::vector<std::vector<int>> make_batches(std::size_t n, std::size_t batch_size,
                                           std::uint64_t seed);

/// Copies the given sample rows into a contiguous batch tensor + label vector.
void gather_batch(const DatasetSplit& split, const std::vector<int>& idx, Tensor& images,
                  std::vector<int>& labels);

}  // namespace minnet
