#include "minnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <Eigen/Dense>

namespace minnet {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("idx: truncated header in '" + path + "'");
  return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
         (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_be32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> read_all(std::istream& is, std::size_t count,
                                    const std::string& path) {
  std::vector<unsigned char> buf(count);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(is.gcount()) != count) {
    throw FormatError("truncated payload in '" + path + "'");
  }
  return buf;
}

}  // namespace

DatasetSplit load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("idx: cannot open '" + images_path + "'");
  if (read_be32(imgs, images_path) != kImageMagic) {
    throw FormatError("idx: bad image magic in '" + images_path + "'");
  }
  const std::uint32_t n = read_be32(imgs, images_path);
  const std::uint32_t rows = read_be32(imgs, images_path);
  const std::uint32_t cols = read_be32(imgs, images_path);
  const auto pixels = read_all(imgs, static_cast<std::size_t>(n) * rows * cols, images_path);

  std::ifstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw IoError("idx: cannot open '" + labels_path + "'");
  if (read_be32(lbls, labels_path) != kLabelMagic) {
    throw FormatError("idx: bad label magic in '" + labels_path + "'");
  }
  const std::uint32_t ln = read_be32(lbls, labels_path);
  if (ln != n) {
    throw FormatError("idx: " + std::to_string(ln) + " labels for " + std::to_string(n) +
                      " images");
  }
  const auto raw_labels = read_all(lbls, ln, labels_path);

  DatasetSplit split;
  split.images = Tensor(static_cast<int>(n), 1, static_cast<int>(rows), static_cast<int>(cols));
  for (std::size_t i = 0; i < pixels.size(); ++i) split.images.data[i] = pixels[i] / 255.0;
  split.labels.assign(raw_labels.begin(), raw_labels.end());
  return split;
}

void write_mnist_idx(const std::string& images_path, const std::string& labels_path,
                     const DatasetSplit& split) {
  std::ofstream imgs(images_path, std::ios::binary);
  if (!imgs) throw IoError("idx: cannot open '" + images_path + "' for writing");
  write_be32(imgs, kImageMagic);
  write_be32(imgs, static_cast<std::uint32_t>(split.images.n));
  write_be32(imgs, static_cast<std::uint32_t>(split.images.h));
  write_be32(imgs, static_cast<std::uint32_t>(split.images.w));
  for (double v : split.images.data) {
    const double q = std::clamp(v, 0.0, 1.0) * 255.0;
    imgs.put(static_cast<char>(static_cast<unsigned char>(std::lround(q))));
  }
  std::ofstream lbls(labels_path, std::ios::binary);
  if (!lbls) throw IoError("idx: cannot open '" + labels_path + "' for writing");
  write_be32(lbls, kLabelMagic);
  write_be32(lbls, static_cast<std::uint32_t>(split.labels.size()));
  for (int l : split.labels) lbls.put(static_cast<char>(static_cast<unsigned char>(l)));
}

DatasetSplit load_cifar10_binary(const std::vector<std::string>& paths) {
  constexpr std::size_t kRecord = 3073;
  DatasetSplit split;
  std::vector<unsigned char> all;
  for (const std::string& path : paths) {
    std::ifstream is(path, std::ios::binary | std::ios::ate);
    if (!is) throw IoError("cifar: cannot open '" + path + "'");
    const std::streamoff len = is.tellg();
    if (len <= 0 || static_cast<std::size_t>(len) % kRecord != 0) {
      throw FormatError("cifar: '" + path + "' length " + std::to_string(len) +
                        " is not a multiple of 3073");
    }
    is.seekg(0);
    const auto buf = read_all(is, static_cast<std::size_t>(len), path);
    all.insert(all.end(), buf.begin(), buf.end());
  }
  const std::size_t n = all.size() / kRecord;
  split.images = Tensor(static_cast<int>(n), 3, 32, 32);
  split.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = all.data() + i * kRecord;
    split.labels[i] = rec[0];
    double* dst = split.images.data.data() + i * 3072;
    for (std::size_t j = 0; j < 3072; ++j) dst[j] = rec[1 + j] / 255.0;
  }
  return split;
}

void write_cifar10_binary(const std::string& path, const DatasetSplit& split) {
  if (split.images.c != 3 || split.images.h != 32 || split.images.w != 32) {
    throw InvalidInput("cifar: writer expects (N,3,32,32), got " + split.images.shape_str());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cifar: cannot open '" + path + "' for writing");
  for (int i = 0; i < split.images.n; ++i) {
    os.put(static_cast<char>(static_cast<unsigned char>(split.labels[i])));
    const double* src = split.images.data.data() + static_cast<std::size_t>(i) * 3072;
    for (std::size_t j = 0; j < 3072; ++j) {
      const double q = std::clamp(src[j], 0.0, 1.0) * 255.0;
      os.put(static_cast<char>(static_cast<unsigned char>(std::lround(q))));
    }
  }
}

Tensor gcn(Tensor images, double scale, double lambda, double epsilon) {
  const std::size_t dim = images.size() / std::max<std::size_t>(1, images.n);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < images.n; ++i) {
    double* px = images.data.data() + static_cast<std::size_t>(i) * dim;
    double mean = 0.0;
    for (std::size_t j = 0; j < dim; ++j) mean += px[j];
    mean /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = px[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(dim);
    const double denom = std::max(epsilon, std::sqrt(lambda + var));
    const double k = scale / denom;
    for (std::size_t j = 0; j < dim; ++j) px[j] = (px[j] - mean) * k;
  }
  return images;
}

ZcaFit zca_fit(const Tensor& train_images, double epsilon) {
  const int n = train_images.n;
  const std::size_t dim = static_cast<std::size_t>(train_images.c) * train_images.h *
                          train_images.w;
  if (n < 2 || dim == 0) {
    throw InvalidInput("zca_fit: need at least 2 images, got " + train_images.shape_str());
  }
  ZcaFit fit;
  fit.epsilon = epsilon;
  fit.mean.assign(dim, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* px = train_images.data.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t j = 0; j < dim; ++j) fit.mean[j] += px[j];
  }
  for (double& m : fit.mean) m /= static_cast<double>(n);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                              static_cast<Eigen::Index>(dim));
  Eigen::VectorXd centered(static_cast<Eigen::Index>(dim));
  for (int i = 0; i < n; ++i) {
    const double* px = train_images.data.data() + static_cast<std::size_t>(i) * dim;
    for (std::size_t j = 0; j < dim; ++j) centered[static_cast<Eigen::Index>(j)] = px[j] - fit.mean[j];
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(n);
  if (!cov.allFinite()) throw InvalidInput("zca_fit: covariance is not finite");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw InvalidInput("zca_fit: eigendecomposition failed");
  Eigen::VectorXd scale = eig.eigenvalues();
  for (Eigen::Index i = 0; i < scale.size(); ++i) {
    scale[i] = 1.0 / std::sqrt(std::max(scale[i], 0.0) + epsilon);
  }
  const Eigen::MatrixXd zca =
      eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();

  fit.transform = Mat(dim, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c)
      fit.transform.at(r, c) = zca(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  return fit;
}

Tensor zca_apply(Tensor images, const ZcaFit& fit) {
  const std::size_t dim = fit.mean.size();
  if (images.size() != static_cast<std::size_t>(images.n) * dim) {
    throw InvalidInput("zca_apply: image dims do not match fit (" + std::to_string(dim) + ")");
  }
  Tensor out = Tensor::zeros_like(images);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < images.n; ++i) {
    const double* px = images.data.data() + static_cast<std::size_t>(i) * dim;
    double* dst = out.data.data() + static_cast<std::size_t>(i) * dim;
    std::vector<double> centered(dim);
    for (std::size_t j = 0; j < dim; ++j) centered[j] = px[j] - fit.mean[j];
    // transform is symmetric; rows x centered
    gemm_nn(fit.transform.v.data(), dim, dim, centered.data(), 1, dst);
  }
  return out;
}

Tensor augment_crop_flip(const Tensor& image, int oy, int ox, bool flip) {
  if (image.n != 1 || image.h != 32 || image.w != 32) {
    throw InvalidInput("augment: expected a single 32x32 image, got " + image.shape_str());
  }
  if (oy < 0 || oy > 4 || ox < 0 || ox > 4) throw InvalidInput("augment: offset out of {0..4}");
  const Tensor padded = pad_spatial(image, 2);
  const int base_y = 4 - oy;
  const int base_x = 4 - ox;
  Tensor out(1, image.c, 32, 32);
  for (int ic = 0; ic < image.c; ++ic) {
    const double* src = padded.plane_ptr(0, ic);
    double* dst = out.plane_ptr(0, ic);
    for (int y = 0; y < 32; ++y) {
      const double* row = src + static_cast<std::size_t>(y + base_y) * padded.w + base_x;
      if (flip) {
        for (int x = 0; x < 32; ++x) dst[y * 32 + x] = row[31 - x];
      } else {
        std::memcpy(dst + y * 32, row, 32 * sizeof(double));
      }
    }
  }
  return out;
}

Tensor augment(const Tensor& image, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> off(0, 4);
  const int oy = off(rng);
  const int ox = off(rng);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const bool flip = unif(rng) < 0.5;
  return augment_crop_flip(image, oy, ox, flip);
}

std::vector<std::vector<int>> make_batches(std::size_t n, std::size_t batch_size,
                                           std::uint64_t seed) {
  if (batch_size < 1) throw InvalidInput("make_batches: batch_size must be >= 1");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
  }
  return batches;
}

void gather_batch(const DatasetSplit& split, const std::vector<int>& idx, Tensor& images,
                  std::vector<int>& labels) {
  const std::size_t dim = static_cast<std::size_t>(split.images.c) * split.images.h *
                          split.images.w;
  images = Tensor(static_cast<int>(idx.size()), split.images.c, split.images.h, split.images.w);
  labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::memcpy(images.data.data() + i * dim,
                split.images.data.data() + static_cast<std::size_t>(idx[i]) * dim,
                dim * sizeof(double));
    labels[i] = split.labels[static_cast<std::size_t>(idx[i])];
  }
}

}  // namespace minnet
