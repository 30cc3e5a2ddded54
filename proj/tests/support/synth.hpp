#pragma once

#include <cstdint>
#include <string>

#include "minnet/data.hpp"

namespace minnet::testsupport {

/// Deterministic 28x28 10-class digit-like dataset: per-class templates of
/// gaussian strokes, per-sample shift/contrast jitter, additive noise and a
/// distractor blob. Labels are balanced round-robin. Classes are not linearly
/// separable (shifts + noise), so model capacity matters.
DatasetSplit make_synth_digits(int n, std::uint64_t seed);

/// Writes a train/test pair of synthetic digits in MNIST IDX format under
/// dir using the standard filenames. Reuses existing files when present.
void write_synth_mnist_dir(const std::string& dir, int n_train, int n_test,
                           std::uint64_t seed);

/// Directory with MNIST-format data for desk runs: a real MNIST directory if
/// MINNET_DATA (or ./data, ../data) has one, otherwise a generated synthetic
/// set under fallback_dir. Sets `real` accordingly.
std::string digits_data_dir(const std::string& fallback_dir, int n_train, int n_test,
                            bool& real);

}  // namespace minnet::testsupport
