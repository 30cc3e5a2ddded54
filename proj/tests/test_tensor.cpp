#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "minnet/tensor.hpp"
#include "support/testutil.hpp"

using namespace minnet;
using namespace minnet::testsupport;

TEST_CASE("channel_moments on a 3-entry channel") {
  Tensor t(1, 1, 1, 3);
  t.data = {1.0, 2.0, 3.0};
  const ChannelMoments m = channel_moments(t);
  CHECK(m.mean[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(m.var[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("channel_moments of a constant channel has zero variance") {
  Tensor t(2, 1, 3, 3);
  std::fill(t.data.begin(), t.data.end(), 4.25);
  const ChannelMoments m = channel_moments(t);
  CHECK(m.mean[0] == doctest::Approx(4.25));
  CHECK(m.var[0] == 0.0);
}

TEST_CASE("channel_moments treats channels independently") {
  Tensor t(1, 2, 1, 2);
  t.data = {0.0, 0.0, 1.0, 3.0};
  const ChannelMoments m = channel_moments(t);
  CHECK(m.mean[0] == 0.0);
  CHECK(m.var[0] == 0.0);
  CHECK(m.mean[1] == 2.0);
  CHECK(m.var[1] == 1.0);
}

TEST_CASE("channel_moments rejects an empty tensor") {
  Tensor t;
  CHECK_THROWS_AS(channel_moments(t), InvalidInput);
}

TEST_CASE("channel_moments shift property: mean moves, variance does not") {
  Tensor t = random_tensor(2, 3, 4, 5, 7);
  const ChannelMoments before = channel_moments(t);
  const double shift = 3.75;
  for (double& v : t.data) v += shift;
  const ChannelMoments after = channel_moments(t);
  for (int c = 0; c < 3; ++c) {
    CHECK(after.mean[c] == doctest::Approx(before.mean[c] + shift).epsilon(1e-12));
    CHECK(after.var[c] == doctest::Approx(before.var[c]).epsilon(1e-12));
  }
}

TEST_CASE("pad_spatial 2 on a (1,1,2,2) tensor") {
  Tensor t(1, 1, 2, 2);
  t.data = {1.0, 2.0, 3.0, 4.0};
  const Tensor p = pad_spatial(t, 2);
  CHECK(p.h == 6);
  CHECK(p.w == 6);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 6; ++x) {
      const bool interior = (y >= 2 && y < 4 && x >= 2 && x < 4);
      if (!interior) CHECK(p.at(0, 0, y, x) == 0.0);
    }
  }
  CHECK(p.at(0, 0, 2, 2) == 1.0);
  CHECK(p.at(0, 0, 3, 3) == 4.0);
}

TEST_CASE("pad 0 is the identity and padding preserves the sum") {
  const Tensor t = random_tensor(2, 2, 3, 3, 11);
  const Tensor same = pad_spatial(t, 0);
  CHECK(same.data == t.data);
  const Tensor p = pad_spatial(t, 3);
  const double s0 = std::accumulate(t.data.begin(), t.data.end(), 0.0);
  const double s1 = std::accumulate(p.data.begin(), p.data.end(), 0.0);
  CHECK(s1 == doctest::Approx(s0).epsilon(1e-12));
}

TEST_CASE("pad then center-crop is the identity") {
  const Tensor t = random_tensor(2, 3, 5, 4, 13);
  for (int pad : {1, 2, 5}) {
    const Tensor back = center_crop(pad_spatial(t, pad), t.h, t.w);
    CHECK(back.data == t.data);
  }
}

TEST_CASE("matmul identity, hand case and zeros") {
  Mat id(2, 2);
  id.at(0, 0) = 1.0;
  id.at(1, 1) = 1.0;
  Mat a(2, 2);
  a.v = {1.0, 2.0, 3.0, 4.0};
  CHECK(matmul(id, a).v == a.v);

  Mat row(1, 2);
  row.v = {1.0, 2.0};
  Mat col(2, 1);
  col.v = {3.0, 4.0};
  CHECK(matmul(row, col).at(0, 0) == 11.0);

  Mat zero(3, 2);
  const Mat z = matmul(zero, a);
  for (double v : z.v) CHECK(v == 0.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Mat a(2, 3), b(2, 2);
  CHECK_THROWS_AS(matmul(a, b), InvalidInput);
}

TEST_CASE("matmul associativity on random matrices") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Mat a(3, 4), b(4, 5), c(5, 2);
    for (double& v : a.v) v = unif(rng);
    for (double& v : b.v) v = unif(rng);
    for (double& v : c.v) v = unif(rng);
    const Mat left = matmul(matmul(a, b), c);
    const Mat right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < left.v.size(); ++i) {
      CHECK(rel_err(left.v[i], right.v[i], 1e-10) < 1e-10);
    }
  }
}

TEST_CASE("gemm kernels agree with matmul") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Mat a(4, 3), b(3, 5);
  for (double& v : a.v) v = unif(rng);
  for (double& v : b.v) v = unif(rng);
  const Mat ref = matmul(a, b);

  std::vector<double> c(4 * 5, 0.0);
  gemm_nn(a.v.data(), 4, 3, b.v.data(), 5, c.data());
  CHECK(c == ref.v);

  // b transposed input for gemm_nt
  Mat bt(5, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) bt.at(j, i) = b.at(i, j);
  gemm_nt(a.v.data(), 4, 3, bt.v.data(), 5, c.data());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref.v[i]));

  // a transposed input for gemm_tn
  Mat at(3, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) at.at(j, i) = a.at(i, j);
  gemm_tn(at.v.data(), 3, 4, b.v.data(), 5, c.data());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref.v[i]));
}
