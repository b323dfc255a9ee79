#include <gtest/gtest.h>

#include <vector>

#include "protoseg/core/rng.hpp"
#include "protoseg/kernels/kernels.hpp"

using namespace protoseg;

namespace {

std::vector<double> random_buffer(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

struct ConvCase {
  int cin, cout, kernel, stride;
  Dims3 in;
};

class ConvKernel : public ::testing::TestWithParam<ConvCase> {};

}  // namespace

TEST_P(ConvKernel, MatchesReference) {
  const ConvCase c = GetParam();
  const auto g = kernels::conv_geometry(c.cin, c.cout, c.kernel, c.stride, c.in);
  Rng rng(11);
  const auto x = random_buffer(static_cast<std::size_t>(c.cin) * c.in.size(), rng);
  const auto w = random_buffer(g.weight_size(), rng);
  const auto b = random_buffer(static_cast<std::size_t>(c.cout), rng);
  const auto gy = random_buffer(static_cast<std::size_t>(c.cout) * g.out.size(), rng);

  std::vector<double> y(gy.size()), y_ref(gy.size());
  kernels::conv3d_forward(g, x.data(), w.data(), b.data(), y.data());
  kernels::reference::conv3d_forward(g, x.data(), w.data(), b.data(), y_ref.data());
  EXPECT_LT(max_diff(y, y_ref), 1e-12);

  std::vector<double> gx(x.size(), 0.5), gx_ref(x.size(), 0.5);
  kernels::conv3d_backward_input(g, gy.data(), w.data(), gx.data());
  kernels::reference::conv3d_backward_input(g, gy.data(), w.data(), gx_ref.data());
  EXPECT_LT(max_diff(gx, gx_ref), 1e-11);

  std::vector<double> gw(w.size(), 0.25), gw_ref(w.size(), 0.25), gb(b.size(), 0.0), gb_ref(b.size(), 0.0);
  kernels::conv3d_backward_weight(g, x.data(), gy.data(), gw.data(), gb.data());
  kernels::reference::conv3d_backward_weight(g, x.data(), gy.data(), gw_ref.data(), gb_ref.data());
  EXPECT_LT(max_diff(gw, gw_ref), 1e-10);
  EXPECT_LT(max_diff(gb, gb_ref), 1e-10);
}

INSTANTIATE_TEST_SUITE_P(Geometries, ConvKernel,
                         ::testing::Values(ConvCase{3, 5, 3, 1, {8, 8, 8}}, ConvCase{2, 4, 3, 1, {4, 6, 10}},
                                           ConvCase{4, 3, 3, 2, {8, 8, 8}}, ConvCase{2, 6, 1, 1, {4, 4, 4}},
                                           ConvCase{6, 2, 3, 1, {2, 2, 2}}, ConvCase{1, 4, 3, 2, {16, 8, 4}},
                                           ConvCase{5, 9, 3, 1, {6, 5, 16}}));

TEST(Kernels, InstanceNormMatchesReference) {
  Rng rng(3);
  const int C = 3;
  const std::size_t S = 60;
  const auto x = random_buffer(C * S, rng);
  std::vector<double> y(x.size()), yr(x.size()), m(C), mr(C), s(C), sr(C);
  kernels::instance_norm_forward(C, S, 1e-5, x.data(), y.data(), m.data(), s.data());
  kernels::reference::instance_norm_forward(C, S, 1e-5, x.data(), yr.data(), mr.data(), sr.data());
  EXPECT_LT(max_diff(y, yr), 1e-12);
  EXPECT_LT(max_diff(s, sr), 1e-12);
}

TEST(Kernels, ResizeMatchesReferenceAndAdjoint) {
  Rng rng(4);
  const Dims3 src{2, 3, 4}, dst{4, 6, 8};
  const auto x = random_buffer(2 * src.size(), rng);
  const auto gy = random_buffer(2 * dst.size(), rng);
  std::vector<double> y(2 * dst.size()), yr(y.size());
  kernels::resize_trilinear_forward(2, src, dst, x.data(), y.data());
  kernels::reference::resize_trilinear_forward(2, src, dst, x.data(), yr.data());
  EXPECT_LT(max_diff(y, yr), 1e-13);
  // <R x, g> == <x, R^T g>
  std::vector<double> gx(x.size(), 0.0);
  kernels::resize_trilinear_backward(2, src, dst, gy.data(), gx.data());
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * gy[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Kernels, ResizeSameSizeIsIdentity) {
  Rng rng(5);
  const Dims3 d{3, 4, 5};
  const auto x = random_buffer(d.size(), rng);
  std::vector<double> y(x.size());
  kernels::resize_trilinear_forward(1, d, d, x.data(), y.data());
  EXPECT_EQ(max_diff(x, y), 0.0);
}

TEST(Kernels, SoftmaxMatchesReference) {
  Rng rng(6);
  const auto x = random_buffer(4 * 27, rng);
  std::vector<double> y(x.size()), yr(x.size());
  kernels::softmax_channels_forward(4, 27, x.data(), y.data());
  kernels::reference::softmax_channels_forward(4, 27, x.data(), yr.data());
  EXPECT_LT(max_diff(y, yr), 1e-15);
}

TEST(Kernels, AttentionMatchesReference) {
  Rng rng(7);
  const kernels::AttentionShape s{5, 7, 2, 3};
  const auto q = random_buffer(static_cast<std::size_t>(s.queries) * s.width(), rng);
  const auto k = random_buffer(static_cast<std::size_t>(s.keys) * s.width(), rng);
  const auto v = random_buffer(static_cast<std::size_t>(s.keys) * s.width(), rng);
  std::vector<double> o(q.size()), orf(q.size()), p(static_cast<std::size_t>(s.heads * s.queries * s.keys)),
      pr(p.size());
  kernels::attention_forward(s, q.data(), k.data(), v.data(), o.data(), p.data());
  kernels::reference::attention_forward(s, q.data(), k.data(), v.data(), orf.data(), pr.data());
  EXPECT_LT(max_diff(o, orf), 1e-14);
  EXPECT_LT(max_diff(p, pr), 1e-15);
}
