#include "roomnerf/conv.hpp"

#include <gtest/gtest.h>

#include "testutil.hpp"

using namespace roomnerf;
using roomnerf::testing::grad_check;
using roomnerf::testing::random_array;

namespace {
const bool kBlasPinned = [] {
  use_single_thread_blas();
  return true;
}();

// Direct translation of the convolution definition, used as the oracle.
Array conv2d_naive(const Array& x, const Array& w, const Array* bias, int stride, int pad) {
  const int64_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], ww = x.shape[3];
  const int64_t cout = w.shape[0], kh = w.shape[2], kw = w.shape[3];
  const int64_t oh = (h + 2 * pad - kh) / stride + 1;
  const int64_t ow = (ww + 2 * pad - kw) / stride + 1;
  Array out({n, cout, oh, ow});
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias->data[static_cast<size_t>(co)] : 0.0;
          for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = oy * stride - pad + ky;
                const int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= ww) continue;
                acc += x.at4(ni, ci, iy, ix) * w.at4(co, ci, ky, kx);
              }
          out.at4(ni, co, oy, ox) = acc;
        }
  return out;
}
}  // namespace

TEST(Conv2d, OneByOneIdentityKernel) {
  Rng rng(3);
  auto x = leaf(random_array({1, 1, 4, 5}, rng));
  auto w = leaf(Array::from({1, 1, 1, 1}, {1.0}));
  auto y = conv2d(x, w, nullptr, 1, 0);
  EXPECT_EQ(y->value.shape, x->value.shape);
  EXPECT_EQ(y->value.data, x->value.data);
}

TEST(Conv2d, MatchesNaiveOracleAcrossConfigs) {
  Rng rng(31);
  struct Cfg {
    int64_t n, cin, h, w, cout;
    int k, stride, pad;
  };
  for (const Cfg& c : {Cfg{1, 1, 5, 5, 1, 3, 1, 1}, Cfg{2, 3, 6, 7, 4, 3, 1, 1},
                       Cfg{1, 2, 8, 8, 3, 3, 2, 1}, Cfg{1, 4, 7, 6, 2, 5, 1, 2},
                       Cfg{2, 2, 6, 6, 2, 1, 2, 0}}) {
    auto x = leaf(random_array({c.n, c.cin, c.h, c.w}, rng));
    auto w = leaf(random_array({c.cout, c.cin, c.k, c.k}, rng));
    auto b = leaf(random_array({c.cout}, rng));
    auto y = conv2d(x, w, b, c.stride, c.pad);
    Array ref = conv2d_naive(x->value, w->value, &b->value, c.stride, c.pad);
    ASSERT_EQ(y->value.shape, ref.shape);
    for (size_t i = 0; i < ref.data.size(); ++i)
      EXPECT_NEAR(y->value.data[i], ref.data[i], 1e-10)
          << "cfg k=" << c.k << " stride=" << c.stride << " pad=" << c.pad;
  }
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  Rng rng(77);
  auto x = leaf(random_array({1, 2, 5, 5}, rng));
  auto w = leaf(random_array({3, 2, 3, 3}, rng, -0.5, 0.5));
  auto b = leaf(random_array({3}, rng, -0.2, 0.2));
  auto r = grad_check({x, w, b}, [&] { return sum(square(conv2d(x, w, b, 1, 1))); });
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
  // strided + padded variant
  auto r2 = grad_check({x, w, b}, [&] { return sum(square(conv2d(x, w, b, 2, 1))); });
  EXPECT_LT(r2.max_rel_err, 1e-4) << r2.worst;
}

TEST(Conv2d, RejectsChannelMismatch) {
  auto x = leaf(Array({1, 3, 4, 4}));
  auto w = leaf(Array({2, 4, 3, 3}));
  try {
    conv2d(x, w, nullptr, 1, 1);
    FAIL() << "expected channel mismatch";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("conv2d"), std::string::npos) << e.what();
  }
}

TEST(Upsample, NearestDoublesEachAxis) {
  auto x = leaf(Array::from({1, 1, 2, 2}, {1, 2, 3, 4}));
  auto y = upsample_nearest_2x(x);
  EXPECT_EQ(y->value.shape, (std::vector<int64_t>{1, 1, 4, 4}));
  EXPECT_EQ(y->value.data,
            (std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4}));
  backward(sum(y));
  EXPECT_EQ(x->grad.data, (std::vector<double>{4, 4, 4, 4}));
}

TEST(Upsample, GradientsMatchFiniteDifferences) {
  Rng rng(13);
  auto x = leaf(random_array({2, 3, 3, 2}, rng));
  auto r = grad_check({x}, [&] { return sum(square(upsample_nearest_2x(x))); });
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
}

TEST(CspnStep, ConstantMapIsFixedPointForNonNegativeAffinity) {
  Rng rng(21);
  auto d = leaf(Array({1, 1, 4, 4}, 2.5));
  Array araw = random_array({1, 8, 4, 4}, rng, 0.0, 1.0);
  auto a = leaf(araw);
  auto y = cspn_step(d, a);
  for (double v : y->value.data) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(CspnStep, NonExpansiveUnderIteration) {
  // with |weights| summing to <= 1 the value range can never grow
  Rng rng(22);
  auto d0 = random_array({1, 1, 6, 6}, rng, 1.0, 5.0);
  auto a = leaf(random_array({1, 8, 6, 6}, rng, -2.0, 2.0));
  NodePtr d = leaf(d0);
  const auto [lo0, hi0] = std::minmax_element(d0.data.begin(), d0.data.end());
  const double bound = std::max(std::abs(*lo0), std::abs(*hi0));
  for (int it = 0; it < 16; ++it) d = cspn_step(d, a);
  for (double v : d->value.data) EXPECT_LE(std::abs(v), bound + 1e-9);
}

TEST(CspnStep, PropagatesFromNeighbors) {
  // a hot pixel spreads to the neighbor that points at it
  Array d0({1, 1, 3, 3});
  d0.at4(0, 0, 1, 1) = 9.0;
  auto d = leaf(d0);
  Array a0({1, 8, 3, 3});
  // pixel (0,1) gives weight to its south neighbor (offset index 6 = (1,0))
  a0.at4(0, 6, 0, 1) = 1.0;
  auto a = leaf(a0);
  auto y = cspn_step(d, a);
  // normalized: center 1/(1+1) * 0 + 1/(1+1) * 9 = 4.5
  EXPECT_NEAR(y->value.at4(0, 0, 0, 1), 4.5, 1e-12);
  // untouched far corner stays zero
  EXPECT_DOUBLE_EQ(y->value.at4(0, 0, 2, 2), 0.0);
}

TEST(CspnStep, GradientsMatchFiniteDifferences) {
  Rng rng(23);
  auto d = leaf(random_array({1, 1, 4, 5}, rng, 1.0, 3.0));
  // keep affinities away from 0 so |a| is differentiable at every probe
  Array araw = random_array({1, 8, 4, 5}, rng, 0.2, 1.0);
  for (size_t i = 0; i < araw.data.size(); i += 2) araw.data[i] = -araw.data[i];
  auto a = leaf(araw);
  auto r = grad_check({d, a}, [&] { return sum(square(cspn_step(d, a))); });
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
}

TEST(CspnStep, ChainedStepsBackpropagate) {
  Rng rng(29);
  auto d = leaf(random_array({1, 1, 3, 3}, rng, 1.0, 2.0));
  Array araw = random_array({1, 8, 3, 3}, rng, 0.3, 0.8);
  auto a = leaf(araw);
  auto r = grad_check({d, a}, [&] {
    NodePtr cur = d;
    for (int i = 0; i < 3; ++i) cur = cspn_step(cur, a);
    return sum(square(cur));
  });
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
}
