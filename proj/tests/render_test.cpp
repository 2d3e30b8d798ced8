#include "roomnerf/volume_render.hpp"

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

std::vector<Vec3> gray(size_t n, double v) { return std::vector<Vec3>(n, Vec3{v, v, v}); }
}  // namespace

// --------------------------------------------------------------------------
// plain composite

TEST(Composite, AllZeroDensityIsTransparent) {
  const std::vector<double> t = {0.5, 1.0, 2.0, 3.5};
  const std::vector<double> sig(4, 0.0);
  const RenderResult r = composite(t, sig, gray(4, 0.8), 10.0);
  EXPECT_DOUBLE_EQ(r.color.x, 0.0);
  EXPECT_DOUBLE_EQ(r.opacity, 0.0);
  EXPECT_DOUBLE_EQ(r.depth, 0.0);
  EXPECT_DOUBLE_EQ(r.depth_std, 0.0);
}

TEST(Composite, SingleOpaqueSampleIsDeltaSurface) {
  const RenderResult r = composite({2.0}, {1e9}, {{1.0, 0.0, 0.0}}, 10.0);
  EXPECT_NEAR(r.color.x, 1.0, 1e-12);
  EXPECT_NEAR(r.color.y, 0.0, 1e-12);
  EXPECT_NEAR(r.depth, 2.0, 1e-9);
  EXPECT_NEAR(r.depth_std, 0.0, 1e-9);
  EXPECT_NEAR(r.opacity, 1.0, 1e-12);
}

TEST(Composite, HomogeneousMediumMatchesAnalyticOpacity) {
  // sigma = 0.5 over [0,4]: opacity = 1 - e^{-2}
  const int k = 256;
  Rng rng(5);
  std::vector<double> t = stratified_sample(0.0, 4.0, k, rng);
  const std::vector<double> sig(static_cast<size_t>(k), 0.5);
  const RenderResult r = composite(t, sig, gray(static_cast<size_t>(k), 0.5), 4.0);
  EXPECT_NEAR(r.opacity, 1.0 - std::exp(-2.0), 1e-3);
}

TEST(Composite, WeightIdentityToTwelveDecimals) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 32;
    std::vector<double> t = stratified_sample(0.05, 9.0, k, rng);
    std::vector<double> sig(static_cast<size_t>(k));
    for (double& s : sig) s = rng.uniform(0.0, 3.0);
    const RenderResult r = composite(t, sig, gray(static_cast<size_t>(k), 0.5), 9.0);
    double tau = 0.0;
    for (int i = 0; i < k; ++i)
      tau += sig[static_cast<size_t>(i)] *
             ((i + 1 < k ? t[static_cast<size_t>(i + 1)] : 9.0) - t[static_cast<size_t>(i)]);
    EXPECT_NEAR(r.opacity, 1.0 - std::exp(-tau), 1e-12);
  }
}

TEST(Composite, RejectsBadInput) {
  EXPECT_THROW(composite({2.0, 1.0}, {1.0, 1.0}, gray(2, 0.5), 10.0), std::invalid_argument);
  EXPECT_THROW(composite({1.0, 1.0}, {1.0, 1.0}, gray(2, 0.5), 10.0), std::invalid_argument);
  EXPECT_THROW(composite({1.0, 2.0}, {1.0, -0.5}, gray(2, 0.5), 10.0), std::invalid_argument);
  EXPECT_THROW(composite({1.0, 2.0}, {1.0}, gray(2, 0.5), 10.0), std::invalid_argument);
}

TEST(Composite, OpacityMonotoneInDensity) {
  Rng rng(11);
  const int k = 16;
  std::vector<double> t = stratified_sample(0.1, 8.0, k, rng);
  std::vector<double> sig(static_cast<size_t>(k));
  for (double& s : sig) s = rng.uniform(0.0, 1.0);
  const double base = composite(t, sig, gray(static_cast<size_t>(k), 0.5), 8.0).opacity;
  for (int i = 0; i < k; ++i) {
    std::vector<double> bumped = sig;
    bumped[static_cast<size_t>(i)] += 0.7;
    EXPECT_GE(composite(t, bumped, gray(static_cast<size_t>(k), 0.5), 8.0).opacity,
              base - 1e-15);
  }
}

TEST(Composite, DepthBoundedByOpacityTimesLastSample) {
  Rng rng(13);
  const int k = 24;
  std::vector<double> t = stratified_sample(0.1, 6.0, k, rng);
  std::vector<double> sig(static_cast<size_t>(k));
  for (double& s : sig) s = rng.uniform(0.0, 2.0);
  const RenderResult r = composite(t, sig, gray(static_cast<size_t>(k), 0.5), 6.0);
  EXPECT_LE(r.depth, r.opacity * t.back() + 1e-12);
  EXPECT_GE(r.depth, 0.0);
}

TEST(Composite, QuadratureErrorShrinksAsSamplesDouble) {
  // smooth medium sigma(t) = 0.1 + 0.3 t over [0,4]: analytic optical depth
  // is 0.1*4 + 0.15*16 = 2.8
  const double analytic = 1.0 - std::exp(-2.8);
  double prev_err = 1e300;
  for (int k = 32; k <= 256; k *= 2) {
    std::vector<double> t(static_cast<size_t>(k));
    const double h = 4.0 / k;
    for (int i = 0; i < k; ++i) t[static_cast<size_t>(i)] = i * h;
    std::vector<double> sig(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) sig[static_cast<size_t>(i)] = 0.1 + 0.3 * t[static_cast<size_t>(i)];
    // first sample at 0 breaks strict ascension? no: 0, h, 2h... strictly up
    const RenderResult r = composite(t, sig, gray(static_cast<size_t>(k), 0.5), 4.0);
    const double err = std::abs(r.opacity - analytic);
    EXPECT_LT(err, prev_err);
    prev_err = err;
  }
}

// --------------------------------------------------------------------------
// graph composite

TEST(CompositeGraph, MatchesPlainComposite) {
  Rng rng(17);
  const int rays = 3, k = 16;
  std::vector<std::vector<double>> t;
  Array sig({static_cast<int64_t>(rays * k), 1});
  Array col({static_cast<int64_t>(rays * k), 3});
  for (int r = 0; r < rays; ++r) {
    t.push_back(stratified_sample(0.05, 9.5, k, rng));
    for (int i = 0; i < k; ++i) {
      sig.data[static_cast<size_t>(r * k + i)] = rng.uniform(0.0, 2.0);
      for (int c = 0; c < 3; ++c)
        col.data[static_cast<size_t>((r * k + i) * 3 + c)] = rng.uniform();
    }
  }
  const CompositeGraph g = composite_graph(constant(sig), constant(col), t, 9.5);
  for (int r = 0; r < rays; ++r) {
    std::vector<double> s(static_cast<size_t>(k));
    std::vector<Vec3> cv(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
      s[static_cast<size_t>(i)] = sig.data[static_cast<size_t>(r * k + i)];
      cv[static_cast<size_t>(i)] = {col.data[static_cast<size_t>((r * k + i) * 3)],
                                    col.data[static_cast<size_t>((r * k + i) * 3 + 1)],
                                    col.data[static_cast<size_t>((r * k + i) * 3 + 2)]};
    }
    const RenderResult p = composite(t[static_cast<size_t>(r)], s, cv, 9.5);
    EXPECT_NEAR(g.color->value.at2(r, 0), p.color.x, 1e-12);
    EXPECT_NEAR(g.color->value.at2(r, 1), p.color.y, 1e-12);
    EXPECT_NEAR(g.color->value.at2(r, 2), p.color.z, 1e-12);
    EXPECT_NEAR(g.depth->value.at2(r, 0), p.depth, 1e-12);
    EXPECT_NEAR(std::sqrt(std::max(0.0, g.depth_var->value.at2(r, 0))), p.depth_std, 1e-12);
    EXPECT_NEAR(g.opacity->value.at2(r, 0), p.opacity, 1e-12);
  }
}

TEST(CompositeGraph, WeightIdentityHolds) {
  Rng rng(19);
  const int rays = 2, k = 24;
  std::vector<std::vector<double>> t;
  Array sig({static_cast<int64_t>(rays * k), 1});
  for (int r = 0; r < rays; ++r) {
    t.push_back(stratified_sample(0.1, 7.0, k, rng));
    for (int i = 0; i < k; ++i) sig.data[static_cast<size_t>(r * k + i)] = rng.uniform(0.0, 2.5);
  }
  const CompositeGraph g =
      composite_graph(constant(sig), constant(Array({static_cast<int64_t>(rays * k), 3}, 0.5)),
                      t, 7.0);
  for (int r = 0; r < rays; ++r) {
    double tau = 0.0;
    for (int i = 0; i < k; ++i)
      tau += sig.data[static_cast<size_t>(r * k + i)] *
             ((i + 1 < k ? t[static_cast<size_t>(r)][static_cast<size_t>(i + 1)] : 7.0) -
              t[static_cast<size_t>(r)][static_cast<size_t>(i)]);
    EXPECT_NEAR(g.opacity->value.at2(r, 0), 1.0 - std::exp(-tau), 1e-12);
  }
}

TEST(CompositeGraph, GradientsMatchFiniteDifferences) {
  Rng rng(23);
  const int rays = 2, k = 6;
  std::vector<std::vector<double>> t;
  for (int r = 0; r < rays; ++r) t.push_back(stratified_sample(0.2, 5.0, k, rng));
  auto sig = leaf(random_array({rays * k, 1}, rng, 0.1, 2.0));
  auto col = leaf(random_array({rays * k, 3}, rng, 0.1, 0.9));
  auto build = [&] {
    const CompositeGraph g = composite_graph(sig, col, t, 5.0);
    // scalar probe touching every output head
    return add(add(sum(square(g.color)), sum(square(g.depth))),
               add(sum(g.depth_var), sum(square(g.opacity))));
  };
  const auto r = grad_check({sig, col}, build);
  EXPECT_LT(r.max_rel_err, 1e-4) << r.worst;
}

// --------------------------------------------------------------------------
// samplers

TEST(Samplers, StratifiedOnePerBin) {
  Rng rng(29);
  const int k = 256;
  const std::vector<double> t = stratified_sample(1.0, 9.0, k, rng);
  ASSERT_EQ(t.size(), 256u);
  const double h = 8.0 / k;
  for (int i = 0; i < k; ++i) {
    EXPECT_GE(t[static_cast<size_t>(i)], 1.0 + i * h);
    EXPECT_LT(t[static_cast<size_t>(i)], 1.0 + (i + 1) * h);
    if (i) EXPECT_GT(t[static_cast<size_t>(i)], t[static_cast<size_t>(i - 1)]);
  }
}

TEST(Samplers, StratifiedSingleSampleInRange) {
  Rng rng(31);
  const std::vector<double> t = stratified_sample(2.0, 3.0, 1, rng);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_GE(t[0], 2.0);
  EXPECT_LT(t[0], 3.0);
}

TEST(Samplers, SeedReproducible) {
  Rng a(42), b(42), c(43), d(42);
  EXPECT_EQ(stratified_sample(0.0, 10.0, 32, a), stratified_sample(0.0, 10.0, 32, b));
  EXPECT_NE(stratified_sample(0.0, 10.0, 32, d), stratified_sample(0.0, 10.0, 32, c));
}

TEST(Samplers, GaussianConcentratesForSmallStd) {
  Rng rng(37);
  const double s = 0.01;
  const std::vector<double> t = gaussian_sample(0.05, 10.0, 4.0, s, 128, rng);
  double mean = 0.0;
  for (double v : t) mean += v;
  mean /= static_cast<double>(t.size());
  double var = 0.0;
  for (double v : t) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(t.size()));
  EXPECT_NEAR(mean, 4.0, 3.0 * s);
  EXPECT_LT(sd, 2.0 * s);
}

TEST(Samplers, GuidedStaysInRangeForHugeStd) {
  Rng rng(41);
  const std::vector<double> t = depth_guided_sample(0.05, 10.0, 5.0, 100.0, 256, rng);
  ASSERT_EQ(t.size(), 256u);
  for (size_t i = 0; i < t.size(); ++i) {
    EXPECT_GE(t[i], 0.05);
    EXPECT_LE(t[i], 10.0);
    if (i) EXPECT_GT(t[i], t[i - 1]);
  }
}

TEST(Samplers, GuidedSecondHalfTracksPrior) {
  Rng rng(43);
  const double z = 6.0, s = 0.05;
  const std::vector<double> t = depth_guided_sample(0.05, 10.0, z, s, 256, rng);
  ASSERT_EQ(t.size(), 256u);
  int64_t near_prior = 0;
  for (double v : t) near_prior += std::abs(v - z) < 4.0 * s ? 1 : 0;
  // the Gaussian half (128 samples) should essentially all land near z;
  // the stratified half contributes ~128 * 0.4/9.95 there
  EXPECT_GE(near_prior, 120);
  EXPECT_THROW(depth_guided_sample(0.05, 10.0, 12.0, 1.0, 256, rng), std::invalid_argument);
  EXPECT_THROW(depth_guided_sample(0.05, 10.0, 5.0, 1.0, 255, rng), std::invalid_argument);
}

// --------------------------------------------------------------------------
// test-time two-pass rendering

namespace {
// opaque wall at depth `wall`: zero density before, high density after
RayQueryFn wall_field(double wall, double density = 200.0) {
  return [wall, density](const std::vector<double>& t, std::vector<double>& sig,
                         std::vector<Vec3>& rgb) {
    sig.resize(t.size());
    rgb.assign(t.size(), Vec3{0.9, 0.1, 0.1});
    for (size_t i = 0; i < t.size(); ++i) sig[i] = t[i] >= wall ? density : 0.0;
  };
}
}  // namespace

TEST(TestTimeRender, LocalizesOpaqueWall) {
  Rng rng(47);
  const auto out = render_pixel_test_time(wall_field(3.0), 0.05, 10.0, 256, rng);
  EXPECT_FALSE(out.fallback);
  EXPECT_EQ(out.queries, 256);
  const double pass1_bin = (10.0 - 0.05) / 128.0;
  EXPECT_NEAR(out.result.depth, 3.0, pass1_bin);
  EXPECT_NEAR(out.result.opacity, 1.0, 1e-6);
  EXPECT_NEAR(out.result.color.x, 0.9, 1e-6);
}

TEST(TestTimeRender, SecondPassClustersAtTheWall) {
  // run the machinery and verify via depth_std: concentrated samples around
  // the wall give a much tighter ẑ spread than stratified alone would
  Rng rng(53);
  const auto out = render_pixel_test_time(wall_field(4.2), 0.05, 10.0, 256, rng);
  EXPECT_LT(out.result.depth_std, (10.0 - 0.05) / 128.0);
}

TEST(TestTimeRender, TransparentFieldFallsBack) {
  Rng rng(59);
  RayQueryFn empty = [](const std::vector<double>& t, std::vector<double>& sig,
                        std::vector<Vec3>& rgb) {
    sig.assign(t.size(), 0.0);
    rgb.assign(t.size(), Vec3{});
  };
  const auto out = render_pixel_test_time(empty, 0.05, 10.0, 256, rng);
  EXPECT_TRUE(out.fallback);
  EXPECT_EQ(out.queries, 256);
  EXPECT_DOUBLE_EQ(out.result.opacity, 0.0);
}

TEST(TestTimeRender, QueryBudgetExact) {
  for (int k : {64, 128, 256}) {
    Rng rng(61);
    const auto out = render_pixel_test_time(wall_field(2.0), 0.05, 10.0, k, rng);
    EXPECT_EQ(out.queries, k);
  }
}
