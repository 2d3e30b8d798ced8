// Acceptance suite for the depth-guided radiance-field pipeline. Each test
// verifies one release criterion end to end and prints a single
// "[CRITERION n] PASS/FAIL" line with the measured numbers, so the ctest log
// doubles as the acceptance report. All tolerances are pinned here as named
// constants. The heavyweight experiments (a trained completion network and
// eight radiance-field training runs) are built once, lazily, and shared by
// the criteria that need them; tests run in declaration order.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "roomnerf/experiment.hpp"
#include "testutil.hpp"

namespace {

using namespace roomnerf;
namespace rt = roomnerf::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

const bool kBlasPinned = [] {
  use_single_thread_blas();
  return true;
}();

// ---------------------------------------------------------------------------
// Pinned tolerances and budgets, one place.

// Criterion 1: gradients match central finite differences.
constexpr double kGradRelTol = 1e-4;
constexpr int kGradConfigs = 20;  // minimum number of random configurations
constexpr double kGradBudgetSec = 60.0;

// Criterion 2: rendering oracles.
constexpr double kOpacityTol = 1e-3;
constexpr double kWeightIdentityTol = 1e-12;
constexpr int kOracleSamples = 256;

// Criterion 4: depth-prior quality at 0.04 % sparse density.
constexpr double kPriorDensity = 0.0004;
constexpr double kDenseToSparseFactor = 1.5;
constexpr double kCoverageLo = 0.55, kCoverageHi = 0.85;
constexpr double kCompletionBudgetSec = 1800.0;

// Criterion 5: end-to-end trend, 8 views at 64x64, 5k iterations, K = 256.
constexpr double kPsnrMarginDb = 1.0;
constexpr double kRmseFactor = 2.0;
constexpr double kPsnrTieDb = 0.1;     // |difference| treated as a tie
constexpr double kSsimTie = 0.005;
constexpr double kRmseTieRel = 0.05;   // 5 % relative slack counts as a tie
constexpr double kTrendBudgetSec = 7200.0;

// Criterion 6: density sweep endpoints.
constexpr double kSweepHighDensity = 0.001;   // 0.1 %
constexpr double kSweepLowDensity = 0.0001;   // 0.01 %

// Criterion 7: latent-code protocol.
constexpr double kSeamFactor = 2.0;
constexpr int kCodeOptSteps = 200;
constexpr double kCodeOptLr = 0.01;

// Fixed seeds for every stage, so the whole suite is one reproducible run.
constexpr uint64_t kSceneSeed = 424242;
constexpr uint64_t kSparseSeed = 99;
constexpr uint64_t kCorpusSeed = 501;
constexpr uint64_t kHeldoutSeed = 777;
constexpr uint64_t kTrainSeed = 1000;
constexpr uint64_t kEvalSeed = 31;
constexpr uint64_t kSeamSeed = 23;
constexpr uint64_t kCodeSeed = 17;

void report(int n, bool pass, const std::string& details) {
  std::printf("[CRITERION %d] %s — %s\n", n, pass ? "PASS" : "FAIL", details.c_str());
  std::fflush(stdout);
}

std::string num(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

double elapsed(Clock::time_point since) {
  return std::chrono::duration<double>(Clock::now() - since).count();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Shared heavyweight state.

struct VariantRun {
  std::unique_ptr<NerfTrainer> trainer;
  EvalResult eval;
  double seconds = 0.0;  // training + evaluation
};

// The experiment configuration shared by criteria 5-7: small trunk sized for
// a single desktop core, full sample count and iteration budget.
TrainConfig base_train_config() {
  TrainConfig cfg;
  cfg.batch = 48;
  cfg.iterations = 5000;
  cfg.k_total = 256;
  cfg.lr = 5e-4;
  cfg.log_every = 0;
  cfg.seed = kTrainSeed;
  cfg.field.freqs = 5;
  cfg.field.trunk_layers = 4;
  cfg.field.trunk_width = 32;
  cfg.field.skip_layer = 2;
  cfg.field.view_width = 16;
  cfg.field.latent_dim = 4;
  return cfg;
}

struct Shared {
  SceneGeometry scene;
  SceneDataset ds;      // 8 train + 4 test at 64x64, per-view brightness offsets
  SparseSim sparse04;   // 0.04 % density on ds

  ParamStore net_store;
  std::optional<CompletionNet> net;
  double completion_seconds = -1.0;
  CalibrationReport heldout_dense;   // completion output vs ground truth
  double heldout_sparse_rmse = 0.0;  // the sparse observations themselves
  int heldout_outliers = 0;
  int heldout_points = 0;

  std::map<std::string, VariantRun> runs;
  double trend_seconds = 0.0;  // accumulated over the six criterion-5 runs

  Shared() : scene(generate_scene(kSceneSeed, {})) {
    DatasetConfig dcfg;
    dcfg.n_train = 8;
    dcfg.n_test = 4;
    dcfg.width = 64;
    dcfg.height = 64;
    dcfg.intensity_amplitude = 0.2;
    ds = make_scene_dataset(scene, dcfg, kSceneSeed);
    SparseConfig scfg;
    scfg.density = kPriorDensity;
    scfg.t_near = dcfg.t_near;
    scfg.t_far = dcfg.t_far;
    sparse04 = simulate_dataset_sparse(ds, scfg, kDefaultNoise, kSparseSeed);
  }
};

Shared& shared() {
  static Shared s;
  return s;
}

// Trains the completion network once (criterion 4) and reuses it for the
// dense priors of criteria 5-7.
CompletionNet& completion_net() {
  Shared& s = shared();
  if (!s.net) {
    SparseConfig scfg;
    scfg.density = kPriorDensity;
    const auto train =
        make_completion_corpus(6, 4, 64, 80, scfg, kDefaultNoise, kCorpusSeed);
    const auto val = make_completion_corpus(1, 4, 64, 80, scfg, kDefaultNoise,
                                            derive_seed(kCorpusSeed, 0xA1DUL));
    CompletionConfig ccfg;
    Rng init(derive_seed(kCorpusSeed, 0x1247UL));
    s.net.emplace(s.net_store, ccfg, init);
    TrainCompletionConfig tcfg;
    tcfg.epochs = 40;
    tcfg.seed = kCorpusSeed;
    const auto t0 = Clock::now();
    train_completion(s.net_store, *s.net, train, val, tcfg);
    s.completion_seconds = elapsed(t0);
  }
  return *s.net;
}

std::vector<DepthPrior> priors_for(const std::string& name, const SparseSim& sim) {
  if (name == "no_completion")
    return sparse_only_priors(sim.result.maps, sim.fitted);
  return completed_priors(completion_net(), shared().ds.train, sim.result.maps);
}

// Lazily trains one named variant at the shared scale and evaluates it on the
// four test views.
VariantRun& get_run(const std::string& name) {
  Shared& s = shared();
  auto it = s.runs.find(name);
  if (it != s.runs.end()) return it->second;

  const auto t0 = Clock::now();
  Variant variant = Variant::kFull;
  const SparseSim* sim = &s.sparse04;
  std::optional<SparseSim> local_sim;
  std::string prior_kind = name;
  if (name == "baseline") {
    variant = Variant::kPlainNerf;
  } else if (name == "full" || name == "full_low_density") {
    variant = Variant::kFull;
    prior_kind = "full";
  } else if (name == "no_completion" || name == "no_completion_high_density") {
    variant = Variant::kNoCompletion;
    prior_kind = "no_completion";
  } else {
    variant = variant_from_name(name);
  }
  if (name == "full_low_density" || name == "no_completion_high_density") {
    SparseConfig scfg;
    scfg.density = name == "full_low_density" ? kSweepLowDensity : kSweepHighDensity;
    scfg.t_near = s.ds.config.t_near;
    scfg.t_far = s.ds.config.t_far;
    local_sim.emplace(simulate_dataset_sparse(
        s.ds, scfg, kDefaultNoise,
        derive_seed(kSparseSeed, name == "full_low_density" ? 1 : 2)));
    sim = &*local_sim;
  }

  const TrainConfig cfg = variant_train_config(variant, base_train_config());
  std::vector<DepthMap> pz, ps;
  if (variant == Variant::kPlainNerf) {
    for (const auto& v : s.ds.train) {
      pz.emplace_back(v.image.width, v.image.height);
      ps.emplace_back(v.image.width, v.image.height);
    }
  } else {
    for (auto& p : priors_for(prior_kind, *sim)) {
      pz.push_back(std::move(p.z));
      ps.push_back(std::move(p.s));
    }
  }

  VariantRun run;
  run.trainer = std::make_unique<NerfTrainer>(s.ds, std::move(pz), std::move(ps), cfg);
  run.trainer->train();
  run.eval = evaluate_views(run.trainer->field(), s.ds.test, s.ds.config.t_near,
                            s.ds.config.t_far, cfg.k_total, kEvalSeed);
  run.seconds = elapsed(t0);
  return s.runs.emplace(name, std::move(run)).first->second;
}

// ---------------------------------------------------------------------------
// Criterion 1 — every differentiable op and the full pixel pipeline agree
// with central finite differences on randomized configurations.

// Values drawn away from zero so kinked ops (relu, abs, clamp) are probed on
// smooth ground.
Array random_signed(std::vector<int64_t> shape, Rng& rng, double lo = 0.3, double hi = 1.0) {
  Array a(std::move(shape));
  for (double& v : a.data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return a;
}

TEST(Acceptance, Criterion1_GradientsMatchFiniteDifferences) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  int configs = 0;

  auto run_case = [&](const std::string& name, const std::vector<NodePtr>& leaves,
                      const std::function<NodePtr()>& build) {
    const rt::GradCheckResult r = rt::grad_check(leaves, build);
    ++configs;
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_name = name + " (" + r.worst + ")";
    }
    EXPECT_LE(r.max_rel_err, kGradRelTol) << name << ": " << r.worst;
  };

  // 1-16: one randomized configuration per op family.
  {
    Rng rng(101);
    NodePtr a = leaf(rt::random_array({2, 3}, rng));
    NodePtr b = leaf(rt::random_array({1, 3}, rng));
    run_case("broadcast add/sub/mul", {a, b},
             [&] { return sum(mul(add(a, b), sub(a, b))); });
  }
  {
    Rng rng(102);
    NodePtr a = leaf(rt::random_array({2, 3}, rng, 0.5, 1.5));
    NodePtr b = leaf(rt::random_array({2, 3}, rng, 0.5, 1.5));
    run_case("div + scale + add_const", {a, b},
             [&] { return sum(scale(div(a, add_const(b, 0.7)), 1.3)); });
  }
  {
    Rng rng(103);
    NodePtr a = leaf(rt::random_array({3, 4}, rng));
    NodePtr b = leaf(rt::random_array({4, 2}, rng));
    run_case("matmul", {a, b}, [&] { return sum(matmul(a, b)); });
  }
  {
    Rng rng(104);
    NodePtr x = leaf(random_signed({2, 5}, rng));
    run_case("relu + softplus + sigmoid", {x},
             [&] { return sum(sigmoid(softplus(relu(x)))); });
  }
  {
    Rng rng(105);
    NodePtr x = leaf(rt::random_array({3, 3}, rng, 0.4, 1.6));
    run_case("log/exp/sqrt/square", {x},
             [&] { return sum(log(add_const(sqrt(mul(square(x), exp(scale(x, 0.3)))), 0.5))); });
  }
  {
    Rng rng(106);
    NodePtr x = leaf(random_signed({2, 4}, rng));
    run_case("abs + clamp_min", {x},
             [&] { return sum(mul(abs(x), clamp_min(x, -0.15))); });
  }
  {
    Rng rng(107);
    NodePtr x = leaf(rt::random_array({3, 4}, rng));
    run_case("sum_axis both axes + mean", {x},
             [&] { return add(mean(sum_axis(x, 0)), sum(sum_axis(x, 1))); });
  }
  {
    Rng rng(108);
    NodePtr x = leaf(rt::random_array({2, 6}, rng));
    run_case("cumsum_exclusive", {x},
             [&] { return sum(mul(cumsum_exclusive(x), x)); });
  }
  {
    Rng rng(109);
    NodePtr x = leaf(rt::random_array({2, 6}, rng));
    NodePtr y = leaf(rt::random_array({2, 3}, rng));
    run_case("reshape + concat + slice", {x, y}, [&] {
      NodePtr c = concat({reshape(reshape(x, {2, 2, 3}), {2, 6}), y}, 1);
      return sum(square(slice(c, 1, 2, 5)));
    });
  }
  {
    Rng rng(110);
    NodePtr table = leaf(rt::random_array({4, 3}, rng));
    run_case("gather_rows", {table},
             [&] { return sum(square(gather_rows(table, {2, 0, 2, 3}))); });
  }
  {
    Rng rng(111);
    NodePtr x = leaf(rt::random_array({5, 2}, rng));
    run_case("segment_sum", {x}, [&] {
      return sum(square(segment_sum(x, {1, 0, 1, 2, 1}, 3)));
    });
  }
  {
    Rng rng(112);
    NodePtr p = leaf(rt::random_array({3, 3}, rng));
    run_case("positional_encoding", {p},
             [&] { return sum(square(positional_encoding(p, 3))); });
  }
  {
    Rng rng(113);
    NodePtr x = leaf(rt::random_array({1, 2, 6, 6}, rng));
    NodePtr w = leaf(rt::random_array({3, 2, 3, 3}, rng, -0.5, 0.5));
    NodePtr b = leaf(rt::random_array({3}, rng, -0.2, 0.2));
    run_case("conv2d stride 2", {x, w, b},
             [&] { return sum(square(conv2d(x, w, b, 2, 1))); });
  }
  {
    Rng rng(114);
    NodePtr x = leaf(rt::random_array({1, 2, 3, 4}, rng));
    run_case("upsample_nearest_2x", {x},
             [&] { return sum(square(upsample_nearest_2x(x))); });
  }
  {
    Rng rng(115);
    NodePtr d = leaf(rt::random_array({1, 1, 4, 4}, rng, 0.5, 2.0));
    NodePtr aff = leaf(rt::random_array({1, 8, 4, 4}, rng));
    run_case("cspn_step", {d, aff},
             [&] { return sum(square(cspn_step(cspn_step(d, aff), aff))); });
  }
  {
    Rng rng(116);
    NodePtr raw_sigma = leaf(rt::random_array({6, 1}, rng));
    NodePtr raw_color = leaf(rt::random_array({6, 3}, rng));
    const std::vector<std::vector<double>> t = {{0.3, 0.9, 1.4}, {0.2, 1.0, 2.1}};
    run_case("volume compositing graph", {raw_sigma, raw_color}, [&] {
      CompositeGraph g = composite_graph(softplus(raw_sigma), sigmoid(raw_color), t, 3.0);
      return add(add(sum(g.color), sum(g.depth)),
                 add(sum(g.opacity), sum(clamp_min(g.depth_var, 1e-6))));
    });
  }

  // 17-20: the full pixel pipeline — trunk query, color head, compositing,
  // color loss plus the gated depth loss — differentiated through every
  // field parameter. Four random field/ray configurations.
  for (int rep = 0; rep < 4; ++rep) {
    Rng rng(derive_seed(0xF00D, static_cast<uint64_t>(rep)));
    ParamStore store;
    FieldConfig fcfg;
    fcfg.freqs = 2;
    fcfg.trunk_layers = 2;
    fcfg.trunk_width = 8;
    fcfg.skip_layer = 1;
    fcfg.view_width = 8;
    fcfg.latent_dim = 2;
    fcfg.n_images = 2;
    fcfg.bound_min = {-1, -1, -1};
    fcfg.bound_max = {3, 3, 3};
    FieldMLP field(store, fcfg, rng);

    const int b = 2, k = 4;
    Array pos({b * k, 3});
    Array dirs({b * k, 3});
    std::vector<std::vector<double>> t(b);
    for (int r = 0; r < b; ++r) {
      double tv = 0.2 + 0.1 * rng.uniform();
      Vec3 d{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3)};
      const double n = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
      d = {d.x / n, d.y / n, d.z / n};
      for (int i = 0; i < k; ++i) {
        tv += 0.25 + 0.5 * rng.uniform();
        t[static_cast<size_t>(r)].push_back(tv);
        const size_t row = static_cast<size_t>(r * k + i);
        pos.data[3 * row] = 0.5 + d.x * tv;
        pos.data[3 * row + 1] = 0.7 + d.y * tv;
        pos.data[3 * row + 2] = 1.0 + d.z * tv;
        dirs.data[3 * row] = d.x;
        dirs.data[3 * row + 1] = d.y;
        dirs.data[3 * row + 2] = d.z;
      }
    }
    Array target({b, 3});
    for (double& v : target.data) v = rng.uniform(0.1, 0.9);

    // Fix the depth priors once, from the unperturbed forward pass, with the
    // gate held open far from its boundary; the finite-difference probes move
    // the rendered depth by ~1e-4, so the branch cannot flip.
    std::vector<double> z, s;
    std::vector<uint8_t> has;
    {
      auto trunk = field.query_trunk(pos);
      NodePtr codes = field.gather_codes({0, 0, 0, 0, 1, 1, 1, 1});
      NodePtr color = field.color_head(trunk.feature, dirs, codes);
      CompositeGraph g = composite_graph(trunk.sigma, color, t, 4.5);
      for (int r = 0; r < b; ++r) {
        z.push_back(g.depth->value.data[static_cast<size_t>(r)] + 0.8);
        s.push_back(0.05);
        has.push_back(r == 0 ? 1 : 0);  // one supervised ray, one masked out
      }
    }

    auto build = [&] {
      auto trunk = field.query_trunk(pos);
      NodePtr codes = field.gather_codes({0, 0, 0, 0, 1, 1, 1, 1});
      NodePtr color = field.color_head(trunk.feature, dirs, codes);
      CompositeGraph g = composite_graph(trunk.sigma, color, t, 4.5);
      NodePtr color_loss = scale(sum(square(sub(g.color, constant(target)))), 1.0 / b);
      NodePtr dl = gated_depth_loss(g.depth, g.depth_var, z, s, has,
                                    DepthLossKind::kGatedGnll);
      return add(color_loss, scale(dl, 0.1));
    };
    run_case("pixel pipeline rep " + std::to_string(rep), store.params(), build);
  }

  const double secs = elapsed(t0);
  const bool pass = configs >= kGradConfigs && worst <= kGradRelTol && secs < kGradBudgetSec;
  report(1, pass,
         cat(configs, " configurations, worst relative error ", num(worst, 8), " (tol ",
             kGradRelTol, ", worst case: ", worst_name.empty() ? "none" : worst_name, "), ",
             num(secs, 1), " s (budget ", num(kGradBudgetSec, 0), " s)"));
  EXPECT_GE(configs, kGradConfigs);
  EXPECT_LT(secs, kGradBudgetSec);
}

// ---------------------------------------------------------------------------
// Criterion 2 — closed-form rendering oracles at K = 256.

TEST(Acceptance, Criterion2_RenderingOracles) {
  const double t_near = 0.1, t_far = 3.1;
  const int k = kOracleSamples;
  const double bin = (t_far - t_near) / k;

  // Homogeneous medium: opacity must match 1 - exp(-sigma * range).
  double worst_opacity_err = 0.0;
  for (double sigma_v : {0.3, 0.9, 2.2}) {
    std::vector<double> t(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) t[static_cast<size_t>(i)] = t_near + i * bin;
    std::vector<double> sigma(static_cast<size_t>(k), sigma_v);
    std::vector<Vec3> rgb(static_cast<size_t>(k), Vec3{0.5, 0.5, 0.5});
    const RenderResult r = composite(t, sigma, rgb, t_far);
    const double expect = 1.0 - std::exp(-sigma_v * (t_far - t_near));
    worst_opacity_err = std::max(worst_opacity_err, std::abs(r.opacity - expect));
    EXPECT_NEAR(r.opacity, expect, kOpacityTol) << "sigma " << sigma_v;
  }

  // Opaque wall: expected depth within one bin of the wall.
  const double wall = 1.7, sigma_wall = 500.0;
  std::vector<double> t(static_cast<size_t>(k));
  std::vector<double> sigma(static_cast<size_t>(k));
  std::vector<Vec3> rgb(static_cast<size_t>(k), Vec3{0.8, 0.2, 0.1});
  for (int i = 0; i < k; ++i) {
    t[static_cast<size_t>(i)] = t_near + i * bin;
    sigma[static_cast<size_t>(i)] = t[static_cast<size_t>(i)] >= wall ? sigma_wall : 0.0;
  }
  const RenderResult wall_r = composite(t, sigma, rgb, t_far);
  const double depth_err = std::abs(wall_r.depth - wall);
  EXPECT_LE(depth_err, bin);

  // Weight identity: the weights must telescope to 1 - exp(-total optical
  // depth) to near machine precision.
  double worst_identity = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Rng rng(derive_seed(0x0AC1E, static_cast<uint64_t>(trial)));
    std::vector<double> ts = stratified_sample(t_near, t_far, k, rng);
    std::vector<double> sg(static_cast<size_t>(k));
    for (double& v : sg) v = rng.uniform(0.0, 3.0);
    const RenderResult rr = composite(ts, sg, rgb, t_far);
    double sum_w = 0.0, tau = 0.0;
    for (int i = 0; i < k; ++i) {
      sum_w += rr.weights[static_cast<size_t>(i)];
      const double delta = (i + 1 < k ? ts[static_cast<size_t>(i + 1)] : t_far) -
                           ts[static_cast<size_t>(i)];
      tau += sg[static_cast<size_t>(i)] * delta;
    }
    const double err = std::abs(sum_w - (1.0 - std::exp(-tau)));
    worst_identity = std::max(worst_identity, err);
    EXPECT_LE(err, kWeightIdentityTol);
  }

  const bool pass = worst_opacity_err <= kOpacityTol && depth_err <= bin &&
                    worst_identity <= kWeightIdentityTol;
  report(2, pass,
         cat("homogeneous opacity error ", num(worst_opacity_err, 8), " (tol ", kOpacityTol,
             "), wall depth error ", num(depth_err, 5), " m (bin ", num(bin, 5),
             " m), weight identity ", num(worst_identity, 16), " (tol 1e-12), K=", k));
}

// ---------------------------------------------------------------------------
// Criterion 3 — the depth-loss zero branch fires exactly when the rendered
// depth is within the prior band and the rendered spread is at most the
// prior's, with exactly zero gradient inside the branch.

TEST(Acceptance, Criterion3_LossGatingSweep) {
  int checked = 0, zero_branch = 0;
  bool pass = true;
  std::string first_fail;
  // A leaf that receives no gradient flow keeps an empty grad array; that
  // counts as an exact zero.
  const auto grad0 = [](const NodePtr& n) {
    return n->grad.data.empty() ? 0.0 : n->grad.data[0];
  };

  // Binary-exact grid so the inclusive boundaries are unambiguous.
  for (double s : {0.25, 0.5}) {
    for (double r_frac : {-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0}) {
      for (double shat_frac : {0.5, 1.0, 1.5}) {
        for (DepthLossKind kind : {DepthLossKind::kGatedGnll, DepthLossKind::kGatedMse}) {
          const double z = 2.0;
          const double r = r_frac * s;
          const double shat = shat_frac * s;
          NodePtr depth = leaf(Array({1, 1}, z + r));
          NodePtr var = leaf(Array({1, 1}, shat * shat));
          NodePtr loss = gated_depth_loss(depth, var, {z}, {s}, {1}, kind);
          backward(loss);

          const bool expect_zero = std::abs(r) <= s && shat <= s;
          const double got = loss->value.data[0];
          const double gd = grad0(depth);
          const double gv = grad0(var);
          ++checked;
          if (expect_zero) {
            ++zero_branch;
            if (got != 0.0 || gd != 0.0 || gv != 0.0) {
              pass = false;
              if (first_fail.empty())
                first_fail = cat("expected exact zero at r=", r, " shat=", shat, " s=", s,
                                 " got loss=", got, " grads=", gd, "/", gv);
            }
          } else {
            // Outside the branch the loss and both gradients must match the
            // closed forms: GNLL = log(v) + r^2/v with dv = 1/v - r^2/v^2,
            // dz = 2r/v; MSE = r^2 with dz = 2r, dv = 0.
            const double ref = depth_loss_value(z + r, shat, z, s, kind);
            const double v = shat * shat;
            const double want_gd = kind == DepthLossKind::kGatedGnll ? 2.0 * r / v : 2.0 * r;
            const double want_gv =
                kind == DepthLossKind::kGatedGnll ? 1.0 / v - r * r / (v * v) : 0.0;
            const auto close = [](double a, double b) {
              return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
            };
            if (std::abs(got - ref) > 1e-12 || !close(gd, want_gd) || !close(gv, want_gv)) {
              pass = false;
              if (first_fail.empty())
                first_fail = cat("open branch mismatch at r=", r, " shat=", shat, " s=", s,
                                 ": loss=", got, " ref=", ref, " grads=", gd, "/", gv,
                                 " want ", want_gd, "/", want_gv);
            }
          }
        }
      }
    }
  }

  // Rays without a prior never contribute, whatever the residual.
  {
    NodePtr depth = leaf(Array({1, 1}, 9.0));
    NodePtr var = leaf(Array({1, 1}, 4.0));
    NodePtr loss =
        gated_depth_loss(depth, var, {1.0}, {0.01}, {0}, DepthLossKind::kGatedGnll);
    backward(loss);
    if (loss->value.data[0] != 0.0 || grad0(depth) != 0.0 || grad0(var) != 0.0) {
      pass = false;
      if (first_fail.empty()) first_fail = "unsupervised ray leaked into the loss";
    }
    ++checked;
  }

  report(3, pass,
         cat(checked, " grid points (", zero_branch,
             " in the zero branch), zero branch exact and gradient-free, open branch matches "
             "the scalar reference",
             first_fail.empty() ? "" : cat("; FIRST FAILURE: ", first_fail)));
  EXPECT_TRUE(pass) << first_fail;
}

// ---------------------------------------------------------------------------
// Criterion 4 — completion quality at 0.04 % density on held-out scenes.

TEST(Acceptance, Criterion4_DepthPriorQuality) {
  CompletionNet& net = completion_net();
  Shared& s = shared();

  // Held-out scenes the training corpus never saw.
  std::vector<DepthPrior> priors;
  std::vector<DepthMap> gt;
  double sse = 0.0;
  int64_t n_obs = 0;
  int outliers = 0;
  for (int sc = 0; sc < 12; ++sc) {
    const SceneGeometry scene =
        generate_scene(derive_seed(kHeldoutSeed, static_cast<uint64_t>(sc)), {});
    DatasetConfig dcfg;
    dcfg.n_train = 4;
    dcfg.n_test = 0;
    dcfg.width = 64;
    dcfg.height = 80;
    const SceneDataset ds =
        make_scene_dataset(scene, dcfg, derive_seed(kHeldoutSeed, 100 + sc));
    SparseConfig scfg;
    scfg.density = kPriorDensity;
    scfg.t_near = dcfg.t_near;
    scfg.t_far = dcfg.t_far;
    const SparseSim sim =
        simulate_dataset_sparse(ds, scfg, kDefaultNoise, derive_seed(kHeldoutSeed, 200 + sc));
    for (const SparsePoint& p : sim.result.points)
      if (p.outlier) ++outliers;
    for (size_t v = 0; v < ds.train.size(); ++v) {
      priors.push_back(net.complete(ds.train[v].image, sim.result.maps[v]));
      gt.push_back(ds.train[v].gt_depth);
      const DepthMap& sp = sim.result.maps[v];
      const DepthMap& g = ds.train[v].gt_depth;
      for (size_t i = 0; i < sp.data.size(); ++i)
        if (sp.data[i] > 0.0 && g.data[i] > 0.0) {
          const double e = sp.data[i] - g.data[i];
          sse += e * e;
          ++n_obs;
        }
    }
  }
  ASSERT_GT(n_obs, 0);
  s.heldout_sparse_rmse = std::sqrt(sse / static_cast<double>(n_obs));
  s.heldout_dense = calibration_report(priors, gt);
  s.heldout_outliers = outliers;
  s.heldout_points = static_cast<int>(n_obs);

  // The sparse error must include the simulator's gross outliers, matching
  // the regime the bound describes; with the pinned seeds it does.
  ASSERT_GE(outliers, 1) << "held-out sparse set drew no outliers; eval set too small";

  const bool rmse_ok =
      s.heldout_dense.rmse <= kDenseToSparseFactor * s.heldout_sparse_rmse;
  const bool cover_ok =
      s.heldout_dense.coverage1 >= kCoverageLo && s.heldout_dense.coverage1 <= kCoverageHi;
  const bool time_ok = s.completion_seconds <= kCompletionBudgetSec;
  const bool pass = rmse_ok && cover_ok && time_ok;
  report(4, pass,
         cat("dense rmse ", num(s.heldout_dense.rmse, 3), " m vs sparse rmse ",
             num(s.heldout_sparse_rmse, 3), " m over ", n_obs, " points (", outliers,
             " outliers): factor ", num(s.heldout_dense.rmse / s.heldout_sparse_rmse, 2),
             " (bound ", kDenseToSparseFactor, "); k=1 coverage ",
             num(s.heldout_dense.coverage1, 3), " (band [", kCoverageLo, ", ", kCoverageHi,
             "]); training ", num(s.completion_seconds, 0), " s (budget ",
             num(kCompletionBudgetSec, 0), " s)"));
  EXPECT_TRUE(rmse_ok);
  EXPECT_TRUE(cover_ok);
  EXPECT_TRUE(time_ok);
}

// ---------------------------------------------------------------------------
// Criterion 5 — end-to-end trend: the full method beats the color-only
// baseline, and every ablation scores worse than or equal to the full method.

bool better_or_tied(const ViewEval& full, const ViewEval& other) {
  int wins = 0;
  if (full.psnr >= other.psnr - kPsnrTieDb) ++wins;
  if (full.ssim >= other.ssim - kSsimTie) ++wins;
  if (full.depth_rmse <= other.depth_rmse * (1.0 + kRmseTieRel)) ++wins;
  return wins >= 2;
}

TEST(Acceptance, Criterion5_EndToEndTrend) {
  const std::vector<std::string> names = {"full",    "baseline", "no_completion",
                                          "no_uncertainty", "no_gnll",  "no_latent"};
  std::vector<EvalResult> evals;
  for (const std::string& n : names) evals.push_back(get_run(n).eval);
  double total = 0.0;
  for (const std::string& n : names) total += get_run(n).seconds;
  shared().trend_seconds = total;

  std::printf("%s", format_eval_table(names, evals).c_str());
  std::fflush(stdout);

  const ViewEval& full = evals[0].mean;
  const ViewEval& base = evals[1].mean;
  const double psnr_gain = full.psnr - base.psnr;
  const double rmse_ratio = base.depth_rmse / full.depth_rmse;
  const bool beats_baseline = psnr_gain >= kPsnrMarginDb && rmse_ratio >= kRmseFactor;

  std::string losers;
  bool ablations_ok = true;
  for (size_t i = 2; i < names.size(); ++i) {
    if (!better_or_tied(full, evals[i].mean)) {
      ablations_ok = false;
      losers += (losers.empty() ? "" : ", ") + names[i];
    }
  }
  const bool time_ok = total <= kTrendBudgetSec;
  const bool pass = beats_baseline && ablations_ok && time_ok;
  report(5, pass,
         cat("full vs color-only baseline: +", num(psnr_gain, 2), " dB (need ≥ ",
             kPsnrMarginDb, "), depth rmse ratio ", num(rmse_ratio, 2), "x (need ≥ ",
             kRmseFactor, "x); ablations worse-or-tied on ≥2 of 3 metrics: ",
             ablations_ok ? "all four" : cat("FAILED for ", losers), "; six runs took ",
             num(total / 60.0, 1), " min (budget ", num(kTrendBudgetSec / 60.0, 0), " min)"));
  EXPECT_TRUE(beats_baseline) << "gain " << psnr_gain << " dB, ratio " << rmse_ratio;
  EXPECT_TRUE(ablations_ok) << losers;
  EXPECT_TRUE(time_ok) << total;
}

// ---------------------------------------------------------------------------
// Criterion 6 — the full method at 0.01 % sparse density still beats the
// completion-free variant given ten times as many points.

TEST(Acceptance, Criterion6_DensitySweepEndpoints) {
  const VariantRun& low = get_run("full_low_density");
  const VariantRun& high = get_run("no_completion_high_density");
  const double full_rmse = low.eval.mean.depth_rmse;
  const double nc_rmse = high.eval.mean.depth_rmse;
  const bool pass = full_rmse < nc_rmse;
  report(6, pass,
         cat("full at 0.01 % density: depth rmse ", num(full_rmse, 3),
             " m; no-completion at 0.1 %: ", num(nc_rmse, 3), " m — full ",
             pass ? "wins with a tenth of the points" : "DOES NOT win"));
  EXPECT_TRUE(pass);
}

// ---------------------------------------------------------------------------
// Criterion 7 — latent codes: per-view code optimization recovers PSNR on the
// brightness-shifted test views, and removing codes at least doubles the
// inter-view color seam variance.

TEST(Acceptance, Criterion7_LatentCodeProtocol) {
  Shared& s = shared();
  const VariantRun& full = get_run("full");
  const VariantRun& no_latent = get_run("no_latent");

  double mean_zero = 0.0, mean_opt = 0.0;
  for (size_t i = 0; i < s.ds.test.size(); ++i) {
    const CodeOptResult r = optimize_test_code(
        full.trainer->field(), s.ds.test[i], s.ds.config.t_near, s.ds.config.t_far,
        base_train_config().k_total, kCodeOptSteps, kCodeOptLr, derive_seed(kCodeSeed, i));
    mean_zero += r.psnr_zero / static_cast<double>(s.ds.test.size());
    mean_opt += r.psnr_opt / static_cast<double>(s.ds.test.size());
  }
  const bool opt_wins = mean_opt > mean_zero;

  const int seam_k = 128;
  const double sv_full = seam_variance(full.trainer->field(), s.ds, seam_k, kSeamSeed);
  const double sv_nolatent =
      seam_variance(no_latent.trainer->field(), s.ds, seam_k, kSeamSeed);
  const bool seams_ok = sv_nolatent >= kSeamFactor * sv_full;

  const bool pass = opt_wins && seams_ok;
  report(7, pass,
         cat("test-view PSNR with optimized code ", num(mean_opt, 2), " dB vs zero code ",
             num(mean_zero, 2), " dB (must improve); seam variance without codes ",
             num(sv_nolatent, 6), " vs with codes ", num(sv_full, 6), " — ratio ",
             num(sv_full > 0 ? sv_nolatent / sv_full : 0.0, 1), "x (need ≥ ", kSeamFactor,
             "x)"));
  EXPECT_TRUE(opt_wins);
  EXPECT_TRUE(seams_ok);
}

// ---------------------------------------------------------------------------
// Criterion 8 — identical seeds reproduce checkpoints and metrics tables bit
// for bit.

TEST(Acceptance, Criterion8_Determinism) {
  Shared& s = shared();
  TrainConfig cfg;
  cfg.batch = 16;
  cfg.iterations = 120;
  cfg.k_total = 32;
  cfg.lr = 1e-3;
  cfg.log_every = 60;
  cfg.seed = 77;
  cfg.field.freqs = 3;
  cfg.field.trunk_layers = 2;
  cfg.field.trunk_width = 16;
  cfg.field.skip_layer = 1;
  cfg.field.view_width = 8;
  cfg.field.latent_dim = 2;

  const fs::path root = fs::temp_directory_path() / "roomnerf_acceptance_determinism";
  fs::remove_all(root);
  std::vector<std::string> dirs = {(root / "a").string(), (root / "b").string()};
  for (const std::string& dir : dirs) {
    std::vector<DepthMap> pz, ps;
    for (auto& p : sparse_only_priors(s.sparse04.result.maps, s.sparse04.fitted)) {
      pz.push_back(std::move(p.z));
      ps.push_back(std::move(p.s));
    }
    NerfTrainer trainer(s.ds, std::move(pz), std::move(ps), cfg);
    trainer.train(dir);
  }

  const bool params_same =
      slurp(dirs[0] + "/params.rnck") == slurp(dirs[1] + "/params.rnck");
  const bool opt_same =
      slurp(dirs[0] + "/optimizer.rnck") == slurp(dirs[1] + "/optimizer.rnck");
  const bool metrics_same =
      slurp(dirs[0] + "/metrics.tsv") == slurp(dirs[1] + "/metrics.tsv");
  const bool nonempty = !slurp(dirs[0] + "/params.rnck").empty() &&
                        !slurp(dirs[0] + "/metrics.tsv").empty();
  fs::remove_all(root);

  const bool pass = params_same && opt_same && metrics_same && nonempty;
  report(8, pass,
         cat("two runs, same seed: params.rnck ", params_same ? "identical" : "DIFFER",
             ", optimizer.rnck ", opt_same ? "identical" : "DIFFER", ", metrics.tsv ",
             metrics_same ? "identical" : "DIFFER"));
  EXPECT_TRUE(pass);
}

}  // namespace
