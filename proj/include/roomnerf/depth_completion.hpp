#pragma once

// Dense depth plus per-pixel uncertainty from an image and a sparse depth map.
// A small shared encoder (3 stride-2 stages) feeds two decoder branches: one
// predicts depth (sigmoid, scaled to [0, t_far]), the other a standard
// deviation (softplus plus a floor). Each branch also predicts an 8-neighbor
// affinity field used for iterative local propagation of its output; the depth
// branch re-anchors observed sparse pixels after every propagation step so
// measurements spread outward instead of being smoothed away. The std branch
// has no sparse ground truth and propagates unanchored.
//
// Trained with a Gaussian negative log likelihood so that the predicted std
// learns to track the actual residual scale.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "roomnerf/conv.hpp"
#include "roomnerf/image.hpp"
#include "roomnerf/optim.hpp"

namespace roomnerf {

struct CompletionConfig {
  int stem_width = 8;
  int stage1 = 16, stage2 = 32, stage3 = 64;  // encoder widths, stride 2 each
  double t_far = 10.0;                        // depth head range [0, t_far]
  double s_min = 0.01;                        // std floor (meters)
  int depth_iters = 48;                       // propagation steps, depth branch
  int std_iters = 24;                         // propagation steps, std branch
};

// Exported prior: dense depth and std at every pixel.
struct DepthPrior {
  DepthMap z;
  DepthMap s;
};

struct CompletionOutput {
  NodePtr depth;    // [N,1,H,W]
  NodePtr std_dev;  // [N,1,H,W], >= s_min before propagation, re-floored after
};

// Iterative 3x3 propagation. When anchors are given, anchored pixels are
// reset to their observed value before the first step and after every step,
// so the output agrees exactly with the observations at anchor pixels.
// 0 iterations is the identity.
inline NodePtr cspn_refine(NodePtr value, const NodePtr& affinity, const Array* anchor_mask,
                           const Array* anchor_value, int iterations) {
  require(iterations >= 0, "cspn_refine: negative iteration count ", iterations);
  if (iterations == 0) return value;
  NodePtr keep, inject;
  if (anchor_mask != nullptr) {
    require(anchor_value != nullptr, "cspn_refine: anchor mask given without values");
    require(anchor_mask->shape == value->value.shape &&
                anchor_value->shape == value->value.shape,
            "cspn_refine: anchor shape ", anchor_mask->shape_str(), " vs value shape ",
            value->value.shape_str());
    Array keep_a = *anchor_mask;
    Array inject_a = *anchor_value;
    for (size_t i = 0; i < keep_a.data.size(); ++i) {
      const bool anchored = anchor_mask->data[i] > 0.0;
      keep_a.data[i] = anchored ? 0.0 : 1.0;
      inject_a.data[i] = anchored ? anchor_value->data[i] : 0.0;
    }
    keep = constant(std::move(keep_a));
    inject = constant(std::move(inject_a));
    value = add(mul(value, keep), inject);
  }
  for (int it = 0; it < iterations; ++it) {
    value = cspn_step(value, affinity);
    if (keep) value = add(mul(value, keep), inject);
  }
  return value;
}

class CompletionNet {
 public:
  CompletionNet(ParamStore& store, const CompletionConfig& cfg, Rng& rng) : cfg_(cfg) {
    require(cfg.stem_width > 0 && cfg.stage1 > 0 && cfg.stage2 > 0 && cfg.stage3 > 0,
            "CompletionNet: channel widths must be positive");
    require(cfg.t_far > 0.0, "CompletionNet: t_far must be positive");
    require(cfg.s_min > 0.0, "CompletionNet: s_min must be positive");
    require(cfg.depth_iters >= 0 && cfg.std_iters >= 0,
            "CompletionNet: negative propagation count");
    auto conv = [&](const std::string& name, int cout, int cin, int k) {
      Conv c;
      c.w = store.create_dense("comp/" + name + "/w", {cout, cin, k, k},
                               static_cast<int64_t>(cin) * k * k, rng);
      c.b = store.create_zeros("comp/" + name + "/b", {cout});
      return c;
    };
    stem_ = conv("stem", cfg.stem_width, 4, 3);
    enc1_ = conv("enc1", cfg.stage1, cfg.stem_width, 3);
    enc2_ = conv("enc2", cfg.stage2, cfg.stage1, 3);
    enc3_ = conv("enc3", cfg.stage3, cfg.stage2, 3);
    for (Branch* br : {&depth_, &std_}) {
      const std::string p = br == &depth_ ? "depth" : "std";
      br->up3 = conv(p + "/up3", cfg.stage2, cfg.stage3 + cfg.stage2, 3);
      br->up2 = conv(p + "/up2", cfg.stage1, cfg.stage2 + cfg.stage1, 3);
      br->up1 = conv(p + "/up1", cfg.stage1, cfg.stage1 + cfg.stem_width, 3);
      br->head = conv(p + "/head", 1, cfg.stage1, 1);
      br->aff = conv(p + "/aff", 8, cfg.stage1, 1);
    }
  }

  const CompletionConfig& config() const { return cfg_; }

  // Interleaves RGB and the sparse depth (scaled by 1/t_far) into [1,4,H,W].
  static Array pack_input(const Image& image, const DepthMap& sparse, double t_far) {
    require(image.width == sparse.width && image.height == sparse.height,
            "pack_input: image ", image.width, "x", image.height, " vs sparse ", sparse.width,
            "x", sparse.height);
    const int64_t h = image.height, w = image.width;
    Array in({1, 4, h, w});
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        for (int c = 0; c < 3; ++c) in.at4(0, c, y, x) = image.at(x, y, c);
        const double z = sparse.at(x, y);
        require(z >= 0.0 && z <= t_far, "pack_input: sparse depth ", z, " outside [0,", t_far,
                "] at (", x, ",", y, ")");
        in.at4(0, 3, y, x) = z / t_far;
      }
    return in;
  }

  // input: [N,4,H,W] from pack_input (possibly batched). H and W must be
  // divisible by the encoder stride product (8).
  CompletionOutput forward(const Array& input) const {
    require(input.rank() == 4 && input.shape[1] == 4,
            "CompletionNet: input must be [N,4,H,W], got ", input.shape_str());
    const int64_t n = input.shape[0], h = input.shape[2], w = input.shape[3];
    require(h % 8 == 0 && w % 8 == 0, "CompletionNet: resolution ", h, "x", w,
            " not divisible by the encoder stride product 8");
    NodePtr x = constant(input);
    NodePtr s0 = relu(conv2d(x, stem_.w, stem_.b, 1, 1));
    NodePtr s1 = relu(conv2d(s0, enc1_.w, enc1_.b, 2, 1));
    NodePtr s2 = relu(conv2d(s1, enc2_.w, enc2_.b, 2, 1));
    NodePtr s3 = relu(conv2d(s2, enc3_.w, enc3_.b, 2, 1));
    auto decode = [&](const Branch& br) {
      NodePtr d = relu(conv2d(concat({upsample_nearest_2x(s3), s2}, 1), br.up3.w, br.up3.b, 1, 1));
      d = relu(conv2d(concat({upsample_nearest_2x(d), s1}, 1), br.up2.w, br.up2.b, 1, 1));
      return relu(conv2d(concat({upsample_nearest_2x(d), s0}, 1), br.up1.w, br.up1.b, 1, 1));
    };

    // anchors: observed sparse pixels, recovered from the input's 4th channel
    Array mask({n, 1, h, w});
    Array anchor({n, 1, h, w});
    for (int64_t ni = 0; ni < n; ++ni)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx) {
          const double z = input.at4(ni, 3, y, xx) * cfg_.t_far;
          mask.at4(ni, 0, y, xx) = z > 0.0 ? 1.0 : 0.0;
          anchor.at4(ni, 0, y, xx) = z;
        }

    CompletionOutput out;
    {
      NodePtr feat = decode(depth_);
      NodePtr z0 = scale(sigmoid(conv2d(feat, depth_.head.w, depth_.head.b, 1, 0)), cfg_.t_far);
      NodePtr aff = conv2d(feat, depth_.aff.w, depth_.aff.b, 1, 0);
      out.depth = cspn_refine(z0, aff, &mask, &anchor, cfg_.depth_iters);
    }
    {
      NodePtr feat = decode(std_);
      NodePtr v0 = add_const(softplus(conv2d(feat, std_.head.w, std_.head.b, 1, 0)), cfg_.s_min);
      NodePtr aff = conv2d(feat, std_.aff.w, std_.aff.b, 1, 0);
      // propagation mixes with possibly negative weights, so re-floor after
      out.std_dev = clamp_min(cspn_refine(v0, aff, nullptr, nullptr, cfg_.std_iters), cfg_.s_min);
    }
    return out;
  }

  // Single-view inference. Output is dense: every pixel carries a positive
  // depth in (0, t_far] and a std >= s_min.
  DepthPrior complete(const Image& image, const DepthMap& sparse) const {
    const Array in = pack_input(image, sparse, cfg_.t_far);
    const CompletionOutput out = forward(in);
    DepthPrior prior;
    prior.z = DepthMap(image.width, image.height);
    prior.s = DepthMap(image.width, image.height);
    for (int64_t y = 0; y < image.height; ++y)
      for (int64_t x = 0; x < image.width; ++x) {
        prior.z.at(x, y) = std::clamp(out.depth->value.at4(0, 0, y, x), 1e-6, cfg_.t_far);
        prior.s.at(x, y) = out.std_dev->value.at4(0, 0, y, x);
      }
    return prior;
  }

 private:
  struct Conv {
    NodePtr w, b;
  };
  struct Branch {
    Conv up3, up2, up1, head, aff;
  };
  CompletionConfig cfg_;
  Conv stem_, enc1_, enc2_, enc3_;
  Branch depth_, std_;
};

// Mean over valid pixels of log(s^2) + (z - target)^2 / s^2. The std is
// floored before entering the log/division; the floor's gradient is zero
// below the threshold, which is exactly the saturation we want.
inline NodePtr gnll_loss(const NodePtr& z, const NodePtr& s, const Array& target,
                         const Array& valid, double s_floor = 0.01) {
  require(z->value.shape == s->value.shape && z->value.shape == target.shape &&
              z->value.shape == valid.shape,
          "gnll_loss: shape mismatch z ", z->value.shape_str(), " s ", s->value.shape_str(),
          " target ", target.shape_str(), " valid ", valid.shape_str());
  require(s_floor > 0.0, "gnll_loss: std floor must be positive");
  double n = 0.0;
  for (double v : valid.data) n += v > 0.0 ? 1.0 : 0.0;
  require(n > 0.0, "gnll_loss: no valid target pixels");
  NodePtr sf = clamp_min(s, s_floor);
  NodePtr s2 = square(sf);
  NodePtr resid = sub(z, constant(target));
  NodePtr term = add(log(s2), div(square(resid), s2));
  return scale(sum(mul(term, constant(valid))), 1.0 / n);
}

// One training example: input [4,H,W], target depth [1,H,W], valid [1,H,W].
struct CompletionSample {
  Array input;
  Array target;
  Array valid;
};

inline CompletionSample make_completion_sample(const Image& image, const DepthMap& sparse,
                                               const DepthMap& dense_gt, double t_far) {
  require(dense_gt.width == image.width && dense_gt.height == image.height,
          "make_completion_sample: ground truth ", dense_gt.width, "x", dense_gt.height,
          " vs image ", image.width, "x", image.height);
  CompletionSample s;
  Array packed = CompletionNet::pack_input(image, sparse, t_far);
  packed.shape = {4, image.height, image.width};
  s.input = std::move(packed);
  s.target = Array({1, image.height, image.width});
  s.valid = Array({1, image.height, image.width});
  for (int64_t y = 0; y < image.height; ++y)
    for (int64_t x = 0; x < image.width; ++x) {
      const double z = dense_gt.at(x, y);
      s.target.data[static_cast<size_t>(y * image.width + x)] = z;
      s.valid.data[static_cast<size_t>(y * image.width + x)] = z > 0.0 ? 1.0 : 0.0;
    }
  return s;
}

struct TrainCompletionConfig {
  int epochs = 40;
  double lr = 1e-4;
  int batch = 8;
  uint64_t seed = 0;
};

struct TrainCompletionResult {
  std::vector<double> train_loss;  // mean per epoch
  std::vector<double> val_loss;    // one per epoch
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
};

namespace detail {

inline Array stack_channel_maps(const std::vector<const Array*>& parts) {
  require(!parts.empty(), "stack_channel_maps: empty batch");
  const Array& first = *parts.front();
  require(first.rank() == 3, "stack_channel_maps: parts must be [C,H,W]");
  Array out({static_cast<int64_t>(parts.size()), first.shape[0], first.shape[1], first.shape[2]});
  const size_t stride = first.data.size();
  for (size_t i = 0; i < parts.size(); ++i) {
    require(parts[i]->shape == first.shape, "stack_channel_maps: sample ", i, " has shape ",
            parts[i]->shape_str(), ", expected ", first.shape_str());
    std::copy(parts[i]->data.begin(), parts[i]->data.end(), out.data.begin() + i * stride);
  }
  return out;
}

inline void gather_batch(const std::vector<CompletionSample>& samples,
                         const std::vector<size_t>& idx, Array& input, Array& target,
                         Array& valid) {
  std::vector<const Array*> in, tg, vm;
  for (size_t i : idx) {
    in.push_back(&samples[i].input);
    tg.push_back(&samples[i].target);
    vm.push_back(&samples[i].valid);
  }
  input = stack_channel_maps(in);
  target = stack_channel_maps(tg);
  valid = stack_channel_maps(vm);
}

}  // namespace detail

// Mean GNLL over a sample set (forward only).
inline double completion_eval_loss(const CompletionNet& net,
                                   const std::vector<CompletionSample>& samples) {
  require(!samples.empty(), "completion_eval_loss: empty sample set");
  std::vector<size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  Array input, target, valid;
  detail::gather_batch(samples, idx, input, target, valid);
  const CompletionOutput out = net.forward(input);
  return gnll_loss(out.depth, out.std_dev, target, valid)->value.data[0];
}

// Adam on the GNLL with per-epoch shuffling; keeps the parameters from the
// epoch with the lowest validation loss (train loss stands in when no
// validation set is given). 0 epochs leaves the store untouched.
inline TrainCompletionResult train_completion(ParamStore& store, const CompletionNet& net,
                                              const std::vector<CompletionSample>& train,
                                              const std::vector<CompletionSample>& val,
                                              const TrainCompletionConfig& cfg) {
  require(!train.empty(), "train_completion: empty training set");
  require(cfg.batch >= 1, "train_completion: batch must be >= 1");
  require(cfg.epochs >= 0, "train_completion: negative epoch count");
  Adam opt(store, cfg.lr);
  Rng rng(derive_seed(cfg.seed, 0xC0817EUL));
  TrainCompletionResult res;
  std::vector<Array> best;
  for (const auto& p : store.params()) best.push_back(p->value);

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_index(i)]);
    double loss_sum = 0.0;
    size_t count = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      const std::vector<size_t> idx(order.begin() + static_cast<int64_t>(start),
                                    order.begin() + static_cast<int64_t>(stop));
      Array input, target, valid;
      detail::gather_batch(train, idx, input, target, valid);
      const CompletionOutput out = net.forward(input);
      NodePtr loss = gnll_loss(out.depth, out.std_dev, target, valid);
      require(std::isfinite(loss->value.data[0]), "train_completion: non-finite loss at epoch ",
              epoch, " batch starting ", start);
      store.zero_grad();
      backward(loss);
      opt.step();
      loss_sum += loss->value.data[0] * static_cast<double>(idx.size());
      count += idx.size();
    }
    res.train_loss.push_back(loss_sum / static_cast<double>(count));
    const double v = val.empty() ? res.train_loss.back() : completion_eval_loss(net, val);
    res.val_loss.push_back(v);
    if (v < res.best_val) {
      res.best_val = v;
      res.best_epoch = epoch;
      for (size_t i = 0; i < store.size(); ++i) best[i] = store.params()[i]->value;
    }
  }
  for (size_t i = 0; i < store.size(); ++i) store.params()[i]->value = best[i];
  return res;
}

// Empirical coverage of |z - gt| <= k * s for k in {1,2,3}, plus dense RMSE,
// over all pixels with valid ground truth.
struct CalibrationReport {
  double coverage1 = 0.0, coverage2 = 0.0, coverage3 = 0.0;
  double rmse = 0.0;
  int64_t pixels = 0;
};

inline CalibrationReport calibration_report(const std::vector<DepthPrior>& priors,
                                            const std::vector<DepthMap>& gt) {
  require(priors.size() == gt.size() && !priors.empty(),
          "calibration_report: need matching nonempty prior/gt lists, got ", priors.size(),
          " vs ", gt.size());
  CalibrationReport rep;
  double sse = 0.0;
  int64_t c1 = 0, c2 = 0, c3 = 0;
  for (size_t v = 0; v < priors.size(); ++v) {
    const DepthPrior& p = priors[v];
    require(p.z.width == gt[v].width && p.z.height == gt[v].height,
            "calibration_report: view ", v, " size mismatch");
    for (int64_t i = 0; i < gt[v].width * gt[v].height; ++i) {
      const double z_gt = gt[v].data[static_cast<size_t>(i)];
      if (z_gt <= 0.0) continue;
      const double r = std::abs(p.z.data[static_cast<size_t>(i)] - z_gt);
      const double s = p.s.data[static_cast<size_t>(i)];
      sse += r * r;
      ++rep.pixels;
      c1 += r <= s ? 1 : 0;
      c2 += r <= 2.0 * s ? 1 : 0;
      c3 += r <= 3.0 * s ? 1 : 0;
    }
  }
  require(rep.pixels > 0, "calibration_report: no valid ground-truth pixels");
  const double n = static_cast<double>(rep.pixels);
  rep.coverage1 = static_cast<double>(c1) / n;
  rep.coverage2 = static_cast<double>(c2) / n;
  rep.coverage3 = static_cast<double>(c3) / n;
  rep.rmse = std::sqrt(sse / n);
  return rep;
}

}  // namespace roomnerf
