#pragma once

// The scene MLP: positional-encoded position drives an 8-layer trunk with a
// mid-network skip connection; density comes off the trunk before the viewing
// direction or the per-image latent code enter, so density is structurally
// independent of both. The view branch consumes (feature, raw direction,
// latent code) — the direction gets no frequency encoding — and ends in a
// sigmoid color layer.
//
// World coordinates are normalized into [-1,1]^3 against the configured scene
// bounds before encoding; the encoding frequencies assume a bounded domain.

#include <cstdint>
#include <string>
#include <vector>

#include "roomnerf/camera.hpp"
#include "roomnerf/optim.hpp"

namespace roomnerf {

struct FieldConfig {
  int freqs = 9;         // positional encoding frequency count L
  int trunk_layers = 8;  // rectified trunk layers
  int trunk_width = 256;
  int skip_layer = 4;    // 0-based trunk layer whose input re-concatenates the encoding
  int view_width = 128;  // single rectified view-branch layer
  int latent_dim = 4;    // e; 0 disables latent codes entirely
  int n_images = 0;      // rows of the latent table
  Vec3 bound_min{0, 0, 0};
  Vec3 bound_max{1, 1, 1};

  int encoded_width() const { return 3 + 6 * freqs; }
};

struct FieldOutput {
  NodePtr color;  // [N,3] in [0,1]
  NodePtr sigma;  // [N,1] >= 0 (softplus)
};

class FieldMLP {
 public:
  FieldMLP(ParamStore& store, const FieldConfig& cfg, Rng& rng) : cfg_(cfg) {
    require(cfg.freqs >= 0, "FieldMLP: negative frequency count");
    require(cfg.trunk_layers >= 1, "FieldMLP: need at least one trunk layer");
    require(cfg.skip_layer > 0 && cfg.skip_layer < cfg.trunk_layers,
            "FieldMLP: skip layer ", cfg.skip_layer, " outside (0,", cfg.trunk_layers, ")");
    require(cfg.latent_dim >= 0, "FieldMLP: negative latent size");
    require(cfg.latent_dim == 0 || cfg.n_images > 0,
            "FieldMLP: latent codes enabled but no image count given");
    require(cfg.bound_max.x > cfg.bound_min.x && cfg.bound_max.y > cfg.bound_min.y &&
                cfg.bound_max.z > cfg.bound_min.z,
            "FieldMLP: degenerate scene bounds");
    const int enc = cfg.encoded_width();
    int in_w = enc;
    for (int l = 0; l < cfg.trunk_layers; ++l) {
      if (l == cfg.skip_layer) in_w += enc;
      trunk_w_.push_back(store.create_dense(cat("field/trunk", l, "/w"),
                                            {in_w, cfg.trunk_width}, in_w, rng));
      trunk_b_.push_back(store.create_zeros(cat("field/trunk", l, "/b"), {1, cfg.trunk_width}));
      in_w = cfg.trunk_width;
    }
    sigma_w_ = store.create_dense("field/sigma/w", {cfg.trunk_width, 1}, cfg.trunk_width, rng);
    sigma_b_ = store.create_zeros("field/sigma/b", {1, 1});
    feat_w_ = store.create_dense("field/feature/w", {cfg.trunk_width, cfg.trunk_width},
                                 cfg.trunk_width, rng);
    feat_b_ = store.create_zeros("field/feature/b", {1, cfg.trunk_width});
    const int view_in = cfg.trunk_width + 3 + cfg.latent_dim;
    view_w_ = store.create_dense("field/view/w", {view_in, cfg.view_width}, view_in, rng);
    view_b_ = store.create_zeros("field/view/b", {1, cfg.view_width});
    color_w_ = store.create_dense("field/color/w", {cfg.view_width, 3}, cfg.view_width, rng);
    color_b_ = store.create_zeros("field/color/b", {1, 3});
    if (cfg.latent_dim > 0)
      latent_ = store.create_zeros("field/latent", {cfg.n_images, cfg.latent_dim});
  }

  const FieldConfig& config() const { return cfg_; }
  NodePtr latent_table() const { return latent_; }

  // World positions -> [-1,1]^3 (plain arithmetic; positions are inputs, not
  // parameters, so no gradient flows through this).
  Array normalize_positions(const Array& world) const {
    require(world.rank() == 2 && world.shape[1] == 3,
            "FieldMLP: positions must be [N,3], got ", world.shape_str());
    Array out = world;
    const double sx = 2.0 / (cfg_.bound_max.x - cfg_.bound_min.x);
    const double sy = 2.0 / (cfg_.bound_max.y - cfg_.bound_min.y);
    const double sz = 2.0 / (cfg_.bound_max.z - cfg_.bound_min.z);
    for (int64_t r = 0; r < world.shape[0]; ++r) {
      out.data[static_cast<size_t>(3 * r + 0)] =
          (world.data[static_cast<size_t>(3 * r + 0)] - cfg_.bound_min.x) * sx - 1.0;
      out.data[static_cast<size_t>(3 * r + 1)] =
          (world.data[static_cast<size_t>(3 * r + 1)] - cfg_.bound_min.y) * sy - 1.0;
      out.data[static_cast<size_t>(3 * r + 2)] =
          (world.data[static_cast<size_t>(3 * r + 2)] - cfg_.bound_min.z) * sz - 1.0;
    }
    return out;
  }

  // Latent rows for a batch of per-sample image indices. All samples of a ray
  // share the ray's image id.
  NodePtr gather_codes(const std::vector<int64_t>& image_ids) const {
    require(cfg_.latent_dim > 0, "FieldMLP: latent codes disabled in this configuration");
    return gather_rows(latent_, image_ids);
  }

  // Broadcasts one code row [1,e] to [N,e]; gradient accumulates back into
  // the single row, which is what latent-code test-time optimization needs.
  NodePtr broadcast_code(const NodePtr& code, int64_t n) const {
    require(code->value.rank() == 2 && code->value.shape[0] == 1 &&
                code->value.shape[1] == cfg_.latent_dim,
            "FieldMLP: code must be [1,", cfg_.latent_dim, "], got ",
            code->value.shape_str());
    return matmul(constant(Array({n, 1}, 1.0)), code);
  }

  NodePtr zero_codes(int64_t n) const { return constant(Array({n, cfg_.latent_dim})); }

  // The view- and code-independent half: density plus the feature vector the
  // color head consumes. Splitting here lets test-time code optimization
  // reuse cached features.
  struct TrunkOutput {
    NodePtr sigma;    // [N,1]
    NodePtr feature;  // [N,trunk_width], pre-activation
  };

  TrunkOutput query_trunk(const Array& world_pos) const {
    NodePtr enc = positional_encoding(constant(normalize_positions(world_pos)), cfg_.freqs);
    NodePtr h = enc;
    for (int l = 0; l < cfg_.trunk_layers; ++l) {
      if (l == cfg_.skip_layer) h = concat({h, enc}, 1);
      h = relu(add(matmul(h, trunk_w_[static_cast<size_t>(l)]),
                   trunk_b_[static_cast<size_t>(l)]));
    }
    TrunkOutput out;
    out.sigma = softplus(add(matmul(h, sigma_w_), sigma_b_));
    out.feature = add(matmul(h, feat_w_), feat_b_);  // no activation
    return out;
  }

  // feature: [N,trunk_width] (from query_trunk, or a constant rebuilt from
  // cached values). codes: [N,e] node, ignored when latent_dim == 0.
  NodePtr color_head(const NodePtr& feature, const Array& dirs, const NodePtr& codes) const {
    const int64_t n = feature->value.shape[0];
    require(dirs.rank() == 2 && dirs.shape[1] == 3 && dirs.shape[0] == n,
            "FieldMLP: directions must be [", n, ",3], got ", dirs.shape_str());
    std::vector<NodePtr> view_in = {feature, constant(dirs)};
    if (cfg_.latent_dim > 0) {
      require(codes != nullptr && codes->value.rank() == 2 && codes->value.shape[0] == n &&
                  codes->value.shape[1] == cfg_.latent_dim,
              "FieldMLP: codes must be [", n, ",", cfg_.latent_dim, "]");
      view_in.push_back(codes);
    }
    NodePtr v = relu(add(matmul(concat(view_in, 1), view_w_), view_b_));
    return sigmoid(add(matmul(v, color_w_), color_b_));
  }

  FieldOutput query(const Array& world_pos, const Array& dirs, const NodePtr& codes) const {
    require(dirs.shape[0] == world_pos.shape[0], "FieldMLP: ", world_pos.shape[0],
            " positions vs ", dirs.shape[0], " directions");
    const TrunkOutput trunk = query_trunk(world_pos);
    return {color_head(trunk.feature, dirs, codes), trunk.sigma};
  }

 private:
  FieldConfig cfg_;
  std::vector<NodePtr> trunk_w_, trunk_b_;
  NodePtr sigma_w_, sigma_b_;
  NodePtr feat_w_, feat_b_;
  NodePtr view_w_, view_b_;
  NodePtr color_w_, color_b_;
  NodePtr latent_;
};

}  // namespace roomnerf
