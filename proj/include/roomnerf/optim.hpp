#pragma once

// Named parameter registry and Adam optimizer. Parameters are plain autodiff
// leaves; the store owns the canonical list in registration order, which also
// fixes checkpoint serialization order.

#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "roomnerf/autodiff.hpp"
#include "roomnerf/rng.hpp"

namespace roomnerf {

class ParamStore {
 public:
  NodePtr create(const std::string& name, Array init) {
    require(index_.find(name) == index_.end(), "ParamStore: duplicate parameter name '", name,
            "'");
    NodePtr p = leaf(std::move(init));
    index_.emplace(name, names_.size());
    names_.push_back(name);
    params_.push_back(p);
    return p;
  }

  // Fan-in-scaled uniform init, the usual dense-layer default.
  NodePtr create_dense(const std::string& name, std::vector<int64_t> shape, int64_t fan_in,
                       Rng& rng) {
    require(fan_in > 0, "ParamStore: fan_in must be positive for '", name, "'");
    Array a(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : a.data) v = rng.uniform(-bound, bound);
    return create(name, std::move(a));
  }

  NodePtr create_zeros(const std::string& name, std::vector<int64_t> shape) {
    return create(name, Array(std::move(shape)));
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  NodePtr get(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "ParamStore: unknown parameter '", name, "'");
    return params_[it->second];
  }

  size_t size() const { return params_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<NodePtr>& params() const { return params_; }

  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::string> names_;
  std::vector<NodePtr> params_;
  std::unordered_map<std::string, size_t> index_;
};

// Adam with bias correction (beta1=0.9, beta2=0.999 defaults). Moments are
// keyed by slot index so the optimizer can only ever be used with the store
// it was built for.
class Adam {
 public:
  explicit Adam(ParamStore& store, double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : store_(store), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : store.params()) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  int64_t steps() const { return t_; }

  // Moment access for checkpointing; order matches the store's parameters.
  const std::vector<Array>& first_moments() const { return m_; }
  const std::vector<Array>& second_moments() const { return v_; }

  void restore_state(std::vector<Array> m, std::vector<Array> v, int64_t steps) {
    require(m.size() == m_.size() && v.size() == v_.size(),
            "Adam: restoring state with the wrong parameter count");
    for (size_t i = 0; i < m.size(); ++i)
      require(m[i].shape == m_[i].shape && v[i].shape == v_[i].shape,
              "Adam: restored moment shape mismatch for parameter '", store_.names()[i], "'");
    require(steps >= 0, "Adam: negative step count");
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = steps;
  }

  // Applies one update. Every parameter must have a populated gradient; a
  // missing one means the caller forgot backward() or detached the parameter
  // from the loss, which is a bug worth failing loudly on.
  void step() {
    require(store_.size() == m_.size(), "Adam: parameter store changed size after construction");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < store_.size(); ++i) {
      Node& p = *store_.params()[i];
      require(!p.grad.data.empty(), "Adam: parameter '", store_.names()[i],
              "' has no gradient; call backward() on a loss that uses it before step()");
      Array& m = m_[i];
      Array& v = v_[i];
      const size_t n = p.value.data.size();
      for (size_t j = 0; j < n; ++j) {
        const double g = p.grad.data[j];
        m.data[j] = beta1_ * m.data[j] + (1.0 - beta1_) * g;
        v.data[j] = beta2_ * v.data[j] + (1.0 - beta2_) * g * g;
        const double mh = m.data[j] / bc1;
        const double vh = v.data[j] / bc2;
        p.value.data[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

 private:
  ParamStore& store_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Array> m_, v_;
};

}  // namespace roomnerf
