#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "roomnerf/core.hpp"

namespace roomnerf {

// Dense row-major array of doubles. Rank is small (<= 4 in practice); shape
// [] denotes a scalar with one element.
struct Array {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Array() = default;

  explicit Array(std::vector<int64_t> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(count(shape)), fill);
  }

  static Array scalar(double v) {
    Array a;
    a.shape = {};
    a.data = {v};
    return a;
  }

  static Array from(std::vector<int64_t> s, std::vector<double> d) {
    Array a;
    a.shape = std::move(s);
    a.data = std::move(d);
    require(count(a.shape) == static_cast<int64_t>(a.data.size()),
            "Array::from: shape ", shape_str(a.shape), " does not match data length ",
            a.data.size());
    return a;
  }

  static int64_t count(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      require(d >= 0, "Array: negative dimension in shape ", shape_str(s));
      n *= d;
    }
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  bool same_shape(const Array& o) const { return shape == o.shape; }

  // 2D accessors
  double& at2(int64_t r, int64_t c) { return data[static_cast<size_t>(r * shape[1] + c)]; }
  double at2(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * shape[1] + c)]; }

  // 4D accessors (n, c, h, w)
  double& at4(int64_t n, int64_t c, int64_t y, int64_t x) {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + y) * shape[3] + x)];
  }
  double at4(int64_t n, int64_t c, int64_t y, int64_t x) const {
    return data[static_cast<size_t>(((n * shape[1] + c) * shape[2] + y) * shape[3] + x)];
  }

  static std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }

  std::string shape_str() const { return shape_str(shape); }
};

inline bool all_finite(const Array& a) {
  for (double v : a.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace roomnerf
