#pragma once

// Convolutional ops on NCHW arrays: conv2d (im2col + dgemm), nearest-neighbor
// 2x upsampling, and one step of convolutional spatial propagation.

#include <algorithm>
#include <cmath>
#include <vector>

#include <cblas.h>

#include "roomnerf/autodiff.hpp"

namespace roomnerf {

namespace detail {

// Unrolls [N,C,H,W] input patches into columns [C*kh*kw, N*oh*ow] so that a
// convolution becomes a single weight-matrix multiply. Out-of-bounds taps
// (zero padding) stay zero.
inline void im2col(const Array& x, int kh, int kw, int stride, int pad, int64_t oh, int64_t ow,
                   std::vector<double>& cols) {
  const int64_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
  const int64_t col_w = n * oh * ow;
  cols.assign(static_cast<size_t>(c * kh * kw * col_w), 0.0);
  for (int64_t ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        double* row = cols.data() + ((ci * kh + ky) * kw + kx) * col_w;
        for (int64_t ni = 0; ni < n; ++ni) {
          const double* src = x.data.data() + (ni * c + ci) * h * w;
          double* dst = row + ni * oh * ow;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= w) continue;
              dst[oy * ow + ox] = src[iy * w + ix];
            }
          }
        }
      }
}

// Scatter-add of column gradients back into input layout (adjoint of im2col).
inline void col2im_add(const std::vector<double>& cols, Array& gx, int kh, int kw, int stride,
                       int pad, int64_t oh, int64_t ow) {
  const int64_t n = gx.shape[0], c = gx.shape[1], h = gx.shape[2], w = gx.shape[3];
  const int64_t col_w = n * oh * ow;
  for (int64_t ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const double* row = cols.data() + ((ci * kh + ky) * kw + kx) * col_w;
        for (int64_t ni = 0; ni < n; ++ni) {
          double* dst = gx.data.data() + (ni * c + ci) * h * w;
          const double* src = row + ni * oh * ow;
          for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= h) continue;
            for (int64_t ox = 0; ox < ow; ++ox) {
              const int64_t ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= w) continue;
              dst[iy * w + ix] += src[oy * ow + ox];
            }
          }
        }
      }
}

}  // namespace detail

// conv2d: x [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout] (optional,
// pass nullptr to skip). Zero padding. The im2col buffer is recomputed in the
// backward pass instead of being stored, trading FLOPs for memory since the
// graph retains every node until backward completes.
inline NodePtr conv2d(const NodePtr& x, const NodePtr& weight, const NodePtr& bias, int stride,
                      int pad) {
  const Array& xv = x->value;
  const Array& wv = weight->value;
  require(xv.rank() == 4, "conv2d: input must be [N,C,H,W], got ", xv.shape_str());
  require(wv.rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw], got ", wv.shape_str());
  require(xv.shape[1] == wv.shape[1], "conv2d: input channels ", xv.shape[1],
          " != weight channels ", wv.shape[1]);
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(pad >= 0, "conv2d: negative padding");
  const int64_t n = xv.shape[0], cout = wv.shape[0], cin = wv.shape[1];
  const int kh = static_cast<int>(wv.shape[2]), kw = static_cast<int>(wv.shape[3]);
  const int64_t oh = (xv.shape[2] + 2 * pad - kh) / stride + 1;
  const int64_t ow = (xv.shape[3] + 2 * pad - kw) / stride + 1;
  require(oh >= 1 && ow >= 1, "conv2d: output would be empty for input ", xv.shape_str(),
          " kernel ", wv.shape_str(), " stride ", stride, " pad ", pad);
  if (bias) {
    require(bias->value.rank() == 1 && bias->value.shape[0] == cout,
            "conv2d: bias must be [Cout]=[", cout, "], got ", bias->value.shape_str());
  }

  const int64_t k = cin * kh * kw;
  const int64_t col_w = n * oh * ow;
  std::vector<double> cols;
  detail::im2col(xv, kh, kw, stride, pad, oh, ow, cols);
  // gemm output is [Cout, N*oh*ow]; permute into NCHW afterwards
  std::vector<double> prod(static_cast<size_t>(cout * col_w), 0.0);
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, static_cast<int>(cout),
              static_cast<int>(col_w), static_cast<int>(k), 1.0, wv.data.data(),
              static_cast<int>(k), cols.data(), static_cast<int>(col_w), 0.0, prod.data(),
              static_cast<int>(col_w));
  Array out({n, cout, oh, ow});
  const int64_t plane = oh * ow;
  for (int64_t co = 0; co < cout; ++co) {
    const double b = bias ? bias->value.data[static_cast<size_t>(co)] : 0.0;
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* src = prod.data() + co * col_w + ni * plane;
      double* dst = out.data.data() + (ni * cout + co) * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] + b;
    }
  }

  std::vector<NodePtr> parents = {x, weight};
  if (bias) parents.push_back(bias);
  const bool has_bias = bias != nullptr;
  return make_op(
      "conv2d", std::move(out), std::move(parents),
      [kh, kw, stride, pad, n, cin, cout, oh, ow, k, col_w, plane, has_bias](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        // upstream NCHW -> [Cout, N*oh*ow]
        std::vector<double> gprod(static_cast<size_t>(cout * col_w));
        for (int64_t co = 0; co < cout; ++co)
          for (int64_t ni = 0; ni < n; ++ni)
            std::copy_n(self.grad.data.data() + (ni * cout + co) * plane, plane,
                        gprod.data() + co * col_w + ni * plane);
        if (has_bias) {
          Node& pb = *self.parents[2];
          if (pb.requires_grad) {
            pb.ensure_grad();
            for (int64_t co = 0; co < cout; ++co) {
              double s = 0.0;
              const double* src = gprod.data() + co * col_w;
              for (int64_t i = 0; i < col_w; ++i) s += src[i];
              pb.grad.data[static_cast<size_t>(co)] += s;
            }
          }
        }
        std::vector<double> cols;
        if (pw.requires_grad || px.requires_grad)
          detail::im2col(px.value, kh, kw, stride, pad, oh, ow, cols);
        if (pw.requires_grad) {
          pw.ensure_grad();
          // dW += Gprod * cols^T
          cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, static_cast<int>(cout),
                      static_cast<int>(k), static_cast<int>(col_w), 1.0, gprod.data(),
                      static_cast<int>(col_w), cols.data(), static_cast<int>(col_w), 1.0,
                      pw.grad.data.data(), static_cast<int>(k));
        }
        if (px.requires_grad) {
          px.ensure_grad();
          // dcols = W^T * Gprod, then scatter back through the patch map
          std::vector<double> gcols(static_cast<size_t>(k * col_w), 0.0);
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(k),
                      static_cast<int>(col_w), static_cast<int>(cout), 1.0,
                      pw.value.data.data(), static_cast<int>(k), gprod.data(),
                      static_cast<int>(col_w), 0.0, gcols.data(), static_cast<int>(col_w));
          detail::col2im_add(gcols, px.grad, kh, kw, stride, pad, oh, ow);
        }
      });
}

// Nearest-neighbor 2x upsampling of [N,C,H,W] -> [N,C,2H,2W].
inline NodePtr upsample_nearest_2x(const NodePtr& x) {
  const Array& xv = x->value;
  require(xv.rank() == 4, "upsample_nearest_2x: input must be [N,C,H,W], got ", xv.shape_str());
  const int64_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], w = xv.shape[3];
  Array out({n, c, 2 * h, 2 * w});
  for (int64_t p = 0; p < n * c; ++p) {
    const double* src = xv.data.data() + p * h * w;
    double* dst = out.data.data() + p * 4 * h * w;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x2 = 0; x2 < w; ++x2) {
        const double v = src[y * w + x2];
        double* d = dst + (2 * y) * (2 * w) + 2 * x2;
        d[0] = v;
        d[1] = v;
        d[2 * w] = v;
        d[2 * w + 1] = v;
      }
  }
  return make_op("upsample_nearest_2x", std::move(out), {x}, [n, c, h, w](Node& self) {
    Node& p = *self.parents[0];
    p.ensure_grad();
    for (int64_t pl = 0; pl < n * c; ++pl) {
      double* dst = p.grad.data.data() + pl * h * w;
      const double* src = self.grad.data.data() + pl * 4 * h * w;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x2 = 0; x2 < w; ++x2) {
          const double* s = src + (2 * y) * (2 * w) + 2 * x2;
          dst[y * w + x2] += s[0] + s[1] + s[2 * w] + s[2 * w + 1];
        }
    }
  });
}

// One convolutional spatial propagation step over a depth plane.
//
//   depth:    [N,1,H,W] current estimate
//   affinity: [N,8,H,W] raw (unnormalized) neighbor affinities, offsets in
//             row-major order around the center: (-1,-1) .. (1,1) minus (0,0)
//
// Per pixel the affinities are normalized by n_i = a_i / (1 + sum_j |a_j|),
// and the center keeps weight 1 / (1 + sum_j |a_j|); the weights then sum to
// at most 1 in absolute value, so iterating the step cannot blow up. Borders
// replicate (out-of-range neighbors read the nearest valid pixel).
inline NodePtr cspn_step(const NodePtr& depth, const NodePtr& affinity) {
  const Array& dv = depth->value;
  const Array& av = affinity->value;
  require(dv.rank() == 4 && dv.shape[1] == 1, "cspn_step: depth must be [N,1,H,W], got ",
          dv.shape_str());
  require(av.rank() == 4 && av.shape[1] == 8, "cspn_step: affinity must be [N,8,H,W], got ",
          av.shape_str());
  require(dv.shape[0] == av.shape[0] && dv.shape[2] == av.shape[2] &&
              dv.shape[3] == av.shape[3],
          "cspn_step: depth ", dv.shape_str(), " and affinity ", av.shape_str(),
          " disagree spatially");
  const int64_t n = dv.shape[0], h = dv.shape[2], w = dv.shape[3];
  static const int kOffY[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
  static const int kOffX[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
  const int64_t plane = h * w;
  Array out({n, 1, h, w});
  for (int64_t ni = 0; ni < n; ++ni) {
    const double* dsrc = dv.data.data() + ni * plane;
    const double* asrc = av.data.data() + ni * 8 * plane;
    double* dst = out.data.data() + ni * plane;
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        double asum = 0.0;
        for (int j = 0; j < 8; ++j) asum += std::abs(asrc[j * plane + y * w + x]);
        const double inv = 1.0 / (1.0 + asum);
        double acc = dsrc[y * w + x] * inv;
        for (int j = 0; j < 8; ++j) {
          const int64_t yy = std::clamp<int64_t>(y + kOffY[j], 0, h - 1);
          const int64_t xx = std::clamp<int64_t>(x + kOffX[j], 0, w - 1);
          acc += asrc[j * plane + y * w + x] * inv * dsrc[yy * w + xx];
        }
        dst[y * w + x] = acc;
      }
  }
  return make_op("cspn_step", std::move(out), {depth, affinity}, [n, h, w, plane](Node& self) {
    Node& pd = *self.parents[0];
    Node& pa = *self.parents[1];
    if (pd.requires_grad) pd.ensure_grad();
    if (pa.requires_grad) pa.ensure_grad();
    static const int kOffY[8] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static const int kOffX[8] = {-1, 0, 1, -1, 1, -1, 0, 1};
    for (int64_t ni = 0; ni < n; ++ni) {
      const double* dsrc = pd.value.data.data() + ni * plane;
      const double* asrc = pa.value.data.data() + ni * 8 * plane;
      const double* u = self.grad.data.data() + ni * plane;
      double* gd = pd.requires_grad ? pd.grad.data.data() + ni * plane : nullptr;
      double* ga = pa.requires_grad ? pa.grad.data.data() + ni * 8 * plane : nullptr;
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          const double uv = u[y * w + x];
          if (uv == 0.0) continue;
          double a[8], nb[8], asum = 0.0;
          for (int j = 0; j < 8; ++j) {
            a[j] = asrc[j * plane + y * w + x];
            asum += std::abs(a[j]);
          }
          const double inv = 1.0 / (1.0 + asum);
          const double dcen = dsrc[y * w + x];
          double wsum = dcen;  // accumulate sum_j a_j * d_j + d_center for d(inv)
          for (int j = 0; j < 8; ++j) {
            const int64_t yy = std::clamp<int64_t>(y + kOffY[j], 0, h - 1);
            const int64_t xx = std::clamp<int64_t>(x + kOffX[j], 0, w - 1);
            nb[j] = dsrc[yy * w + xx];
            wsum += a[j] * nb[j];
          }
          if (gd) {
            gd[y * w + x] += uv * inv;
            for (int j = 0; j < 8; ++j) {
              const int64_t yy = std::clamp<int64_t>(y + kOffY[j], 0, h - 1);
              const int64_t xx = std::clamp<int64_t>(x + kOffX[j], 0, w - 1);
              gd[yy * w + xx] += uv * a[j] * inv;
            }
          }
          if (ga) {
            // d out / d a_j = inv * d_j - inv^2 * sign(a_j) * wsum
            const double common = uv * inv * inv * wsum;
            for (int j = 0; j < 8; ++j) {
              const double sgn = a[j] > 0.0 ? 1.0 : (a[j] < 0.0 ? -1.0 : 0.0);
              ga[j * plane + y * w + x] += uv * inv * nb[j] - sgn * common;
            }
          }
        }
    }
  });
}

}  // namespace roomnerf
