#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>
#include <vector>

#include "daformer/core/autograd.hpp"
#include "daformer/core/param.hpp"

namespace daformer {

/// A spatial feature map: (h*w) x channels values in raster order.
template <typename Scalar>
struct FeatureMap {
  Var<Scalar> v;
  int h = 0;
  int w = 0;

  int channels() const { return static_cast<int>(v.cols()); }
  const Mat<Scalar>& value() const { return v.value(); }
};

struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int dilation = 1;

  int out_size(int in) const { return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1; }
};

// ---------------------------------------------------------------------------
// Linear layers

/// y = x W + b with W of shape in x out and b of shape 1 x out (optional).
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Param<Scalar>& w, std::type_identity_t<Param<Scalar>>* b = nullptr) {
  if (x.cols() != w.value.rows()) throw ShapeError("linear: input width does not match weight");
  Mat<Scalar> out(x.rows(), w.value.cols());
  out.noalias() = x.value() * w.value;
  if (b != nullptr) out.rowwise() += b->value.row(0);
  const int ix = x.id;
  Param<Scalar>* pw = &w;
  return x.tape->push(std::move(out), true, [ix, pw, b](Tape<Scalar>& t, int self) {
    const Mat<Scalar>& dy = t.grad(self);
    pw->grad.noalias() += t.value(ix).transpose() * dy;
    if (b != nullptr) b->grad.row(0) += dy.colwise().sum();
    if (t.needs_grad(ix)) t.grad(ix).noalias() += dy * pw->value.transpose();
  });
}

namespace detail {

/// Gathers k*k*C patches into rows; column order is (ky, kx, channel).
template <typename Scalar>
Mat<Scalar> im2col(const Mat<Scalar>& x, int h, int w, const ConvGeometry& g, int out_h,
                   int out_w) {
  const Eigen::Index c = x.cols();
  const int k = g.kernel;
  Mat<Scalar> cols = Mat<Scalar>::Zero(static_cast<Eigen::Index>(out_h) * out_w, k * k * c);
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const Eigen::Index row = static_cast<Eigen::Index>(oy) * out_w + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky * g.dilation;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx * g.dilation;
          if (ix < 0 || ix >= w) continue;
          cols.row(row).segment((ky * k + kx) * c, c) = x.row(static_cast<Eigen::Index>(iy) * w + ix);
        }
      }
    }
  }
  return cols;
}

template <typename Scalar>
void col2im_add(const Mat<Scalar>& dcols, int h, int w, const ConvGeometry& g, int out_h,
                int out_w, Mat<Scalar>& dx) {
  const Eigen::Index c = dx.cols();
  const int k = g.kernel;
  for (int oy = 0; oy < out_h; ++oy) {
    for (int ox = 0; ox < out_w; ++ox) {
      const Eigen::Index row = static_cast<Eigen::Index>(oy) * out_w + ox;
      for (int ky = 0; ky < k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky * g.dilation;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx * g.dilation;
          if (ix < 0 || ix >= w) continue;
          dx.row(static_cast<Eigen::Index>(iy) * w + ix) += dcols.row(row).segment((ky * k + kx) * c, c);
        }
      }
    }
  }
}

}  // namespace detail

/// Dense 2-D convolution. Weight shape (k*k*C_in) x C_out, bias 1 x C_out.
template <typename Scalar>
FeatureMap<Scalar> conv2d(const FeatureMap<Scalar>& x, Param<Scalar>& w,
                          std::type_identity_t<Param<Scalar>>* b,
                          const ConvGeometry& g) {
  const int k = g.kernel;
  if (w.value.rows() != static_cast<Eigen::Index>(k) * k * x.channels())
    throw ShapeError("conv2d: weight rows do not match k*k*C_in");
  const int out_h = g.out_size(x.h);
  const int out_w = g.out_size(x.w);
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv2d: empty output");
  if (k == 1 && g.stride == 1 && g.pad == 0) return {linear(x.v, w, b), x.h, x.w};

  Mat<Scalar> cols = detail::im2col(x.value(), x.h, x.w, g, out_h, out_w);
  Mat<Scalar> out(cols.rows(), w.value.cols());
  out.noalias() = cols * w.value;
  if (b != nullptr) out.rowwise() += b->value.row(0);
  const int ix = x.v.id;
  const int h = x.h, wd = x.w;
  Param<Scalar>* pw = &w;
  Var<Scalar> y = x.v.tape->push(
      std::move(out), true,
      [ix, pw, b, g, h, wd, out_h, out_w, cols = std::move(cols)](Tape<Scalar>& t, int self) {
        const Mat<Scalar>& dy = t.grad(self);
        pw->grad.noalias() += cols.transpose() * dy;
        if (b != nullptr) b->grad.row(0) += dy.colwise().sum();
        if (t.needs_grad(ix)) {
          Mat<Scalar> dcols(dy.rows(), pw->value.rows());
          dcols.noalias() = dy * pw->value.transpose();
          detail::col2im_add(dcols, h, wd, g, out_h, out_w, t.grad(ix));
        }
      });
  return {y, out_h, out_w};
}

/// Depthwise k x k convolution, stride 1, "same" zero padding of dilation*(k/2).
/// Kernel shape (k*k) x C, bias 1 x C (optional).
template <typename Scalar>
FeatureMap<Scalar> depthwise_conv2d(const FeatureMap<Scalar>& x, Param<Scalar>& kernel,
                                    std::type_identity_t<Param<Scalar>>* b, int k,
                                    int dilation) {
  const Eigen::Index c = x.channels();
  if (kernel.value.rows() != static_cast<Eigen::Index>(k) * k || kernel.value.cols() != c)
    throw ShapeError("depthwise_conv2d: kernel shape mismatch");
  const int pad = dilation * (k / 2);
  const int h = x.h, w = x.w;
  const Mat<Scalar>& in = x.value();
  Mat<Scalar> out = Mat<Scalar>::Zero(in.rows(), c);
  if (b != nullptr) out.rowwise() += b->value.row(0);

  // For each tap the valid output columns of a row form a contiguous range.
  auto for_each_span = [h, w, k, pad, dilation](auto&& fn) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int dy = ky * dilation - pad;
        const int dx = kx * dilation - pad;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        if (x1 <= x0) continue;
        for (int oy = 0; oy < h; ++oy) {
          const int iy = oy + dy;
          if (iy < 0 || iy >= h) continue;
          fn(ky * k + kx, static_cast<Eigen::Index>(oy) * w + x0,
             static_cast<Eigen::Index>(iy) * w + x0 + dx, x1 - x0);
        }
      }
    }
  };
  for_each_span([&](int tap, Eigen::Index o, Eigen::Index i, int len) {
    out.middleRows(o, len).array() +=
        in.middleRows(i, len).array().rowwise() * kernel.value.row(tap).array();
  });

  const int ix = x.v.id;
  Param<Scalar>* pk = &kernel;
  Var<Scalar> y = x.v.tape->push(std::move(out), true,
                                 [ix, pk, b, for_each_span](Tape<Scalar>& t, int self) {
    const Mat<Scalar>& dy = t.grad(self);
    const Mat<Scalar>& xin = t.value(ix);
    if (b != nullptr) b->grad.row(0) += dy.colwise().sum();
    const bool want_dx = t.needs_grad(ix);
    Mat<Scalar>* dx = want_dx ? &t.grad(ix) : nullptr;
    for_each_span([&](int tap, Eigen::Index o, Eigen::Index i, int len) {
      pk->grad.row(tap) +=
          (xin.middleRows(i, len).array() * dy.middleRows(o, len).array()).matrix().colwise().sum();
      if (dx != nullptr)
        dx->middleRows(i, len).array() +=
            dy.middleRows(o, len).array().rowwise() * pk->value.row(tap).array();
    });
  });
  return {y, h, w};
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-row (per-token) layer normalization with affine 1 x C gamma/beta.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Param<Scalar>& gamma, Param<Scalar>& beta,
                       Scalar eps = Scalar(1e-6)) {
  const Mat<Scalar>& in = x.value();
  const Eigen::Index c = in.cols();
  if (gamma.value.cols() != c) throw ShapeError("layer_norm: gamma width mismatch");
  Vec<Scalar> mean = in.rowwise().mean();
  Mat<Scalar> xhat = in.colwise() - mean;
  Vec<Scalar> rstd = (xhat.array().square().rowwise().mean() + eps).rsqrt();
  xhat.array().colwise() *= rstd.array();
  Mat<Scalar> out = (xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
  out.rowwise() += beta.value.row(0);

  const int ix = x.id;
  Param<Scalar>* pg = &gamma;
  Param<Scalar>* pb = &beta;
  return x.tape->push(std::move(out), true,
                      [ix, pg, pb, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<Scalar>& t,
                                                                                   int self) {
    const Mat<Scalar>& dy = t.grad(self);
    pg->grad.row(0) += (dy.array() * xhat.array()).matrix().colwise().sum();
    pb->grad.row(0) += dy.colwise().sum();
    if (!t.needs_grad(ix)) return;
    Mat<Scalar> dxhat = (dy.array().rowwise() * pg->value.row(0).array()).matrix();
    Vec<Scalar> m1 = dxhat.rowwise().mean();
    Vec<Scalar> m2 = (dxhat.array() * xhat.array()).rowwise().mean();
    Mat<Scalar> dx = dxhat.colwise() - m1;
    dx.array() -= xhat.array().colwise() * m2.array();
    dx.array().colwise() *= rstd.array();
    t.grad(ix) += dx;
  });
}

/// Group normalization over all pixels of one image: channels are split into
/// `groups` contiguous groups; statistics are shared within a group.
template <typename Scalar>
Var<Scalar> group_norm(Var<Scalar> x, int groups, Param<Scalar>& gamma, Param<Scalar>& beta,
                       Scalar eps = Scalar(1e-5)) {
  const Mat<Scalar>& in = x.value();
  const Eigen::Index c = in.cols();
  if (groups <= 0 || c % groups != 0) throw ShapeError("group_norm: channels not divisible by groups");
  if (gamma.value.cols() != c) throw ShapeError("group_norm: gamma width mismatch");
  const Eigen::Index cg = c / groups;
  Mat<Scalar> xhat(in.rows(), c);
  Vec<Scalar> rstd(groups);
  for (int g = 0; g < groups; ++g) {
    auto blk = in.middleCols(g * cg, cg);
    const Scalar mu = blk.mean();
    auto centered = xhat.middleCols(g * cg, cg);
    centered = blk.array() - mu;
    const Scalar var = centered.array().square().mean();
    rstd(g) = Scalar(1) / std::sqrt(var + eps);
    centered *= rstd(g);
  }
  Mat<Scalar> out = (xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
  out.rowwise() += beta.value.row(0);

  const int ix = x.id;
  Param<Scalar>* pg = &gamma;
  Param<Scalar>* pb = &beta;
  return x.tape->push(std::move(out), true,
                      [ix, pg, pb, groups, cg, xhat = std::move(xhat),
                       rstd = std::move(rstd)](Tape<Scalar>& t, int self) {
    const Mat<Scalar>& dy = t.grad(self);
    pg->grad.row(0) += (dy.array() * xhat.array()).matrix().colwise().sum();
    pb->grad.row(0) += dy.colwise().sum();
    if (!t.needs_grad(ix)) return;
    Mat<Scalar> dxhat = (dy.array().rowwise() * pg->value.row(0).array()).matrix();
    Mat<Scalar>& dx = t.grad(ix);
    for (int g = 0; g < groups; ++g) {
      auto dh = dxhat.middleCols(g * cg, cg);
      auto xh = xhat.middleCols(g * cg, cg);
      const Scalar m1 = dh.mean();
      const Scalar m2 = (dh.array() * xh.array()).mean();
      dx.middleCols(g * cg, cg).array() += rstd(g) * (dh.array() - m1 - xh.array() * m2);
    }
  });
}

// ---------------------------------------------------------------------------
// Attention and resampling

/// Multi-head scaled dot-product attention. q: N x d, k and v: M x d; heads
/// split d into contiguous column blocks. Returns N x d.
template <typename Scalar>
Var<Scalar> multi_head_attention(Var<Scalar> q, Var<Scalar> k, Var<Scalar> v, int heads) {
  const Eigen::Index d = q.cols();
  if (k.cols() != d || v.cols() != d || k.rows() != v.rows())
    throw ShapeError("attention: q/k/v shape mismatch");
  if (heads <= 0 || d % heads != 0) throw ShapeError("attention: width not divisible by heads");
  const Eigen::Index dh = d / heads;
  const Scalar scale_factor = Scalar(1) / std::sqrt(Scalar(dh));
  const Mat<Scalar>& Q = q.value();
  const Mat<Scalar>& K = k.value();
  const Mat<Scalar>& V = v.value();
  Mat<Scalar> out(Q.rows(), d);
  std::vector<Mat<Scalar>> probs(heads);
  for (int hd = 0; hd < heads; ++hd) {
    Mat<Scalar> s(Q.rows(), K.rows());
    s.noalias() = Q.middleCols(hd * dh, dh) * K.middleCols(hd * dh, dh).transpose();
    s *= scale_factor;
    Vec<Scalar> mx = s.rowwise().maxCoeff();
    s = (s.colwise() - mx).array().exp().matrix();
    Vec<Scalar> z = s.rowwise().sum();
    s.array().colwise() /= z.array();
    out.middleCols(hd * dh, dh).noalias() = s * V.middleCols(hd * dh, dh);
    probs[hd] = std::move(s);
  }
  const int iq = q.id, ik = k.id, iv = v.id;
  const bool needs = q.needs_grad() || k.needs_grad() || v.needs_grad();
  return q.tape->push(std::move(out), needs,
                      [iq, ik, iv, heads, dh, scale_factor, probs = std::move(probs)](
                          Tape<Scalar>& t, int self) {
    const Mat<Scalar>& dy = t.grad(self);
    const Mat<Scalar>& Q = t.value(iq);
    const Mat<Scalar>& K = t.value(ik);
    const Mat<Scalar>& V = t.value(iv);
    for (int hd = 0; hd < heads; ++hd) {
      const Mat<Scalar>& A = probs[hd];
      auto dO = dy.middleCols(hd * dh, dh);
      if (t.needs_grad(iv)) t.grad(iv).middleCols(hd * dh, dh).noalias() += A.transpose() * dO;
      if (!t.needs_grad(iq) && !t.needs_grad(ik)) continue;
      Mat<Scalar> dA(A.rows(), A.cols());
      dA.noalias() = dO * V.middleCols(hd * dh, dh).transpose();
      Vec<Scalar> rowdot = (dA.array() * A.array()).rowwise().sum();
      Mat<Scalar> dS = (A.array() * (dA.colwise() - rowdot).array()).matrix() * scale_factor;
      if (t.needs_grad(iq)) t.grad(iq).middleCols(hd * dh, dh).noalias() += dS * K.middleCols(hd * dh, dh);
      if (t.needs_grad(ik))
        t.grad(ik).middleCols(hd * dh, dh).noalias() += dS.transpose() * Q.middleCols(hd * dh, dh);
    }
  });
}

namespace detail {

/// Source taps of bilinear resampling along one axis with half-pixel centers
/// (corner alignment disabled): src = (dst + 0.5) * in / out - 0.5, clamped at 0.
struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

inline AxisTaps bilinear_taps(int in, int out) {
  AxisTaps taps;
  taps.i0.resize(out);
  taps.i1.resize(out);
  taps.w1.resize(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * ratio - 0.5;
    if (src < 0) src = 0;
    int lo = static_cast<int>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const int hi = std::min(lo + 1, in - 1);
    taps.i0[o] = lo;
    taps.i1[o] = hi;
    taps.w1[o] = src - lo;
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize of a feature map to out_h x out_w.
template <typename Scalar>
FeatureMap<Scalar> resize_bilinear(const FeatureMap<Scalar>& x, int out_h, int out_w) {
  if (out_h == x.h && out_w == x.w) return x;
  const detail::AxisTaps ty = detail::bilinear_taps(x.h, out_h);
  const detail::AxisTaps tx = detail::bilinear_taps(x.w, out_w);
  const int w = x.w;
  auto for_each_tap = [ty, tx, out_h, out_w, w](auto&& fn) {
    for (int oy = 0; oy < out_h; ++oy) {
      const Scalar wy1 = Scalar(ty.w1[oy]);
      const Scalar wy0 = Scalar(1) - wy1;
      for (int ox = 0; ox < out_w; ++ox) {
        const Scalar wx1 = Scalar(tx.w1[ox]);
        const Scalar wx0 = Scalar(1) - wx1;
        const Eigen::Index o = static_cast<Eigen::Index>(oy) * out_w + ox;
        const Eigen::Index r0 = static_cast<Eigen::Index>(ty.i0[oy]) * w;
        const Eigen::Index r1 = static_cast<Eigen::Index>(ty.i1[oy]) * w;
        fn(o, r0 + tx.i0[ox], wy0 * wx0);
        fn(o, r0 + tx.i1[ox], wy0 * wx1);
        fn(o, r1 + tx.i0[ox], wy1 * wx0);
        fn(o, r1 + tx.i1[ox], wy1 * wx1);
      }
    }
  };
  const Mat<Scalar>& in = x.value();
  Mat<Scalar> out = Mat<Scalar>::Zero(static_cast<Eigen::Index>(out_h) * out_w, in.cols());
  for_each_tap([&](Eigen::Index o, Eigen::Index i, Scalar wt) {
    if (wt != Scalar(0)) out.row(o) += wt * in.row(i);
  });
  const int ix = x.v.id;
  Var<Scalar> y = x.v.tape->push(std::move(out), x.v.needs_grad(),
                                 [ix, for_each_tap](Tape<Scalar>& t, int self) {
    const Mat<Scalar>& dy = t.grad(self);
    Mat<Scalar>& dx = t.grad(ix);
    for_each_tap([&](Eigen::Index o, Eigen::Index i, Scalar wt) {
      if (wt != Scalar(0)) dx.row(i) += wt * dy.row(o);
    });
  });
  return {y, out_h, out_w};
}

/// Bilinear resize of a plain matrix (no gradient tracking).
template <typename Scalar>
Mat<Scalar> resize_bilinear(const Mat<Scalar>& in, int h, int w, int out_h, int out_w) {
  Tape<Scalar> tape(false);
  FeatureMap<Scalar> fm{tape.constant(in), h, w};
  return resize_bilinear(fm, out_h, out_w).value();
}

}  // namespace daformer
