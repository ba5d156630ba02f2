#include "cmt/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cmt {

namespace {

std::int64_t ceil_div(std::int64_t a, std::int64_t b) {  // b > 0
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {  // b > 0
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Conv2dParams conv2d_init(std::int64_t out_c, std::int64_t in_c, std::int64_t k,
                         std::int64_t stride, std::int64_t pad, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
  Conv2dParams p;
  p.w = rng.normal_tensor(Shape{out_c, in_c, k, k}, 0.0, stddev);
  p.b = Tensor(Shape{out_c}, 0.0);
  p.stride = stride;
  p.pad = pad;
  return p;
}

Deconv2dParams deconv2d_init(std::int64_t in_c, std::int64_t out_c, std::int64_t k,
                             std::int64_t stride, std::int64_t pad, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_c * k * k));
  Deconv2dParams p;
  p.w = rng.normal_tensor(Shape{in_c, out_c, k, k}, 0.0, stddev);
  p.b = Tensor(Shape{out_c}, 0.0);
  p.stride = stride;
  p.pad = pad;
  return p;
}

LinearParams linear_init(std::int64_t out_f, std::int64_t in_f, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_f + out_f));
  LinearParams p;
  p.w = rng.normal_tensor(Shape{out_f, in_f}, 0.0, stddev);
  p.b = Tensor(Shape{out_f}, 0.0);
  return p;
}

std::int64_t conv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                             std::int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

std::int64_t deconv_out_extent(std::int64_t in, std::int64_t k, std::int64_t stride,
                               std::int64_t pad) {
  return (in - 1) * stride - 2 * pad + k;
}

Tensor conv2d(const Tensor& x, const Conv2dParams& p) {
  require(x.rank() == 4, "conv2d: input must be NCHW, got " + x.shape().str());
  require(p.w.rank() == 4 && p.b.rank() == 1 && p.b.dim(0) == p.w.dim(0),
          "conv2d: malformed params");
  require(p.stride >= 1 && p.pad >= 0, "conv2d: stride must be >= 1 and pad >= 0");
  const std::int64_t n = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t out_c = p.w.dim(0), k_h = p.w.dim(2), k_w = p.w.dim(3);
  require(p.w.dim(1) == in_c, "conv2d: input has " + std::to_string(in_c) +
                                  " channels but weights expect " + std::to_string(p.w.dim(1)));
  const std::int64_t out_h = conv_out_extent(h, k_h, p.stride, p.pad);
  const std::int64_t out_w = conv_out_extent(w, k_w, p.stride, p.pad);
  require(out_h >= 1 && out_w >= 1,
          "conv2d: non-positive output size for input " + x.shape().str());

  Tensor y(Shape{n, out_c, out_h, out_w});
  const double* xd = x.data();
  const double* wd = p.w.data();
  const double* bd = p.b.data();
  double* yd = y.data();
  const std::int64_t s = p.stride, pad = p.pad;

  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t oc = 0; oc < out_c; ++oc) {
      double* yplane = yd + (ni * out_c + oc) * out_h * out_w;
      const double bias = bd[oc];
      for (std::int64_t i = 0; i < out_h * out_w; ++i) yplane[i] = bias;
      for (std::int64_t ic = 0; ic < in_c; ++ic) {
        const double* xplane = xd + (ni * in_c + ic) * h * w;
        for (std::int64_t u = 0; u < k_h; ++u) {
          const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(pad - u, s));
          const std::int64_t oh_hi = std::min(out_h - 1, floor_div(h - 1 + pad - u, s));
          for (std::int64_t v = 0; v < k_w; ++v) {
            const double wv = wd[((oc * in_c + ic) * k_h + u) * k_w + v];
            if (wv == 0.0) continue;
            const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(pad - v, s));
            const std::int64_t ow_hi = std::min(out_w - 1, floor_div(w - 1 + pad - v, s));
            for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
              const double* xrow = xplane + (oh * s - pad + u) * w - pad + v;
              double* yrow = yplane + oh * out_w;
              if (s == 1) {
                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) yrow[ow] += wv * xrow[ow];
              } else {
                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) yrow[ow] += wv * xrow[ow * s];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

Conv2dGrad conv2d_grad(const Tensor& x, const Conv2dParams& p, const Tensor& dout, bool need_dx) {
  const std::int64_t n = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t out_c = p.w.dim(0), k_h = p.w.dim(2), k_w = p.w.dim(3);
  const std::int64_t out_h = conv_out_extent(h, k_h, p.stride, p.pad);
  const std::int64_t out_w = conv_out_extent(w, k_w, p.stride, p.pad);
  require(dout.shape() == Shape{n, out_c, out_h, out_w},
          "conv2d_grad: dout shape " + dout.shape().str() + " does not match forward output");

  Conv2dGrad g;
  g.dw = Tensor(p.w.shape());
  g.db = Tensor(p.b.shape());
  if (need_dx) g.dx = Tensor(x.shape());

  const double* xd = x.data();
  const double* wd = p.w.data();
  const double* dyd = dout.data();
  double* dwd = g.dw.data();
  double* dbd = g.db.data();
  double* dxd = need_dx ? g.dx.data() : nullptr;
  const std::int64_t s = p.stride, pad = p.pad;

  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t oc = 0; oc < out_c; ++oc) {
      const double* dyplane = dyd + (ni * out_c + oc) * out_h * out_w;
      double acc = 0.0;
      for (std::int64_t i = 0; i < out_h * out_w; ++i) acc += dyplane[i];
      dbd[oc] += acc;
      for (std::int64_t ic = 0; ic < in_c; ++ic) {
        const double* xplane = xd + (ni * in_c + ic) * h * w;
        double* dxplane = need_dx ? dxd + (ni * in_c + ic) * h * w : nullptr;
        for (std::int64_t u = 0; u < k_h; ++u) {
          const std::int64_t oh_lo = std::max<std::int64_t>(0, ceil_div(pad - u, s));
          const std::int64_t oh_hi = std::min(out_h - 1, floor_div(h - 1 + pad - u, s));
          for (std::int64_t v = 0; v < k_w; ++v) {
            const std::int64_t ow_lo = std::max<std::int64_t>(0, ceil_div(pad - v, s));
            const std::int64_t ow_hi = std::min(out_w - 1, floor_div(w - 1 + pad - v, s));
            const double wv = wd[((oc * in_c + ic) * k_h + u) * k_w + v];
            double wacc = 0.0;
            for (std::int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
              const double* xrow = xplane + (oh * s - pad + u) * w - pad + v;
              const double* dyrow = dyplane + oh * out_w;
              if (s == 1) {
                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) wacc += dyrow[ow] * xrow[ow];
              } else {
                for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) wacc += dyrow[ow] * xrow[ow * s];
              }
              if (need_dx && wv != 0.0) {
                double* dxrow = dxplane + (oh * s - pad + u) * w - pad + v;
                if (s == 1) {
                  for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) dxrow[ow] += wv * dyrow[ow];
                } else {
                  for (std::int64_t ow = ow_lo; ow <= ow_hi; ++ow) dxrow[ow * s] += wv * dyrow[ow];
                }
              }
            }
            dwd[((oc * in_c + ic) * k_h + u) * k_w + v] += wacc;
          }
        }
      }
    }
  }
  return g;
}

Tensor deconv2d(const Tensor& x, const Deconv2dParams& p) {
  require(x.rank() == 4, "deconv2d: input must be NCHW, got " + x.shape().str());
  require(p.w.rank() == 4 && p.b.rank() == 1 && p.b.dim(0) == p.w.dim(1),
          "deconv2d: malformed params");
  require(p.stride >= 1 && p.pad >= 0, "deconv2d: stride must be >= 1 and pad >= 0");
  const std::int64_t n = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t out_c = p.w.dim(1), k_h = p.w.dim(2), k_w = p.w.dim(3);
  require(p.w.dim(0) == in_c, "deconv2d: input has " + std::to_string(in_c) +
                                  " channels but weights expect " + std::to_string(p.w.dim(0)));
  const std::int64_t out_h = deconv_out_extent(h, k_h, p.stride, p.pad);
  const std::int64_t out_w = deconv_out_extent(w, k_w, p.stride, p.pad);
  require(out_h >= 1 && out_w >= 1,
          "deconv2d: non-positive output size for input " + x.shape().str());

  Tensor y(Shape{n, out_c, out_h, out_w});
  const double* xd = x.data();
  const double* wd = p.w.data();
  const double* bd = p.b.data();
  double* yd = y.data();
  const std::int64_t s = p.stride, pad = p.pad;

  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t oc = 0; oc < out_c; ++oc) {
      double* yplane = yd + (ni * out_c + oc) * out_h * out_w;
      const double bias = bd[oc];
      for (std::int64_t i = 0; i < out_h * out_w; ++i) yplane[i] = bias;
      for (std::int64_t ic = 0; ic < in_c; ++ic) {
        const double* xplane = xd + (ni * in_c + ic) * h * w;
        for (std::int64_t u = 0; u < k_h; ++u) {
          for (std::int64_t v = 0; v < k_w; ++v) {
            const double wv = wd[((ic * out_c + oc) * k_h + u) * k_w + v];
            if (wv == 0.0) continue;
            for (std::int64_t hi = 0; hi < h; ++hi) {
              const std::int64_t oh = hi * s - pad + u;
              if (oh < 0 || oh >= out_h) continue;
              double* yrow = yplane + oh * out_w;
              const double* xrow = xplane + hi * w;
              for (std::int64_t wi = 0; wi < w; ++wi) {
                const std::int64_t ow = wi * s - pad + v;
                if (ow < 0 || ow >= out_w) continue;
                yrow[ow] += wv * xrow[wi];
              }
            }
          }
        }
      }
    }
  }
  return y;
}

Deconv2dGrad deconv2d_grad(const Tensor& x, const Deconv2dParams& p, const Tensor& dout,
                           bool need_dx) {
  const std::int64_t n = x.dim(0), in_c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t out_c = p.w.dim(1), k_h = p.w.dim(2), k_w = p.w.dim(3);
  const std::int64_t out_h = deconv_out_extent(h, k_h, p.stride, p.pad);
  const std::int64_t out_w = deconv_out_extent(w, k_w, p.stride, p.pad);
  require(dout.shape() == Shape{n, out_c, out_h, out_w},
          "deconv2d_grad: dout shape " + dout.shape().str() + " does not match forward output");

  Deconv2dGrad g;
  g.dw = Tensor(p.w.shape());
  g.db = Tensor(p.b.shape());
  if (need_dx) g.dx = Tensor(x.shape());

  const double* xd = x.data();
  const double* wd = p.w.data();
  const double* dyd = dout.data();
  double* dwd = g.dw.data();
  double* dbd = g.db.data();
  double* dxd = need_dx ? g.dx.data() : nullptr;
  const std::int64_t s = p.stride, pad = p.pad;

  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t oc = 0; oc < out_c; ++oc) {
      const double* dyplane = dyd + (ni * out_c + oc) * out_h * out_w;
      double acc = 0.0;
      for (std::int64_t i = 0; i < out_h * out_w; ++i) acc += dyplane[i];
      dbd[oc] += acc;
      for (std::int64_t ic = 0; ic < in_c; ++ic) {
        const double* xplane = xd + (ni * in_c + ic) * h * w;
        double* dxplane = need_dx ? dxd + (ni * in_c + ic) * h * w : nullptr;
        for (std::int64_t u = 0; u < k_h; ++u) {
          for (std::int64_t v = 0; v < k_w; ++v) {
            const double wv = wd[((ic * out_c + oc) * k_h + u) * k_w + v];
            double wacc = 0.0;
            for (std::int64_t hi = 0; hi < h; ++hi) {
              const std::int64_t oh = hi * s - pad + u;
              if (oh < 0 || oh >= out_h) continue;
              const double* dyrow = dyplane + oh * out_w;
              const double* xrow = xplane + hi * w;
              double* dxrow = need_dx ? dxplane + hi * w : nullptr;
              for (std::int64_t wi = 0; wi < w; ++wi) {
                const std::int64_t ow = wi * s - pad + v;
                if (ow < 0 || ow >= out_w) continue;
                wacc += dyrow[ow] * xrow[wi];
                if (need_dx) dxrow[wi] += wv * dyrow[ow];
              }
            }
            dwd[((ic * out_c + oc) * k_h + u) * k_w + v] += wacc;
          }
        }
      }
    }
  }
  return g;
}

MaxPoolResult maxpool2d(const Tensor& x, std::int64_t window, std::int64_t stride) {
  require(x.rank() == 4, "maxpool2d: input must be NCHW, got " + x.shape().str());
  require(window >= 1 && stride >= 1, "maxpool2d: window and stride must be >= 1");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  require(window <= h && window <= w,
          "maxpool2d: window " + std::to_string(window) + " larger than input " + x.shape().str());
  const std::int64_t out_h = (h - window) / stride + 1;
  const std::int64_t out_w = (w - window) / stride + 1;

  MaxPoolResult r;
  r.y = Tensor(Shape{n, c, out_h, out_w});
  r.argmax.assign(static_cast<std::size_t>(r.y.size()), -1);
  const double* xd = x.data();
  double* yd = r.y.data();
  std::int64_t* am = r.argmax.data();

  std::int64_t oi = 0;
  for (std::int64_t ni = 0; ni < n; ++ni) {
    for (std::int64_t ci = 0; ci < c; ++ci) {
      const std::int64_t plane = (ni * c + ci) * h * w;
      for (std::int64_t oh = 0; oh < out_h; ++oh) {
        for (std::int64_t ow = 0; ow < out_w; ++ow, ++oi) {
          double best = -1e308;
          std::int64_t best_idx = -1;
          for (std::int64_t u = 0; u < window; ++u) {
            const std::int64_t row = plane + (oh * stride + u) * w + ow * stride;
            for (std::int64_t v = 0; v < window; ++v) {
              const double val = xd[row + v];
              if (val > best) {  // strict: ties resolve to the smallest flat index
                best = val;
                best_idx = row + v;
              }
            }
          }
          yd[oi] = best;
          am[oi] = best_idx;
        }
      }
    }
  }
  return r;
}

Tensor maxpool2d_grad(const Shape& x_shape, const MaxPoolResult& fwd, const Tensor& dout) {
  require(dout.shape() == fwd.y.shape(), "maxpool2d_grad: dout shape mismatch");
  Tensor dx(x_shape);
  double* dxd = dx.data();
  const double* dyd = dout.data();
  for (std::int64_t i = 0; i < dout.size(); ++i)
    dxd[fwd.argmax[static_cast<std::size_t>(i)]] += dyd[i];
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape());
  const double* xd = x.data();
  double* yd = y.data();
  for (std::int64_t i = 0; i < x.size(); ++i) yd[i] = xd[i] > 0.0 ? xd[i] : 0.0;
  return y;
}

Tensor relu_grad(const Tensor& x, const Tensor& dout) {
  require(x.shape() == dout.shape(), "relu_grad: shape mismatch");
  Tensor dx(x.shape());
  const double* xd = x.data();
  const double* dyd = dout.data();
  double* dxd = dx.data();
  for (std::int64_t i = 0; i < x.size(); ++i) dxd[i] = xd[i] > 0.0 ? dyd[i] : 0.0;
  return dx;
}

RoiPoolResult roi_pool(const Tensor& features, const Box& roi, double spatial_scale,
                       std::int64_t out) {
  require(features.rank() == 4 && features.dim(0) == 1,
          "roi_pool: features must be 1xCxHxW, got " + features.shape().str());
  require(out >= 1, "roi_pool: output grid must be >= 1");
  require(roi.valid(), "roi_pool: invalid roi");
  const std::int64_t c = features.dim(1), h = features.dim(2), w = features.dim(3);

  // Scale to feature coordinates, round outward, clamp to the map.
  auto clampi = [](std::int64_t v, std::int64_t lo, std::int64_t hi) {
    return std::min(std::max(v, lo), hi);
  };
  const std::int64_t gx1 = clampi(static_cast<std::int64_t>(std::floor(roi.x1 * spatial_scale)), 0, w);
  const std::int64_t gy1 = clampi(static_cast<std::int64_t>(std::floor(roi.y1 * spatial_scale)), 0, h);
  const std::int64_t gx2 = clampi(static_cast<std::int64_t>(std::ceil(roi.x2 * spatial_scale)), 0, w);
  const std::int64_t gy2 = clampi(static_cast<std::int64_t>(std::ceil(roi.y2 * spatial_scale)), 0, h);
  const std::int64_t roi_w = gx2 - gx1, roi_h = gy2 - gy1;
  if (roi_w <= 0 || roi_h <= 0)
    throw std::invalid_argument("roi_pool: roi (" + std::to_string(roi.x1) + "," +
                                std::to_string(roi.y1) + "," + std::to_string(roi.x2) + "," +
                                std::to_string(roi.y2) +
                                ") collapses to zero area on the feature map");

  RoiPoolResult r;
  r.y = Tensor(Shape{c, out, out});
  r.argmax.assign(static_cast<std::size_t>(c * out * out), -1);
  const double* fd = features.data();
  double* yd = r.y.data();

  std::int64_t oi = 0;
  for (std::int64_t ci = 0; ci < c; ++ci) {
    const std::int64_t plane = ci * h * w;
    for (std::int64_t ph = 0; ph < out; ++ph) {
      const std::int64_t hs = clampi(gy1 + (ph * roi_h) / out, 0, h);
      const std::int64_t he = clampi(gy1 + ceil_div((ph + 1) * roi_h, out), 0, h);
      for (std::int64_t pw = 0; pw < out; ++pw, ++oi) {
        const std::int64_t ws = clampi(gx1 + (pw * roi_w) / out, 0, w);
        const std::int64_t we = clampi(gx1 + ceil_div((pw + 1) * roi_w, out), 0, w);
        if (he <= hs || we <= ws) {
          yd[oi] = 0.0;  // empty cell
          continue;
        }
        double best = -1e308;
        std::int64_t best_idx = -1;
        for (std::int64_t ih = hs; ih < he; ++ih) {
          for (std::int64_t iw = ws; iw < we; ++iw) {
            const double val = fd[plane + ih * w + iw];
            if (val > best) {
              best = val;
              best_idx = plane + ih * w + iw;
            }
          }
        }
        yd[oi] = best;
        r.argmax[static_cast<std::size_t>(oi)] = best_idx;
      }
    }
  }
  return r;
}

Tensor roi_pool_grad(const Shape& features_shape, const RoiPoolResult& fwd, const Tensor& dout) {
  require(dout.shape() == fwd.y.shape(), "roi_pool_grad: dout shape mismatch");
  Tensor dx(features_shape);
  double* dxd = dx.data();
  const double* dyd = dout.data();
  for (std::int64_t i = 0; i < dout.size(); ++i) {
    const std::int64_t idx = fwd.argmax[static_cast<std::size_t>(i)];
    if (idx >= 0) dxd[idx] += dyd[i];
  }
  return dx;
}

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
  require(!xs.empty(), "concat_channels: empty input list");
  const Tensor& first = *xs[0];
  require(first.rank() == 4, "concat_channels: inputs must be NCHW");
  std::int64_t total_c = 0;
  for (const Tensor* t : xs) {
    require(t->rank() == 4 && t->dim(0) == first.dim(0) && t->dim(2) == first.dim(2) &&
                t->dim(3) == first.dim(3),
            "concat_channels: mismatched non-channel extents (" + t->shape().str() + " vs " +
                first.shape().str() + ")");
    total_c += t->dim(1);
  }
  const std::int64_t n = first.dim(0), h = first.dim(2), w = first.dim(3), hw = h * w;
  Tensor y(Shape{n, total_c, h, w});
  double* yd = y.data();
  for (std::int64_t ni = 0; ni < n; ++ni) {
    std::int64_t c_off = 0;
    for (const Tensor* t : xs) {
      const std::int64_t tc = t->dim(1);
      const double* td = t->data() + ni * tc * hw;
      std::copy(td, td + tc * hw, yd + (ni * total_c + c_off) * hw);
      c_off += tc;
    }
  }
  return y;
}

std::vector<Tensor> concat_channels_grad(const std::vector<std::int64_t>& channels,
                                         const Tensor& dout) {
  std::int64_t total_c = 0;
  for (std::int64_t c : channels) total_c += c;
  require(dout.rank() == 4 && dout.dim(1) == total_c,
          "concat_channels_grad: dout channels do not match the split");
  const std::int64_t n = dout.dim(0), h = dout.dim(2), w = dout.dim(3), hw = h * w;
  std::vector<Tensor> parts;
  parts.reserve(channels.size());
  std::int64_t c_off = 0;
  for (std::int64_t c : channels) {
    Tensor part(Shape{n, c, h, w});
    for (std::int64_t ni = 0; ni < n; ++ni) {
      const double* src = dout.data() + (ni * total_c + c_off) * hw;
      std::copy(src, src + c * hw, part.data() + ni * c * hw);
    }
    parts.push_back(std::move(part));
    c_off += c;
  }
  return parts;
}

namespace {

// Canonicalize linear input to rows x inF.
std::pair<std::int64_t, std::int64_t> linear_rows(const Tensor& x, const LinearParams& p,
                                                  const char* who) {
  const std::int64_t in_f = p.in_features();
  if (x.rank() == 1) {
    require(x.dim(0) == in_f, std::string(who) + ": input length " + std::to_string(x.dim(0)) +
                                  " != in features " + std::to_string(in_f));
    return {1, in_f};
  }
  require(x.rank() == 2 && x.dim(1) == in_f,
          std::string(who) + ": input " + x.shape().str() + " incompatible with in features " +
              std::to_string(in_f));
  return {x.dim(0), in_f};
}

}  // namespace

Tensor linear(const Tensor& x, const LinearParams& p) {
  const auto [rows, in_f] = linear_rows(x, p, "linear");
  const std::int64_t out_f = p.out_features();
  Tensor y(x.rank() == 1 ? Shape{out_f} : Shape{rows, out_f});
  const double* xd = x.data();
  const double* wd = p.w.data();
  const double* bd = p.b.data();
  double* yd = y.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xrow = xd + r * in_f;
    double* yrow = yd + r * out_f;
    for (std::int64_t o = 0; o < out_f; ++o) {
      const double* wrow = wd + o * in_f;
      double acc = bd[o];
      for (std::int64_t i = 0; i < in_f; ++i) acc += wrow[i] * xrow[i];
      yrow[o] = acc;
    }
  }
  return y;
}

LinearGrad linear_grad(const Tensor& x, const LinearParams& p, const Tensor& dout) {
  const auto [rows, in_f] = linear_rows(x, p, "linear_grad");
  const std::int64_t out_f = p.out_features();
  require(dout.size() == rows * out_f, "linear_grad: dout shape mismatch");

  LinearGrad g;
  g.dw = Tensor(p.w.shape());
  g.db = Tensor(p.b.shape());
  g.dx = Tensor(x.shape());
  const double* xd = x.data();
  const double* wd = p.w.data();
  const double* dyd = dout.data();
  double* dwd = g.dw.data();
  double* dbd = g.db.data();
  double* dxd = g.dx.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xrow = xd + r * in_f;
    const double* dyrow = dyd + r * out_f;
    double* dxrow = dxd + r * in_f;
    for (std::int64_t o = 0; o < out_f; ++o) {
      const double dy = dyrow[o];
      if (dy == 0.0) continue;
      dbd[o] += dy;
      const double* wrow = wd + o * in_f;
      double* dwrow = dwd + o * in_f;
      for (std::int64_t i = 0; i < in_f; ++i) {
        dwrow[i] += dy * xrow[i];
        dxrow[i] += dy * wrow[i];
      }
    }
  }
  return g;
}

SoftmaxXentResult softmax_xent(const Tensor& logits, std::int64_t label) {
  require(logits.rank() == 1 && logits.dim(0) >= 2,
          "softmax_xent: logits must be a vector of length >= 2");
  const std::int64_t k = logits.dim(0);
  require(label >= 0 && label < k,
          "softmax_xent: label " + std::to_string(label) + " out of range [0, " +
              std::to_string(k) + ")");
  const double* ld = logits.data();
  double m = ld[0];
  for (std::int64_t i = 1; i < k; ++i) m = std::max(m, ld[i]);
  SoftmaxXentResult r;
  r.probs = Tensor(logits.shape());
  double sum = 0.0;
  for (std::int64_t i = 0; i < k; ++i) {
    const double e = std::exp(ld[i] - m);
    r.probs[i] = e;
    sum += e;
  }
  for (std::int64_t i = 0; i < k; ++i) r.probs[i] /= sum;
  r.loss = -(ld[label] - m - std::log(sum));
  r.dlogits = r.probs;
  r.dlogits[label] -= 1.0;
  return r;
}

LossResult square_loss(const Tensor& recon, const Tensor& target) {
  require(recon.shape() == target.shape(), "square_loss: shape mismatch " + recon.shape().str() +
                                               " vs " + target.shape().str());
  const std::int64_t p = recon.size();
  LossResult r;
  r.grad = Tensor(recon.shape());
  const double* a = recon.data();
  const double* b = target.data();
  double* g = r.grad.data();
  double acc = 0.0;
  const double inv_p = 1.0 / static_cast<double>(p);
  for (std::int64_t i = 0; i < p; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
    g[i] = d * inv_p;
  }
  r.loss = 0.5 * acc * inv_p;
  return r;
}

LossResult smooth_l1(const Tensor& pred, const Tensor& target) {
  require(pred.shape() == target.shape(), "smooth_l1: shape mismatch");
  LossResult r;
  r.grad = Tensor(pred.shape());
  const double* a = pred.data();
  const double* b = target.data();
  double* g = r.grad.data();
  double acc = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double d = a[i] - b[i];
    const double ad = std::abs(d);
    if (ad < 1.0) {
      acc += 0.5 * d * d;
      g[i] = d;
    } else {
      acc += ad - 0.5;
      g[i] = d > 0.0 ? 1.0 : -1.0;
    }
  }
  r.loss = acc;
  return r;
}

SgdState::SgdState(double learning_rate, double momentum, double weight_decay)
    : lr_(learning_rate), momentum_(momentum), weight_decay_(weight_decay) {
  if (lr_ <= 0.0) throw std::invalid_argument("sgd: learning_rate must be > 0");
  if (momentum_ < 0.0 || momentum_ >= 1.0)
    throw std::invalid_argument("sgd: momentum must be in [0, 1)");
  if (weight_decay_ < 0.0) throw std::invalid_argument("sgd: weight_decay must be >= 0");
}

void SgdState::set_learning_rate(double lr) {
  if (lr <= 0.0) throw std::invalid_argument("sgd: learning_rate must be > 0");
  lr_ = lr;
}

void SgdState::step(const std::string& name, Tensor& w, const Tensor& g) {
  if (w.shape() != g.shape())
    throw std::invalid_argument("sgd: gradient shape " + g.shape().str() +
                                " does not match parameter '" + name + "' " + w.shape().str());
  auto it = velocity_.find(name);
  if (it == velocity_.end()) it = velocity_.emplace(name, Tensor(w.shape(), 0.0)).first;
  Tensor& v = it->second;
  double* vd = v.data();
  double* wd = w.data();
  const double* gd = g.data();
  for (std::int64_t i = 0; i < w.size(); ++i) {
    vd[i] = momentum_ * vd[i] - lr_ * (gd[i] + weight_decay_ * wd[i]);
    wd[i] += vd[i];
  }
}

void SgdState::step_all(const std::vector<NamedParam>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    step(params[i].name, *params[i].value, grads[i]);
}

double lr_schedule(std::int64_t epoch, double base_lr, std::int64_t drop_epoch, double factor) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
  return epoch < drop_epoch ? base_lr : base_lr / factor;
}

}  // namespace cmt
