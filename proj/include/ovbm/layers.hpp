/* Copyright 2026 The OVBM Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef OVBM_LAYERS_HPP
#define OVBM_LAYERS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "ovbm/common.hpp"

namespace ovbm {

/// Named parameter tensor; shape is informational, data is flat row-major.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>()),
             0.0) {}

  std::size_t size() const { return data.size(); }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
  bool operator==(const Tensor&) const = default;
};

/// Channel-major feature map [channels x height x width].
struct Activation {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Activation() = default;
  Activation(std::size_t c, std::size_t h, std::size_t w)
      : channels(c), height(h), width(w), data(c * h * w, 0.0) {}

  std::size_t plane() const { return height * width; }
  double* channel(std::size_t c) { return data.data() + c * plane(); }
  const double* channel(std::size_t c) const { return data.data() + c * plane(); }
  bool same_shape(const Activation& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

namespace layers {

// 3x3 convolution, stride 1, zero padding 1. Weight [out][in][3][3].

inline Activation conv3x3_forward(const Activation& in, const Tensor& w, const Tensor& b) {
  const std::size_t cout = w.shape[0], cin = w.shape[1];
  const std::size_t h = in.height, wd = in.width;
  Activation out(cout, h, wd);
  for (std::size_t o = 0; o < cout; ++o) {
    double* dst_plane = out.channel(o);
    std::fill(dst_plane, dst_plane + out.plane(), b.data[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const double* src_plane = in.channel(i);
      const double* k = w.data.data() + (o * cin + i) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wv = k[ky * 3 + kx];
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? wd - 1 : wd;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
            const double* src = src_plane + static_cast<std::size_t>(yy) * wd;
            double* dst = dst_plane + y * wd;
            for (std::size_t x = x0; x < x1; ++x) dst[x] += wv * src[x + kx - 1];
          }
        }
      }
    }
  }
  return out;
}

/// Accumulates weight/bias gradients (when non-null) and returns the input
/// gradient (when `want_input`).
inline Activation conv3x3_backward(const Activation& in, const Tensor& w, const Activation& dout,
                                   Tensor* dw, Tensor* db, bool want_input) {
  const std::size_t cout = w.shape[0], cin = w.shape[1];
  const std::size_t h = in.height, wd = in.width;
  Activation din;
  if (want_input) din = Activation(cin, h, wd);
  for (std::size_t o = 0; o < cout; ++o) {
    const double* g_plane = dout.channel(o);
    if (db) {
      double acc = 0.0;
      for (std::size_t p = 0; p < dout.plane(); ++p) acc += g_plane[p];
      db->data[o] += acc;
    }
    for (std::size_t i = 0; i < cin; ++i) {
      const double* src_plane = in.channel(i);
      const double* k = w.data.data() + (o * cin + i) * 9;
      double* dk = dw ? dw->data.data() + (o * cin + i) * 9 : nullptr;
      double* din_plane = want_input ? din.channel(i) : nullptr;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const double wv = k[ky * 3 + kx];
          const std::size_t x0 = kx == 0 ? 1 : 0;
          const std::size_t x1 = kx == 2 ? wd - 1 : wd;
          double acc = 0.0;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            if (yy < 0 || yy >= static_cast<std::ptrdiff_t>(h)) continue;
            const std::size_t off = static_cast<std::size_t>(yy) * wd;
            const double* g = g_plane + y * wd;
            if (dk) {
              const double* src = src_plane + off;
              for (std::size_t x = x0; x < x1; ++x) acc += g[x] * src[x + kx - 1];
            }
            if (din_plane) {
              double* d = din_plane + off;
              for (std::size_t x = x0; x < x1; ++x) d[x + kx - 1] += wv * g[x];
            }
          }
          if (dk) dk[ky * 3 + kx] += acc;
        }
      }
    }
  }
  return din;
}

inline void relu_inplace(std::vector<double>& v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

/// Masks `grad` by the ReLU output it flows back through.
inline void relu_backward_inplace(const std::vector<double>& out, std::vector<double>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(out[i] > 0.0)) grad[i] = 0.0;
  }
}

/// Non-overlapping average pooling; trailing rows/columns that do not fill a
/// window are dropped.
inline Activation avgpool_forward(const Activation& in, std::size_t ph, std::size_t pw) {
  Activation out(in.channels, in.height / ph, in.width / pw);
  const double scale = 1.0 / static_cast<double>(ph * pw);
  for (std::size_t c = 0; c < in.channels; ++c) {
    const double* src = in.channel(c);
    double* dst = out.channel(c);
    for (std::size_t y = 0; y < out.height; ++y) {
      for (std::size_t dy = 0; dy < ph; ++dy) {
        const double* row = src + (y * ph + dy) * in.width;
        for (std::size_t x = 0; x < out.width; ++x) {
          double acc = 0.0;
          for (std::size_t dx = 0; dx < pw; ++dx) acc += row[x * pw + dx];
          dst[y * out.width + x] += acc;
        }
      }
      for (std::size_t x = 0; x < out.width; ++x) dst[y * out.width + x] *= scale;
    }
  }
  return out;
}

inline Activation avgpool_backward(const Activation& dout, std::size_t in_h, std::size_t in_w,
                                   std::size_t ph, std::size_t pw) {
  Activation din(dout.channels, in_h, in_w);
  const double scale = 1.0 / static_cast<double>(ph * pw);
  for (std::size_t c = 0; c < dout.channels; ++c) {
    const double* g = dout.channel(c);
    double* d = din.channel(c);
    for (std::size_t y = 0; y < dout.height; ++y) {
      for (std::size_t x = 0; x < dout.width; ++x) {
        const double v = g[y * dout.width + x] * scale;
        for (std::size_t dy = 0; dy < ph; ++dy) {
          for (std::size_t dx = 0; dx < pw; ++dx) d[(y * ph + dy) * in_w + x * pw + dx] = v;
        }
      }
    }
  }
  return din;
}

inline std::vector<double> global_avgpool_forward(const Activation& in) {
  std::vector<double> out(in.channels);
  for (std::size_t c = 0; c < in.channels; ++c) {
    const double* p = in.channel(c);
    out[c] = std::accumulate(p, p + in.plane(), 0.0) / static_cast<double>(in.plane());
  }
  return out;
}

inline Activation global_avgpool_backward(const std::vector<double>& dout, std::size_t h,
                                          std::size_t w) {
  Activation din(dout.size(), h, w);
  const double scale = 1.0 / static_cast<double>(h * w);
  for (std::size_t c = 0; c < dout.size(); ++c) {
    std::fill(din.channel(c), din.channel(c) + din.plane(), dout[c] * scale);
  }
  return din;
}

/// y = W x + b with W [out x in].
inline std::vector<double> linear_forward(const std::vector<double>& x, const Tensor& w,
                                          const Tensor& b) {
  const std::size_t out = w.shape[0], in = w.shape[1];
  std::vector<double> y(b.data);
  for (std::size_t o = 0; o < out; ++o) {
    const double* row = w.data.data() + o * in;
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] += acc;
  }
  return y;
}

inline std::vector<double> linear_backward(const std::vector<double>& x, const Tensor& w,
                                           const std::vector<double>& dy, Tensor* dw, Tensor* db,
                                           bool want_input) {
  const std::size_t out = w.shape[0], in = w.shape[1];
  std::vector<double> dx;
  if (want_input) dx.assign(in, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    if (db) db->data[o] += g;
    if (g == 0.0) continue;
    if (dw) {
      double* drow = dw->data.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) drow[i] += g * x[i];
    }
    if (want_input) {
      const double* row = w.data.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) dx[i] += g * row[i];
    }
  }
  return dx;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - m);
  for (double& v : p) v /= z;
  return p;
}

inline double cross_entropy(const std::vector<double>& probs, std::size_t target) {
  return -std::log(std::max(probs[target], 1e-300));
}

/// d(cross_entropy(softmax(logits)))/d logits.
inline std::vector<double> softmax_ce_grad(const std::vector<double>& probs, std::size_t target) {
  std::vector<double> g(probs);
  g[target] -= 1.0;
  return g;
}

}  // namespace layers
}  // namespace ovbm

#endif  // OVBM_LAYERS_HPP
