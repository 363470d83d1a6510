// SPDX-License-Identifier: Apache-2.0
#include "maskfill/ops.hpp"

#include <cstring>

#include <Eigen/Core>

namespace maskfill {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T> Tape<T> &tape_of(Var<T> a) {
  expects(a.valid(), "op on an unrecorded value");
  return *a.tape;
}

template <typename T> Tape<T> &tape_of(Var<T> a, Var<T> b) {
  expects(a.valid() && b.valid() && a.tape == b.tape, "op inputs live on different tapes");
  return *a.tape;
}

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kh, kw, stride, pad;
  std::size_t out_h, out_w;

  std::size_t patch() const { return in_channels * kh * kw; }
  std::size_t pixels() const { return out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Unfolds one image [Cin,H,W] into columns [Cin*kh*kw, out_h*out_w].
template <typename T> void im2col(const T *image, const ConvGeometry &g, T *cols) {
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const T *plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        T *row = cols + ((c * g.kh + ki) * g.kw + kj) * pixels;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          T *dst = row + oh * g.out_w;
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, T{0});
            continue;
          }
          const T *src = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            dst[ow] = (iw < 0 || iw >= static_cast<long>(g.width))
                          ? T{0}
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back into an image, accumulating.
template <typename T> void col2im(const T *cols, const ConvGeometry &g, T *image) {
  const std::size_t pixels = g.pixels();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    T *plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const T *row = cols + ((c * g.kh + ki) * g.kw + kj) * pixels;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
          if (ih < 0 || ih >= static_cast<long>(g.height))
            continue;
          const T *src = row + oh * g.out_w;
          T *dst = plane + static_cast<std::size_t>(ih) * g.width;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
            if (iw >= 0 && iw < static_cast<long>(g.width))
              dst[static_cast<std::size_t>(iw)] += src[ow];
          }
        }
      }
    }
  }
}

std::size_t reflect_index(long i, std::size_t n) {
  const long len = static_cast<long>(n);
  if (len == 1)
    return 0;
  const long period = 2 * (len - 1);
  i %= period;
  if (i < 0)
    i += period;
  return static_cast<std::size_t>(i < len ? i : period - i);
}

} // namespace

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, std::size_t stride, std::size_t pad) {
  Tape<T> &tape = tape_of(input, weight);
  expects(bias.valid() && bias.tape == &tape, "conv2d: bias lives on a different tape");
  const Tensor<T> &x = input.value();
  const Tensor<T> &w = weight.value();
  const Tensor<T> &b = bias.value();
  expects(x.rank() == 4, "conv2d: input must be [N,Cin,H,W], got " + shape_string(x.shape()));
  expects(w.rank() == 4, "conv2d: weight must be [Cout,Cin,kh,kw], got " + shape_string(w.shape()));
  expects(x.dim(1) == w.dim(1), "conv2d: input has " + std::to_string(x.dim(1)) +
                                    " channels but weight expects " + std::to_string(w.dim(1)));
  expects(b.rank() == 1 && b.dim(0) == w.dim(0), "conv2d: bias must be [Cout]");
  expects(stride >= 1, "conv2d: stride must be positive");
  expects(w.dim(2) % 2 == 1 && w.dim(3) % 2 == 1, "conv2d: kernel extents must be odd");
  expects(x.dim(2) + 2 * pad >= w.dim(2) && x.dim(3) + 2 * pad >= w.dim(3),
          "conv2d: padded input smaller than kernel");

  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), w.dim(3),
                 stride,   pad,      0,        0};
  g.out_h = (g.height + 2 * pad - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * pad - g.kw) / stride + 1;

  const std::size_t K = g.patch();
  const std::size_t P = g.pixels();
  Tensor<T> out({g.batch, g.out_channels, g.out_h, g.out_w});
  Eigen::Map<const RowMatrix<T>> W(w.data(), g.out_channels, K);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> B(b.data(), g.out_channels);
  std::vector<T> cols(g.pointwise() ? 0 : K * P);
  const std::size_t in_stride = g.in_channels * g.height * g.width;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T *colptr = x.data() + n * in_stride;
    if (!g.pointwise()) {
      im2col(colptr, g, cols.data());
      colptr = cols.data();
    }
    Eigen::Map<const RowMatrix<T>> C(colptr, K, P);
    Eigen::Map<RowMatrix<T>> O(out.data() + n * g.out_channels * P, g.out_channels, P);
    O.noalias() = W * C;
    O.colwise() += B;
  }

  const std::size_t xid = input.id, wid = weight.id;
  Tape<T> *tp = &tape;
  return tape.record(std::move(out), {input.id, weight.id, bias.id},
                     [tp, xid, wid, g](const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
                       const Tensor<T> &xv = tp->value(Var<T>{tp, xid});
                       const Tensor<T> &wv = tp->value(Var<T>{tp, wid});
                       const std::size_t K = g.patch();
                       const std::size_t P = g.pixels();
                       const std::size_t in_stride = g.in_channels * g.height * g.width;
                       Eigen::Map<const RowMatrix<T>> W(wv.data(), g.out_channels, K);
                       std::vector<T> cols(g.pointwise() ? 0 : K * P);
                       std::vector<T> dcols(gin[0] && !g.pointwise() ? K * P : 0);
                       for (std::size_t n = 0; n < g.batch; ++n) {
                         Eigen::Map<const RowMatrix<T>> dO(gout.data() + n * g.out_channels * P,
                                                           g.out_channels, P);
                         if (gin[1]) {
                           const T *colptr = xv.data() + n * in_stride;
                           if (!g.pointwise()) {
                             im2col(colptr, g, cols.data());
                             colptr = cols.data();
                           }
                           Eigen::Map<const RowMatrix<T>> C(colptr, K, P);
                           Eigen::Map<RowMatrix<T>> dW(gin[1]->data(), g.out_channels, K);
                           dW.noalias() += dO * C.transpose();
                         }
                         if (gin[2]) {
                           // fixed summation order (Eigen reductions vary with buffer alignment)
                           const T *go = gout.data() + n * g.out_channels * P;
                           for (std::size_t o = 0; o < g.out_channels; ++o) {
                             T acc{0};
                             for (std::size_t p = 0; p < P; ++p)
                               acc += go[o * P + p];
                             (*gin[2])[o] += acc;
                           }
                         }
                         if (gin[0]) {
                           T *dx = gin[0]->data() + n * in_stride;
                           if (g.pointwise()) {
                             Eigen::Map<RowMatrix<T>> dX(dx, K, P);
                             dX.noalias() += W.transpose() * dO;
                           } else {
                             Eigen::Map<RowMatrix<T>> dC(dcols.data(), K, P);
                             dC.noalias() = W.transpose() * dO;
                             col2im(dcols.data(), g, dx);
                           }
                         }
                       }
                     });
}

template <typename T> Var<T> leaky_relu(Var<T> x, T slope) {
  Tape<T> &tape = tape_of(x);
  expects(slope >= T{0} && slope < T{1}, "leaky_relu: slope must lie in [0,1)");
  const Tensor<T> &in = x.value();
  Tensor<T> out(in.shape());
  for (std::size_t i = 0; i < in.numel(); ++i)
    out[i] = in[i] >= T{0} ? in[i] : slope * in[i];
  Tape<T> *tp = &tape;
  const std::size_t xid = x.id;
  return tape.record(std::move(out), {x.id},
                     [tp, xid, slope](const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
                       const Tensor<T> &in = tp->value(Var<T>{tp, xid});
                       Tensor<T> &gx = *gin[0];
                       for (std::size_t i = 0; i < in.numel(); ++i)
                         gx[i] += in[i] >= T{0} ? gout[i] : slope * gout[i];
                     });
}

template <typename T> Var<T> upsample_nearest(Var<T> x, std::size_t factor) {
  Tape<T> &tape = tape_of(x);
  expects(factor >= 1, "upsample_nearest: factor must be positive");
  const Tensor<T> &in = x.value();
  expect_image_shape(in, "upsample_nearest");
  const std::size_t planes = in.dim(0) * in.dim(1), h = in.dim(2), w = in.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor<T> out({in.dim(0), in.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p) {
    const T *src = in.data() + p * h * w;
    T *dst = out.data() + p * oh * ow;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        dst[i * ow + j] = src[(i / factor) * w + j / factor];
  }
  return tape.record(std::move(out), {x.id},
                     [planes, h, w, factor](const Tensor<T> &gout,
                                            std::span<Tensor<T> *const> gin) {
                       const std::size_t oh = h * factor, ow = w * factor;
                       for (std::size_t p = 0; p < planes; ++p) {
                         const T *src = gout.data() + p * oh * ow;
                         T *dst = gin[0]->data() + p * h * w;
                         for (std::size_t i = 0; i < oh; ++i)
                           for (std::size_t j = 0; j < ow; ++j)
                             dst[(i / factor) * w + j / factor] += src[i * ow + j];
                       }
                     });
}

template <typename T> Var<T> concat_channels(Var<T> a, Var<T> b) {
  Tape<T> &tape = tape_of(a, b);
  const Tensor<T> &va = a.value();
  const Tensor<T> &vb = b.value();
  expect_image_shape(va, "concat_channels");
  expect_image_shape(vb, "concat_channels");
  expects(va.dim(0) == vb.dim(0) && va.dim(2) == vb.dim(2) && va.dim(3) == vb.dim(3),
          "concat_channels: " + shape_string(va.shape()) + " vs " + shape_string(vb.shape()));
  const std::size_t n = va.dim(0), ca = va.dim(1), cb = vb.dim(1);
  const std::size_t plane = va.dim(2) * va.dim(3);
  Tensor<T> out({n, ca + cb, va.dim(2), va.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(va.data() + i * ca * plane, ca * plane, out.data() + i * (ca + cb) * plane);
    std::copy_n(vb.data() + i * cb * plane, cb * plane,
                out.data() + (i * (ca + cb) + ca) * plane);
  }
  return tape.record(std::move(out), {a.id, b.id},
                     [n, ca, cb, plane](const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
                       for (std::size_t i = 0; i < n; ++i) {
                         const T *src = gout.data() + i * (ca + cb) * plane;
                         if (gin[0]) {
                           T *dst = gin[0]->data() + i * ca * plane;
                           for (std::size_t k = 0; k < ca * plane; ++k)
                             dst[k] += src[k];
                         }
                         if (gin[1]) {
                           T *dst = gin[1]->data() + i * cb * plane;
                           for (std::size_t k = 0; k < cb * plane; ++k)
                             dst[k] += src[ca * plane + k];
                         }
                       }
                     });
}

template <typename T>
Var<T> reflect_pad(Var<T> x, std::size_t top, std::size_t bottom, std::size_t left,
                   std::size_t right) {
  Tape<T> &tape = tape_of(x);
  const Tensor<T> &in = x.value();
  expect_image_shape(in, "reflect_pad");
  const std::size_t h = in.dim(2), w = in.dim(3), planes = in.dim(0) * in.dim(1);
  expects((h > 1 || top + bottom == 0) && (w > 1 || left + right == 0),
          "reflect_pad: cannot mirror a single-pixel extent");
  const std::size_t oh = h + top + bottom, ow = w + left + right;
  std::vector<std::size_t> rows(oh), cols(ow);
  for (std::size_t i = 0; i < oh; ++i)
    rows[i] = reflect_index(static_cast<long>(i) - static_cast<long>(top), h);
  for (std::size_t j = 0; j < ow; ++j)
    cols[j] = reflect_index(static_cast<long>(j) - static_cast<long>(left), w);
  Tensor<T> out({in.dim(0), in.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j)
        out[(p * oh + i) * ow + j] = in[(p * h + rows[i]) * w + cols[j]];
  return tape.record(std::move(out), {x.id},
                     [planes, h, w, rows, cols](const Tensor<T> &gout,
                                                std::span<Tensor<T> *const> gin) {
                       const std::size_t oh = rows.size(), ow = cols.size();
                       for (std::size_t p = 0; p < planes; ++p)
                         for (std::size_t i = 0; i < oh; ++i)
                           for (std::size_t j = 0; j < ow; ++j)
                             (*gin[0])[(p * h + rows[i]) * w + cols[j]] +=
                                 gout[(p * oh + i) * ow + j];
                     });
}

template <typename T>
Var<T> crop(Var<T> x, std::size_t top, std::size_t left, std::size_t height, std::size_t width) {
  Tape<T> &tape = tape_of(x);
  const Tensor<T> &in = x.value();
  expect_image_shape(in, "crop");
  const std::size_t h = in.dim(2), w = in.dim(3), planes = in.dim(0) * in.dim(1);
  expects(top + height <= h && left + width <= w, "crop: window exceeds the input");
  Tensor<T> out({in.dim(0), in.dim(1), height, width});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < height; ++i)
      std::copy_n(in.data() + (p * h + top + i) * w + left, width,
                  out.data() + (p * height + i) * width);
  return tape.record(std::move(out), {x.id},
                     [planes, h, w, top, left, height, width](const Tensor<T> &gout,
                                                              std::span<Tensor<T> *const> gin) {
                       for (std::size_t p = 0; p < planes; ++p)
                         for (std::size_t i = 0; i < height; ++i)
                           for (std::size_t j = 0; j < width; ++j)
                             (*gin[0])[(p * h + top + i) * w + left + j] +=
                                 gout[(p * height + i) * width + j];
                     });
}

template <typename T> Var<T> add(Var<T> a, Var<T> b) {
  Tape<T> &tape = tape_of(a, b);
  expects(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = a.value()[i] + b.value()[i];
  return tape.record(std::move(out), {a.id, b.id},
                     [](const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
                       for (auto *g : gin)
                         if (g)
                           for (std::size_t i = 0; i < gout.numel(); ++i)
                             (*g)[i] += gout[i];
                     });
}

template <typename T> Var<T> mul(Var<T> a, Var<T> b) {
  Tape<T> &tape = tape_of(a, b);
  expects(a.value().same_shape(b.value()), "mul: shape mismatch");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = a.value()[i] * b.value()[i];
  Tape<T> *tp = &tape;
  const std::size_t aid = a.id, bid = b.id;
  return tape.record(std::move(out), {a.id, b.id},
                     [tp, aid, bid](const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
                       const Tensor<T> &va = tp->value(Var<T>{tp, aid});
                       const Tensor<T> &vb = tp->value(Var<T>{tp, bid});
                       for (std::size_t i = 0; i < gout.numel(); ++i) {
                         if (gin[0])
                           (*gin[0])[i] += gout[i] * vb[i];
                         if (gin[1])
                           (*gin[1])[i] += gout[i] * va[i];
                       }
                     });
}

template <typename T> Var<T> scale(Var<T> x, T factor) {
  Tape<T> &tape = tape_of(x);
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < out.numel(); ++i)
    out[i] = factor * x.value()[i];
  return tape.record(std::move(out), {x.id},
                     [factor](const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
                       for (std::size_t i = 0; i < gout.numel(); ++i)
                         (*gin[0])[i] += factor * gout[i];
                     });
}

template <typename T> Var<T> sum(Var<T> x) {
  Tape<T> &tape = tape_of(x);
  double acc = 0.0;
  for (T v : x.value().values())
    acc += static_cast<double>(v);
  Tensor<T> out({1}, static_cast<T>(acc));
  return tape.record(std::move(out), {x.id},
                     [](const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
                       for (auto &g : gin[0]->values())
                         g += gout[0];
                     });
}

template <typename T> Var<T> mean(Var<T> x) {
  return scale(sum(x), static_cast<T>(1.0 / static_cast<double>(x.value().numel())));
}

template <typename T> Var<T> mse(Var<T> pred, const Tensor<T> &target) {
  Tape<T> &tape = tape_of(pred);
  const Tensor<T> &p = pred.value();
  expects(p.same_shape(target), "mse: prediction " + shape_string(p.shape()) + " vs target " +
                                    shape_string(target.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  const double count = static_cast<double>(p.numel());
  Tensor<T> out({1}, static_cast<T>(acc / count));
  Tape<T> *tp = &tape;
  const std::size_t pid = pred.id;
  return tape.record(
      std::move(out), {pred.id},
      [tp, pid, target, count](const Tensor<T> &gout, std::span<Tensor<T> *const> gin) {
        const Tensor<T> &p = tp->value(Var<T>{tp, pid});
        const T k = static_cast<T>(2.0 / count) * gout[0];
        for (std::size_t i = 0; i < p.numel(); ++i)
          (*gin[0])[i] += k * (p[i] - target[i]);
      });
}

#define MASKFILL_INSTANTIATE_OPS(T)                                                             \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, std::size_t, std::size_t);                     \
  template Var<T> leaky_relu(Var<T>, T);                                                        \
  template Var<T> upsample_nearest(Var<T>, std::size_t);                                        \
  template Var<T> concat_channels(Var<T>, Var<T>);                                              \
  template Var<T> reflect_pad(Var<T>, std::size_t, std::size_t, std::size_t, std::size_t);      \
  template Var<T> crop(Var<T>, std::size_t, std::size_t, std::size_t, std::size_t);             \
  template Var<T> add(Var<T>, Var<T>);                                                          \
  template Var<T> mul(Var<T>, Var<T>);                                                          \
  template Var<T> scale(Var<T>, T);                                                             \
  template Var<T> sum(Var<T>);                                                                  \
  template Var<T> mean(Var<T>);                                                                 \
  template Var<T> mse(Var<T>, const Tensor<T> &);

MASKFILL_INSTANTIATE_OPS(float)
MASKFILL_INSTANTIATE_OPS(double)

} // namespace maskfill
