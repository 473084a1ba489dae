#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "sgce/error.hpp"
#include "sgce/tensor.hpp"

namespace sgce {

namespace {

using detail::Node;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_string(a.shape()) +
                                              " vs " + shape_string(b.shape()));
  }
}

void require_ndim(const Tensor& t, std::size_t ndim, const char* op) {
  if (t.ndim() != ndim) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(op) + ": expected " + std::to_string(ndim) + "-d tensor, got " +
                    shape_string(t.shape()));
  }
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

// Eigen's vectorised kernels choose their summation order from buffer
// alignment. Staging operands in grow-only aligned buffers keeps results
// independent of where tensor storage happens to live.
using AlignedBuffer = std::vector<double, Eigen::aligned_allocator<double>>;
using AlignedMap = Eigen::Map<RowMatrix, Eigen::AlignedMax>;

double* stage(AlignedBuffer& buf, std::size_t n, const double* src = nullptr) {
  if (buf.size() < n) buf.resize(n);
  if (src != nullptr) std::copy_n(src, n, buf.data());
  return buf.data();
}

// dst = op(A) * op(B), or += when `accumulate`; A is ar x ac, B is br x bc.
void gemm(const double* a, long ar, long ac, bool transpose_a, const double* b, long br, long bc,
          bool transpose_b, double* dst, bool accumulate) {
  thread_local AlignedBuffer abuf, bbuf, cbuf;
  const auto na = static_cast<std::size_t>(ar * ac), nb = static_cast<std::size_t>(br * bc);
  AlignedMap am(stage(abuf, na, a), ar, ac);
  AlignedMap bm(stage(bbuf, nb, b), br, bc);
  const long rows = transpose_a ? ac : ar, cols = transpose_b ? br : bc;
  AlignedMap cm(stage(cbuf, static_cast<std::size_t>(rows * cols)), rows, cols);
  if (transpose_a && transpose_b) cm.noalias() = am.transpose() * bm.transpose();
  else if (transpose_a) cm.noalias() = am.transpose() * bm;
  else if (transpose_b) cm.noalias() = am * bm.transpose();
  else cm.noalias() = am * bm;
  MatMap out(dst, rows, cols);
  if (accumulate) out += cm;
  else out = cm;
}

template <typename Fn>
Tensor unary(const Tensor& x, Fn&& forward, std::function<void(Node&)> backward) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(in[i]);
  return Tensor::make_result(x.shape(), std::move(out), {x}, std::move(backward));
}

// Geometry of one convolution: image [C,H,W] <-> columns [C*k*k, Ho*Wo].
struct ConvGeometry {
  std::size_t channels, height, width, kernel, out_h, out_w;
  int stride, pad;

  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// Output columns [lo, hi) that read inside the image for kernel column kj.
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kj) {
  const long offset = static_cast<long>(kj) - g.pad;
  const long s = g.stride;
  const long out_w = static_cast<long>(g.out_w);
  const long last = static_cast<long>(g.width) - 1 - offset;  // need ox * s <= last
  const long lo = std::min(offset >= 0 ? 0 : (-offset + s - 1) / s, out_w);
  const long hi = last < 0 ? lo : std::clamp(last / s + 1, lo, out_w);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void im2col(const double* image, const ConvGeometry& g, double* cols) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        const auto [lo, hi] = valid_columns(g, kj);
        const long offset = static_cast<long>(kj) - g.pad;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          double* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long>(g.height)) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          std::fill(dst, dst + lo, 0.0);
          if (lo < hi) {
            const double* first = src + (static_cast<long>(lo) * g.stride + offset);
            if (g.stride == 1) {
              std::copy(first, first + (hi - lo), dst + lo);
            } else {
              for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = first[(ox - lo) * g.stride];
            }
          }
          std::fill(dst + hi, dst + g.out_w, 0.0);
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* image) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        const auto [lo, hi] = valid_columns(g, kj);
        const long offset = static_cast<long>(kj) - g.pad;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ki);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const double* src = row + oy * g.out_w;
          if (lo >= hi) continue;
          double* first = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width +
                          (static_cast<long>(lo) * g.stride + offset);
          for (std::size_t ox = lo; ox < hi; ++ox) first[(ox - lo) * g.stride] += src[ox];
        }
      }
    }
  }
}

void check_conv_args(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                     int pad, const char* op) {
  require_ndim(input, 4, op);
  require_ndim(weight, 4, op);
  require_ndim(bias, 1, op);
  if (weight.dim(2) != weight.dim(3) || weight.dim(2) < 1) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": kernel must be square and non-empty");
  }
  if (stride < 1 || pad < 0) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": stride >= 1 and pad >= 0 required");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      Node& in = parent(self, p);
      if (!in.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& lhs = parent(self, 0);
    Node& rhs = parent(self, 1);
    if (lhs.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) lhs.grad[i] += self.grad[i];
    if (rhs.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) rhs.grad[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& lhs = parent(self, 0);
    Node& rhs = parent(self, 1);
    if (lhs.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) lhs.grad[i] += self.grad[i] * rhs.value[i];
    if (rhs.requires_grad)
      for (std::size_t i = 0; i < self.grad.size(); ++i) rhs.grad[i] += self.grad[i] * lhs.value[i];
  });
}

Tensor affine(const Tensor& a, double scale, double shift) {
  return unary(
      a, [=](double v) { return scale * v + shift; },
      [=](Node& self) {
        Node& in = parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += scale * self.grad[i];
      });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw Error(ErrorKind::ShapeMismatch, "mean of empty tensor");
  double sum = 0.0;
  for (double v : a.data()) sum += v;
  const double count = static_cast<double>(a.numel());
  return Tensor::make_result(Shape{1}, {sum / count}, {a}, [count](Node& self) {
    Node& in = parent(self, 0);
    const double g = self.grad[0] / count;
    for (double& v : in.grad) v += g;
  });
}

Tensor abs_mean(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "abs_mean");
  if (a.numel() == 0) throw Error(ErrorKind::ShapeMismatch, "abs_mean of empty tensor");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) sum += std::abs(a.data()[i] - b.data()[i]);
  const double count = static_cast<double>(a.numel());
  return Tensor::make_result(Shape{1}, {sum / count}, {a, b}, [count](Node& self) {
    Node& lhs = parent(self, 0);
    Node& rhs = parent(self, 1);
    const double g = self.grad[0] / count;
    for (std::size_t i = 0; i < lhs.value.size(); ++i) {
      const double d = lhs.value[i] - rhs.value[i];
      const double s = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
      if (lhs.requires_grad) lhs.grad[i] += s;
      if (rhs.requires_grad) rhs.grad[i] -= s;
    }
  });
}

Tensor log_clamped(const Tensor& a, double eps) {
  return unary(
      a, [eps](double v) { return std::log(std::clamp(v, eps, 1.0 - eps)); },
      [eps](Node& self) {
        Node& in = parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double v = in.value[i];
          if (v >= eps && v <= 1.0 - eps) in.grad[i] += self.grad[i] / v;
        }
      });
}

Tensor relu(const Tensor& x) {
  detail::note_kink_inputs(x.data());
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](Node& self) {
        Node& in = parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          if (in.value[i] > 0.0) in.grad[i] += self.grad[i];
      });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  detail::note_kink_inputs(x.data());
  return unary(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](Node& self) {
        Node& in = parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          in.grad[i] += in.value[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](Node& self) {
        Node& in = parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double y = self.value[i];
          in.grad[i] += self.grad[i] * (1.0 - y * y);
        }
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        // split by sign so exp never overflows
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](Node& self) {
        Node& in = parent(self, 0);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double y = self.value[i];
          in.grad[i] += self.grad[i] * y * (1.0 - y);
        }
      });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw Error(ErrorKind::ShapeMismatch,
                "reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  return Tensor::make_result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()),
                             {x}, [](Node& self) {
                               Node& in = parent(self, 0);
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 in.grad[i] += self.grad[i];
                             });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_ndim(a, 4, "concat_channels");
  require_ndim(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw Error(ErrorKind::ShapeMismatch,
                "concat_channels: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  std::vector<double> out(n * (ca + cb) * plane);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * plane, ca * plane, out.data() + i * (ca + cb) * plane);
    std::copy_n(b.data().data() + i * cb * plane, cb * plane,
                out.data() + (i * (ca + cb) + ca) * plane);
  }
  Shape shape{n, ca + cb, a.dim(2), a.dim(3)};
  return Tensor::make_result(std::move(shape), std::move(out), {a, b}, [=](Node& self) {
    Node& lhs = parent(self, 0);
    Node& rhs = parent(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = self.grad.data() + i * (ca + cb) * plane;
      if (lhs.requires_grad) {
        double* dst = lhs.grad.data() + i * ca * plane;
        for (std::size_t j = 0; j < ca * plane; ++j) dst[j] += g[j];
      }
      if (rhs.requires_grad) {
        double* dst = rhs.grad.data() + i * cb * plane;
        for (std::size_t j = 0; j < cb * plane; ++j) dst[j] += g[ca * plane + j];
      }
    }
  });
}

Tensor channel_mix(const Tensor& x, std::span<const double> weights) {
  require_ndim(x, 4, "channel_mix");
  if (weights.size() != x.dim(1)) {
    throw Error(ErrorKind::ShapeMismatch, "channel_mix: weight count differs from channel count");
  }
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<double> out(n * plane, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t j = 0; j < plane; ++j)
        out[i * plane + j] += w[k] * x.data()[(i * c + k) * plane + j];
  Shape shape{n, 1, x.dim(2), x.dim(3)};
  return Tensor::make_result(std::move(shape), std::move(out), {x}, [=](Node& self) {
    Node& in = parent(self, 0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k)
        for (std::size_t j = 0; j < plane; ++j)
          in.grad[(i * c + k) * plane + j] += w[k] * self.grad[i * plane + j];
  });
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad) {
  check_conv_args(input, weight, bias, stride, pad, "conv2d");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c || bias.dim(0) != f) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d: input " + shape_string(input.shape()) +
                                              ", weight " + shape_string(weight.shape()) +
                                              ", bias " + shape_string(bias.shape()));
  }
  if (h + 2 * static_cast<std::size_t>(pad) < k || w + 2 * static_cast<std::size_t>(pad) < k) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d: kernel larger than padded input");
  }
  const ConvGeometry g{c, h, w, k, (h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1,
                       stride, pad};
  const std::size_t out_plane = g.col_cols();

  std::vector<double> out(n * f * out_plane);
  std::vector<double> cols(g.col_rows() * out_plane);
  const long lf = static_cast<long>(f), lr = static_cast<long>(g.col_rows()),
             lp = static_cast<long>(out_plane);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(input.data().data() + i * c * h * w, g, cols.data());
    double* o = out.data() + i * f * out_plane;
    gemm(weight.data().data(), lf, lr, false, cols.data(), lr, lp, false, o, false);
    for (std::size_t j = 0; j < f; ++j)
      for (std::size_t p = 0; p < out_plane; ++p) o[j * out_plane + p] += bias.data()[j];
  }

  Shape shape{n, f, g.out_h, g.out_w};
  return Tensor::make_result(std::move(shape), std::move(out), {input, weight, bias},
                             [=](Node& self) {
    Node& in = parent(self, 0);
    Node& wt = parent(self, 1);
    Node& b = parent(self, 2);
    std::vector<double> cols_buf(g.col_rows() * out_plane);
    for (std::size_t i = 0; i < n; ++i) {
      const double* dout = self.grad.data() + i * f * out_plane;
      if (b.requires_grad)
        for (std::size_t j = 0; j < f; ++j)
          for (std::size_t p = 0; p < out_plane; ++p) b.grad[j] += dout[j * out_plane + p];
      if (wt.requires_grad) {
        im2col(in.value.data() + i * c * h * w, g, cols_buf.data());
        gemm(dout, lf, lp, false, cols_buf.data(), lr, lp, true, wt.grad.data(), true);
      }
      if (in.requires_grad) {
        gemm(wt.value.data(), lf, lr, true, dout, lf, lp, false, cols_buf.data(), false);
        col2im_add(cols_buf.data(), g, in.grad.data() + i * c * h * w);
      }
    }
  });
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int pad) {
  check_conv_args(input, weight, bias, stride, pad, "conv2d_transpose");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t f = weight.dim(1), k = weight.dim(2);
  if (weight.dim(0) != c || bias.dim(0) != f) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d_transpose: input " +
                                              shape_string(input.shape()) + ", weight " +
                                              shape_string(weight.shape()) + ", bias " +
                                              shape_string(bias.shape()));
  }
  const long oh = (static_cast<long>(h) - 1) * stride - 2L * pad + static_cast<long>(k);
  const long ow = (static_cast<long>(w) - 1) * stride - 2L * pad + static_cast<long>(k);
  if (oh < 1 || ow < 1) throw Error(ErrorKind::ShapeMismatch, "conv2d_transpose: empty output");
  // The output image plays the role of a conv2d input whose conv output is `input`.
  const ConvGeometry g{f, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), k, h, w,
                       stride, pad};
  const std::size_t in_plane = h * w;
  const std::size_t out_plane = g.height * g.width;

  std::vector<double> out(n * f * out_plane, 0.0);
  std::vector<double> cols(g.col_rows() * in_plane);
  const long lc = static_cast<long>(c), lr = static_cast<long>(g.col_rows()),
             lp = static_cast<long>(in_plane);
  for (std::size_t i = 0; i < n; ++i) {
    gemm(weight.data().data(), lc, lr, true, input.data().data() + i * c * in_plane, lc, lp, false,
         cols.data(), false);
    double* o = out.data() + i * f * out_plane;
    col2im_add(cols.data(), g, o);
    for (std::size_t j = 0; j < f; ++j)
      for (std::size_t p = 0; p < out_plane; ++p) o[j * out_plane + p] += bias.data()[j];
  }

  Shape shape{n, f, g.height, g.width};
  return Tensor::make_result(std::move(shape), std::move(out), {input, weight, bias},
                             [=](Node& self) {
    Node& in = parent(self, 0);
    Node& wt = parent(self, 1);
    Node& b = parent(self, 2);
    std::vector<double> cols_buf(g.col_rows() * in_plane);
    for (std::size_t i = 0; i < n; ++i) {
      const double* dout = self.grad.data() + i * f * out_plane;
      if (b.requires_grad)
        for (std::size_t j = 0; j < f; ++j)
          for (std::size_t p = 0; p < out_plane; ++p) b.grad[j] += dout[j * out_plane + p];
      if (!wt.requires_grad && !in.requires_grad) continue;
      im2col(dout, g, cols_buf.data());
      if (wt.requires_grad)
        gemm(in.value.data() + i * c * in_plane, lc, lp, false, cols_buf.data(), lr, lp, true,
             wt.grad.data(), true);
      if (in.requires_grad)
        gemm(wt.value.data(), lc, lr, false, cols_buf.data(), lr, lp, false,
             in.grad.data() + i * c * in_plane, true);
    }
  });
}

BatchNorm::BatchNorm(std::size_t channels)
    : gamma(Shape{channels}, 1.0, true),
      beta(Shape{channels}, 0.0, true),
      running_mean(channels, 0.0),
      running_var(channels, 1.0) {}

Tensor batch_norm(const Tensor& input, BatchNorm& bn, NormMode mode) {
  require_ndim(input, 4, "batch_norm");
  const std::size_t n = input.dim(0), c = input.dim(1), plane = input.dim(2) * input.dim(3);
  if (bn.channels() != c || bn.gamma.numel() != c || bn.beta.numel() != c) {
    throw Error(ErrorKind::ShapeMismatch, "batch_norm: channel count mismatch");
  }
  const std::size_t count = n * plane;
  auto x = input.data();
  auto gamma = bn.gamma.data();
  auto beta = bn.beta.data();

  std::vector<double> mean(c), invstd(c);
  if (mode == NormMode::Train) {
    if (count < 2) {
      throw Error(ErrorKind::DegenerateBatch, "batch_norm: train mode needs N*H*W >= 2");
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p) sum += x[(i * c + ch) * plane + p];
      const double mu = sum / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < plane; ++p) {
          const double d = x[(i * c + ch) * plane + p] - mu;
          sq += d * d;
        }
      const double var = sq / static_cast<double>(count);
      mean[ch] = mu;
      invstd[ch] = 1.0 / std::sqrt(var + bn.eps);
      const double unbiased = sq / static_cast<double>(count - 1);
      bn.running_mean[ch] = bn.momentum * bn.running_mean[ch] + (1.0 - bn.momentum) * mu;
      bn.running_var[ch] = bn.momentum * bn.running_var[ch] + (1.0 - bn.momentum) * unbiased;
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = bn.running_mean[ch];
      invstd[ch] = 1.0 / std::sqrt(bn.running_var[ch] + bn.eps);
    }
  }

  std::vector<double> xhat(input.numel());
  std::vector<double> out(input.numel());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t p = 0; p < plane; ++p) {
        const std::size_t idx = (i * c + ch) * plane + p;
        xhat[idx] = (x[idx] - mean[ch]) * invstd[ch];
        out[idx] = gamma[ch] * xhat[idx] + beta[ch];
      }

  const bool batch_stats = mode == NormMode::Train;
  return Tensor::make_result(
      input.shape(), std::move(out), {input, bn.gamma, bn.beta},
      [=, xhat = std::move(xhat), invstd = std::move(invstd)](Node& self) {
        Node& in = parent(self, 0);
        Node& g = parent(self, 1);
        Node& b = parent(self, 2);
        const auto& dy = self.grad;
        for (std::size_t ch = 0; ch < c; ++ch) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < plane; ++p) {
              const std::size_t idx = (i * c + ch) * plane + p;
              sum_dy += dy[idx];
              sum_dy_xhat += dy[idx] * xhat[idx];
            }
          if (g.requires_grad) g.grad[ch] += sum_dy_xhat;
          if (b.requires_grad) b.grad[ch] += sum_dy;
          if (!in.requires_grad) continue;
          const double gm = g.value[ch];
          const double m = static_cast<double>(count);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < plane; ++p) {
              const std::size_t idx = (i * c + ch) * plane + p;
              if (batch_stats) {
                in.grad[idx] += gm * invstd[ch] / m *
                                (m * dy[idx] - sum_dy - xhat[idx] * sum_dy_xhat);
              } else {
                in.grad[idx] += gm * invstd[ch] * dy[idx];
              }
            }
        }
      });
}

}  // namespace sgce
