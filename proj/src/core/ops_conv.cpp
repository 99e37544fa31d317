#include <algorithm>

#include "dfkd/core/ops.hpp"
#include "op_util.hpp"

namespace dfkd::ops {

using namespace detail;

namespace {

struct ConvGeom {
  std::size_t channels, in_h, in_w, kernel, stride, pad, out_h, out_w;
  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
};

// cols[(c*k + ki)*k + kj][oy*out_w + ox] = in[c][oy*s - p + ki][ox*s - p + kj]
void im2col(const ConvGeom& g, const double* in, double* cols) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_h) &&
                                ix < static_cast<std::ptrdiff_t>(g.in_w);
            row[oy * g.out_w + ox] = inside ? in[(c * g.in_h + iy) * g.in_w + ix] : 0.0;
          }
        }
      }
}

// Adjoint of im2col: scatter-add columns back into the image.
void col2im(const ConvGeom& g, const double* cols, double* out) {
  const std::size_t ncols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = cols + ((c * g.kernel + ki) * g.kernel + kj) * ncols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
            out[(c * g.in_h + iy) * g.in_w + ix] += row[oy * g.out_w + ox];
          }
        }
      }
}

void check_bias(const Tensor& bias, std::size_t n, const char* op) {
  if (bias.defined() && bias.shape() != Shape{n})
    throw ShapeError(std::string(op) + ": bias " + shape_str(bias.shape()) + " for " +
                     std::to_string(n) + " channels");
}

void add_channel_bias(const Tensor& bias, std::size_t batch, std::size_t ch, std::size_t plane,
                      std::vector<double>& out) {
  if (!bias.defined()) return;
  const auto bd = bias.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c)
      std::fill_n(out.begin() + (b * ch + c) * plane, plane, bd[c]);
}

void accumulate_channel_bias_grad(Node& n, std::size_t parent, std::size_t batch, std::size_t ch,
                                  std::size_t plane) {
  if (!wants_grad(n, parent)) return;
  auto& gb = parent_grad(n, parent);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < ch; ++c) {
      const double* g = n.grad.data() + (b * ch + c) * plane;
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += g[i];
      gb[c] += s;
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank(x, 4, "conv2d");
  require_rank(w, 4, "conv2d");
  if (stride == 0) throw DomainError("conv2d: stride must be positive");
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), kk = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != kk)
    throw ShapeError("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  if (kk > h + 2 * padding || kk > wd + 2 * padding)
    throw ShapeError("conv2d: kernel " + std::to_string(kk) + " larger than padded input " +
                     shape_str(x.shape()));
  check_bias(bias, cout, "conv2d");
  const ConvGeom g{cin, h, wd, kk, stride, padding, (h + 2 * padding - kk) / stride + 1,
                   (wd + 2 * padding - kk) / stride + 1};
  const std::size_t plane = g.col_cols(), crow = g.col_rows();
  std::vector<double> out(batch * cout * plane, 0.0);
  add_channel_bias(bias, batch, cout, plane, out);
  std::vector<double> cols(crow * plane);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(g, x.data().data() + b * cin * h * wd, cols.data());
    k().gemm(cout, plane, crow, w.data().data(), crow, cols.data(), plane,
             out.data() + b * cout * plane, plane);
  }
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make_result(
      {batch, cout, g.out_h, g.out_w}, std::move(out), "conv2d", std::move(inputs),
      [g, batch, cout](Node& n) {
        const std::size_t plane = g.col_cols(), crow = g.col_rows();
        const std::size_t in_size = g.channels * g.in_h * g.in_w;
        const double* xd = parent_data(n, 0).data();
        const double* wdp = parent_data(n, 1).data();
        const bool gx = wants_grad(n, 0), gw = wants_grad(n, 1);
        std::vector<double> cols(crow * plane);
        const auto wt = gx ? transpose_copy(wdp, cout, crow) : std::vector<double>{};
        for (std::size_t b = 0; b < batch; ++b) {
          const double* gout = n.grad.data() + b * cout * plane;
          if (gw) {
            im2col(g, xd + b * in_size, cols.data());
            const auto colt = transpose_copy(cols.data(), crow, plane);
            k().gemm(cout, crow, plane, gout, plane, colt.data(), crow, parent_grad(n, 1).data(), crow);
          }
          if (gx) {
            std::fill(cols.begin(), cols.end(), 0.0);
            k().gemm(crow, plane, cout, wt.data(), cout, gout, plane, cols.data(), plane);
            col2im(g, cols.data(), parent_grad(n, 0).data() + b * in_size);
          }
        }
        accumulate_channel_bias_grad(n, 2, batch, cout, plane);
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
                        std::size_t padding) {
  require_rank(x, 4, "conv_transpose2d");
  require_rank(w, 4, "conv_transpose2d");
  if (stride == 0) throw DomainError("conv_transpose2d: stride must be positive");
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(1), kk = w.dim(2);
  if (w.dim(0) != cin || w.dim(3) != kk)
    throw ShapeError("conv_transpose2d: weight " + shape_str(w.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  const auto out_side = [&](std::size_t in) {
    return static_cast<std::ptrdiff_t>((in - 1) * stride + kk) - 2 * static_cast<std::ptrdiff_t>(padding);
  };
  if (out_side(h) < 1 || out_side(wd) < 1)
    throw ShapeError("conv_transpose2d: non-positive output size for input " + shape_str(x.shape()));
  check_bias(bias, cout, "conv_transpose2d");
  const std::size_t oh = static_cast<std::size_t>(out_side(h));
  const std::size_t ow = static_cast<std::size_t>(out_side(wd));
  // Geometry of the forward conv that maps the output back onto the input.
  const ConvGeom g{cout, oh, ow, kk, stride, padding, h, wd};
  const std::size_t plane_in = h * wd, crow = g.col_rows(), plane_out = oh * ow;
  std::vector<double> out(batch * cout * plane_out, 0.0);
  add_channel_bias(bias, batch, cout, plane_out, out);
  const auto wt = transpose_copy(w.data().data(), cin, crow);
  std::vector<double> cols(crow * plane_in);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(cols.begin(), cols.end(), 0.0);
    k().gemm(crow, plane_in, cin, wt.data(), cin, x.data().data() + b * cin * plane_in, plane_in,
             cols.data(), plane_in);
    col2im(g, cols.data(), out.data() + b * cout * plane_out);
  }
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor::make_result(
      {batch, cout, oh, ow}, std::move(out), "conv_transpose2d", std::move(inputs),
      [g, batch, cin](Node& n) {
        const std::size_t plane_in = g.out_h * g.out_w, crow = g.col_rows();
        const std::size_t plane_out = g.in_h * g.in_w;
        const double* xd = parent_data(n, 0).data();
        const double* wdp = parent_data(n, 1).data();
        const bool gx = wants_grad(n, 0), gw = wants_grad(n, 1);
        std::vector<double> cols(crow * plane_in);
        for (std::size_t b = 0; b < batch; ++b) {
          im2col(g, n.grad.data() + b * g.channels * plane_out, cols.data());
          if (gx)
            k().gemm(cin, plane_in, crow, wdp, crow, cols.data(), plane_in,
                     parent_grad(n, 0).data() + b * cin * plane_in, plane_in);
          if (gw) {
            const auto colt = transpose_copy(cols.data(), crow, plane_in);
            k().gemm(cin, crow, plane_in, xd + b * cin * plane_in, plane_in, colt.data(), crow,
                     parent_grad(n, 1).data(), crow);
          }
        }
        accumulate_channel_bias_grad(n, 2, batch, g.channels, plane_out);
      });
}

}  // namespace dfkd::ops
