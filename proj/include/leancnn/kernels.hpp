#pragma once

#include <algorithm>
#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "leancnn/error.hpp"
#include "leancnn/tensor.hpp"

namespace leancnn {

enum class Trans { No, Yes };

/// C[M,N] = op(A) * op(B) (+ C when accumulate). All operands are dense
/// row-major; op(A) is M x K, stored K x M when ta == Trans::Yes.
///
/// Backed by Eigen's packed GEMM. For fixed sizes and a fixed build the
/// blocking, and therefore the summation order, is fixed, so repeated calls
/// give bit-identical results. Eigen's own threading is not enabled.
template <typename T>
void gemm(Trans ta, Trans tb, std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
          bool accumulate = false) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Idx = Eigen::Index;
  Eigen::Map<Mat> c(C, static_cast<Idx>(M), static_cast<Idx>(N));
  if (K == 0) {
    if (!accumulate) c.setZero();
    return;
  }
  const auto m = static_cast<Idx>(M), n = static_cast<Idx>(N), k = static_cast<Idx>(K);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate)
      c.noalias() += lhs * rhs;
    else
      c.noalias() = lhs * rhs;
  };
  Eigen::Map<const Mat> a_n(A, ta == Trans::No ? m : k, ta == Trans::No ? k : m);
  Eigen::Map<const Mat> b_n(B, tb == Trans::No ? k : n, tb == Trans::No ? n : k);
  if (ta == Trans::No && tb == Trans::No)
    run(a_n, b_n);
  else if (ta == Trans::No)
    run(a_n, b_n.transpose());
  else if (tb == Trans::No)
    run(a_n.transpose(), b_n);
  else
    run(a_n.transpose(), b_n.transpose());
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 operands");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner dims differ " + a.shape().to_string() + " x " + b.shape().to_string());
  Tensor<T> out(Shape{a.dim(0), b.dim(1)});
  gemm(Trans::No, Trans::No, a.dim(0), b.dim(1), a.dim(1), a.data(), b.data(), out.data());
  return out;
}

// Geometry of one square-kernel convolution window sweep over a C x H x W image.
struct ConvGeometry {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel = 3;
  std::size_t pad = 1;
  std::size_t stride = 1;

  std::size_t out_height() const { return out_extent(height, "height"); }
  std::size_t out_width() const { return out_extent(width, "width"); }
  std::size_t patch_size() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_height() * out_width(); }
  std::size_t image_size() const { return channels * height * width; }

  void validate() const {
    if (kernel == 0 || stride == 0 || channels == 0 || height == 0 || width == 0)
      throw ShapeError("convolution geometry has a zero extent");
    (void)out_height();
    (void)out_width();
  }

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;

 private:
  std::size_t out_extent(std::size_t in, const char* axis) const {
    const std::size_t padded = in + 2 * pad;
    if (padded < kernel || (padded - kernel) % stride != 0)
      throw ShapeError(std::string("convolution output ") + axis + " is not a positive integer (in=" +
                       std::to_string(in) + ", k=" + std::to_string(kernel) + ", pad=" + std::to_string(pad) +
                       ", stride=" + std::to_string(stride) + ")");
    return (padded - kernel) / stride + 1;
  }
};

// One image (C x H x W) into a (C*k*k) x (Hout*Wout) column block.
// Row index is (c, ky, kx); out-of-bounds taps read zero.
template <typename T>
void im2col_image(const T* image, const ConvGeometry& g, T* cols) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const auto H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + ow, T{0});
            continue;
          }
          const T* src = plane + iy * W;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            dst[ox] = (ix < 0 || ix >= W) ? T{0} : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col_image: overwrites `image` with the sum of every column
// entry that was read from each pixel.
template <typename T>
void col2im_image(const T* cols, const ConvGeometry& g, T* image) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const auto H = static_cast<std::ptrdiff_t>(g.height), W = static_cast<std::ptrdiff_t>(g.width);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad);
  std::fill(image, image + g.image_size(), T{0});
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= H) continue;
          T* dst = plane + iy * W;
          const T* src = row + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// x[N,C,H,W] -> [N, C*k*k, Hout*Wout]
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, std::size_t kernel, std::size_t pad, std::size_t stride) {
  if (x.rank() != 4) throw ShapeError("im2col expects an NCHW tensor, got " + x.shape().to_string());
  const ConvGeometry g{x.dim(1), x.dim(2), x.dim(3), kernel, pad, stride};
  g.validate();
  const std::size_t n = x.dim(0);
  Tensor<T> out(Shape{n, g.patch_size(), g.positions()});
  const std::size_t block = g.patch_size() * g.positions();
  for (std::size_t i = 0; i < n; ++i) im2col_image(x.data() + i * g.image_size(), g, out.data() + i * block);
  return out;
}

// cols[N, C*k*k, Hout*Wout] -> [N,C,H,W] for the geometry that produced them.
template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const ConvGeometry& g) {
  g.validate();
  if (cols.rank() != 3 || cols.dim(1) != g.patch_size() || cols.dim(2) != g.positions())
    throw ShapeError("col2im: columns " + cols.shape().to_string() + " do not match geometry [" +
                     std::to_string(g.patch_size()) + "," + std::to_string(g.positions()) + "]");
  const std::size_t n = cols.dim(0);
  Tensor<T> out(Shape{n, g.channels, g.height, g.width});
  const std::size_t block = g.patch_size() * g.positions();
  for (std::size_t i = 0; i < n; ++i) col2im_image(cols.data() + i * block, g, out.data() + i * g.image_size());
  return out;
}

}  // namespace leancnn
