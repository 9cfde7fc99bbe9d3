#pragma once

// Loop kernels shared by forward and backward passes. Every reduction runs in
// a fixed order so results do not depend on scheduling.

#include <cstddef>

namespace kgnn::kernels {

/// C[m x n] += A[m x k] * B[k x n]
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      const double* b0 = b + p * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ((a0 * b0[j] + a1 * b1[j]) + (a2 * b2[j] + a3 * b3[j]));
    }
    for (; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C[m x n] += A^T * B with A[k x m], B[k x n]
inline void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double a0 = a[p * m + i], a1 = a[(p + 1) * m + i], a2 = a[(p + 2) * m + i], a3 = a[(p + 3) * m + i];
      const double* b0 = b + p * n;
      const double* b1 = b0 + n;
      const double* b2 = b1 + n;
      const double* b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ((a0 * b0[j] + a1 * b1[j]) + (a2 * b2[j] + a3 * b3[j]));
    }
    for (; p < k; ++p) {
      const double av = a[p * m + i];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C[m x n] += A * B^T with A[m x k], B[n x k]
inline void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        s0 += arow[p] * brow[p];
        s1 += arow[p + 1] * brow[p + 1];
        s2 += arow[p + 2] * brow[p + 2];
        s3 += arow[p + 3] * brow[p + 3];
      }
      for (; p < k; ++p) s0 += arow[p] * brow[p];
      c[i * n + j] += (s0 + s1) + (s2 + s3);
    }
  }
}

struct ConvGeometry {
  std::size_t channels_in, height, width;
  std::size_t channels_out, kernel;
  std::size_t stride, padding;
  std::size_t out_height, out_width;
};

/// Valid output column range [lo, hi) for kernel column kx.
inline void valid_cols(const ConvGeometry& g, std::size_t kx, std::size_t& lo, std::size_t& hi) {
  // ix = ox*stride + kx - padding must lie in [0, width)
  lo = 0;
  if (kx < g.padding) lo = (g.padding - kx + g.stride - 1) / g.stride;
  const long long last = static_cast<long long>(g.width) - 1 + static_cast<long long>(g.padding) -
                         static_cast<long long>(kx);
  if (last < 0) {
    hi = 0;
    return;
  }
  hi = static_cast<std::size_t>(last) / g.stride + 1;
  if (hi > g.out_width) hi = g.out_width;
  if (lo > hi) lo = hi;
}

/// cols[(c*k + ky)*k + kx][oy*W' + ox] = padded input sample (zero outside).
inline void im2col(const ConvGeometry& g, const double* in, double* cols) {
  const std::size_t plane_out = g.out_height * g.out_width;
  const std::size_t plane_in = g.height * g.width;
  for (std::size_t c = 0; c < g.channels_in; ++c) {
    const double* ip = in + c * plane_in;
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * plane_out;
        std::size_t lo, hi;
        valid_cols(g, kx, lo, hi);
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          double* dst = row + oy * g.out_width;
          const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.padding);
          if (iy < 0 || iy >= static_cast<long long>(g.height)) {
            for (std::size_t ox = 0; ox < g.out_width; ++ox) dst[ox] = 0.0;
            continue;
          }
          const double* irow = ip + static_cast<std::size_t>(iy) * g.width;
          for (std::size_t ox = 0; ox < lo; ++ox) dst[ox] = 0.0;
          for (std::size_t ox = lo; ox < hi; ++ox) dst[ox] = irow[ox * g.stride + kx - g.padding];
          for (std::size_t ox = hi; ox < g.out_width; ++ox) dst[ox] = 0.0;
        }
      }
  }
}

/// Scatter-add inverse of im2col.
inline void col2im_acc(const ConvGeometry& g, const double* cols, double* in) {
  const std::size_t plane_out = g.out_height * g.out_width;
  const std::size_t plane_in = g.height * g.width;
  for (std::size_t c = 0; c < g.channels_in; ++c) {
    double* ip = in + c * plane_in;
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const double* row = cols + ((c * g.kernel + ky) * g.kernel + kx) * plane_out;
        std::size_t lo, hi;
        valid_cols(g, kx, lo, hi);
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const long long iy = static_cast<long long>(oy * g.stride + ky) - static_cast<long long>(g.padding);
          if (iy < 0 || iy >= static_cast<long long>(g.height)) continue;
          double* irow = ip + static_cast<std::size_t>(iy) * g.width;
          const double* src = row + oy * g.out_width;
          for (std::size_t ox = lo; ox < hi; ++ox) irow[ox * g.stride + kx - g.padding] += src[ox];
        }
      }
  }
}

inline std::size_t patch_size(const ConvGeometry& g) { return g.channels_in * g.kernel * g.kernel; }
inline std::size_t out_plane(const ConvGeometry& g) { return g.out_height * g.out_width; }

/// One image: out[O x H'W'] += W[O x CKK] * cols. `cols` is scratch of patch_size * out_plane.
inline void conv_forward(const ConvGeometry& g, const double* in, const double* w, double* out, double* cols) {
  im2col(g, in, cols);
  gemm_acc(w, cols, out, g.channels_out, patch_size(g), out_plane(g));
}

/// One image: din += col2im(W^T * dout). `cols` is scratch.
inline void conv_backward_input(const ConvGeometry& g, const double* dout, const double* w, double* din,
                                double* cols) {
  const std::size_t n = patch_size(g) * out_plane(g);
  for (std::size_t i = 0; i < n; ++i) cols[i] = 0.0;
  gemm_tn_acc(w, dout, cols, patch_size(g), g.channels_out, out_plane(g));
  col2im_acc(g, cols, din);
}

/// One image: dW[O x CKK] += dout[O x H'W'] * cols^T, with cols^T materialized
/// in `cols_t` so the inner loop runs over the contiguous CKK axis.
inline void conv_backward_weight(const ConvGeometry& g, const double* dout, const double* in, double* dw,
                                 double* cols, double* cols_t) {
  im2col(g, in, cols);
  const std::size_t pk = patch_size(g), po = out_plane(g);
  for (std::size_t r = 0; r < pk; ++r)
    for (std::size_t j = 0; j < po; ++j) cols_t[j * pk + r] = cols[r * po + j];
  gemm_acc(dout, cols_t, dw, g.channels_out, po, pk);
}

}  // namespace kgnn::kernels
