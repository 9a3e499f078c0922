#include "ersinv/nn/ops.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace ersinv::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

using Index = Eigen::Index;

Index ix(std::size_t v) { return static_cast<Index>(v); }

std::size_t kernel_size(const Tensor4& weight) {
  if (weight.h() != weight.w() || weight.h() % 2 == 0)
    throw Error(ErrorCode::ShapeMismatch, "conv kernel must be square and odd, got " + weight.shape().str());
  return weight.h();
}

// cols[(c*k + u)*k + v][i*W + j] = x[c][i + u - p][j + v - p]
void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w, std::size_t k, double* cols) {
  const auto p = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* xp = x + ch * hw;
    for (std::size_t u = 0; u < k; ++u) {
      for (std::size_t v = 0; v < k; ++v) {
        double* row = cols + ((ch * k + u) * k + v) * hw;
        const std::ptrdiff_t du = static_cast<std::ptrdiff_t>(u) - p;
        const std::ptrdiff_t dv = static_cast<std::ptrdiff_t>(v) - p;
        for (std::size_t i = 0; i < h; ++i) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + du;
          double* out = row + i * w;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(out, out + w, 0.0);
            continue;
          }
          const double* in = xp + static_cast<std::size_t>(si) * w;
          for (std::size_t j = 0; j < w; ++j) {
            const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j) + dv;
            out[j] = (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) ? 0.0 : in[sj];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t k, double* dx) {
  const auto p = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t hw = h * w;
  for (std::size_t ch = 0; ch < c; ++ch) {
    double* xp = dx + ch * hw;
    for (std::size_t u = 0; u < k; ++u) {
      for (std::size_t v = 0; v < k; ++v) {
        const double* row = cols + ((ch * k + u) * k + v) * hw;
        const std::ptrdiff_t du = static_cast<std::ptrdiff_t>(u) - p;
        const std::ptrdiff_t dv = static_cast<std::ptrdiff_t>(v) - p;
        for (std::size_t i = 0; i < h; ++i) {
          const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i) + du;
          if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
          double* out = xp + static_cast<std::size_t>(si) * w;
          const double* in = row + i * w;
          for (std::size_t j = 0; j < w; ++j) {
            const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j) + dv;
            if (sj >= 0 && sj < static_cast<std::ptrdiff_t>(w)) out[sj] += in[j];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor4 conv_forward(const Tensor4& x, const Tensor4& weight, const std::vector<double>& bias) {
  const std::size_t k = kernel_size(weight);
  if (weight.c() != x.c() || bias.size() != weight.n())
    throw Error(ErrorCode::ShapeMismatch, "conv: input " + x.shape().str() + " vs weight " + weight.shape().str());
  const std::size_t out_c = weight.n(), in_c = x.c(), hw = x.h() * x.w();
  const std::size_t ckk = in_c * k * k;
  Tensor4 y(x.n(), out_c, x.h(), x.w());
  ConstMapMat wm(weight.data(), ix(out_c), ix(ckk));
  std::vector<double> cols(k == 1 ? 0 : ckk * hw);
  for (std::size_t n = 0; n < x.n(); ++n) {
    const double* src = x.sample(n);
    if (k != 1) {
      im2col(src, in_c, x.h(), x.w(), k, cols.data());
      src = cols.data();
    }
    MapMat ym(y.sample(n), ix(out_c), ix(hw));
    ym.noalias() = wm * ConstMapMat(src, ix(ckk), ix(hw));
    for (std::size_t o = 0; o < out_c; ++o) ym.row(ix(o)).array() += bias[o];
  }
  return y;
}

ConvGrads conv_backward(const Tensor4& dy, const Tensor4& x, const Tensor4& weight) {
  const std::size_t k = kernel_size(weight);
  const std::size_t out_c = weight.n(), in_c = x.c(), hw = x.h() * x.w();
  if (dy.n() != x.n() || dy.c() != out_c || dy.h() != x.h() || dy.w() != x.w() || weight.c() != in_c)
    throw Error(ErrorCode::ShapeMismatch, "conv backward: dy " + dy.shape().str() + " x " + x.shape().str());
  const std::size_t ckk = in_c * k * k;
  ConvGrads g{Tensor4(x.shape()), Tensor4(weight.shape()), std::vector<double>(out_c, 0.0)};
  ConstMapMat wm(weight.data(), ix(out_c), ix(ckk));
  MapMat dwm(g.dweight.data(), ix(out_c), ix(ckk));
  std::vector<double> cols(k == 1 ? 0 : ckk * hw);
  RowMat dcols(ix(ckk), ix(hw));
  for (std::size_t n = 0; n < x.n(); ++n) {
    const double* src = x.sample(n);
    if (k != 1) {
      im2col(src, in_c, x.h(), x.w(), k, cols.data());
      src = cols.data();
    }
    ConstMapMat dym(dy.sample(n), ix(out_c), ix(hw));
    dwm.noalias() += dym * ConstMapMat(src, ix(ckk), ix(hw)).transpose();
    // Plain loop: Eigen's vectorised reduction order depends on pointer alignment.
    for (std::size_t o = 0; o < out_c; ++o) {
      const double* row = dy.plane(n, o);
      double s = 0.0;
      for (std::size_t q = 0; q < hw; ++q) s += row[q];
      g.dbias[o] += s;
    }
    if (k == 1) {
      MapMat dxm(g.dx.sample(n), ix(in_c), ix(hw));
      dxm.noalias() = wm.transpose() * dym;
    } else {
      dcols.noalias() = wm.transpose() * dym;
      col2im(dcols.data(), in_c, x.h(), x.w(), k, g.dx.sample(n));
    }
  }
  return g;
}

Tensor4 relu_forward(const Tensor4& x) {
  Tensor4 y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
  return y;
}

Tensor4 relu_backward(const Tensor4& dy, const Tensor4& y) {
  if (!(dy.shape() == y.shape())) throw Error(ErrorCode::ShapeMismatch, "relu backward shape");
  Tensor4 dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx.data()[i] = y.data()[i] > 0.0 ? dy.data()[i] : 0.0;
  return dx;
}

Tensor4 sigmoid_forward(const Tensor4& x) {
  Tensor4 y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    // Stable for large |v|.
    y.data()[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return y;
}

Tensor4 sigmoid_backward(const Tensor4& dy, const Tensor4& y) {
  if (!(dy.shape() == y.shape())) throw Error(ErrorCode::ShapeMismatch, "sigmoid backward shape");
  Tensor4 dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double s = y.data()[i];
    dx.data()[i] = dy.data()[i] * s * (1.0 - s);
  }
  return dx;
}

PoolResult maxpool_forward(const Tensor4& x) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0)
    throw Error(ErrorCode::NonDivisibleDims, "maxpool needs even H and W, got " + x.shape().str());
  const std::size_t oh = x.h() / 2, ow = x.w() / 2;
  PoolResult r{Tensor4(x.n(), x.c(), oh, ow), std::vector<std::uint32_t>(x.n() * x.c() * oh * ow)};
  std::size_t o = 0;
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const double* p = x.plane(n, c);
      const std::size_t base = (n * x.c() + c) * x.h() * x.w();
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j, ++o) {
          std::size_t best = (2 * i) * x.w() + 2 * j;
          // Scan order equals increasing flat index; strict comparison keeps the first maximum.
          const std::size_t cand[3] = {best + 1, best + x.w(), best + x.w() + 1};
          for (std::size_t q : cand)
            if (p[q] > p[best]) best = q;
          r.y.data()[o] = p[best];
          r.argmax[o] = static_cast<std::uint32_t>(base + best);
        }
      }
    }
  }
  return r;
}

Tensor4 maxpool_backward(const Tensor4& dy, const std::vector<std::uint32_t>& argmax, const Shape4& x_shape) {
  if (argmax.size() != dy.size() || dy.h() * 2 != x_shape.h || dy.w() * 2 != x_shape.w)
    throw Error(ErrorCode::ShapeMismatch, "maxpool backward shape");
  Tensor4 dx(x_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx.data()[argmax[o]] += dy.data()[o];
  return dx;
}

namespace {

// Contiguous (out x in) slice of a (out, in, 2, 2) kernel for tap (a, b).
RowMat tap_matrix(const Tensor4& weight, std::size_t a, std::size_t b) {
  RowMat m(ix(weight.n()), ix(weight.c()));
  for (std::size_t o = 0; o < weight.n(); ++o)
    for (std::size_t c = 0; c < weight.c(); ++c) m(ix(o), ix(c)) = weight(o, c, a, b);
  return m;
}

void check_tconv(const Tensor4& x, const Tensor4& weight) {
  if (weight.h() != 2 || weight.w() != 2 || weight.c() != x.c())
    throw Error(ErrorCode::ShapeMismatch, "tconv: input " + x.shape().str() + " vs weight " + weight.shape().str());
}

}  // namespace

Tensor4 tconv_forward(const Tensor4& x, const Tensor4& weight, const std::vector<double>& bias) {
  check_tconv(x, weight);
  if (bias.size() != weight.n()) throw Error(ErrorCode::ShapeMismatch, "tconv bias");
  const std::size_t out_c = weight.n(), h = x.h(), w = x.w(), hw = h * w;
  Tensor4 y(x.n(), out_c, 2 * h, 2 * w);
  RowMat z(ix(out_c), ix(hw));
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) {
      const RowMat wm = tap_matrix(weight, a, b);
      for (std::size_t n = 0; n < x.n(); ++n) {
        z.noalias() = wm * ConstMapMat(x.sample(n), ix(x.c()), ix(hw));
        for (std::size_t o = 0; o < out_c; ++o) {
          double* yp = y.plane(n, o);
          const double* zp = z.data() + o * hw;
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) yp[(2 * i + a) * (2 * w) + 2 * j + b] = zp[i * w + j] + bias[o];
        }
      }
    }
  }
  return y;
}

ConvGrads tconv_backward(const Tensor4& dy, const Tensor4& x, const Tensor4& weight) {
  check_tconv(x, weight);
  const std::size_t out_c = weight.n(), in_c = x.c(), h = x.h(), w = x.w(), hw = h * w;
  if (dy.n() != x.n() || dy.c() != out_c || dy.h() != 2 * h || dy.w() != 2 * w)
    throw Error(ErrorCode::ShapeMismatch, "tconv backward: dy " + dy.shape().str());
  ConvGrads g{Tensor4(x.shape()), Tensor4(weight.shape()), std::vector<double>(out_c, 0.0)};
  RowMat dz(ix(out_c), ix(hw));
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) {
      const RowMat wm = tap_matrix(weight, a, b);
      RowMat dw = RowMat::Zero(ix(out_c), ix(in_c));
      for (std::size_t n = 0; n < x.n(); ++n) {
        for (std::size_t o = 0; o < out_c; ++o) {
          const double* dyp = dy.plane(n, o);
          double* dzp = dz.data() + o * hw;
          for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < w; ++j) dzp[i * w + j] = dyp[(2 * i + a) * (2 * w) + 2 * j + b];
        }
        ConstMapMat xm(x.sample(n), ix(in_c), ix(hw));
        dw.noalias() += dz * xm.transpose();
        MapMat dxm(g.dx.sample(n), ix(in_c), ix(hw));
        dxm.noalias() += wm.transpose() * dz;
      }
      for (std::size_t o = 0; o < out_c; ++o)
        for (std::size_t c = 0; c < in_c; ++c) g.dweight(o, c, a, b) = dw(ix(o), ix(c));
    }
  }
  for (std::size_t n = 0; n < dy.n(); ++n)
    for (std::size_t o = 0; o < out_c; ++o) {
      const double* p = dy.plane(n, o);
      double s = 0.0;
      for (std::size_t q = 0; q < dy.h() * dy.w(); ++q) s += p[q];
      g.dbias[o] += s;
    }
  return g;
}

Tensor4 concat_forward(const Tensor4& a, const Tensor4& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw Error(ErrorCode::ShapeMismatch, "concat: " + a.shape().str() + " vs " + b.shape().str());
  Tensor4 y(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t pa = a.c() * a.h() * a.w(), pb = b.c() * b.h() * b.w();
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::copy(a.sample(n), a.sample(n) + pa, y.sample(n));
    std::copy(b.sample(n), b.sample(n) + pb, y.sample(n) + pa);
  }
  return y;
}

void concat_backward(const Tensor4& dy, std::size_t a_channels, Tensor4& da, Tensor4& db) {
  if (a_channels > dy.c()) throw Error(ErrorCode::ShapeMismatch, "concat backward channels");
  da = Tensor4(dy.n(), a_channels, dy.h(), dy.w());
  db = Tensor4(dy.n(), dy.c() - a_channels, dy.h(), dy.w());
  const std::size_t pa = da.c() * dy.h() * dy.w(), pb = db.c() * dy.h() * dy.w();
  for (std::size_t n = 0; n < dy.n(); ++n) {
    std::copy(dy.sample(n), dy.sample(n) + pa, da.sample(n));
    std::copy(dy.sample(n) + pa, dy.sample(n) + pa + pb, db.sample(n));
  }
}

Tensor4 add_forward(const Tensor4& a, const Tensor4& b) {
  if (!(a.shape() == b.shape())) throw Error(ErrorCode::ShapeMismatch, "add: " + a.shape().str() + " vs " + b.shape().str());
  Tensor4 y = a;
  y.add(b);
  return y;
}

Tensor4 batchnorm_forward(const Tensor4& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                          std::vector<double>& running_mean, std::vector<double>& running_var, BnMode mode,
                          BnCache* cache) {
  const std::size_t c = x.c(), hw = x.h() * x.w();
  if (gamma.size() != c || beta.size() != c || running_mean.size() != c || running_var.size() != c)
    throw Error(ErrorCode::ShapeMismatch, "batchnorm parameters do not match " + x.shape().str());
  const std::size_t m = x.n() * hw;
  if (mode == BnMode::Train && m < 2)
    throw Error(ErrorCode::DegenerateBatch, "batchnorm training needs at least 2 values per channel");
  Tensor4 y(x.shape());
  if (cache) {
    cache->xhat = Tensor4(x.shape());
    cache->inv_std.assign(c, 0.0);
    cache->mode = mode;
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == BnMode::Train) {
      double s = 0.0;
      for (std::size_t n = 0; n < x.n(); ++n) {
        const double* p = x.plane(n, ch);
        for (std::size_t q = 0; q < hw; ++q) s += p[q];
      }
      mean = s / static_cast<double>(m);
      double ss = 0.0;
      for (std::size_t n = 0; n < x.n(); ++n) {
        const double* p = x.plane(n, ch);
        for (std::size_t q = 0; q < hw; ++q) ss += (p[q] - mean) * (p[q] - mean);
      }
      var = ss / static_cast<double>(m);
      running_mean[ch] = (1.0 - kBnMomentum) * running_mean[ch] + kBnMomentum * mean;
      running_var[ch] = (1.0 - kBnMomentum) * running_var[ch] +
                        kBnMomentum * ss / static_cast<double>(m - 1);
    } else {
      mean = running_mean[ch];
      var = running_var[ch];
    }
    const double inv_std = 1.0 / std::sqrt(var + kBnEpsilon);
    if (cache) cache->inv_std[ch] = inv_std;
    for (std::size_t n = 0; n < x.n(); ++n) {
      const double* p = x.plane(n, ch);
      double* yp = y.plane(n, ch);
      double* xh = cache ? cache->xhat.plane(n, ch) : nullptr;
      for (std::size_t q = 0; q < hw; ++q) {
        const double v = (p[q] - mean) * inv_std;
        if (xh) xh[q] = v;
        yp[q] = gamma[ch] * v + beta[ch];
      }
    }
  }
  return y;
}

BnGrads batchnorm_backward(const Tensor4& dy, const BnCache& cache, const std::vector<double>& gamma) {
  const Tensor4& xhat = cache.xhat;
  if (!(dy.shape() == xhat.shape()) || gamma.size() != dy.c())
    throw Error(ErrorCode::ShapeMismatch, "batchnorm backward shape");
  const std::size_t c = dy.c(), hw = dy.h() * dy.w();
  const double m = static_cast<double>(dy.n() * hw);
  BnGrads g{Tensor4(dy.shape()), std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < dy.n(); ++n) {
      const double* d = dy.plane(n, ch);
      const double* xh = xhat.plane(n, ch);
      for (std::size_t q = 0; q < hw; ++q) {
        sum_dy += d[q];
        sum_dy_xhat += d[q] * xh[q];
      }
    }
    g.dgamma[ch] = sum_dy_xhat;
    g.dbeta[ch] = sum_dy;
    const double scale = gamma[ch] * cache.inv_std[ch];
    for (std::size_t n = 0; n < dy.n(); ++n) {
      const double* d = dy.plane(n, ch);
      const double* xh = xhat.plane(n, ch);
      double* dx = g.dx.plane(n, ch);
      if (cache.mode == BnMode::Eval) {
        for (std::size_t q = 0; q < hw; ++q) dx[q] = scale * d[q];
      } else {
        for (std::size_t q = 0; q < hw; ++q) dx[q] = scale * (d[q] - sum_dy / m - xh[q] * sum_dy_xhat / m);
      }
    }
  }
  return g;
}

}  // namespace ersinv::nn
