#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fdlite/errors.hpp"
#include "fdlite/kernels.hpp"

namespace fdlite::kernels {

namespace {

constexpr int kPixelTile = 8;  // output pixels per micro-kernel call

int thread_count(Parallelism par) {
  return par.threads > 0 ? par.threads : omp_get_max_threads();
}

// acc[i][j] = sum_k a[k][i] * b[k][j], k ascending. Products of two floats
// are exact in double, so a fused multiply-add rounds exactly like the
// separate multiply and add of the reference kernel.
template <int NR>
inline void micro_kernel(const double* __restrict a, const double* __restrict b, int depth,
                         double (&acc)[kPixelTile][NR]) {
  for (int i = 0; i < kPixelTile; ++i) {
    for (int j = 0; j < NR; ++j) acc[i][j] = 0.0;
  }
  for (int k = 0; k < depth; ++k) {
    const double* bk = b + static_cast<std::size_t>(k) * NR;
    const double* ak = a + static_cast<std::size_t>(k) * kPixelTile;
#pragma GCC unroll 8
    for (int i = 0; i < kPixelTile; ++i) {
      const double av = ak[i];
#pragma omp simd
      for (int j = 0; j < NR; ++j) acc[i][j] += av * bk[j];
    }
  }
}

}  // namespace

PackedConv::PackedConv(const TensorBuf& kernel, std::span<const float> bias, const ConvParams& p)
    : params_(p) {
  const auto& k = kernel.shape();
  if (p.groups < 1 || k.n % p.groups != 0) {
    throw StructuralError("conv2d: output channels not divisible by groups");
  }
  out_channels_ = static_cast<int>(k.n);
  kernel_h_ = static_cast<int>(k.h);
  kernel_w_ = static_cast<int>(k.w);
  cin_g_ = static_cast<int>(k.c);
  in_channels_ = cin_g_ * p.groups;
  cout_g_ = out_channels_ / p.groups;
  depth_ = kernel_h_ * kernel_w_ * cin_g_;
  has_bias_ = !bias.empty();
  if (has_bias_ && static_cast<int>(bias.size()) != out_channels_) {
    throw StructuralError("conv2d: bias length does not match output channels");
  }
  bias_.assign(out_channels_, 0.0);
  for (int o = 0; has_bias_ && o < out_channels_; ++o) bias_[o] = bias[o];

  depthwise_ = cin_g_ == 1 && cout_g_ == 1;
  if (depthwise_) {
    taps_.assign(static_cast<std::size_t>(kernel_h_) * kernel_w_ * out_channels_, 0.0);
    for (int o = 0; o < out_channels_; ++o) {
      for (int ky = 0; ky < kernel_h_; ++ky) {
        for (int kx = 0; kx < kernel_w_; ++kx) {
          taps_[(static_cast<std::size_t>(ky) * kernel_w_ + kx) * out_channels_ + o] =
              kernel.at(o, ky, kx, 0);
        }
      }
    }
    return;
  }

  block_ = cout_g_ <= 8 ? 8 : 16;
  blocks_ = (cout_g_ + block_ - 1) / block_;
  panels_.assign(static_cast<std::size_t>(p.groups) * blocks_ * depth_ * block_, 0.0);
  for (int g = 0; g < p.groups; ++g) {
    for (int nb = 0; nb < blocks_; ++nb) {
      double* panel = panels_.data() + (static_cast<std::size_t>(g) * blocks_ + nb) * depth_ * block_;
      for (int j = 0; j < block_; ++j) {
        const int oc = nb * block_ + j;
        if (oc >= cout_g_) continue;
        const int o = g * cout_g_ + oc;
        for (int ky = 0; ky < kernel_h_; ++ky) {
          for (int kx = 0; kx < kernel_w_; ++kx) {
            for (int c = 0; c < cin_g_; ++c) {
              const int kk = (ky * kernel_w_ + kx) * cin_g_ + c;
              panel[static_cast<std::size_t>(kk) * block_ + j] = kernel.at(o, ky, kx, c);
            }
          }
        }
      }
    }
  }
}

namespace {

template <int NR>
void conv_blocked(const TensorBuf& input, TensorBuf& out, const PackedConv& pc,
                  const std::vector<double>& panels, const std::vector<double>& bias, int cin_g,
                  int cout_g, int depth, int blocks, Parallelism par) {
  const auto& in = input.shape();
  const auto& os = out.shape();
  const int kh = pc.kernel_h();
  const int kw = pc.kernel_w();
  const int stride = pc.params().stride;
  const int pad = pc.params().padding;
  const int groups = pc.params().groups;
  const std::int64_t rows = os.n * os.h;
  const float* src = input.data().data();
  float* dst = out.data().data();

#pragma omp parallel num_threads(thread_count(par))
  {
    std::vector<double> tile(static_cast<std::size_t>(depth) * kPixelTile);
    double acc[kPixelTile][NR];
#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const std::int64_t n = r / os.h;
      const std::int64_t oy = r % os.h;
      for (int g = 0; g < groups; ++g) {
        for (std::int64_t x0 = 0; x0 < os.w; x0 += kPixelTile) {
          const int valid = static_cast<int>(std::min<std::int64_t>(kPixelTile, os.w - x0));
          std::fill(tile.begin(), tile.end(), 0.0);
          for (int i = 0; i < valid; ++i) {
            const std::int64_t ox = x0 + i;
            for (int ky = 0; ky < kh; ++ky) {
              const std::int64_t iy = oy * stride - pad + ky;
              if (iy < 0 || iy >= in.h) continue;
              for (int kx = 0; kx < kw; ++kx) {
                const std::int64_t ix = ox * stride - pad + kx;
                if (ix < 0 || ix >= in.w) continue;
                const float* px = src + ((n * in.h + iy) * in.w + ix) * in.c +
                                  static_cast<std::int64_t>(g) * cin_g;
                double* t = tile.data() + static_cast<std::size_t>((ky * kw + kx) * cin_g) *
                                              kPixelTile + i;
                for (int c = 0; c < cin_g; ++c) t[static_cast<std::size_t>(c) * kPixelTile] = px[c];
              }
            }
          }
          for (int nb = 0; nb < blocks; ++nb) {
            const double* panel =
                panels.data() + (static_cast<std::size_t>(g) * blocks + nb) * depth * NR;
            micro_kernel<NR>(tile.data(), panel, depth, acc);
            const int cols = std::min(NR, cout_g - nb * NR);
            const int base = g * cout_g + nb * NR;
            for (int i = 0; i < valid; ++i) {
              float* o = dst + ((n * os.h + oy) * os.w + x0 + i) * os.c + base;
              for (int j = 0; j < cols; ++j) {
                o[j] = static_cast<float>(acc[i][j] + bias[base + j]);
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

TensorBuf conv2d(const TensorBuf& input, const PackedConv& pc, Parallelism par) {
  const auto& in = input.shape();
  const auto& p = pc.params_;
  if (in.c != pc.in_channels_) {
    throw StructuralError("conv2d: input has " + std::to_string(in.c) + " channels, kernel expects " +
                          std::to_string(pc.in_channels_));
  }
  if (in.h + 2 * p.padding < pc.kernel_h_ || in.w + 2 * p.padding < pc.kernel_w_) {
    throw StructuralError("conv2d: kernel larger than padded input");
  }
  const std::int64_t oh = (in.h + 2 * p.padding - pc.kernel_h_) / p.stride + 1;
  const std::int64_t ow = (in.w + 2 * p.padding - pc.kernel_w_) / p.stride + 1;
  TensorBuf out({in.n, oh, ow, pc.out_channels_});

  if (!pc.depthwise_) {
    // bias_ is all zeros for bias-free convs. Adding +0.0 is exact because
    // the accumulator starts at +0.0 and so can never be -0.0.
    if (pc.block_ == 8) {
      conv_blocked<8>(input, out, pc, pc.panels_, pc.bias_, pc.cin_g_, pc.cout_g_, pc.depth_,
                      pc.blocks_, par);
    } else {
      conv_blocked<16>(input, out, pc, pc.panels_, pc.bias_, pc.cin_g_, pc.cout_g_, pc.depth_,
                       pc.blocks_, par);
    }
    return out;
  }

  const int channels = pc.out_channels_;
  const std::int64_t rows = in.n * oh;
  const float* src = input.data().data();
  float* dst = out.data().data();
#pragma omp parallel num_threads(thread_count(par))
  {
    std::vector<double> acc(channels);
#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const std::int64_t n = r / oh;
      const std::int64_t oy = r % oh;
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int ky = 0; ky < pc.kernel_h_; ++ky) {
          const std::int64_t iy = oy * p.stride - p.padding + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (int kx = 0; kx < pc.kernel_w_; ++kx) {
            const std::int64_t ix = ox * p.stride - p.padding + kx;
            if (ix < 0 || ix >= in.w) continue;
            const float* px = src + ((n * in.h + iy) * in.w + ix) * in.c;
            const double* w =
                pc.taps_.data() + (static_cast<std::size_t>(ky) * pc.kernel_w_ + kx) * channels;
#pragma omp simd
            for (int c = 0; c < channels; ++c) acc[c] += static_cast<double>(px[c]) * w[c];
          }
        }
        float* o = dst + ((n * oh + oy) * ow + ox) * channels;
        for (int c = 0; c < channels; ++c) {
          o[c] = static_cast<float>(pc.has_bias_ ? acc[c] + pc.bias_[c] : acc[c]);
        }
      }
    }
  }
  return out;
}

TensorBuf conv2d(const TensorBuf& input, const TensorBuf& kernel, std::span<const float> bias,
                 const ConvParams& p, Parallelism par) {
  check_conv_args(input, kernel, bias, p);
  return conv2d(input, PackedConv(kernel, bias, p), par);
}

TensorBuf batch_norm(const TensorBuf& input, std::span<const float> scale,
                     std::span<const float> shift, std::span<const float> mean,
                     std::span<const float> var, float eps, Parallelism par) {
  const std::int64_t c = input.shape().c;
  for (auto v : {scale.size(), shift.size(), mean.size(), var.size()}) {
    if (static_cast<std::int64_t>(v) != c) {
      throw StructuralError("batch_norm: parameter length does not match channel count");
    }
  }
  std::vector<double> denom(c);
  for (std::int64_t i = 0; i < c; ++i) {
    if (!(var[i] >= 0.0f)) throw DataError("batch_norm: negative variance at channel " + std::to_string(i));
    denom[i] = std::sqrt(static_cast<double>(var[i]) + static_cast<double>(eps));
  }
  TensorBuf out(input.shape());
  const float* x = input.data().data();
  float* y = out.data().data();
  const std::int64_t total = input.shape().elements();
#pragma omp parallel for schedule(static) num_threads(thread_count(par))
  for (std::int64_t i = 0; i < total; ++i) {
    const std::int64_t ch = i % c;
    y[i] = static_cast<float>(static_cast<double>(scale[ch]) *
                                  (static_cast<double>(x[i]) - static_cast<double>(mean[ch])) /
                                  denom[ch] +
                              static_cast<double>(shift[ch]));
  }
  return out;
}

TensorBuf leaky_relu(const TensorBuf& input, float slope, Parallelism par) {
  TensorBuf out(input.shape());
  const float* x = input.data().data();
  float* y = out.data().data();
  const std::int64_t total = input.shape().elements();
#pragma omp parallel for schedule(static) num_threads(thread_count(par))
  for (std::int64_t i = 0; i < total; ++i) y[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
  return out;
}

TensorBuf max_pool2d(const TensorBuf& input, int kernel, int stride, int padding, Parallelism par) {
  if (kernel < 1 || stride < 1 || padding < 0 || padding >= kernel) {
    throw StructuralError("max_pool2d: need kernel >= 1, stride >= 1, 0 <= padding < kernel");
  }
  const auto& in = input.shape();
  const std::int64_t oh = (in.h + 2 * padding - kernel) / stride + 1;
  const std::int64_t ow = (in.w + 2 * padding - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw StructuralError("max_pool2d: window larger than padded input");
  TensorBuf out({in.n, oh, ow, in.c}, -std::numeric_limits<float>::infinity());
  const std::int64_t rows = in.n * oh;
#pragma omp parallel for schedule(static) num_threads(thread_count(par))
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::int64_t n = r / oh;
    const std::int64_t oy = r % oh;
    for (std::int64_t ox = 0; ox < ow; ++ox) {
      float* o = &out.at(n, oy, ox, 0);
      for (int ky = 0; ky < kernel; ++ky) {
        const std::int64_t iy = oy * stride - padding + ky;
        if (iy < 0 || iy >= in.h) continue;
        for (int kx = 0; kx < kernel; ++kx) {
          const std::int64_t ix = ox * stride - padding + kx;
          if (ix < 0 || ix >= in.w) continue;
          const float* px = input.data().data() + input.index(n, iy, ix, 0);
          for (std::int64_t c = 0; c < in.c; ++c) o[c] = std::max(o[c], px[c]);
        }
      }
    }
  }
  return out;
}

TensorBuf upsample_nearest2x(const TensorBuf& input,
                             std::optional<std::pair<std::int64_t, std::int64_t>> target) {
  const auto& in = input.shape();
  const std::int64_t full_h = 2 * in.h;
  const std::int64_t full_w = 2 * in.w;
  const std::int64_t oh = target ? target->first : full_h;
  const std::int64_t ow = target ? target->second : full_w;
  // Centre offsets; positive crops, negative pads with zeros.
  const std::int64_t off_y = (full_h - oh) / 2;
  const std::int64_t off_x = (full_w - ow) / 2;
  TensorBuf out({in.n, oh, ow, in.c});
  for (std::int64_t n = 0; n < in.n; ++n) {
    for (std::int64_t y = 0; y < oh; ++y) {
      const std::int64_t sy = y + off_y;
      if (sy < 0 || sy >= full_h) continue;
      for (std::int64_t x = 0; x < ow; ++x) {
        const std::int64_t sx = x + off_x;
        if (sx < 0 || sx >= full_w) continue;
        const float* px = input.data().data() + input.index(n, sy / 2, sx / 2, 0);
        std::copy(px, px + in.c, &out.at(n, y, x, 0));
      }
    }
  }
  return out;
}

TensorBuf add(const TensorBuf& a, const TensorBuf& b) {
  if (a.shape() != b.shape()) {
    throw StructuralError("add: shape mismatch " + a.shape().to_string() + " vs " +
                          b.shape().to_string());
  }
  TensorBuf out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  return out;
}

TensorBuf concat_channels(const std::vector<const TensorBuf*>& parts) {
  TensorShape shape = parts.front()->shape();
  shape.c = 0;
  for (const auto* p : parts) {
    const auto& s = p->shape();
    if (s.n != shape.n || s.h != shape.h || s.w != shape.w) {
      throw StructuralError("concat_channels: spatial mismatch");
    }
    shape.c += s.c;
  }
  TensorBuf out(shape);
  const std::int64_t pixels = shape.n * shape.h * shape.w;
  float* dst = out.data().data();
  for (std::int64_t px = 0; px < pixels; ++px) {
    for (const auto* p : parts) {
      const std::int64_t c = p->shape().c;
      const float* src = p->data().data() + px * c;
      dst = std::copy(src, src + c, dst);
    }
  }
  return out;
}

TensorBuf concat_rows(const std::vector<const TensorBuf*>& parts) {
  TensorShape shape = parts.front()->shape();
  shape.h = 0;
  for (const auto* p : parts) {
    const auto& s = p->shape();
    if (s.n != shape.n || s.w != shape.w || s.c != shape.c) {
      throw StructuralError("concat_rows: width/channel mismatch");
    }
    shape.h += s.h;
  }
  TensorBuf out(shape);
  float* dst = out.data().data();
  for (std::int64_t n = 0; n < shape.n; ++n) {
    for (const auto* p : parts) {
      const std::int64_t per = p->shape().h * p->shape().w * p->shape().c;
      const float* src = p->data().data() + n * per;
      dst = std::copy(src, src + per, dst);
    }
  }
  return out;
}

TensorBuf reshape_rows(const TensorBuf& input, int row_width) {
  const auto& s = input.shape();
  const std::int64_t per = s.h * s.w * s.c;
  if (row_width < 1 || per % row_width != 0) {
    throw StructuralError("reshape_rows: cannot split " + s.to_string() + " into rows of " +
                          std::to_string(row_width));
  }
  std::vector<float> data(input.data().begin(), input.data().end());
  return TensorBuf({s.n, per / row_width, 1, row_width}, std::move(data));
}

}  // namespace fdlite::kernels
