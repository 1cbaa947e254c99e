// Serial reference kernels. The parallel kernels must match these bit for bit.

#include <algorithm>
#include <cmath>
#include <limits>

#include "fdlite/errors.hpp"
#include "fdlite/kernels.hpp"

namespace fdlite::kernels {

void check_conv_args(const TensorBuf& input, const TensorBuf& kernel, std::span<const float> bias,
                     const ConvParams& p) {
  const auto& in = input.shape();
  const auto& k = kernel.shape();
  if (p.groups < 1 || p.stride < 1 || p.padding < 0) {
    throw StructuralError("conv2d: invalid stride/padding/groups");
  }
  if (in.c % p.groups != 0 || k.n % p.groups != 0) {
    throw StructuralError("conv2d: channels not divisible by groups");
  }
  if (k.c != in.c / p.groups) {
    throw StructuralError("conv2d: kernel depth " + std::to_string(k.c) + " does not match " +
                          std::to_string(in.c) + "/" + std::to_string(p.groups));
  }
  if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != k.n) {
    throw StructuralError("conv2d: bias length does not match output channels");
  }
  if (in.h + 2 * p.padding < k.h || in.w + 2 * p.padding < k.w) {
    throw StructuralError("conv2d: kernel larger than padded input");
  }
}

TensorBuf conv2d_reference(const TensorBuf& input, const TensorBuf& kernel,
                           std::span<const float> bias, const ConvParams& p) {
  check_conv_args(input, kernel, bias, p);
  const auto& in = input.shape();
  const auto& k = kernel.shape();
  const std::int64_t oh = (in.h + 2 * p.padding - k.h) / p.stride + 1;
  const std::int64_t ow = (in.w + 2 * p.padding - k.w) / p.stride + 1;
  const std::int64_t cin_g = in.c / p.groups;
  const std::int64_t cout_g = k.n / p.groups;
  TensorBuf out({in.n, oh, ow, k.n});

  for (std::int64_t n = 0; n < in.n; ++n) {
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        for (std::int64_t o = 0; o < k.n; ++o) {
          const std::int64_t g = o / cout_g;
          double acc = 0.0;
          for (std::int64_t ky = 0; ky < k.h; ++ky) {
            const std::int64_t iy = oy * p.stride - p.padding + ky;
            if (iy < 0 || iy >= in.h) continue;
            for (std::int64_t kx = 0; kx < k.w; ++kx) {
              const std::int64_t ix = ox * p.stride - p.padding + kx;
              if (ix < 0 || ix >= in.w) continue;
              for (std::int64_t c = 0; c < cin_g; ++c) {
                acc += static_cast<double>(input.at(n, iy, ix, g * cin_g + c)) *
                       static_cast<double>(kernel.at(o, ky, kx, c));
              }
            }
          }
          if (!bias.empty()) acc += static_cast<double>(bias[o]);
          out.at(n, oy, ox, o) = static_cast<float>(acc);
        }
      }
    }
  }
  return out;
}

TensorBuf max_pool2d_reference(const TensorBuf& input, int kernel, int stride, int padding) {
  if (kernel < 1 || stride < 1 || padding < 0 || padding >= kernel) {
    throw StructuralError("max_pool2d: need kernel >= 1, stride >= 1, 0 <= padding < kernel");
  }
  const auto& in = input.shape();
  const std::int64_t oh = (in.h + 2 * padding - kernel) / stride + 1;
  const std::int64_t ow = (in.w + 2 * padding - kernel) / stride + 1;
  if (oh < 1 || ow < 1) throw StructuralError("max_pool2d: window larger than padded input");
  TensorBuf out({in.n, oh, ow, in.c});
  for (std::int64_t n = 0; n < in.n; ++n) {
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        for (std::int64_t c = 0; c < in.c; ++c) {
          float best = -std::numeric_limits<float>::infinity();
          for (int ky = 0; ky < kernel; ++ky) {
            const std::int64_t iy = oy * stride - padding + ky;
            if (iy < 0 || iy >= in.h) continue;
            for (int kx = 0; kx < kernel; ++kx) {
              const std::int64_t ix = ox * stride - padding + kx;
              if (ix < 0 || ix >= in.w) continue;
              best = std::max(best, input.at(n, iy, ix, c));
            }
          }
          out.at(n, oy, ox, c) = best;
        }
      }
    }
  }
  return out;
}

}  // namespace fdlite::kernels
