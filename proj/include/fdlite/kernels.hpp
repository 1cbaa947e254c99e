#pragma once

#include <optional>
#include <span>
#include <vector>

#include "fdlite/tensor.hpp"

// Layer kernels over NHWC tensors.
//
// Every reduction accumulates in double precision in a fixed order (kernel
// row, kernel column, input channel) and rounds to float once. The OpenMP
// kernels distribute whole output elements across threads and never split a
// reduction, so their results are bit-identical to the serial *_reference
// kernels at every thread count.
namespace fdlite::kernels {

struct Parallelism {
  int threads = 0;  // 0: OpenMP default; 1: serial
};

struct ConvParams {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// Kernel tensors use (out_channels, kernel_h, kernel_w, in_channels / groups).
void check_conv_args(const TensorBuf& input, const TensorBuf& kernel, std::span<const float> bias,
                     const ConvParams& p);

TensorBuf conv2d_reference(const TensorBuf& input, const TensorBuf& kernel,
                           std::span<const float> bias, const ConvParams& p);

// Convolution weights repacked into double-precision panels for the blocked
// kernel. Packing is done once per network and reused across calls.
class PackedConv {
 public:
  PackedConv() = default;
  PackedConv(const TensorBuf& kernel, std::span<const float> bias, const ConvParams& p);

  int out_channels() const { return out_channels_; }
  int in_channels() const { return in_channels_; }
  int kernel_h() const { return kernel_h_; }
  int kernel_w() const { return kernel_w_; }
  const ConvParams& params() const { return params_; }

 private:
  friend TensorBuf conv2d(const TensorBuf&, const PackedConv&, Parallelism);

  int out_channels_ = 0;
  int in_channels_ = 0;
  int kernel_h_ = 0;
  int kernel_w_ = 0;
  ConvParams params_{};
  int cin_g_ = 0;
  int cout_g_ = 0;
  int depth_ = 0;        // reduction length per group: kh * kw * cin_g
  int block_ = 0;        // output channels per panel
  int blocks_ = 0;       // panels per group
  bool depthwise_ = false;
  bool has_bias_ = false;
  std::vector<double> panels_;  // [group][block][depth][block_]
  std::vector<double> taps_;    // depthwise: [ky][kx][channel]
  std::vector<double> bias_;
};

TensorBuf conv2d(const TensorBuf& input, const PackedConv& packed, Parallelism par = {});
TensorBuf conv2d(const TensorBuf& input, const TensorBuf& kernel, std::span<const float> bias,
                 const ConvParams& p, Parallelism par = {});

// y = scale * (x - mean) / sqrt(var + eps) + shift, per channel.
TensorBuf batch_norm(const TensorBuf& input, std::span<const float> scale,
                     std::span<const float> shift, std::span<const float> mean,
                     std::span<const float> var, float eps, Parallelism par = {});

TensorBuf leaky_relu(const TensorBuf& input, float slope, Parallelism par = {});

TensorBuf max_pool2d_reference(const TensorBuf& input, int kernel, int stride, int padding);
TensorBuf max_pool2d(const TensorBuf& input, int kernel, int stride, int padding,
                     Parallelism par = {});

// Nearest-neighbour x2. With a target extent the doubled map is centre
// cropped (or zero padded) to that height and width.
TensorBuf upsample_nearest2x(const TensorBuf& input,
                             std::optional<std::pair<std::int64_t, std::int64_t>> target = {});

TensorBuf add(const TensorBuf& a, const TensorBuf& b);
TensorBuf concat_channels(const std::vector<const TensorBuf*>& parts);
TensorBuf concat_rows(const std::vector<const TensorBuf*>& parts);
TensorBuf reshape_rows(const TensorBuf& input, int row_width);

}  // namespace fdlite::kernels
