#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fdlite {

// N,H,W,C extent of a dense tensor.
struct TensorShape {
  std::int64_t n = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;
  std::int64_t c = 1;

  std::int64_t elements() const { return n * h * w * c; }
  bool valid() const { return n >= 1 && h >= 1 && w >= 1 && c >= 1; }
  std::string to_string() const;

  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

// Dense row-major NHWC buffer of 32-bit reals.
class TensorBuf {
 public:
  TensorBuf() = default;
  explicit TensorBuf(TensorShape shape, float fill = 0.0f);
  TensorBuf(TensorShape shape, std::vector<float> data);

  const TensorShape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }

  float& at(std::int64_t n, std::int64_t y, std::int64_t x, std::int64_t c) {
    return data_[index(n, y, x, c)];
  }
  float at(std::int64_t n, std::int64_t y, std::int64_t x, std::int64_t c) const {
    return data_[index(n, y, x, c)];
  }

  std::size_t index(std::int64_t n, std::int64_t y, std::int64_t x, std::int64_t c) const {
    return static_cast<std::size_t>(((n * shape_.h + y) * shape_.w + x) * shape_.c + c);
  }

  // Index of the first non-finite element, or -1.
  std::int64_t first_non_finite() const;

  friend bool operator==(const TensorBuf&, const TensorBuf&) = default;

 private:
  TensorShape shape_{};
  std::vector<float> data_;
};

}  // namespace fdlite
