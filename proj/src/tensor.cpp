#include "fdlite/tensor.hpp"

#include <cmath>
#include <sstream>

#include "fdlite/errors.hpp"

namespace fdlite {

std::string TensorShape::to_string() const {
  std::ostringstream os;
  os << "(" << n << "," << h << "," << w << "," << c << ")";
  return os.str();
}

TensorBuf::TensorBuf(TensorShape shape, float fill) : shape_(shape) {
  if (!shape.valid()) throw StructuralError("invalid tensor shape " + shape.to_string());
  data_.assign(static_cast<std::size_t>(shape.elements()), fill);
}

TensorBuf::TensorBuf(TensorShape shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
  if (!shape.valid()) throw StructuralError("invalid tensor shape " + shape.to_string());
  if (static_cast<std::int64_t>(data_.size()) != shape.elements()) {
    throw StructuralError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape.to_string());
  }
}

std::int64_t TensorBuf::first_non_finite() const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) return static_cast<std::int64_t>(i);
  }
  return -1;
}

}  // namespace fdlite
