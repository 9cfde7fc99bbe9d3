#include "kgnn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "kgnn/error.hpp"
#include "kgnn/rng.hpp"

namespace kgnn {

std::string shape_to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
  for (std::size_t d : shape_)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape_));
  if (data_.size() != shape_numel(shape_))
    throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_to_string(shape_));
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data_) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform(std::move(shape), -s, s, rng);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ContractError("item() on non-scalar tensor " + shape_to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::row(std::size_t r) const {
  if (shape_.empty() || r >= shape_[0]) throw DimensionError("row index out of range");
  const std::size_t width = data_.size() / shape_[0];
  Shape s(shape_.begin() + 1, shape_.end());
  if (s.empty()) s = {1};
  return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(r * width),
                                                  data_.begin() + static_cast<std::ptrdiff_t>((r + 1) * width)));
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace kgnn
