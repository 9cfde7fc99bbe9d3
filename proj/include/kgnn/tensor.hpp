#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace kgnn {

class Rng;

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);
  /// uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
  static Tensor glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* ptr() noexcept { return data_.data(); }
  const double* ptr() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t row, std::size_t col) { return data_[row * shape_.back() + col]; }
  double at(std::size_t row, std::size_t col) const { return data_[row * shape_.back() + col]; }
  double item() const;

  /// Same data viewed under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;
  Tensor row(std::size_t r) const;

  bool all_finite() const;
  void fill(double value);

  /// Exact (bitwise for finite values) equality of shape and data.
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace kgnn
