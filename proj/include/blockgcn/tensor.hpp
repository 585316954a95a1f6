#pragma once

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

#include "blockgcn/error.hpp"

namespace blockgcn {

// Dense row-major tensor of doubles. The last dimension is contiguous.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::initializer_list<std::int64_t> shape)
      : Tensor(std::vector<std::int64_t>(shape)) {}

  static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::int64_t> shape, double value);
  // Row-major data in one flat list; shape must match.
  static Tensor from_data(std::vector<std::int64_t> shape, std::vector<double> data);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(std::int64_t i) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  double& at(std::initializer_list<std::int64_t> idx);
  double at(std::initializer_list<std::int64_t> idx) const;

  // View the same buffer under a new shape with equal element count.
  Tensor reshaped(std::vector<std::int64_t> shape) const;

  void fill(double value);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  std::string shape_str() const;

 private:
  std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const;

  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

std::string shape_to_string(const std::vector<std::int64_t>& shape);

// Binary tensor dump. Layout, all little-endian:
//   int32 ndim, int32 shape[ndim], float64 payload (row-major).
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace blockgcn
