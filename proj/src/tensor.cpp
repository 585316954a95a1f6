#include "blockgcn/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace blockgcn {

namespace {

std::int64_t checked_element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) {
    if (d < 0) throw ShapeError("negative dimension in shape " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)),
      data_(static_cast<std::size_t>(checked_element_count(shape_)), 0.0) {}

Tensor Tensor::full(std::vector<std::int64_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from_data(std::vector<std::int64_t> shape, std::vector<double> data) {
  Tensor t;
  const std::int64_t n = checked_element_count(shape);
  if (n != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("data size " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

std::int64_t Tensor::dim(std::int64_t i) const {
  if (i < 0 || i >= ndim()) {
    throw ShapeError("dim index " + std::to_string(i) + " out of range for " + shape_str());
  }
  return shape_[static_cast<std::size_t>(i)];
}

std::int64_t Tensor::flat_index(std::initializer_list<std::int64_t> idx) const {
  if (static_cast<std::int64_t>(idx.size()) != ndim()) {
    throw ShapeError("index rank " + std::to_string(idx.size()) + " does not match tensor " +
                     shape_str());
  }
  std::int64_t flat = 0;
  std::int64_t axis = 0;
  for (std::int64_t i : idx) {
    const std::int64_t d = shape_[static_cast<std::size_t>(axis)];
    if (i < 0 || i >= d) {
      throw ShapeError("index " + std::to_string(i) + " out of range on axis " +
                       std::to_string(axis) + " of " + shape_str());
    }
    flat = flat * d + i;
    ++axis;
  }
  return flat;
}

double& Tensor::at(std::initializer_list<std::int64_t> idx) {
  return data_[static_cast<std::size_t>(flat_index(idx))];
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
  return data_[static_cast<std::size_t>(flat_index(idx))];
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  const std::int64_t n = checked_element_count(shape);
  if (n != size()) {
    throw ShapeError("cannot reshape " + shape_str() + " to " + shape_to_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = data_;
  return t;
}

void Tensor::fill(double value) {
  for (double& x : data_) x = value;
}

bool Tensor::all_finite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor file I/O assumes a little-endian host");

void write_i32(std::ostream& os, std::int32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::int32_t read_i32(std::istream& is) {
  std::int32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw IoError("truncated tensor stream while reading header");
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  write_i32(os, static_cast<std::int32_t>(t.ndim()));
  for (std::int64_t d : t.shape()) write_i32(os, static_cast<std::int32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
  if (!os) throw IoError("failed writing tensor payload");
}

Tensor read_tensor(std::istream& is) {
  const std::int32_t ndim = read_i32(is);
  if (ndim < 0 || ndim > 16) {
    throw IoError("tensor header has implausible ndim " + std::to_string(ndim));
  }
  std::vector<std::int64_t> shape(static_cast<std::size_t>(ndim));
  for (auto& d : shape) {
    const std::int32_t v = read_i32(is);
    if (v < 0) throw IoError("tensor header has negative dimension");
    d = v;
  }
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * static_cast<std::int64_t>(sizeof(double))));
  if (!is) throw IoError("truncated tensor stream while reading payload");
  return t;
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  write_tensor(os, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path);
  return read_tensor(is);
}

}  // namespace blockgcn
