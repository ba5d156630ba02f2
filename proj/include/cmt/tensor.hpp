#pragma once

#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <vector>

namespace cmt {

/// Dimension extents for a dense tensor. Convention for 4-D activations is
/// batch x channels x height x width (NCHW), row-major.
struct Shape {
  std::vector<std::int64_t> dims;

  Shape() = default;
  Shape(std::initializer_list<std::int64_t> d) : dims(d) {}
  explicit Shape(std::vector<std::int64_t> d) : dims(std::move(d)) {}

  std::int64_t rank() const { return static_cast<std::int64_t>(dims.size()); }
  std::int64_t operator[](std::int64_t i) const { return dims[static_cast<std::size_t>(i)]; }
  std::int64_t elements() const;
  bool valid() const;  // every extent >= 1
  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) { return a.dims == b.dims; }
  friend bool operator!=(const Shape& a, const Shape& b) { return !(a == b); }
};

/// Dense N-dimensional array of doubles, row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return shape_.rank(); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::int64_t dim(std::int64_t i) const { return shape_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::int64_t flat) { return data_[static_cast<std::size_t>(flat)]; }
  double operator[](std::int64_t flat) const { return data_[static_cast<std::size_t>(flat)]; }

  // Multi-index accessors for the common ranks. Hot kernels index data() directly.
  double& at(std::int64_t i) { return data_[static_cast<std::size_t>(check_flat(flat_index({i})))]; }
  double& at(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(check_flat(flat_index({i, j})))]; }
  double& at(std::int64_t i, std::int64_t j, std::int64_t k) { return data_[static_cast<std::size_t>(check_flat(flat_index({i, j, k})))]; }
  double& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) { return data_[static_cast<std::size_t>(check_flat(flat_index({i, j, k, l})))]; }
  double at(std::int64_t i) const { return const_cast<Tensor*>(this)->at(i); }
  double at(std::int64_t i, std::int64_t j) const { return const_cast<Tensor*>(this)->at(i, j); }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const { return const_cast<Tensor*>(this)->at(i, j, k); }
  double at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const { return const_cast<Tensor*>(this)->at(i, j, k, l); }

  /// Row-major flat index; throws std::out_of_range if any index is out of bounds.
  std::int64_t flat_index(std::initializer_list<std::int64_t> idx) const;

  void fill(double v);
  Tensor reshaped(Shape new_shape) const;  // same element count

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::int64_t check_flat(std::int64_t flat) const { return flat; }
  Shape shape_;
  std::vector<double> data_;
};

enum class BinaryOp { add, sub, mul };

Tensor map_binary(const Tensor& a, const Tensor& b, BinaryOp op);
inline Tensor add(const Tensor& a, const Tensor& b) { return map_binary(a, b, BinaryOp::add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return map_binary(a, b, BinaryOp::sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return map_binary(a, b, BinaryOp::mul); }

/// Standard matrix product of 2-D tensors, m x k times k x n.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Flat binary tensor record: magic "CMTT", u32 rank, u32 extents, then raw
/// little-endian 64-bit floats. Used by checkpoint files.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

}  // namespace cmt
