#include "cmt/tensor.hpp"

#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "cmt/errors.hpp"

namespace cmt {

std::int64_t Shape::elements() const {
  std::int64_t n = 1;
  for (std::int64_t d : dims) n *= d;
  return n;
}

bool Shape::valid() const {
  if (dims.empty()) return false;
  for (std::int64_t d : dims)
    if (d < 1) return false;
  return true;
}

std::string Shape::str() const {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims[i]);
  }
  return s.empty() ? "scalar" : s;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  if (!shape_.valid())
    throw std::invalid_argument("tensor: invalid shape " + shape_.str() +
                                " (every extent must be >= 1)");
  data_.assign(static_cast<std::size_t>(shape_.elements()), fill);
}

std::int64_t Tensor::flat_index(std::initializer_list<std::int64_t> idx) const {
  if (static_cast<std::int64_t>(idx.size()) != shape_.rank())
    throw std::out_of_range("tensor: index rank " + std::to_string(idx.size()) +
                            " does not match shape " + shape_.str());
  std::int64_t flat = 0;
  std::int64_t axis = 0;
  for (std::int64_t i : idx) {
    if (i < 0 || i >= shape_[axis])
      throw std::out_of_range("tensor: index " + std::to_string(i) + " out of bounds for axis " +
                              std::to_string(axis) + " of shape " + shape_.str());
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape new_shape) const {
  if (new_shape.elements() != size() || !new_shape.valid())
    throw std::invalid_argument("tensor: cannot reshape " + shape_.str() + " to " +
                                new_shape.str());
  Tensor r = *this;
  r.shape_ = std::move(new_shape);
  return r;
}

Tensor map_binary(const Tensor& a, const Tensor& b, BinaryOp op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("map_binary: shape mismatch " + a.shape().str() + " vs " +
                                b.shape().str());
  Tensor out(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const std::int64_t n = a.size();
  switch (op) {
    case BinaryOp::add:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case BinaryOp::sub:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      break;
    case BinaryOp::mul:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw std::invalid_argument("matmul: expected 2-D tensors, got " + a.shape().str() + " and " +
                                b.shape().str());
  const std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw std::invalid_argument("matmul: inner dimensions disagree, " + a.shape().str() + " vs " +
                                b.shape().str());
  Tensor c(Shape{m, n}, 0.0);
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      double* crow = pc + i * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

namespace {

constexpr char kMagic[4] = {'C', 'M', 'T', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError("tensor record: truncated u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw IoError("tensor record: truncated f64 payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::int64_t i = 0; i < t.rank(); ++i)
    put_u32(out, static_cast<std::uint32_t>(t.dim(i)));
  const double* p = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i) put_f64(out, p[i]);
  if (!out) throw IoError("tensor record: write failed");
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("tensor record: bad magic (expected CMTT)");
  std::uint32_t rank = get_u32(in);
  if (rank < 1 || rank > 8)
    throw IoError("tensor record: unreasonable rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) {
    std::uint32_t d = get_u32(in);
    if (d < 1) throw IoError("tensor record: zero extent");
    shape.dims.push_back(static_cast<std::int64_t>(d));
  }
  Tensor t(shape);
  double* p = t.data();
  for (std::int64_t i = 0; i < t.size(); ++i) p[i] = get_f64(in);
  return t;
}

}  // namespace cmt
