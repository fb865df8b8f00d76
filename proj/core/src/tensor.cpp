#include "gafnet/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "gafnet/error.hpp"

namespace gafnet {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (std::size_t d : shape_)
    if (d == 0) throw Error(ErrorKind::kShapeMismatch, "zero-sized dimension in " + shape_string(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    throw Error(ErrorKind::kShapeMismatch,
                "shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) + " values");
}

Tensor Tensor::vector(std::vector<double> data) {
  const std::size_t n = data.size();
  return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> data) {
  return Tensor({rows, cols}, std::vector<double>(data));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_)
    throw Error(ErrorKind::kShapeMismatch, shape_string(shape_) + " += " + shape_string(other.shape_));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) {
  a += b;
  return a;
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected)
    throw Error(ErrorKind::kShapeMismatch,
                std::string(what) + ": expected " + shape_string(expected) + ", got " + shape_string(t.shape()));
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank)
    throw Error(ErrorKind::kShapeMismatch, std::string(what) + ": expected rank " + std::to_string(rank) +
                                               ", got " + shape_string(t.shape()));
}

}  // namespace gafnet
