#include "spin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Core>

#include "spin/errors.hpp"

namespace spin {

Shape::Shape(std::initializer_list<std::size_t> dims) {
  if (dims.size() > kMaxRank) {
    throw DimensionError("tensor rank " + std::to_string(dims.size()) + " exceeds 3");
  }
  std::copy(dims.begin(), dims.end(), dims_.begin());
  rank_ = dims.size();
}

std::size_t Shape::numel() const {
  std::size_t n = 1;
  for (std::size_t a = 0; a < rank_; ++a) n *= dims_[a];
  return n;
}

std::size_t Shape::rows() const {
  if (rank_ == 0) return 1;
  return numel() / dims_[rank_ - 1];
}

std::size_t Shape::cols() const { return rank_ == 0 ? 1 : dims_[rank_ - 1]; }

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t a = 0; a < rank_; ++a) os << (a ? "," : "") << dims_[a];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw DimensionError("tensor data has " + std::to_string(data_.size()) +
                         " entries, shape " + shape_.str() + " needs " +
                         std::to_string(shape_.numel()));
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const auto n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor(Shape{rows, cols}, std::move(v));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != size()) {
    throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

bool Tensor::all_finite() const {
  return Eigen::Map<const Eigen::ArrayXd>(data_.data(), Eigen::Index(data_.size())).allFinite();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
  }
}

}  // namespace spin
