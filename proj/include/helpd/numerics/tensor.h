#pragma once

#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "helpd/common.h"

namespace helpd {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

// Dense row-major array. Rank 0 is a scalar with one element.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> values);

  static Tensor scalar(Real v) { return Tensor(Shape{}, std::vector<Real>{v}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<Real>> rows);
  static Tensor vector(std::initializer_list<Real> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  // Rank-2 element access.
  Real& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  Real at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }
  std::span<Real> row(std::size_t r);
  std::span<const Real> row(std::size_t r) const;

  // Value of a single-element tensor.
  Real item() const;

  // Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const;

  void fill(Real v);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

}  // namespace helpd
