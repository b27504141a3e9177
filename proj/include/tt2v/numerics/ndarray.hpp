#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <memory>
#include <vector>

#include "tt2v/common.hpp"

namespace tt2v::num {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

inline Index shape_size(const Shape& s) {
  Index n = 1;
  for (Index d : s) n *= d;
  return n;
}

// Dense row-major array of doubles. Rank 0 (scalar) through rank 3 are used
// throughout; the storage is shared, so copies are cheap and a constructed
// array is treated as an immutable value. Writable access exists only for
// filling a freshly allocated array.
class NDArray {
 public:
  NDArray() = default;

  static NDArray uninit(Shape shape) {
    NDArray a;
    a.shape_ = std::move(shape);
    for (Index d : a.shape_)
      if (d <= 0) throw DimensionError("NDArray: extents must be positive");
    a.data_ = std::make_shared<Storage>(shape_size(a.shape_));
    return a;
  }

  static NDArray zeros(Shape shape) {
    NDArray a = uninit(std::move(shape));
    a.data_->setZero();
    return a;
  }

  static NDArray full(Shape shape, Scalar v) {
    NDArray a = uninit(std::move(shape));
    a.data_->setConstant(v);
    return a;
  }

  static NDArray scalar(Scalar v) { return full({}, v); }

  static NDArray from_vector(Shape shape, std::vector<Scalar> values) {
    NDArray a = uninit(std::move(shape));
    if (static_cast<Index>(values.size()) != a.size())
      throw DimensionError("NDArray: value count does not match shape");
    std::copy(values.begin(), values.end(), a.data_->data());
    return a;
  }

  bool valid() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  Index dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  Index size() const { return data_ ? data_->size() : 0; }

  const Storage& flat() const { return *data_; }
  Storage& flat_mutable() { return *data_; }
  const Scalar* data() const { return data_->data(); }
  Scalar* mutable_data() { return data_->data(); }

  Scalar operator[](Index i) const { return (*data_)(i); }
  Scalar operator()(Index i) const { return (*data_)(i); }
  Scalar operator()(Index i, Index j) const { return (*data_)(i * dim(1) + j); }
  Scalar operator()(Index i, Index j, Index k) const {
    return (*data_)((i * dim(1) + j) * dim(2) + k);
  }

  Scalar item() const {
    if (size() != 1) throw UsageError("NDArray::item: array is not a scalar");
    return (*data_)(0);
  }

  // Same buffer under a new shape; sizes must agree.
  NDArray reshaped(Shape shape) const {
    if (shape_size(shape) != size())
      throw DimensionError("NDArray::reshaped: size mismatch");
    NDArray a;
    a.shape_ = std::move(shape);
    a.data_ = data_;
    return a;
  }

  bool all_finite() const { return data_ ? data_->isFinite().all() : true; }

 private:
  Shape shape_;
  std::shared_ptr<Storage> data_;
};

}  // namespace tt2v::num
