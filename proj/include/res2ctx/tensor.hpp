// res2ctx/tensor.hpp

// Copyright 2026  res2ctx contributors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <string>
#include <vector>

#include "res2ctx/common.hpp"
#include "res2ctx/rng.hpp"

namespace res2ctx {

using Index = Eigen::Index;

// Row-major dense matrix; matches the Tensor's flat row-major storage so a
// rank-2 tensor maps onto it without copying.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrMap = Eigen::Map<const Eigen::ArrayXd>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

std::string shape_str(const std::vector<Index>& shape);

// Dense tensor of IEEE-754 doubles in row-major order.  Rank 0 is a scalar,
// rank 1 a vector, rank 2 a channels-by-frames feature map, rank 3 a
// conv kernel bank (out, in, tap).  Extents are strictly positive.
class Tensor {
 public:
  Tensor() = default;  // empty; size() == 0 until assigned

  explicit Tensor(std::vector<Index> shape) { resize(std::move(shape)); }

  static Tensor zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<Index> shape, double v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t;
    t.shape_ = {};
    t.data_.resize(1);
    t.data_[0] = v;
    return t;
  }

  static Tensor from(std::vector<Index> shape, std::vector<double> vals) {
    Tensor t(std::move(shape));
    RC_CHECK(static_cast<Index>(vals.size()) == t.size(),
             "tensor data length " << vals.size() << " does not match shape "
                                   << shape_str(t.shape()));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = vals[static_cast<size_t>(i)];
    return t;
  }

  static Tensor vector(std::vector<double> vals) {
    const Index n = static_cast<Index>(vals.size());
    return from({n}, std::move(vals));
  }

  static Tensor matrix(Index rows, Index cols, std::vector<double> row_major) {
    return from({rows, cols}, std::move(row_major));
  }

  static Tensor randn(std::vector<Index> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = rng.gaussian();
    return t;
  }

  static Tensor rand_uniform(std::vector<Index> shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t.data_[i] = rng.uniform(lo, hi);
    return t;
  }

  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<Index>& shape() const { return shape_; }
  Index dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  ArrMap flat() { return ArrMap(data_.data(), data_.size()); }
  ConstArrMap flat() const { return ConstArrMap(data_.data(), data_.size()); }

  // Rank-2 view.  Rank 1 maps to an n-by-1 column, rank 0 to 1-by-1.
  MatMap mat() {
    auto [r, c] = mat_dims();
    return MatMap(data_.data(), r, c);
  }
  ConstMatMap mat() const {
    auto [r, c] = mat_dims();
    return ConstMatMap(data_.data(), r, c);
  }

  VecMap vec() {
    RC_CHECK(rank() <= 1, "vec() needs a rank-0/1 tensor, got " << shape_str(shape_));
    return VecMap(data_.data(), data_.size());
  }
  ConstVecMap vec() const {
    RC_CHECK(rank() <= 1, "vec() needs a rank-0/1 tensor, got " << shape_str(shape_));
    return ConstVecMap(data_.data(), data_.size());
  }

  double& at(Index flat_index) { return data_[flat_index]; }
  double at(Index flat_index) const { return data_[flat_index]; }

  double operator()(Index i) const { return data_[i]; }
  double operator()(Index i, Index j) const {
    return data_[i * shape_[1] + j];
  }
  double operator()(Index i, Index j, Index k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double& operator()(Index i) { return data_[i]; }
  double& operator()(Index i, Index j) { return data_[i * shape_[1] + j]; }
  double& operator()(Index i, Index j, Index k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  bool all_finite() const { return data_.allFinite(); }
  void set_zero() { data_.setZero(); }

  bool operator==(const Tensor& o) const {
    return shape_ == o.shape_ && (data_ == o.data_).all();
  }

 private:
  void resize(std::vector<Index> shape) {
    Index n = 1;
    for (Index d : shape) {
      RC_CHECK(d >= 1, "tensor extents must be positive, got " << shape_str(shape));
      n *= d;
    }
    shape_ = std::move(shape);
    data_ = Eigen::ArrayXd::Zero(n);
  }

  std::pair<Index, Index> mat_dims() const {
    RC_CHECK(rank() <= 2, "mat() needs rank <= 2, got " << shape_str(shape_));
    if (rank() == 2) return {shape_[0], shape_[1]};
    if (rank() == 1) return {shape_[0], 1};
    return {1, 1};
  }

  std::vector<Index> shape_;
  Eigen::ArrayXd data_;
};

}  // namespace res2ctx
