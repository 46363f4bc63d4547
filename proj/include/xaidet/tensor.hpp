#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "xaidet/checksum.hpp"

namespace xaidet {

/// Dense row-major tensor of arbitrary rank backed by an Eigen array.
/// Images are CHW, batches NCHW, vectors rank-1. Values are float unless
/// a test instantiates the double variant.
template <typename Scalar>
class BasicTensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BasicTensor() = default;

  explicit BasicTensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_ = Array::Zero(count(shape_));
  }

  static BasicTensor zeros(std::vector<int> shape) { return BasicTensor(std::move(shape)); }

  static BasicTensor full(std::vector<int> shape, Scalar v) {
    BasicTensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  static BasicTensor from_data(std::vector<int> shape, std::vector<Scalar> values) {
    BasicTensor t;
    t.shape_ = std::move(shape);
    if (static_cast<Eigen::Index>(values.size()) != count(t.shape_))
      throw std::invalid_argument("tensor data length does not match shape");
    t.data_ = Eigen::Map<const Array>(values.data(), static_cast<Eigen::Index>(values.size()));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Array& array() { return data_; }
  const Array& array() const { return data_; }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  /// Convenience indexer; row-major strides.
  Scalar& at(std::initializer_list<int> idx) { return data_[offset(idx)]; }
  Scalar at(std::initializer_list<int> idx) const { return data_[offset(idx)]; }

  bool same_shape(const BasicTensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const { return data_.isFinite().all(); }

  std::uint64_t checksum() const {
    Fnv64 f;
    for (int d : shape_) f.update_pod(d);
    f.update(data_.data(), static_cast<std::size_t>(data_.size()) * sizeof(Scalar));
    return f.digest();
  }

  static std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i) out += "x";
      out += std::to_string(s[i]);
    }
    return out + ")";
  }

 private:
  static Eigen::Index count(const std::vector<int>& s) {
    Eigen::Index n = 1;
    for (int d : s) {
      if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
      n *= d;
    }
    return n;
  }

  Eigen::Index offset(std::initializer_list<int> idx) const {
    Eigen::Index off = 0;
    std::size_t k = 0;
    for (int i : idx) {
      off = off * shape_[k] + i;
      ++k;
    }
    return off;
  }

  std::vector<int> shape_;
  Array data_;
};

using Tensor = BasicTensor<float>;

inline void require_shape(const Tensor& t, const std::vector<int>& expect, const char* what) {
  if (t.shape() != expect)
    throw std::invalid_argument(std::string(what) + ": expected shape " +
                                Tensor::shape_str(expect) + ", got " +
                                Tensor::shape_str(t.shape()));
}

// ---- expression-style free functions ----

inline Tensor operator+(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  out.array() = a.array() + b.array();
  return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  out.array() = a.array() - b.array();
  return out;
}

inline Tensor operator*(float s, const Tensor& a) {
  Tensor out(a.shape());
  out.array() = s * a.array();
  return out;
}

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  out.array() = a.array() * b.array();
  return out;
}

/// sign with sign(0) = 0.
inline Tensor sign(const Tensor& a) {
  Tensor out(a.shape());
  out.array() = (a.array() > 0.0f).cast<float>() - (a.array() < 0.0f).cast<float>();
  return out;
}

inline Tensor clamp(const Tensor& a, float lo, float hi) {
  Tensor out(a.shape());
  out.array() = a.array().min(hi).max(lo);
  return out;
}

inline Tensor clamp01(const Tensor& a) { return clamp(a, 0.0f, 1.0f); }

/// Clamp a - ref into the L-inf ball of radius eps around ref.
inline Tensor project_linf(const Tensor& a, const Tensor& ref, float eps) {
  Tensor out(a.shape());
  out.array() = a.array().min(ref.array() + eps).max(ref.array() - eps);
  return out;
}

inline float linf_dist(const Tensor& a, const Tensor& b) {
  return (a.array() - b.array()).abs().maxCoeff();
}

inline float l2_dist(const Tensor& a, const Tensor& b) {
  return std::sqrt(static_cast<float>(((a.array() - b.array()).template cast<double>().square()).sum()));
}

inline float max_abs(const Tensor& a) { return a.size() ? a.array().abs().maxCoeff() : 0.0f; }

inline float sum(const Tensor& a) { return a.array().sum(); }

inline float dot(const Tensor& a, const Tensor& b) { return (a.array() * b.array()).sum(); }

}  // namespace xaidet
