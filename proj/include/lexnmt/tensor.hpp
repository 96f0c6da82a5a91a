// Dense row-major tensor of floating-point values. Rank 1 and 2 cover
// everything the toolkit needs; shapes are checked at construction.
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace lexnmt {

// Global switch for expensive sanity checks (finite values, log/exp domains).
inline bool& debug_checks() {
  static bool enabled = false;
  return enabled;
}

inline std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(check_shape(shape_), T(0));
  }

  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (check_shape(shape_) != static_cast<std::int64_t>(data_.size())) {
      throw std::invalid_argument("tensor data length " +
                                  std::to_string(data_.size()) +
                                  " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(i); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }

  // Rows/cols view: rank-1 tensors behave as a single row.
  int rows() const { return rank() <= 1 ? 1 : shape_[0]; }
  int cols() const {
    return rank() == 0 ? 0 : shape_[rank() - 1];
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::int64_t i) { return data_[i]; }
  T operator[](std::int64_t i) const { return data_[i]; }

  T& at(int r, int c) { return data_[static_cast<std::int64_t>(r) * cols() + c]; }
  T at(int r, int c) const { return data_[static_cast<std::int64_t>(r) * cols() + c]; }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void assert_finite(const char* what) const {
    if (!debug_checks()) return;
    for (T v : data_) {
      if (!std::isfinite(v)) {
        throw std::runtime_error(std::string("non-finite value in ") + what);
      }
    }
  }

 private:
  static std::int64_t check_shape(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) {
        throw std::invalid_argument("non-positive dimension in shape " +
                                    shape_str(shape));
      }
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

}  // namespace lexnmt
