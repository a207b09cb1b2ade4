#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace tfdiff {

// Dense row-major matrix of doubles. Computation runs in 64-bit; file formats
// store 32-bit floats (see signal_io).
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  size_t size() const { return data_.size(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

  std::span<double> row(int r) { return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)}; }
  std::span<const double> row(int r) const {
    return {data_.data() + static_cast<size_t>(r) * cols_, static_cast<size_t>(cols_)};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const Matrix& o) const = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

inline double mean_of(std::span<const double> xs) {
  double s = 0;
  for (double v : xs) s += v;
  return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

// population standard deviation (divisor n)
inline double stddev_of(std::span<const double> xs, double mean) {
  double s = 0;
  for (double v : xs) s += (v - mean) * (v - mean);
  return xs.empty() ? 0.0 : std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace tfdiff
