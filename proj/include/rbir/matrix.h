#ifndef RBIR_MATRIX_H_
#define RBIR_MATRIX_H_

#include <cstddef>
#include <span>
#include <vector>

#include "rbir/errors.h"

namespace rbir {

// Read-only row-major view over a dense matrix.
template <typename T>
class MatrixView {
 public:
  MatrixView() = default;
  MatrixView(std::span<const T> data, size_t dim)
      : data_(data), dim_(dim), rows_(dim == 0 ? 0 : data.size() / dim) {
    if (dim == 0 || data.size() % dim != 0) {
      Fail(ErrorCode::kDimensionMismatch,
           "matrix data size is not a multiple of the row dimension");
    }
  }
  MatrixView(const std::vector<T>& data, size_t dim)
      : MatrixView(std::span<const T>(data), dim) {}

  size_t rows() const { return rows_; }
  size_t dim() const { return dim_; }
  bool empty() const { return rows_ == 0; }
  std::span<const T> row(size_t i) const {
    return data_.subspan(i * dim_, dim_);
  }
  std::span<const T> data() const { return data_; }

 private:
  std::span<const T> data_;
  size_t dim_ = 0;
  size_t rows_ = 0;
};

// Both arguments are contiguous ranges (span or vector) of arithmetic type.
template <typename RA, typename RB>
double Dot(const RA& a, const RB& b) {
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += double(a[i]) * double(b[i]);
  return sum;
}

template <typename RA, typename RB>
double SquaredL2(const RA& a, const RB& b) {
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    sum += d * d;
  }
  return sum;
}

}  // namespace rbir

#endif  // RBIR_MATRIX_H_
