#include "hiernet/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "hiernet/error.hpp"

namespace hiernet {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Tensor Tensor::from_row(std::span<const double> values) {
  return Tensor(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::row_copy(std::size_t r) const { return from_row(row(r)); }

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: row count mismatch");
  Tensor out(a.cols(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto a_row = a.row(r);
    auto b_row = b.row(r);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double ai = a_row[i];
      if (ai == 0.0) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += ai * b_row[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: column count mismatch");
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto a_row = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto b_row = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a_row[k] * b_row[k];
      out(i, j) = acc;
    }
  }
  return out;
}

void add_row_broadcast(Tensor& m, const Tensor& row_vector) {
  if (row_vector.rows() != 1 || row_vector.cols() != m.cols()) {
    throw ShapeError("bias broadcast: width mismatch");
  }
  auto bias = row_vector.row(0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto dst = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] += bias[c];
  }
}

Tensor column_sums(const Tensor& m) {
  Tensor out(1, m.cols());
  auto dst = out.row(0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] += src[c];
  }
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.rows() != src.rows() || dst.cols() != src.cols()) {
    throw ShapeError("add: shape mismatch");
  }
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace hiernet
