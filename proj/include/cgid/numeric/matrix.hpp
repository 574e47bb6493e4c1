#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace cgid {

// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void append_row(std::span<const double> values);
  void fill(double value);

  bool operator==(const DenseMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
// aᵀ · b
DenseMatrix matmul_at(const DenseMatrix& a, const DenseMatrix& b);
// a · bᵀ
DenseMatrix matmul_bt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);

DenseMatrix select_rows(const DenseMatrix& m, std::span<const std::size_t> indices);
DenseMatrix vstack(const DenseMatrix& top, const DenseMatrix& bottom);

void add_row_vector(DenseMatrix& m, std::span<const double> v);
void add_scaled(DenseMatrix& into, const DenseMatrix& from, double scale = 1.0);
void scale_in_place(DenseMatrix& m, double factor);
std::vector<double> column_sums(const DenseMatrix& m);
std::vector<double> row_sums(const DenseMatrix& m);
bool all_finite(const DenseMatrix& m);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);

struct NormalizedVector {
  std::vector<double> values;
  bool degenerate = false;  // input was the zero vector
};

NormalizedVector l2_normalize(std::span<const double> v);

// Row-wise L2 normalization; zero rows stay zero.
DenseMatrix l2_normalize_rows(const DenseMatrix& m);

// Gradient w.r.t. `raw` given the gradient w.r.t. l2_normalize_rows(raw).
DenseMatrix l2_normalize_rows_backward(const DenseMatrix& raw, const DenseMatrix& grad_normalized);

}  // namespace cgid
