#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace sparsecut {

class SeededRng;

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

// Dense row-major array of doubles with an explicit shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor filled(Shape shape, double value);
  static Tensor identity(std::size_t n);
  // Rows of equal length; an empty list gives a 0x0 tensor.
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor randn(Shape shape, SeededRng& rng, double stddev = 1.0);

  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }

  // Matrix views; require rank 2.
  [[nodiscard]] std::size_t rows() const;
  [[nodiscard]] std::size_t cols() const;

  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }
  [[nodiscard]] const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& operator()(std::size_t a, std::size_t r, std::size_t c) {
    return data_[(a * shape_[1] + r) * shape_[2] + c];
  }
  double operator()(std::size_t a, std::size_t r, std::size_t c) const {
    return data_[(a * shape_[1] + r) * shape_[2] + c];
  }

  [[nodiscard]] std::span<double> row(std::size_t r);
  [[nodiscard]] std::span<const double> row(std::size_t r) const;

  // Leading-axis slice of a rank-3 tensor as a matrix copy.
  [[nodiscard]] Tensor slice(std::size_t index) const;
  void set_slice(std::size_t index, const Tensor& matrix);

  [[nodiscard]] Tensor reshaped(Shape shape) const;

  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Multiply-accumulate tally. One counter per measurement context; nothing in
// the library touches a global counter.
struct MacCounter {
  std::uint64_t count = 0;
  bool enabled = true;

  void add(std::uint64_t macs) {
    if (enabled) count += macs;
  }
  void reset() { count = 0; }
};

inline constexpr double kLayerNormEps = 1e-5;

// Counts m*k*n into `counter` when given and enabled.
Tensor matmul(const Tensor& a, const Tensor& b, MacCounter* counter = nullptr);

// a * b^T without materializing the transpose; counts m*k*n.
Tensor matmul_transposed(const Tensor& a, const Tensor& b, MacCounter* counter = nullptr);

Tensor transpose(const Tensor& a);

// Row-wise softmax, stabilized by subtracting each row's maximum.
Tensor softmax_rows(const Tensor& a);

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

// softmax(q k^T / sqrt(d)) v. With `causal`, query r sees keys 0..r only and
// m_q must equal m_k. `weights_out`, when non-null, receives the realized
// attention probabilities (m_q x m_k).
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal,
                            MacCounter* counter = nullptr, Tensor* weights_out = nullptr);

// Splits the columns of q, k, v into `heads` equal groups and runs
// scaled_dot_attention on each; head outputs are concatenated column-wise.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads, bool causal, MacCounter* counter = nullptr,
                            std::vector<Tensor>* weights_out = nullptr);

// tanh approximation of GELU and its derivative.
double gelu(double x);
double gelu_grad(double x);
Tensor gelu(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor subtract(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
void add_inplace(Tensor& a, const Tensor& b);
// Adds a length-cols vector to every row.
Tensor add_row_vector(const Tensor& a, const Tensor& v);
// Sum over rows; result has length cols.
Tensor column_sums(const Tensor& a);

Tensor concat_rows(const Tensor& top, const Tensor& bottom);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
void set_cols(Tensor& dst, std::size_t begin, const Tensor& src);

// Stacks equal-shape matrices along a new leading axis.
Tensor stack(std::span<const Tensor> matrices);
// Concatenates slices [begin, end) of a rank-3 tensor along the row axis.
Tensor flatten_slices(const Tensor& a, std::size_t begin, std::size_t end);

double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace sparsecut
