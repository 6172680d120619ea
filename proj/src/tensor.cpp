#include "sparsecut/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

namespace {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_to_string(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string(what) + " produced a non-finite value");
}

}  // namespace

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) return Tensor({0, 0});
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::randn(Shape shape, SeededRng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = rng.normal(0.0, stddev);
  return t;
}

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols");
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t width = cols();
  return std::span<double>(data_).subspan(r * width, width);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t width = cols();
  return std::span<const double>(data_).subspan(r * width, width);
}

Tensor Tensor::slice(std::size_t index) const {
  require_rank(*this, 3, "slice");
  if (index >= shape_[0]) throw UsageError("slice index out of range");
  const std::size_t stride = shape_[1] * shape_[2];
  auto first = data_.begin() + static_cast<std::ptrdiff_t>(index * stride);
  return Tensor({shape_[1], shape_[2]},
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(stride)));
}

void Tensor::set_slice(std::size_t index, const Tensor& matrix) {
  require_rank(*this, 3, "set_slice");
  if (index >= shape_[0]) throw UsageError("set_slice index out of range");
  if (matrix.shape() != Shape{shape_[1], shape_[2]}) {
    throw DimensionError("set_slice: matrix " + shape_to_string(matrix.shape()) +
                         " does not fit " + shape_to_string(shape_));
  }
  std::copy(matrix.data_.begin(), matrix.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(index * matrix.size()));
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Tensor matmul(const Tensor& a, const Tensor& b, MacCounter* counter) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner extents disagree, " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  if (counter) counter->add(static_cast<std::uint64_t>(m) * k * n);
  require_finite(out, "matmul");
  return out;
}

Tensor matmul_transposed(const Tensor& a, const Tensor& b, MacCounter* counter) {
  require_rank(a, 2, "matmul_transposed");
  require_rank(b, 2, "matmul_transposed");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_transposed: inner extents disagree, " +
                         shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()) + "^T");
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out(i, j) = acc;
    }
  }
  if (counter) counter->add(static_cast<std::uint64_t>(m) * k * n);
  require_finite(out, "matmul_transposed");
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  Tensor out({a.cols(), a.rows()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  require_rank(a, 2, "softmax_rows");
  require_finite(a, "softmax_rows input");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto dst = out.row(i);
    if (in.empty()) continue;
    const double peak = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      dst[j] = std::exp(in[j] - peak);
      total += dst[j];
    }
    for (double& x : dst) x /= total;
  }
  return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  require_rank(a, 2, "layer_norm");
  const std::size_t n = a.cols();
  if (n == 0) throw UsageError("layer_norm: rows must have at least one element");
  if (gain.size() != n || bias.size() != n) {
    throw DimensionError("layer_norm: gain/bias length must equal " + std::to_string(n));
  }
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto dst = out.row(i);
    double mean = 0.0;
    for (double x : in) mean += x;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : in) var += (x - mean) * (x - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) dst[j] = (in[j] - mean) * inv * gain[j] + bias[j];
  }
  require_finite(out, "layer_norm");
  return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal,
                            MacCounter* counter, Tensor* weights_out) {
  require_rank(q, 2, "attention q");
  require_rank(k, 2, "attention k");
  require_rank(v, 2, "attention v");
  if (q.cols() != k.cols()) throw DimensionError("attention: q and k widths differ");
  if (k.rows() != v.rows()) throw DimensionError("attention: k and v lengths differ");
  if (causal && q.rows() != k.rows()) {
    throw UsageError("attention: causal mask requires equal query and key lengths");
  }
  if (k.rows() == 0) throw UsageError("attention: no keys");
  Tensor scores = matmul_transposed(q, k, counter);
  const double inv_sqrt_d = q.cols() ? 1.0 / std::sqrt(static_cast<double>(q.cols())) : 1.0;
  for (double& x : scores.data()) x *= inv_sqrt_d;
  Tensor probs(scores.shape());
  if (causal) {
    // Masked entries get exactly zero weight.
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      auto in = scores.row(i);
      auto dst = probs.row(i);
      double peak = in[0];
      for (std::size_t j = 1; j <= i; ++j) peak = std::max(peak, in[j]);
      double total = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        dst[j] = std::exp(in[j] - peak);
        total += dst[j];
      }
      for (std::size_t j = 0; j <= i; ++j) dst[j] /= total;
    }
  } else {
    probs = softmax_rows(scores);
  }
  Tensor out = matmul(probs, v, counter);
  if (weights_out) *weights_out = std::move(probs);
  return out;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            std::size_t heads, bool causal, MacCounter* counter,
                            std::vector<Tensor>* weights_out) {
  if (heads == 0 || q.cols() % heads != 0 || v.cols() % heads != 0) {
    throw ConfigError("attention width must be divisible by head count");
  }
  if (heads == 1) {
    Tensor w;
    Tensor out = scaled_dot_attention(q, k, v, causal, counter, weights_out ? &w : nullptr);
    if (weights_out) *weights_out = {std::move(w)};
    return out;
  }
  const std::size_t dq = q.cols() / heads, dv = v.cols() / heads;
  Tensor out({q.rows(), v.cols()});
  if (weights_out) weights_out->clear();
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor w;
    Tensor head = scaled_dot_attention(slice_cols(q, h * dq, dq), slice_cols(k, h * dq, dq),
                                       slice_cols(v, h * dv, dv), causal, counter,
                                       weights_out ? &w : nullptr);
    set_cols(out, h * dv, head);
    if (weights_out) weights_out->push_back(std::move(w));
  }
  return out;
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double inner = c * (x + 0.044715 * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

Tensor gelu(const Tensor& a) {
  Tensor out = a;
  for (double& x : out.data()) x = gelu(x);
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

Tensor subtract(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (double& x : out.data()) x *= factor;
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

Tensor add_row_vector(const Tensor& a, const Tensor& v) {
  require_rank(a, 2, "add_row_vector");
  if (v.size() != a.cols()) throw DimensionError("add_row_vector: length mismatch");
  Tensor out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += v[j];
  }
  return out;
}

Tensor column_sums(const Tensor& a) {
  require_rank(a, 2, "column_sums");
  Tensor out({a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out[j] += r[j];
  }
  return out;
}

Tensor concat_rows(const Tensor& top, const Tensor& bottom) {
  require_rank(top, 2, "concat_rows");
  require_rank(bottom, 2, "concat_rows");
  if (top.cols() != bottom.cols()) throw DimensionError("concat_rows: widths differ");
  std::vector<double> data(top.values());
  data.insert(data.end(), bottom.values().begin(), bottom.values().end());
  return Tensor({top.rows() + bottom.rows(), top.cols()}, std::move(data));
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_rows");
  if (begin + count > a.rows()) throw UsageError("slice_rows: range out of bounds");
  const auto first = a.values().begin() + static_cast<std::ptrdiff_t>(begin * a.cols());
  return Tensor({count, a.cols()},
                std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * a.cols())));
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  if (begin + count > a.cols()) throw UsageError("slice_cols: range out of bounds");
  Tensor out({a.rows(), count});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
  return out;
}

void set_cols(Tensor& dst, std::size_t begin, const Tensor& src) {
  require_rank(dst, 2, "set_cols");
  require_rank(src, 2, "set_cols");
  if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
    throw DimensionError("set_cols: block does not fit");
  }
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) = src(i, j);
}

Tensor stack(std::span<const Tensor> matrices) {
  if (matrices.empty()) throw UsageError("stack: nothing to stack");
  const Shape inner = matrices.front().shape();
  if (inner.size() != 2) throw DimensionError("stack: expected matrices");
  std::vector<double> data;
  data.reserve(matrices.size() * matrices.front().size());
  for (const Tensor& m : matrices) {
    if (m.shape() != inner) throw DimensionError("stack: shapes differ");
    data.insert(data.end(), m.values().begin(), m.values().end());
  }
  return Tensor({matrices.size(), inner[0], inner[1]}, std::move(data));
}

Tensor flatten_slices(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 3, "flatten_slices");
  if (begin > end || end > a.dim(0)) throw UsageError("flatten_slices: range out of bounds");
  const std::size_t stride = a.dim(1) * a.dim(2);
  const auto first = a.values().begin() + static_cast<std::ptrdiff_t>(begin * stride);
  const auto last = a.values().begin() + static_cast<std::ptrdiff_t>(end * stride);
  return Tensor({(end - begin) * a.dim(1), a.dim(2)}, std::vector<double>(first, last));
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sparsecut
