#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sparsecut/adapter.hpp"
#include "sparsecut/tensor.hpp"

namespace sparsecut {

inline constexpr double kDefaultFiniteDiffEps = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-5;

// s(y) = sum(p * y) for a fixed seeded projection p, so ds/dy = p.
class ScalarProbe {
 public:
  ScalarProbe(const Shape& shape, std::uint64_t seed);

  [[nodiscard]] double operator()(const Tensor& output) const;
  [[nodiscard]] const Tensor& projection() const { return projection_; }

 private:
  Tensor projection_;
};

// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every
// coordinate of `param`. `f` reads `param`; it is perturbed in place and
// restored exactly afterwards. Throws NumericError if f is ever non-finite.
Tensor finite_diff(const std::function<double()>& f, Tensor& param,
                   double eps = kDefaultFiniteDiffEps);

// Gradient of a function of one tensor at `at`.
Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& at,
                   double eps = kDefaultFiniteDiffEps);

struct Comparison {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

// Elementwise |a - n| / max(|a|, |n|, 1e-8), reduced by max.
Comparison compare(const Tensor& analytic, const Tensor& numeric);

struct TensorCheck {
  std::string name;
  std::size_t elements = 0;
  Comparison result;
  [[nodiscard]] bool passed(double tolerance = kGradcheckTolerance) const {
    return result.max_relative_error < tolerance;
  }
};

// Checks fuse_backward against central differences of probe(fuse(...)) for
// every block parameter and for both inputs.
std::vector<TensorCheck> gradcheck_adapter(const AdapterBlock& block, const Tensor& x_low,
                                           const std::optional<Tensor>& x_high,
                                           std::uint64_t probe_seed,
                                           double eps = kDefaultFiniteDiffEps);

// Largest |numeric - analytic| over every parameter and input at `eps`, and
// again at eps/2. Their ratio is about 4 when truncation error dominates.
struct ConvergenceCheck {
  double error_at_eps = 0.0;
  double error_at_half_eps = 0.0;
  [[nodiscard]] double ratio() const { return error_at_eps / error_at_half_eps; }
};

ConvergenceCheck adapter_convergence(const AdapterBlock& block, const Tensor& x_low,
                                     const std::optional<Tensor>& x_high,
                                     std::uint64_t probe_seed, double eps);

void print_gradcheck_table(std::ostream& out, const std::vector<TensorCheck>& checks,
                           double tolerance = kGradcheckTolerance);

}  // namespace sparsecut
