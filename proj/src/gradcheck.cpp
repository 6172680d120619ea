#include "sparsecut/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "sparsecut/errors.hpp"
#include "sparsecut/rng.hpp"

namespace sparsecut {

ScalarProbe::ScalarProbe(const Shape& shape, std::uint64_t seed) {
  SeededRng rng = SeededRng(seed).split(0x9b0be);
  projection_ = Tensor(shape);
  for (double& x : projection_.data()) x = rng.uniform(-1.0, 1.0);
}

double ScalarProbe::operator()(const Tensor& output) const {
  if (output.shape() != projection_.shape()) {
    throw DimensionError("probe expects " + shape_to_string(projection_.shape()) + ", got " +
                         shape_to_string(output.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) s += projection_[i] * output[i];
  return s;
}

Tensor finite_diff(const std::function<double()>& f, Tensor& param, double eps) {
  if (!(eps > 0.0)) throw UsageError("finite_diff: eps must be positive");
  Tensor grad(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + eps;
    const double up = f();
    param[i] = saved - eps;
    const double down = f();
    param[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff: function is non-finite near coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& at, double eps) {
  Tensor theta = at;
  return finite_diff([&] { return f(theta); }, theta, eps);
}

Comparison compare(const Tensor& analytic, const Tensor& numeric) {
  if (analytic.shape() != numeric.shape()) {
    throw DimensionError("compare: " + shape_to_string(analytic.shape()) + " vs " +
                         shape_to_string(numeric.shape()));
  }
  Comparison c;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i], n = numeric[i];
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
    if (i == 0 || rel > c.max_relative_error) {
      c.max_relative_error = rel;
      c.worst_index = i;
      c.analytic_at_worst = a;
      c.numeric_at_worst = n;
    }
  }
  return c;
}

namespace {

struct Target {
  std::string name;
  Tensor* value;
  const Tensor* analytic;
};

// Runs `visit` over every parameter and input with its analytic gradient,
// using scratch copies so the caller's tensors are untouched.
template <typename Visit>
void for_each_target(const AdapterBlock& block, const Tensor& x_low,
                     const std::optional<Tensor>& x_high, std::uint64_t probe_seed, Visit visit) {
  AdapterBlock work = block;
  Tensor low = x_low;
  std::optional<Tensor> high = x_high;

  AdapterCache cache;
  const FusedVisualTokens out = fuse(low, high, work, 0, nullptr, &cache);
  const ScalarProbe probe(out.z.shape(), probe_seed);
  AdapterGradients grads = fuse_backward(probe.projection(), cache, work);

  const auto objective = [&] { return probe(fuse(low, high, work).z); };

  std::vector<Target> targets;
  auto analytic_params = grads.block.parameters();
  auto params = work.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    targets.push_back({params[p].first, params[p].second, analytic_params[p].second});
  }
  targets.push_back({"x_low", &low, &grads.x_low});
  if (high) targets.push_back({"x_high", &*high, &grads.x_high});
  for (const Target& t : targets) visit(t, objective);
}

}  // namespace

std::vector<TensorCheck> gradcheck_adapter(const AdapterBlock& block, const Tensor& x_low,
                                           const std::optional<Tensor>& x_high,
                                           std::uint64_t probe_seed, double eps) {
  std::vector<TensorCheck> checks;
  for_each_target(block, x_low, x_high, probe_seed, [&](const Target& t, const auto& objective) {
    const Tensor numeric = finite_diff(objective, *t.value, eps);
    checks.push_back({t.name, t.value->size(), compare(*t.analytic, numeric)});
  });
  return checks;
}

ConvergenceCheck adapter_convergence(const AdapterBlock& block, const Tensor& x_low,
                                     const std::optional<Tensor>& x_high,
                                     std::uint64_t probe_seed, double eps) {
  ConvergenceCheck c;
  for_each_target(block, x_low, x_high, probe_seed, [&](const Target& t, const auto& objective) {
    c.error_at_eps = std::max(c.error_at_eps,
                              max_abs_diff(finite_diff(objective, *t.value, eps), *t.analytic));
    c.error_at_half_eps =
        std::max(c.error_at_half_eps,
                 max_abs_diff(finite_diff(objective, *t.value, eps / 2.0), *t.analytic));
  });
  return c;
}

void print_gradcheck_table(std::ostream& out, const std::vector<TensorCheck>& checks,
                           double tolerance) {
  out << std::left << std::setw(14) << "tensor" << std::right << std::setw(9) << "elements"
      << std::setw(16) << "max_rel_err" << "  status\n";
  for (const TensorCheck& c : checks) {
    out << std::left << std::setw(14) << c.name << std::right << std::setw(9) << c.elements
        << std::setw(16) << std::scientific << std::setprecision(3) << c.result.max_relative_error
        << std::defaultfloat << "  " << (c.passed(tolerance) ? "ok" : "FAIL") << '\n';
  }
}

}  // namespace sparsecut
