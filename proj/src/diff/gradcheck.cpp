#include "temp/diff/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace temp::diff {

GradCheckReport finite_difference_check(const std::function<Tensor()>& loss_graph, std::span<Tensor> params,
                                        const GradCheckOptions& options, const std::function<double()>& evaluate) {
  if (!(options.eps > 0.0f)) throw std::invalid_argument("finite_difference_check: eps must be positive");

  for (Tensor& p : params) p.zero_grad();
  Tensor loss = loss_graph();
  if (!std::isfinite(loss.item())) throw std::domain_error("finite_difference_check: non-finite loss");
  loss.backward();
  std::vector<std::vector<float>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    analytic.push_back(p.grad_or_zero());
    p.zero_grad();
  }

  auto eval = [&]() -> double {
    double f = evaluate ? evaluate() : static_cast<double>(loss_graph().item());
    if (!std::isfinite(f)) throw std::domain_error("finite_difference_check: non-finite loss");
    return f;
  };

  std::mt19937_64 rng(options.seed);
  GradCheckReport report;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].mutable_values();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.max_coordinates_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coordinates_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t j : coords) {
      const float original = values[j];
      const float up = original + options.eps;
      const float down = original - options.eps;
      values[j] = up;
      const double f_up = eval();
      values[j] = down;
      const double f_down = eval();
      values[j] = original;
      // The realised float step, not 2 * eps, is the denominator.
      const double numeric = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
      const double a = analytic[t][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      report.coordinates += 1;
      if (rel > report.max_rel_error || report.coordinates == 1) {
        report.max_rel_error = rel;
        report.worst_tensor = t;
        report.worst_index = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace temp::diff
