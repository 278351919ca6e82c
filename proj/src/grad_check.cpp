#include "strata/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace strata {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& params) {
  Graph graph;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(graph.leaf(p));
  return f(graph, vars).value()[0];
}

double central(const ScalarFn& f, std::vector<Tensor>& params, std::size_t p, std::size_t i,
               double eps) {
  const double original = params[p][i];
  params[p][i] = original + eps;
  const double up = evaluate(f, params);
  params[p][i] = original - eps;
  const double down = evaluate(f, params);
  params[p][i] = original;
  return (up - down) / (2.0 * eps);
}

}  // namespace

GradCheckResult finite_difference_check(const ScalarFn& f, std::vector<Tensor> params,
                                        double eps, Stencil stencil) {
  std::vector<Tensor> analytic;
  {
    Graph graph;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(graph.leaf(p));
    graph.backward(f(graph, vars));
    for (const auto& v : vars) analytic.push_back(v.grad());
  }

  GradCheckResult result;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (std::size_t i = 0; i < params[p].numel(); ++i) {
      const double numeric =
          stencil == Stencil::central
              ? central(f, params, p, i, eps)
              : (4.0 * central(f, params, p, i, eps / 2) - central(f, params, p, i, eps)) / 3.0;
      const double exact = analytic[p][i];
      const double denom = std::max({std::abs(exact), std::abs(numeric), 1e-8});
      const double err = std::abs(exact - numeric) / denom;
      ++result.coordinates;
      if (err > result.max_rel_error || std::isnan(err)) {
        result.max_rel_error = std::isnan(err) ? INFINITY : err;
        result.worst_param = p;
        result.worst_index = i;
        result.analytic = exact;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace strata
