#pragma once

#include <functional>

#include "selbias/error.hpp"
#include <vector>

namespace selbias {

// Fixed open rule on [0, 1]; no node sits on an endpoint.
struct QuadratureGrid {
  std::vector<double> nodes;
  std::vector<double> weights;

  // Composite Gauss-Legendre: `panels` equal panels, `order` nodes each
  // (order in 1..5). The default 128 x 4 grid has 512 nodes and integrates
  // polynomials of degree <= 7 exactly.
  static QuadratureGrid composite_gauss_legendre(int panels = 128,
                                                 int order = 4);
  // Composite midpoint rule with `size` nodes.
  static QuadratureGrid midpoint(int size);
  static QuadratureGrid standard() { return composite_gauss_legendre(); }

  std::size_t size() const { return nodes.size(); }

  template <typename F>
  double integrate(F&& f) const {
    double total = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      total += weights[i] * f(nodes[i]);
    }
    return total;
  }
};

// Adaptive Gauss-Kronrod on [0, 1]. Throws Error{kQuadratureFailure} when the
// error estimate exceeds `abs_tol`.
double integrate_adaptive(const std::function<double(double)>& f,
                          double abs_tol = 1e-8);

}  // namespace selbias
