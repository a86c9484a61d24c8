#include "selbias/quadrature.hpp"

#include <array>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "selbias/error.hpp"

namespace selbias {

namespace {

struct LegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;  // sum to 2
};

LegendreRule legendre_rule(int order) {
  switch (order) {
    case 1:
      return {{0.0}, {2.0}};
    case 2: {
      const double x = 1.0 / std::sqrt(3.0);
      return {{-x, x}, {1.0, 1.0}};
    }
    case 3: {
      const double x = std::sqrt(0.6);
      return {{-x, 0.0, x}, {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0}};
    }
    case 4: {
      const double inner = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(1.2));
      const double outer = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(1.2));
      const double w_inner = (18.0 + std::sqrt(30.0)) / 36.0;
      const double w_outer = (18.0 - std::sqrt(30.0)) / 36.0;
      return {{-outer, -inner, inner, outer},
              {w_outer, w_inner, w_inner, w_outer}};
    }
    case 5: {
      const double a = std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
      const double b = std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
      const double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 900.0;
      const double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 900.0;
      return {{-b, -a, 0.0, a, b}, {wb, wa, 128.0 / 225.0, wa, wb}};
    }
    default:
      throw Error(ErrorKind::kInvalidParams,
                  "Gauss-Legendre order must be in 1..5");
  }
}

}  // namespace

QuadratureGrid QuadratureGrid::composite_gauss_legendre(int panels,
                                                        int order) {
  if (panels < 1) {
    throw Error(ErrorKind::kInvalidParams, "quadrature needs >= 1 panel");
  }
  const LegendreRule rule = legendre_rule(order);
  QuadratureGrid grid;
  grid.nodes.reserve(static_cast<std::size_t>(panels) * order);
  grid.weights.reserve(grid.nodes.capacity());
  const double h = 1.0 / panels;
  for (int p = 0; p < panels; ++p) {
    const double mid = (p + 0.5) * h;
    for (int i = 0; i < order; ++i) {
      grid.nodes.push_back(mid + 0.5 * h * rule.nodes[i]);
      grid.weights.push_back(0.5 * h * rule.weights[i]);
    }
  }
  return grid;
}

QuadratureGrid QuadratureGrid::midpoint(int size) {
  if (size < 1) {
    throw Error(ErrorKind::kInvalidParams, "quadrature needs >= 1 node");
  }
  QuadratureGrid grid;
  grid.nodes.resize(size);
  grid.weights.assign(size, 1.0 / size);
  for (int i = 0; i < size; ++i) grid.nodes[i] = (i + 0.5) / size;
  return grid;
}

double integrate_adaptive(const std::function<double(double)>& f,
                          double abs_tol) {
  double error = 0.0;
  double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      f, 0.0, 1.0, 20, 1e-13, &error);
  if (!std::isfinite(value) || error > abs_tol) {
    // Endpoint singularities (beta shapes below one) suit tanh-sinh better.
    boost::math::quadrature::tanh_sinh<double> ts;
    try {
      value = ts.integrate(f, 0.0, 1.0, 1e-12, &error);
    } catch (const std::exception&) {
      value = std::numeric_limits<double>::quiet_NaN();
    }
  }
  if (!std::isfinite(value) || error > abs_tol) {
    std::ostringstream os;
    os << "adaptive quadrature error estimate " << error << " exceeds "
       << abs_tol;
    throw Error(ErrorKind::kQuadratureFailure, os.str());
  }
  return value;
}

}  // namespace selbias
