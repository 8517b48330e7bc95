#ifndef MCG_TESTS_HELPERS_HPP
#define MCG_TESTS_HELPERS_HPP

#include <functional>

#include "mcg/tensor.hpp"

namespace mcg::testing {

// Central-difference gradient of a scalar function of a flat array.
inline Arr fd_grad(const std::function<double(const Arr&)>& f, const Arr& x,
                   double h = 1e-6) {
  Arr g(x.size());
  for (long i = 0; i < x.size(); ++i) {
    Arr xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    g[i] = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

inline double max_abs_diff(const Arr& a, const Arr& b) {
  return (a - b).abs().maxCoeff();
}

}  // namespace mcg::testing

#endif
