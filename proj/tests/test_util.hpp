#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "czsl/rng.hpp"
#include "czsl/tensor.hpp"

namespace czsl::testutil {

inline double rel_gap(double a, double b) {
  return std::fabs(a - b) / std::max({1.0, std::fabs(a), std::fabs(b)});
}

inline Tensor random_tensor(Rng& rng, idx_t rows, idx_t cols,
                            bool requires_grad = false, double scale = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(rows * cols));
  for (double& x : v) x = rng.normal(0.0, scale);
  return Tensor::from({rows, cols}, std::move(v), requires_grad);
}

// Central finite differences (h = 1e-5 by default) on every entry of every
// parameter. `forward` must recompute the scalar loss from the parameters'
// current values without recording gradients. Analytic gradients must already
// be populated (run backward before calling).
inline void expect_grads_match_fd(const std::function<double()>& forward,
                                  std::vector<Tensor> params,
                                  double h = 1e-5, double tol = 1e-4) {
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    ASSERT_TRUE(p.has_grad()) << "parameter " << pi << " has no gradient";
    const std::vector<double> analytic = p.grad();
    auto& vals = p.raw_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + h;
      const double up = forward();
      vals[i] = keep - h;
      const double down = forward();
      vals[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      EXPECT_LE(rel_gap(analytic[i], numeric), tol)
          << "parameter " << pi << " entry " << i << ": analytic "
          << analytic[i] << " vs finite-difference " << numeric;
    }
  }
}

}  // namespace czsl::testutil
