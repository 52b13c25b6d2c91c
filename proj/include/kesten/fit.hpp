#pragma once

// Unweighted least-squares fits used by the pressure and verdict estimators.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kesten/error.hpp"

namespace kesten {

struct FitResult {
  std::vector<double> coefficients;
  double rss = 0.0;  // residual sum of squares
};

/// Solves min ||X c - y||_2 for the column basis `columns` evaluated at xs.
template <class... Basis>
FitResult least_squares(std::span<const double> xs, std::span<const double> ys, Basis... basis) {
  constexpr std::size_t p = sizeof...(Basis);
  if (xs.size() != ys.size()) throw Error(ErrorKind::InvalidArgument, "fit: size mismatch");
  if (xs.size() < p) throw Error(ErrorKind::InvalidArgument, "fit: too few samples");
  Eigen::MatrixXd design(xs.size(), p);
  Eigen::VectorXd rhs(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::size_t j = 0;
    ((design(i, j++) = basis(xs[i])), ...);
    rhs(i) = ys[i];
  }
  Eigen::VectorXd c = design.colPivHouseholderQr().solve(rhs);
  FitResult out;
  out.coefficients.assign(c.data(), c.data() + c.size());
  out.rss = (design * c - rhs).squaredNorm();
  return out;
}

inline double one(double) { return 1.0; }
inline double ident(double x) { return x; }
inline double logarithm(double x) { return std::log(x); }

/// y ~ c0 + c1 x.
inline FitResult fit_line(std::span<const double> xs, std::span<const double> ys) {
  return least_squares(xs, ys, one, ident);
}

}  // namespace kesten
