#pragma once

#include <Eigen/Dense>

namespace perturbx {

struct LeastSquaresSolution {
  Eigen::VectorXd x;
  Eigen::Index rank = 0;        // rank of the (reduced) weighted design
  Eigen::Index unknowns = 0;    // columns of the (reduced) weighted design
  double residual_norm = 0.0;   // || sqrt(W) (A x - y) ||
};

/// Minimum-norm solution of min || sqrt(W)(A x - y) || subject to C x = d,
/// via a complete orthogonal decomposition with relative rank cutoff 1e-10.
/// `constraints` may have zero rows. The constraint rows must be linearly
/// independent.
LeastSquaresSolution solve_constrained_wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets,
                                           const Eigen::VectorXd& row_weights,
                                           const Eigen::MatrixXd& constraints,
                                           const Eigen::VectorXd& constraint_values);

inline constexpr double kRankTolerance = 1e-10;

}  // namespace perturbx
