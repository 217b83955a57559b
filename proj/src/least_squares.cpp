#include "perturbx/least_squares.hpp"

#include "perturbx/error.hpp"

namespace perturbx {

LeastSquaresSolution solve_constrained_wls(const Eigen::MatrixXd& design, const Eigen::VectorXd& targets,
                                           const Eigen::VectorXd& row_weights,
                                           const Eigen::MatrixXd& constraints,
                                           const Eigen::VectorXd& constraint_values) {
  const Eigen::Index p = design.cols();
  if (targets.size() != design.rows() || row_weights.size() != design.rows())
    throw InvalidArgument("least squares: design, targets and weights disagree in length");
  if (constraints.rows() > 0 && (constraints.cols() != p || constraint_values.size() != constraints.rows()))
    throw InvalidArgument("least squares: constraint shape mismatch");

  const Eigen::VectorXd sqrt_w = row_weights.cwiseSqrt();

  // Particular solution of the constraints plus an orthonormal basis of their
  // null space; the free part is then an unconstrained problem.
  Eigen::VectorXd particular = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(p, p);
  if (constraints.rows() > 0) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> ccod(constraints);
    ccod.setThreshold(kRankTolerance);
    particular = ccod.solve(constraint_values);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(constraints.transpose());
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
    basis = q.rightCols(p - constraints.rows());
  }

  LeastSquaresSolution out;
  out.unknowns = basis.cols();
  if (basis.cols() > 0 && design.rows() > 0) {
    const Eigen::MatrixXd reduced = sqrt_w.asDiagonal() * (design * basis);
    const Eigen::VectorXd rhs = sqrt_w.asDiagonal() * (targets - design * particular);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(reduced);
    cod.setThreshold(kRankTolerance);
    const Eigen::VectorXd z = cod.solve(rhs);
    out.rank = cod.rank();
    out.x = particular + basis * z;
  } else {
    out.x = particular;
  }
  out.residual_norm = (sqrt_w.asDiagonal() * (design * out.x - targets)).norm();
  return out;
}

}  // namespace perturbx
