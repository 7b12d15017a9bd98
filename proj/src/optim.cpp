#include "autosample/optim.hpp"

#include <cmath>

#include "autosample/errors.hpp"

namespace autosample {

AdamOptimizer::AdamOptimizer(Eigen::Index rows, Eigen::Index cols, AdamHyper hyper, bool dense)
    : hyper_(hyper),
      dense_(dense),
      m_(Eigen::MatrixXd::Zero(rows, cols)),
      v_(Eigen::MatrixXd::Zero(rows, cols)),
      row_steps_(static_cast<std::size_t>(rows), 0) {}

void AdamOptimizer::update_row(Eigen::Ref<Eigen::MatrixXd>& param,
                               const Eigen::Ref<const Eigen::MatrixXd>& grad, Eigen::Index r,
                               std::int64_t t, double lr) {
  m_.row(r) = hyper_.beta1 * m_.row(r) + (1.0 - hyper_.beta1) * grad.row(r);
  v_.row(r) = hyper_.beta2 * v_.row(r) + (1.0 - hyper_.beta2) * grad.row(r).cwiseAbs2();
  const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t));
  param.row(r).array() -=
      lr * (m_.row(r).array() / c1) / ((v_.row(r).array() / c2).sqrt() + hyper_.eps);
}

void AdamOptimizer::step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                         std::span<const Index> rows, double lr) {
  if (param.rows() != m_.rows() || param.cols() != m_.cols() || grad.rows() != m_.rows() ||
      grad.cols() != m_.cols())
    throw DomainError("adam: parameter/gradient shape does not match optimizer state");
  ++steps_;
  if (dense_) {
    for (Eigen::Index r = 0; r < m_.rows(); ++r) update_row(param, grad, r, steps_, lr);
    return;
  }
  for (Index r : rows) update_row(param, grad, r, ++row_steps_[r], lr);
}

void AdamOptimizer::step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                         double lr) {
  if (param.rows() != m_.rows() || param.cols() != m_.cols() || grad.rows() != m_.rows() ||
      grad.cols() != m_.cols())
    throw DomainError("adam: parameter/gradient shape does not match optimizer state");
  ++steps_;
  for (Eigen::Index r = 0; r < m_.rows(); ++r)
    update_row(param, grad, r, dense_ ? steps_ : ++row_steps_[r], lr);
}

}  // namespace autosample
