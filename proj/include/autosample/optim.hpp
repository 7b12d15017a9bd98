#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

#include "autosample/data.hpp"

namespace autosample {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over the rows of a parameter table.
///
/// Lazy mode (default) updates only the rows passed to step(); their moments
/// and step counters advance while untouched rows stay frozen, so bias
/// correction uses the per-row step count. Dense mode updates every row on
/// every step with one shared counter, matching textbook Adam exactly.
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(Eigen::Index rows, Eigen::Index cols, AdamHyper hyper = {}, bool dense = false);

  void step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
            std::span<const Index> rows, double lr);
  // All rows.
  void step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::Ref<const Eigen::MatrixXd>& grad, double lr);

  const Eigen::MatrixXd& first_moment() const noexcept { return m_; }
  const Eigen::MatrixXd& second_moment() const noexcept { return v_; }
  std::int64_t steps() const noexcept { return steps_; }
  bool dense() const noexcept { return dense_; }

 private:
  void update_row(Eigen::Ref<Eigen::MatrixXd>& param, const Eigen::Ref<const Eigen::MatrixXd>& grad,
                  Eigen::Index r, std::int64_t t, double lr);

  AdamHyper hyper_;
  bool dense_ = false;
  Eigen::MatrixXd m_;
  Eigen::MatrixXd v_;
  std::vector<std::int64_t> row_steps_;
  std::int64_t steps_ = 0;
};

}  // namespace autosample
