#pragma once

#include <stdexcept>

#include <Eigen/Dense>

namespace rrnn {

/// Normalized simulation error ||y~ - y|| / ||y~|| over the whole sequence.
inline double nse(const Eigen::MatrixXd& y, const Eigen::MatrixXd& ytilde) {
  if (y.rows() != ytilde.rows() || y.cols() != ytilde.cols()) {
    throw std::invalid_argument("nse: shapes differ");
  }
  const double denom = ytilde.norm();
  if (!(denom > 0.0)) throw std::invalid_argument("nse: measured output has zero norm");
  return (ytilde - y).norm() / denom;
}

}  // namespace rrnn
