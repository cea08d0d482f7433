#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace rrnn {

enum class Activation { relu, tanh, sigmoid };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

/// Upper bound on the slope of the activation. Slopes are always >= 0.
inline double slope_bound(Activation a) { return a == Activation::sigmoid ? 0.25 : 1.0; }

inline double activate(Activation a, double v) {
  switch (a) {
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::tanh: return std::tanh(v);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
  }
  return v;
}

inline double activate_derivative(Activation a, double v) {
  switch (a) {
    case Activation::relu: return v > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    }
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-v));
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

inline Eigen::VectorXd activation_apply(Activation a, const Eigen::VectorXd& v) {
  return v.unaryExpr([a](double x) { return activate(a, x); });
}

inline Eigen::VectorXd activation_derivative(Activation a, const Eigen::VectorXd& v) {
  return v.unaryExpr([a](double x) { return activate_derivative(a, x); });
}

}  // namespace rrnn
