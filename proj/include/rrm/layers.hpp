#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

#include "rrm/error.hpp"
#include "rrm/rng.hpp"

namespace rrm {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

enum class LayerKind { Affine, Relu, Sigmoid, SetMax, SquaredError };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// Batch convention throughout: columns of x are independent items.

// w * x + b per column. The product is evaluated one column at a time, so a
// column's result never depends on which other columns share the batch; set
// functions over permuted batches then agree bitwise, not just numerically.
MatrixXd affine_forward(const MatrixXd& w, const VectorXd& b, const MatrixXd& x);

MatrixXd relu_forward(const MatrixXd& x);
MatrixXd sigmoid_forward(const MatrixXd& x);

// Elementwise max over the columns of `members`. Zero members yield the zero
// vector. `argmax` (optional) receives the column index attaining each max,
// lowest index on ties, -1 for empty input.
VectorXd set_max_forward(const MatrixXd& members, VectorXi* argmax = nullptr);

// Sum of squared differences (no averaging).
double squared_error(const VectorXd& x, const VectorXd& y);

struct AffineGrads {
  MatrixXd dw;
  VectorXd db;
  MatrixXd dx;
};

// g is dLoss/dOutput with the same shape as the forward output.
AffineGrads affine_backward(const MatrixXd& w, const MatrixXd& x, const MatrixXd& g);
MatrixXd relu_backward(const MatrixXd& x, const MatrixXd& g);
// y is the forward output sigmoid(x).
MatrixXd sigmoid_backward(const MatrixXd& y, const MatrixXd& g);
// Routes each element's gradient to the member that attained the max.
MatrixXd set_max_backward(const VectorXi& argmax, Eigen::Index member_count, const VectorXd& g);
// Gradient with respect to x.
VectorXd squared_error_grad(const VectorXd& x, const VectorXd& y);

struct LossEval {
  double value = 0.0;
  VectorXd grad;
};

using LossFn = std::function<LossEval(const VectorXd&)>;

// Compares the analytic gradient of f against central finite differences at
// `probe_count` evenly spaced coordinates and returns the worst relative
// error |analytic - numeric| / max(1e-12, |numeric|, |analytic|).
double check_gradient(const LossFn& f, const VectorXd& params, int probe_count = 25,
                      double step = 1e-6);

}  // namespace rrm
