#include "rrm/layers.hpp"

#include <algorithm>
#include <cmath>

namespace rrm {

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite");
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Affine: return "affine";
    case LayerKind::Relu: return "relu";
    case LayerKind::Sigmoid: return "sigmoid";
    case LayerKind::SetMax: return "set_max";
    case LayerKind::SquaredError: return "squared_error";
  }
  throw DomainError("unknown layer kind");
}

LayerKind layer_kind_from_string(const std::string& name) {
  if (name == "affine") return LayerKind::Affine;
  if (name == "relu") return LayerKind::Relu;
  if (name == "sigmoid") return LayerKind::Sigmoid;
  if (name == "set_max") return LayerKind::SetMax;
  if (name == "squared_error") return LayerKind::SquaredError;
  throw ParseError("unknown layer kind '" + name + "'");
}

MatrixXd affine_forward(const MatrixXd& w, const VectorXd& b, const MatrixXd& x) {
  if (w.cols() != x.rows())
    throw ShapeError("affine_forward: weight has " + std::to_string(w.cols()) +
                     " columns but input has " + std::to_string(x.rows()) + " rows");
  if (w.rows() != b.size())
    throw ShapeError("affine_forward: bias length " + std::to_string(b.size()) +
                     " does not match " + std::to_string(w.rows()) + " output rows");
  MatrixXd y(w.rows(), x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) y.col(c) = w * x.col(c) + b;
  return y;
}

MatrixXd relu_forward(const MatrixXd& x) { return x.cwiseMax(0.0); }

MatrixXd sigmoid_forward(const MatrixXd& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

VectorXd set_max_forward(const MatrixXd& members, VectorXi* argmax) {
  VectorXd out = VectorXd::Zero(members.rows());
  if (argmax) *argmax = VectorXi::Constant(members.rows(), -1);
  if (members.cols() == 0) return out;
  for (Eigen::Index r = 0; r < members.rows(); ++r) {
    double best = members(r, 0);
    Eigen::Index best_c = 0;
    for (Eigen::Index c = 1; c < members.cols(); ++c) {
      if (members(r, c) > best) {
        best = members(r, c);
        best_c = c;
      }
    }
    out[r] = best;
    if (argmax) (*argmax)[r] = static_cast<int>(best_c);
  }
  return out;
}

double squared_error(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size())
    throw ShapeError("squared_error: sizes " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()) + " differ");
  return (x - y).squaredNorm();
}

AffineGrads affine_backward(const MatrixXd& w, const MatrixXd& x, const MatrixXd& g) {
  if (g.rows() != w.rows() || g.cols() != x.cols())
    throw ShapeError("affine_backward: gradient shape does not match forward output");
  AffineGrads grads;
  grads.dw.noalias() = g * x.transpose();
  grads.db = g.rowwise().sum();
  grads.dx.noalias() = w.transpose() * g;
  return grads;
}

MatrixXd relu_backward(const MatrixXd& x, const MatrixXd& g) {
  if (x.rows() != g.rows() || x.cols() != g.cols())
    throw ShapeError("relu_backward: gradient shape does not match input");
  return (x.array() > 0.0).cast<double>() * g.array();
}

MatrixXd sigmoid_backward(const MatrixXd& y, const MatrixXd& g) {
  if (y.rows() != g.rows() || y.cols() != g.cols())
    throw ShapeError("sigmoid_backward: gradient shape does not match output");
  return y.array() * (1.0 - y.array()) * g.array();
}

MatrixXd set_max_backward(const VectorXi& argmax, Eigen::Index member_count, const VectorXd& g) {
  if (argmax.size() != g.size())
    throw ShapeError("set_max_backward: argmax and gradient sizes differ");
  MatrixXd dm = MatrixXd::Zero(g.size(), member_count);
  for (Eigen::Index r = 0; r < g.size(); ++r) {
    const int c = argmax[r];
    if (c < 0) continue;
    if (c >= member_count) throw ShapeError("set_max_backward: argmax index out of range");
    dm(r, c) = g[r];
  }
  return dm;
}

VectorXd squared_error_grad(const VectorXd& x, const VectorXd& y) {
  if (x.size() != y.size())
    throw ShapeError("squared_error_grad: sizes differ");
  return 2.0 * (x - y);
}

double check_gradient(const LossFn& f, const VectorXd& params, int probe_count, double step) {
  if (params.size() == 0) throw DomainError("check_gradient: empty parameter vector");
  if (step <= 0.0) throw DomainError("check_gradient: step must be positive");
  const LossEval at = f(params);
  require_finite(at.value, "check_gradient: loss");
  if (at.grad.size() != params.size())
    throw ShapeError("check_gradient: gradient size does not match parameters");

  const int probes = std::min<int>(probe_count, static_cast<int>(params.size()));
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    const Eigen::Index idx = static_cast<Eigen::Index>(
        (static_cast<std::int64_t>(i) * params.size()) / probes);
    VectorXd p = params;
    p[idx] = params[idx] + step;
    const double up = f(p).value;
    p[idx] = params[idx] - step;
    const double down = f(p).value;
    require_finite(up, "check_gradient: perturbed loss");
    require_finite(down, "check_gradient: perturbed loss");
    const double numeric = (up - down) / (2.0 * step);
    const double analytic = at.grad[idx];
    const double scale = std::max({1e-12, std::abs(numeric), std::abs(analytic)});
    worst = std::max(worst, std::abs(analytic - numeric) / scale);
  }
  return worst;
}

}  // namespace rrm
