#include "spde/diffengine.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "spde/error.hpp"

namespace spde::ad {

namespace {

using Index = Eigen::Index;

std::string shape_str(const Array& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

Index broadcast_dim(Index a, Index b) {
  if (a == b || b == 1) return a;
  if (a == 1) return b;
  return -1;
}

void broadcast_shape(const Array& a, const Array& b, const char* op, Index& rows, Index& cols) {
  rows = broadcast_dim(a.rows(), b.rows());
  cols = broadcast_dim(a.cols(), b.cols());
  if (rows < 0 || cols < 0) {
    fail(ErrorCategory::InvalidArgument,
         std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
  }
}

Array expand(const Array& a, Index rows, Index cols) {
  if (a.rows() == rows && a.cols() == cols) return a;
  return a.replicate(rows / a.rows(), cols / a.cols());
}

// Sums a broadcast gradient back down to an operand's shape.
Array reduce_to(const Array& g, Index rows, Index cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Array out = g;
  if (rows == 1 && out.rows() != 1) out = out.colwise().sum().eval();
  if (cols == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
  return out;
}

double softplus_scalar(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

double sigmoid_scalar(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2 pi)

}  // namespace

const Array& Var::value() const { return tape_->node(id_).value; }
const Array& Var::grad() const { return tape_->node(id_).grad; }

Var Tape::constant(Array value) { return push(Op::Leaf, std::move(value), {}); }

Var Tape::variable(Array value) {
  Var v = push(Op::Leaf, std::move(value), {});
  nodes_.back().needs_grad = true;
  return v;
}

Var Tape::parameter(Parameter& p) {
  Var v = variable(p.value);
  nodes_.back().param = &p;
  return v;
}

Var Tape::push(Op op, Array value, std::initializer_list<Var> inputs, double s0, double s1,
               Eigen::Index i0) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.s0 = s0;
  n.s1 = s1;
  n.i0 = i0;
  int k = 0;
  for (const Var& in : inputs) {
    require(in.tape() == this, "autodiff: operand recorded on a different tape");
    n.in[k++] = in.id();
    n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(in.id())].needs_grad;
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Array& Tape::grad_of(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) n.grad = Array::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(Var root) {
  require(root.tape() == this, "backward: root belongs to a different tape");
  const Node& r = nodes_[static_cast<std::size_t>(root.id())];
  if (r.value.rows() != 1 || r.value.cols() != 1) {
    fail(ErrorCategory::InvalidArgument,
         "backward: root must be scalar, got " + shape_str(r.value));
  }
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_of(root.id()).setConstant(1.0);
  for (std::size_t id = static_cast<std::size_t>(root.id()) + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || n.grad.size() == 0 || n.op == Op::Leaf) continue;
    backward_node(id);
  }
  for (auto& n : nodes_) {
    if (n.param == nullptr || n.grad.size() == 0) continue;
    if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
      n.param->zero_grad();
    }
    n.param->grad += n.grad;
  }
}

void Tape::backward_node(std::size_t id) {
  // Copies: grad_of() may not reallocate nodes_, but keep the node's own
  // buffers stable while parents are updated.
  const Node& n = nodes_[id];
  const Array g = n.grad;
  const int ia = n.in[0];
  const int ib = n.in[1];
  const int ic = n.in[2];
  auto needs = [this](int i) { return i >= 0 && nodes_[static_cast<std::size_t>(i)].needs_grad; };
  auto val = [this](int i) -> const Array& { return nodes_[static_cast<std::size_t>(i)].value; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
    case Op::Sub: {
      if (needs(ia)) grad_of(ia) += reduce_to(g, val(ia).rows(), val(ia).cols());
      if (needs(ib)) {
        const Array gb = reduce_to(g, val(ib).rows(), val(ib).cols());
        if (n.op == Op::Add) grad_of(ib) += gb; else grad_of(ib) -= gb;
      }
      break;
    }
    case Op::Mul: {
      const Index R = g.rows(), C = g.cols();
      if (needs(ia)) {
        grad_of(ia) += reduce_to((g.array() * expand(val(ib), R, C).array()).matrix(),
                                 val(ia).rows(), val(ia).cols());
      }
      if (needs(ib)) {
        grad_of(ib) += reduce_to((g.array() * expand(val(ia), R, C).array()).matrix(),
                                 val(ib).rows(), val(ib).cols());
      }
      break;
    }
    case Op::Div: {
      const Index R = g.rows(), C = g.cols();
      const Array b = expand(val(ib), R, C);
      if (needs(ia)) {
        grad_of(ia) += reduce_to((g.array() / b.array()).matrix(), val(ia).rows(), val(ia).cols());
      }
      if (needs(ib)) {
        const Array a = expand(val(ia), R, C);
        grad_of(ib) += reduce_to((-g.array() * a.array() / b.array().square()).matrix(),
                                 val(ib).rows(), val(ib).cols());
      }
      break;
    }
    case Op::Neg:
      if (needs(ia)) grad_of(ia) -= g;
      break;
    case Op::Scale:
      if (needs(ia)) grad_of(ia) += n.s0 * g;
      break;
    case Op::AddScalar:
      if (needs(ia)) grad_of(ia) += g;
      break;
    case Op::MatMul:
      if (needs(ia)) grad_of(ia).noalias() += g * val(ib).transpose();
      if (needs(ib)) grad_of(ib).noalias() += val(ia).transpose() * g;
      break;
    case Op::Affine:
      if (needs(ia)) grad_of(ia).noalias() += g * val(ib).transpose();
      if (needs(ib)) grad_of(ib).noalias() += val(ia).transpose() * g;
      if (needs(ic)) grad_of(ic) += g.colwise().sum();
      break;
    case Op::Exp:
      if (needs(ia)) grad_of(ia).array() += g.array() * n.value.array();
      break;
    case Op::Log:
      if (needs(ia)) grad_of(ia).array() += g.array() / val(ia).array();
      break;
    case Op::Tanh:
      if (needs(ia)) grad_of(ia).array() += g.array() * (1.0 - n.value.array().square());
      break;
    case Op::Softplus:
      if (needs(ia)) grad_of(ia).array() += g.array() * val(ia).array().unaryExpr(&sigmoid_scalar);
      break;
    case Op::Sqrt:
      if (needs(ia)) grad_of(ia).array() += 0.5 * g.array() / n.value.array();
      break;
    case Op::Square:
      if (needs(ia)) grad_of(ia).array() += 2.0 * g.array() * val(ia).array();
      break;
    case Op::Clamp:
      if (needs(ia)) {
        const double lo = n.s0, hi = n.s1;
        grad_of(ia).array() +=
            g.array() * val(ia).array().unaryExpr([lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
      }
      break;
    case Op::Sum:
      if (needs(ia)) grad_of(ia).array() += g(0, 0);
      break;
    case Op::Mean:
      if (needs(ia)) grad_of(ia).array() += g(0, 0) / static_cast<double>(val(ia).size());
      break;
    case Op::GaussianLogDensity: {
      const Index R = static_cast<Index>(n.s0), C = static_cast<Index>(n.s1);
      const Array x = expand(val(ia), R, C);
      const Array mu = expand(val(ib), R, C);
      const Array var = expand(val(ic), R, C);
      const double s = g(0, 0);
      const Array r_over_v = ((x - mu).array() / var.array()).matrix();
      if (needs(ia)) grad_of(ia) += reduce_to(-s * r_over_v, val(ia).rows(), val(ia).cols());
      if (needs(ib)) grad_of(ib) += reduce_to(s * r_over_v, val(ib).rows(), val(ib).cols());
      if (needs(ic)) {
        const Array gv = (0.5 * s * (r_over_v.array().square() - 1.0 / var.array())).matrix();
        grad_of(ic) += reduce_to(gv, val(ic).rows(), val(ic).cols());
      }
      break;
    }
    case Op::SliceCols:
      if (needs(ia)) grad_of(ia).middleCols(n.i0, g.cols()) += g;
      break;
    case Op::ConcatCols: {
      const Index ca = val(ia).cols();
      if (needs(ia)) grad_of(ia) += g.leftCols(ca);
      if (needs(ib)) grad_of(ib) += g.rightCols(g.cols() - ca);
      break;
    }
    case Op::Reshape:
      if (needs(ia)) {
        Array& ga = grad_of(ia);
        Eigen::Map<const Array> flat(g.data(), ga.rows(), ga.cols());
        ga += flat;
      }
      break;
  }
}

// ---------------------------------------------------------------------------

namespace {

Var binary(Op op, const char* name, Var a, Var b) {
  Index R = 0, C = 0;
  broadcast_shape(a.value(), b.value(), name, R, C);
  const Array x = expand(a.value(), R, C);
  const Array y = expand(b.value(), R, C);
  Array out;
  switch (op) {
    case Op::Add: out = x + y; break;
    case Op::Sub: out = x - y; break;
    case Op::Mul: out = (x.array() * y.array()).matrix(); break;
    case Op::Div: out = (x.array() / y.array()).matrix(); break;
    default: fail(ErrorCategory::InvalidArgument, "binary: not a binary op");
  }
  return a.tape()->push(op, std::move(out), {a, b});
}

}  // namespace

Var add(Var a, Var b) { return binary(Op::Add, "add", a, b); }
Var sub(Var a, Var b) { return binary(Op::Sub, "sub", a, b); }
Var mul(Var a, Var b) { return binary(Op::Mul, "mul", a, b); }
Var div(Var a, Var b) { return binary(Op::Div, "div", a, b); }

Var neg(Var a) { return a.tape()->push(Op::Neg, -a.value(), {a}); }
Var scale(Var a, double c) { return a.tape()->push(Op::Scale, c * a.value(), {a}, c); }
Var add_scalar(Var a, double c) {
  return a.tape()->push(Op::AddScalar, (a.value().array() + c).matrix(), {a}, c);
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) {
    fail(ErrorCategory::InvalidArgument,
         "matmul: incompatible shapes " + shape_str(a.value()) + " and " + shape_str(b.value()));
  }
  Array out = a.value() * b.value();
  return a.tape()->push(Op::MatMul, std::move(out), {a, b});
}

Var affine(Var x, Var w, Var b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    fail(ErrorCategory::InvalidArgument, "affine: incompatible shapes " + shape_str(x.value()) +
                                             ", " + shape_str(w.value()) + ", " +
                                             shape_str(b.value()));
  }
  Array out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape()->push(Op::Affine, std::move(out), {x, w, b});
}

Var exp(Var a) { return a.tape()->push(Op::Exp, a.value().array().exp().matrix(), {a}); }

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) fail(ErrorCategory::Numerical, "log: nonpositive argument");
  return a.tape()->push(Op::Log, a.value().array().log().matrix(), {a});
}

Var tanh(Var a) { return a.tape()->push(Op::Tanh, a.value().array().tanh().matrix(), {a}); }

Var softplus(Var a) {
  return a.tape()->push(Op::Softplus, a.value().unaryExpr(&softplus_scalar), {a});
}

Var sqrt(Var a) {
  if ((a.value().array() < 0.0).any()) fail(ErrorCategory::Numerical, "sqrt: negative argument");
  return a.tape()->push(Op::Sqrt, a.value().array().sqrt().matrix(), {a});
}

Var square(Var a) { return a.tape()->push(Op::Square, a.value().array().square().matrix(), {a}); }

Var clamp(Var a, double lo, double hi) {
  require(lo <= hi, "clamp: empty interval");
  return a.tape()->push(Op::Clamp, a.value().cwiseMax(lo).cwiseMin(hi), {a}, lo, hi);
}

Var sum(Var a) {
  Array out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->push(Op::Sum, std::move(out), {a});
}

Var mean(Var a) {
  require(a.value().size() > 0, "mean: empty array");
  Array out(1, 1);
  out(0, 0) = a.value().mean();
  return a.tape()->push(Op::Mean, std::move(out), {a});
}

Var gaussian_log_density(Var x, Var mu, Var var) {
  Index R = 0, C = 0, R2 = 0, C2 = 0;
  broadcast_shape(x.value(), mu.value(), "gaussian_log_density", R, C);
  Array probe(R, C);
  broadcast_shape(probe, var.value(), "gaussian_log_density", R2, C2);
  R = R2;
  C = C2;
  if ((var.value().array() <= 0.0).any()) {
    fail(ErrorCategory::Numerical, "gaussian_log_density: nonpositive variance");
  }
  const Array xe = expand(x.value(), R, C);
  const Array me = expand(mu.value(), R, C);
  const Array ve = expand(var.value(), R, C);
  const double quad = ((xe - me).array().square() / ve.array()).sum();
  const double logdet = ve.array().log().sum();
  Array out(1, 1);
  out(0, 0) = -0.5 * (quad + logdet + static_cast<double>(R * C) * kLog2Pi);
  return x.tape()->push(Op::GaussianLogDensity, std::move(out), {x, mu, var},
                        static_cast<double>(R), static_cast<double>(C));
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    fail(ErrorCategory::InvalidArgument, "slice_cols: range [" + std::to_string(start) + ", " +
                                             std::to_string(start + count) + ") outside " +
                                             shape_str(a.value()));
  }
  Array out = a.value().middleCols(start, count);
  return a.tape()->push(Op::SliceCols, std::move(out), {a}, 0.0, 0.0, start);
}

Var concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) {
    fail(ErrorCategory::InvalidArgument,
         "concat_cols: row mismatch " + shape_str(a.value()) + " and " + shape_str(b.value()));
  }
  Array out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return a.tape()->push(Op::ConcatCols, std::move(out), {a, b});
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) {
    fail(ErrorCategory::InvalidArgument, "reshape: cannot view " + shape_str(a.value()) + " as " +
                                             std::to_string(rows) + "x" + std::to_string(cols));
  }
  Array out = Eigen::Map<const Array>(a.value().data(), rows, cols);
  return a.tape()->push(Op::Reshape, std::move(out), {a});
}

// ---------------------------------------------------------------------------

double lr_schedule(int epoch, double base_lr, int warmup, int total) {
  require(total > warmup, "lr_schedule: total epochs must exceed warmup epochs");
  require(epoch >= 0 && epoch < total, "lr_schedule: epoch out of range");
  if (epoch < warmup) return base_lr * (epoch + 1) / warmup;
  const double progress = static_cast<double>(epoch - warmup) / (total - warmup);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState make_optimizer(std::span<const Parameter> params, std::vector<double> group_lr,
                              int warmup_epochs, int total_epochs, AdamSettings settings) {
  require(warmup_epochs >= 0, "make_optimizer: warmup must be nonnegative");
  require(total_epochs > warmup_epochs, "make_optimizer: total epochs must exceed warmup epochs");
  OptimizerState s;
  for (const auto& p : params) {
    require(p.group >= 0 && static_cast<std::size_t>(p.group) < group_lr.size(),
            "make_optimizer: parameter '" + p.name + "' has no learning-rate group");
    s.m.push_back(Array::Zero(p.value.rows(), p.value.cols()));
    s.v.push_back(Array::Zero(p.value.rows(), p.value.cols()));
  }
  s.group_lr = std::move(group_lr);
  s.warmup_epochs = warmup_epochs;
  s.total_epochs = total_epochs;
  s.settings = settings;
  return s;
}

void adam_step(OptimizerState& state, std::span<Parameter> params, int epoch) {
  require(params.size() == state.m.size(), "adam_step: parameter count changed");
  const auto& cfg = state.settings;
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    const double lr = lr_schedule(epoch, state.group_lr[static_cast<std::size_t>(p.group)],
                                  state.warmup_epochs, state.total_epochs);
    Array& m = state.m[i];
    Array& v = state.v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * p.grad;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * p.grad.cwiseProduct(p.grad);
    p.value *= (1.0 - lr * cfg.weight_decay);
    p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace spde::ad
