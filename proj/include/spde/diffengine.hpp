#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spde/types.hpp"

namespace spde::ad {

using Array = RowMatrix;

/// A trainable array. `grad` accumulates across backward passes until reset.
struct Parameter {
  std::string name;
  Array value;
  Array grad;
  int group = 0;

  void zero_grad() { grad = Array::Zero(value.rows(), value.cols()); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives and
/// is not cleared.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Array& value() const;
  /// Gradient after Tape::backward (zero-sized for nodes that need none).
  [[nodiscard]] const Array& grad() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const { return value()(0, 0); }

  [[nodiscard]] Tape* tape() const { return tape_; }
  [[nodiscard]] int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,
  AddScalar,
  MatMul,
  Affine,
  Exp,
  Log,
  Tanh,
  Softplus,
  Sqrt,
  Square,
  Clamp,
  Sum,
  Mean,
  GaussianLogDensity,
  SliceCols,
  ConcatCols,
  Reshape,
};

/// Append-only computation record. Nodes are created by the free functions
/// below in topological order; backward() sweeps them in reverse.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf without gradient.
  Var constant(Array value);
  /// Leaf with gradient.
  Var variable(Array value);
  /// Leaf bound to `p`; backward() adds its gradient into p.grad.
  Var parameter(Parameter& p);

  /// Reverse accumulation from a 1x1 root. Gradients of previous calls are discarded.
  void backward(Var root);

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Used by the op constructors.
  struct Node {
    Op op = Op::Leaf;
    Array value;
    Array grad;
    int in[3] = {-1, -1, -1};
    double s0 = 0.0;
    double s1 = 0.0;
    Eigen::Index i0 = 0;
    bool needs_grad = false;
    Parameter* param = nullptr;
  };
  Var push(Op op, Array value, std::initializer_list<Var> inputs, double s0 = 0.0,
           double s1 = 0.0, Eigen::Index i0 = 0);
  [[nodiscard]] const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  void backward_node(std::size_t id);
  Array& grad_of(int id);

  std::vector<Node> nodes_;
};

// Elementwise binary ops broadcast operands of shape (R x C), (1 x C), (R x 1) or (1 x 1).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
/// x W + b with b a 1 x n row broadcast over the rows of x W.
Var affine(Var x, Var w, Var b);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
/// log(1 + e^a).
Var softplus(Var a);
Var sqrt(Var a);
Var square(Var a);
/// Elementwise clamp to [lo, hi]; gradient passes only strictly inside.
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
/// -1/2 sum [ (x - mu)^2 / var + log var + log 2 pi ] over the broadcast shape.
Var gaussian_log_density(Var x, Var mu, Var var);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var concat_cols(Var a, Var b);
/// Row-major reinterpretation with the same number of entries.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var a) { return scale(a, c); }
inline Var operator*(Var a, double c) { return scale(a, c); }

// ---------------------------------------------------------------------------
// Optimization

struct AdamSettings {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// Linear warmup then cosine decay, evaluated per epoch:
///   epoch < warmup: base_lr (epoch + 1) / warmup
///   otherwise:      base_lr (1 + cos(pi (epoch - warmup) / (total - warmup))) / 2
[[nodiscard]] double lr_schedule(int epoch, double base_lr, int warmup, int total);

struct OptimizerState {
  std::vector<Array> m;
  std::vector<Array> v;
  std::int64_t step = 0;
  std::vector<double> group_lr;
  int warmup_epochs = 10;
  int total_epochs = 2000;
  AdamSettings settings;
};

[[nodiscard]] OptimizerState make_optimizer(std::span<const Parameter> params,
                                            std::vector<double> group_lr, int warmup_epochs,
                                            int total_epochs, AdamSettings settings = {});

/// One Adam update of every parameter from its accumulated gradient, with
/// decoupled weight decay and the scheduled rate of the parameter's group.
void adam_step(OptimizerState& state, std::span<Parameter> params, int epoch);

}  // namespace spde::ad
