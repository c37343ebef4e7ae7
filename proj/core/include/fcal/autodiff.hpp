#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fcal {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid until the tape is
/// cleared. Arithmetic on Vars records new nodes on the owning tape.
class Var {
public:
  Var() = default;
  Var(Tape* tape, std::int32_t id) : tape_(tape), id_(id) {}

  double value() const;
  std::int32_t id() const { return id_; }
  Tape* tape() const { return tape_; }

private:
  Tape* tape_ = nullptr;
  std::int32_t id_ = -1;
};

/// Adjoints produced by one reverse sweep. Index with the Var handles that
/// were recorded on the same tape; variables the output does not depend on
/// report a gradient of exactly zero.
class Gradients {
public:
  explicit Gradients(std::vector<double> adjoints)
      : adjoints_(std::move(adjoints)) {}

  double wrt(const Var& v) const;
  std::size_t size() const { return adjoints_.size(); }

private:
  std::vector<double> adjoints_;
};

/// Append-only record of a scalar computation.
///
/// Each recorded node stores its operation, parent indices, forward value,
/// and the local partial derivatives with respect to its parents, so the
/// reverse sweep is a single backward pass over the node array. Replaying
/// the tape recomputes every forward value from the recorded structure and
/// must reproduce them bit-for-bit (the build is compiled with fp-contract
/// off to keep this true).
class Tape {
public:
  enum class Op : std::uint8_t {
    Const,
    Input,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sqrt,
    Square,
    Relu,
    GenSigmoid,
    Sum,
    Mean,
  };

  /// Leaf that participates in gradients (model parameters, probe points).
  Var input(double value);

  /// Leaf treated as a constant; it still gets an adjoint slot but callers
  /// normally never ask for it.
  Var constant(double value);

  /// Bulk input registration, preserving order.
  std::vector<Var> inputs(std::span<const double> values);

  /// Sum of one or more vars.
  Var sum(std::span<const Var> xs);

  /// Arithmetic mean of one or more vars.
  Var mean(std::span<const Var> xs);

  double value(std::int32_t id) const { return nodes_[id].value; }
  std::size_t size() const { return nodes_.size(); }

  /// Drop all nodes but keep allocated capacity; previously handed-out Vars
  /// become invalid.
  void clear();

  /// Reverse sweep from `root`, which must live on this tape.
  Gradients backward(const Var& root) const;

  /// Recompute every node's forward value (and local partials) from the
  /// recorded structure, in recording order. Returns the value of the last
  /// node. Exists to check that recording and evaluation cannot drift apart.
  double replay();

  // Recording primitives used by the operator overloads below.
  Var record_binary(Op op, const Var& a, const Var& b);
  Var record_unary(Op op, const Var& a);
  Var record_gen_sigmoid(const Var& a, double alpha, double beta, double eta);

private:
  struct Node {
    Op op;
    std::int32_t a = -1;  // parent, or offset into arg pool for Sum/Mean
    std::int32_t b = -1;  // parent, arg count, or sigmoid-param index
    double value = 0.0;
    double da = 0.0;
    double db = 0.0;
  };
  struct SigmoidParams {
    double alpha, beta, eta;
  };

  Var push(Node n);
  void compute(Node& n) const;  // fill value + partials from parents
  Var record_nary(Op op, std::span<const Var> xs);

  std::vector<Node> nodes_;
  std::vector<std::int32_t> args_;  // shared pool for Sum/Mean parents
  std::vector<SigmoidParams> sigmoid_params_;
};

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);

Var operator+(const Var& a, double b);
Var operator+(double a, const Var& b);
Var operator-(const Var& a, double b);
Var operator-(double a, const Var& b);
Var operator*(const Var& a, double b);
Var operator*(double a, const Var& b);
Var operator/(const Var& a, double b);
Var operator/(double a, const Var& b);

Var exp(const Var& x);
Var log(const Var& x);    // requires a positive argument
Var sqrt(const Var& x);   // requires a positive argument
Var square(const Var& x);
Var relu(const Var& x);   // derivative at exactly 0 is taken as 0

/// alpha + (beta - alpha) / (1 + exp(-eta * x)), recorded as a single node
/// with its analytic derivative eta * (g - alpha) * (1 - (g - alpha) / (beta - alpha)).
Var gen_sigmoid(const Var& x, double alpha, double beta, double eta);

/// Builder signature for gradient checking: given a fresh tape and inputs
/// registered at the probe point, return the scalar output.
using ScalarBuilder = std::function<Var(Tape&, std::span<const Var>)>;

/// Compare reverse-mode gradients against central finite differences at
/// `point`. Returns the maximum relative error
/// max_i |ad_i - fd_i| / max(1, |fd_i|).
double grad_check(const ScalarBuilder& f, std::span<const double> point,
                  double eps);

}  // namespace fcal
