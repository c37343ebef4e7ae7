#include "fcal/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace fcal {

double Var::value() const { return tape_->value(id_); }

double Gradients::wrt(const Var& v) const {
  return adjoints_.at(static_cast<std::size_t>(v.id()));
}

Var Tape::push(Node n) {
  nodes_.push_back(n);
  return Var(this, static_cast<std::int32_t>(nodes_.size() - 1));
}

Var Tape::input(double value) {
  Node n;
  n.op = Op::Input;
  n.value = value;
  return push(n);
}

Var Tape::constant(double value) {
  Node n;
  n.op = Op::Const;
  n.value = value;
  return push(n);
}

std::vector<Var> Tape::inputs(std::span<const double> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(input(v));
  return out;
}

void Tape::clear() {
  nodes_.clear();
  args_.clear();
  sigmoid_params_.clear();
}

namespace {

[[noreturn]] void domain_fail(const char* op, double x) {
  throw std::domain_error(std::string(op) + ": argument " + std::to_string(x) +
                          " outside the operation's domain");
}

}  // namespace

void Tape::compute(Node& n) const {
  switch (n.op) {
    case Op::Const:
    case Op::Input:
      break;
    case Op::Add:
      n.value = nodes_[n.a].value + nodes_[n.b].value;
      n.da = 1.0;
      n.db = 1.0;
      break;
    case Op::Sub:
      n.value = nodes_[n.a].value - nodes_[n.b].value;
      n.da = 1.0;
      n.db = -1.0;
      break;
    case Op::Mul:
      n.value = nodes_[n.a].value * nodes_[n.b].value;
      n.da = nodes_[n.b].value;
      n.db = nodes_[n.a].value;
      break;
    case Op::Div: {
      double denom = nodes_[n.b].value;
      if (denom == 0.0) domain_fail("div", denom);
      n.value = nodes_[n.a].value / denom;
      n.da = 1.0 / denom;
      n.db = -nodes_[n.a].value / (denom * denom);
      break;
    }
    case Op::Neg:
      n.value = -nodes_[n.a].value;
      n.da = -1.0;
      break;
    case Op::Exp:
      n.value = std::exp(nodes_[n.a].value);
      n.da = n.value;
      break;
    case Op::Log: {
      double x = nodes_[n.a].value;
      if (!(x > 0.0)) domain_fail("log", x);
      n.value = std::log(x);
      n.da = 1.0 / x;
      break;
    }
    case Op::Sqrt: {
      double x = nodes_[n.a].value;
      if (!(x > 0.0)) domain_fail("sqrt", x);
      n.value = std::sqrt(x);
      n.da = 0.5 / n.value;
      break;
    }
    case Op::Square: {
      double x = nodes_[n.a].value;
      n.value = x * x;
      n.da = 2.0 * x;
      break;
    }
    case Op::Relu: {
      double x = nodes_[n.a].value;
      n.value = x > 0.0 ? x : 0.0;
      n.da = x > 0.0 ? 1.0 : 0.0;
      break;
    }
    case Op::GenSigmoid: {
      const SigmoidParams& p = sigmoid_params_[n.b];
      double t = p.eta * nodes_[n.a].value;
      // Branch on sign for a stable logistic; both forms round identically
      // to the plain-double path in model code, which uses the same formula.
      double s = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t))
                          : std::exp(t) / (1.0 + std::exp(t));
      n.value = p.alpha + (p.beta - p.alpha) * s;
      n.da = p.eta * (p.beta - p.alpha) * s * (1.0 - s);
      break;
    }
    case Op::Sum: {
      double acc = 0.0;
      for (std::int32_t i = 0; i < n.b; ++i) {
        acc += nodes_[args_[n.a + i]].value;
      }
      n.value = acc;
      n.da = 1.0;  // shared partial for every argument
      break;
    }
    case Op::Mean: {
      double acc = 0.0;
      for (std::int32_t i = 0; i < n.b; ++i) {
        acc += nodes_[args_[n.a + i]].value;
      }
      double inv = 1.0 / static_cast<double>(n.b);
      n.value = acc * inv;
      n.da = inv;
      break;
    }
  }
}

Var Tape::record_binary(Op op, const Var& a, const Var& b) {
  if (a.tape() != this || b.tape() != this) {
    throw std::invalid_argument("autodiff: operands live on different tapes");
  }
  Node n;
  n.op = op;
  n.a = a.id();
  n.b = b.id();
  compute(n);
  return push(n);
}

Var Tape::record_unary(Op op, const Var& a) {
  if (a.tape() != this) {
    throw std::invalid_argument("autodiff: operand belongs to another tape");
  }
  Node n;
  n.op = op;
  n.a = a.id();
  compute(n);
  return push(n);
}

Var Tape::record_gen_sigmoid(const Var& a, double alpha, double beta,
                             double eta) {
  if (a.tape() != this) {
    throw std::invalid_argument("autodiff: operand belongs to another tape");
  }
  sigmoid_params_.push_back({alpha, beta, eta});
  Node n;
  n.op = Op::GenSigmoid;
  n.a = a.id();
  n.b = static_cast<std::int32_t>(sigmoid_params_.size() - 1);
  compute(n);
  return push(n);
}

Var Tape::record_nary(Op op, std::span<const Var> xs) {
  if (xs.empty()) {
    throw std::invalid_argument("autodiff: sum/mean of an empty span");
  }
  std::int32_t offset = static_cast<std::int32_t>(args_.size());
  for (const Var& x : xs) {
    if (x.tape() != this) {
      throw std::invalid_argument("autodiff: operand belongs to another tape");
    }
    args_.push_back(x.id());
  }
  Node n;
  n.op = op;
  n.a = offset;
  n.b = static_cast<std::int32_t>(xs.size());
  compute(n);
  return push(n);
}

Var Tape::sum(std::span<const Var> xs) { return record_nary(Op::Sum, xs); }
Var Tape::mean(std::span<const Var> xs) { return record_nary(Op::Mean, xs); }

Gradients Tape::backward(const Var& root) const {
  if (root.tape() != this) {
    throw std::invalid_argument("backward: root lives on another tape");
  }
  std::vector<double> adj(nodes_.size(), 0.0);
  adj[root.id()] = 1.0;
  for (std::int32_t i = static_cast<std::int32_t>(nodes_.size()) - 1; i >= 0;
       --i) {
    double w = adj[i];
    if (w == 0.0) continue;
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::Const:
      case Op::Input:
        break;
      case Op::Sum:
      case Op::Mean:
        for (std::int32_t k = 0; k < n.b; ++k) {
          adj[args_[n.a + k]] += w * n.da;
        }
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
        adj[n.a] += w * n.da;
        adj[n.b] += w * n.db;
        break;
      default:  // remaining unary ops
        adj[n.a] += w * n.da;
        break;
    }
  }
  return Gradients(std::move(adj));
}

double Tape::replay() {
  for (Node& n : nodes_) compute(n);
  return nodes_.empty() ? 0.0 : nodes_.back().value;
}

Var operator+(const Var& a, const Var& b) {
  return a.tape()->record_binary(Tape::Op::Add, a, b);
}
Var operator-(const Var& a, const Var& b) {
  return a.tape()->record_binary(Tape::Op::Sub, a, b);
}
Var operator*(const Var& a, const Var& b) {
  return a.tape()->record_binary(Tape::Op::Mul, a, b);
}
Var operator/(const Var& a, const Var& b) {
  return a.tape()->record_binary(Tape::Op::Div, a, b);
}
Var operator-(const Var& a) { return a.tape()->record_unary(Tape::Op::Neg, a); }

Var operator+(const Var& a, double b) { return a + a.tape()->constant(b); }
Var operator+(double a, const Var& b) { return b.tape()->constant(a) + b; }
Var operator-(const Var& a, double b) { return a - a.tape()->constant(b); }
Var operator-(double a, const Var& b) { return b.tape()->constant(a) - b; }
Var operator*(const Var& a, double b) { return a * a.tape()->constant(b); }
Var operator*(double a, const Var& b) { return b.tape()->constant(a) * b; }
Var operator/(const Var& a, double b) { return a / a.tape()->constant(b); }
Var operator/(double a, const Var& b) { return b.tape()->constant(a) / b; }

Var exp(const Var& x) { return x.tape()->record_unary(Tape::Op::Exp, x); }
Var log(const Var& x) { return x.tape()->record_unary(Tape::Op::Log, x); }
Var sqrt(const Var& x) { return x.tape()->record_unary(Tape::Op::Sqrt, x); }
Var square(const Var& x) { return x.tape()->record_unary(Tape::Op::Square, x); }
Var relu(const Var& x) { return x.tape()->record_unary(Tape::Op::Relu, x); }

Var gen_sigmoid(const Var& x, double alpha, double beta, double eta) {
  return x.tape()->record_gen_sigmoid(x, alpha, beta, eta);
}

double grad_check(const ScalarBuilder& f, std::span<const double> point,
                  double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("grad_check: eps must be positive");
  }
  Tape tape;
  std::vector<Var> vars = tape.inputs(point);
  Var out = f(tape, vars);
  Gradients grads = tape.backward(out);

  std::vector<double> probe(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    double saved = probe[i];

    probe[i] = saved + eps;
    Tape plus;
    std::vector<Var> vp = plus.inputs(probe);
    double fp = f(plus, vp).value();

    probe[i] = saved - eps;
    Tape minus;
    std::vector<Var> vm = minus.inputs(probe);
    double fm = f(minus, vm).value();

    probe[i] = saved;
    double fd = (fp - fm) / (2.0 * eps);
    double ad = grads.wrt(vars[i]);
    double err = std::fabs(ad - fd) / std::max(1.0, std::fabs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace fcal
