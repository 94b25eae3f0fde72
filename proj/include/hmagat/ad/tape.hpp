#pragma once

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace hmagat::ad {

template <typename Scalar>
class BasicTape;

// Handle to a node on a tape. Cheap to copy; valid as long as the tape lives.
template <typename Scalar>
class BasicVar {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  BasicVar() = default;
  BasicVar(BasicTape<Scalar>* tape, int id) : tape_(tape), id_(id) {}

  BasicTape<Scalar>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const { return tape_->value(id_); }
  const Matrix& grad() const { return tape_->grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  BasicTape<Scalar>* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode record of dense matrix computations. Nodes are appended in evaluation order, so
// the record is topologically sorted by construction and backward is a single reverse sweep.
template <typename Scalar>
class BasicTape {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Var = BasicVar<Scalar>;
  using Backward = std::function<void(BasicTape&, const Matrix& out_grad)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  // Leaf that participates in differentiation (a parameter or an input under test).
  Var variable(Matrix value) { return push(std::move(value), true, {}); }
  // Leaf that never receives gradient.
  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  // Records an operation. `backward` is dropped when no input requires gradient.
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) {
      check_owner(v);
      needs = needs || nodes_[v.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
    bool needs = false;
    for (const Var& v : inputs) {
      check_owner(v);
      needs = needs || nodes_[v.id()].requires_grad;
    }
    return push(std::move(value), needs, needs ? std::move(backward) : Backward{});
  }

  const Matrix& value(int id) const { return nodes_.at(id).value; }
  bool requires_grad(int id) const { return nodes_.at(id).requires_grad; }

  // Gradient accumulated into a node; zero-filled when nothing reached it.
  const Matrix& grad(int id) const {
    const Node& n = nodes_.at(id);
    if (n.grad.size() == 0 && n.value.size() != 0) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  void accumulate(const Var& v, const Matrix& delta) {
    Node& n = nodes_[v.id()];
    if (!n.requires_grad) return;
    if (delta.rows() != n.value.rows() || delta.cols() != n.value.cols()) {
      throw std::logic_error("BasicTape::accumulate: gradient shape mismatch");
    }
    if (n.grad.size() == 0) {
      n.grad = delta;
    } else {
      n.grad += delta;
    }
  }

  // Reverse sweep from a scalar loss. Each node's backward runs at most once.
  void backward(const Var& loss) {
    check_owner(loss);
    const Matrix& lv = nodes_[loss.id()].value;
    if (lv.rows() != 1 || lv.cols() != 1) throw std::invalid_argument("backward: loss must be a scalar");
    for (Node& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[loss.id()].requires_grad) return;
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (int id = loss.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    mutable Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  void check_owner(const Var& v) const {
    if (v.tape() != this) throw std::invalid_argument("variable belongs to a different tape");
  }

  std::deque<Node> nodes_;
};

using Tape = BasicTape<double>;
using Var = BasicVar<double>;

}  // namespace hmagat::ad
