#pragma once

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Graph is a tape: every op appends a node holding its forward value and a
// closure that scatters the node's gradient into its parents. Parameters live
// outside the tape; backward() accumulates into Parameter::grad. Vectors are
// column matrices throughout.

#include <Eigen/Dense>

#include <functional>
#include <string>
#include <vector>

namespace relpara::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Parameter {
  std::string name;
  Matrix value;
  // Written only by Graph::backward; forward passes take parameters by const&.
  mutable Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(Matrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Graph {
 public:
  Graph() { nodes_.reserve(256); }

  Var constant(Matrix value);
  Var param(const Parameter& p);

  const Matrix& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  double scalar(Var v) const { return value(v)(0, 0); }
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and propagates to every parameter leaf.
  void backward(Var root);

  // Elementary ops.
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  Var add_col(Var m, Var col);  // broadcasts a column over every column of m
  Var transpose(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var concat_rows(std::initializer_list<Var> parts);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
  Var column(Var a, Eigen::Index col);
  Var sum(Var a);
  Var mean_cols(Var a);
  Var softmax_row(Var a);  // a is 1 x L

  // Image ops. Feature maps are channels x (height * width), row-major pixels.
  Var conv3x3(Var x, Var kernel, Var bias, int height, int width);  // pad 1, stride 1; bias may be invalid
  Var avg_pool2(Var x, int height, int width);

  // Losses (all return 1 x 1).
  Var cross_entropy(Var logits, int target);  // -log softmax(logits)[target]
  Var bce_with_logit(Var logit, double target);
  Var bce_mean(Var probs, const Vector& targets, double clamp);

  // Escape hatch for ops whose backward is computed elsewhere.
  using BackwardFn = std::function<void(Graph&, const Matrix& grad)>;
  Var custom(Matrix value, std::vector<Var> parents, BackwardFn backward);
  void accumulate(Var v, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    BackwardFn backward;
    const Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Matrix value, std::vector<int> parents, BackwardFn backward);
  Node& node(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }

  std::vector<Node> nodes_;
};

struct LstmState {
  Var h;
  Var c;
};

// One LSTM step; weight is 4H x (in + H) with gate order (input, forget, cell, output).
LstmState lstm_step(Graph& g, Var weight, Var bias, Var x, const LstmState& prev);

}  // namespace relpara::ad
