#pragma once

#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include "dusa/core.hpp"

namespace dusa {

class Tape;

/// Handle to a matrix-valued node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Records matrix operations in evaluation order and replays them backwards.
/// Nodes that depend on no leaf carry no backward closure.
class Tape {
 public:
  /// Receives the gradient flowing into the node and distributes it to parents.
  using Backward = std::function<void(Tape&, const Mat& grad_out)>;

  Var constant(Mat value, const char* op = "constant");
  Var leaf(Mat value, std::string name);
  Var record(Mat value, const char* op, std::initializer_list<Var> parents, Backward backward);
  Var record(Mat value, const char* op, const std::vector<Var>& parents, Backward backward);

  const Mat& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Adds `contribution` into the gradient of node `id` if it requires one.
  void accumulate(int id, const Mat& contribution);

  /// Reverse sweep from a 1x1 root. May be called once per tape.
  void backward(const Var& root);

  /// Gradient of the last backward() root with respect to `v`; zeros when no
  /// path exists.
  Mat gradient(const Var& v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    const char* op = "";
    std::string name;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// -- operations --------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator*(double s, const Var& a);
Var operator+(const Var& a, const Mat& c);
Var operator-(const Mat& c, const Var& a);
Var cwise_product(const Var& a, const Var& b);
/// m + 1 * row, broadcasting a 1xn row over every row of m.
Var add_row(const Var& m, const Var& row);
Var silu(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(const Var& table, const std::vector<int>& rows);
Var top_rows(const Var& a, Index n);
Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);
/// Each row divided by max(||row||_2, guard).
Var l2_normalize_rows(const Var& a, double guard = 1e-12);
/// out(i, j) = a(i, cols(i, j)).
Var gather_per_row(const Var& a, const IndexMat& cols);
/// Row i of the result is sum_j weights(i, j) * values.row(i * b + j) with b =
/// weights.cols().
Var weighted_row_sum(const Var& weights, const Var& values);
/// Per-pixel aggregation for images flattened pixel-major with `channels`
/// values per pixel. weights: (N*P) x b, values: (N*b) x (P*channels).
Var pixel_weighted_sum(const Var& weights, const Var& values, Index channels);
/// Forwards the value, blocks the gradient.
Var stop_gradient(const Var& a);

// -- gradients of scalar losses over named parameters -------------------------

using ParamVars = std::map<std::string, Var>;
using LossFn = std::function<Var(Tape&, const ParamVars&)>;

ParamVars bind(Tape& tape, const ParamSet& params);

struct ValueAndGrad {
  double value = 0.0;
  ParamSet grads;
};

ValueAndGrad value_and_grad(const LossFn& loss, const ParamSet& params);
ParamSet grad(const LossFn& loss, const ParamSet& params);
double evaluate(const LossFn& loss, const ParamSet& params);

/// Worst per-coordinate relative error |a - n| / max(|a|, |n|, floor) between
/// analytic and numeric gradients.
double max_relative_error(const ParamSet& analytic, const ParamSet& numeric,
                          double floor = 1e-2);

/// Central finite differences of `loss` at every coordinate of `params`.
ParamSet numeric_grad(const LossFn& loss, const ParamSet& params, double step);

/// Compares grad() with numeric_grad(); returns the worst relative error.
double grad_check(const LossFn& loss, const ParamSet& params, double step);

}  // namespace dusa
