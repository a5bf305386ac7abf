#include "dusa/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dusa {

const Mat& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Mat& v = value();
  if (v.size() != 1) throw ShapeError("Var::scalar on a non-scalar node");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

// -- Tape --------------------------------------------------------------------

Var Tape::constant(Mat value, const char* op) { return record(std::move(value), op, {}, nullptr); }

Var Tape::leaf(Mat value, std::string name) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.op = "leaf";
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::record(Mat value, const char* op, std::initializer_list<Var> parents, Backward backward) {
  return record(std::move(value), op, std::vector<Var>(parents), std::move(backward));
}

Var Tape::record(Mat value, const char* op, const std::vector<Var>& parents, Backward backward) {
  if (!value.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite value produced by '" << op << "' at tape node " << nodes_.size();
    for (const Var& p : parents) {
      if (!p.value().allFinite()) {
        msg << " (input node " << p.id() << " from '" << nodes_[p.id()].op << "' already non-finite)";
        break;
      }
    }
    throw NonFiniteError(msg.str());
  }
  Node n;
  n.value = std::move(value);
  n.op = op;
  n.requires_grad = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Mat& contribution) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0)
    n.grad = contribution;
  else
    n.grad += contribution;
}

void Tape::backward(const Var& root) {
  if (root.value().size() != 1) throw ShapeError("backward root must be 1x1");
  if (!root.requires_grad()) return;
  nodes_[root.id()].grad = Mat::Ones(1, 1);
  for (int id = root.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.size() == 0) continue;
    // The closure may append to other nodes' grads but never reallocates nodes_.
    n.backward(*this, n.grad);
  }
}

Mat Tape::gradient(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

// -- operations --------------------------------------------------------------

namespace {

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream msg;
    msg << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x" << b.cols();
    throw ShapeError(msg.str());
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() * b.value(), "matmul", {a, b}, [ia, ib](Tape& t, const Mat& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

Var operator+(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() + b.value(), "add", {a, b}, [ia, ib](Tape& t, const Mat& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var operator-(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value() - b.value(), "sub", {a, b}, [ia, ib](Tape& t, const Mat& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, -g);
  });
}

Var operator-(const Var& a) { return -1.0 * a; }

Var operator*(double s, const Var& a) {
  const int ia = a.id();
  return a.tape().record(s * a.value(), "scale", {a}, [ia, s](Tape& t, const Mat& g) { t.accumulate(ia, s * g); });
}

Var operator+(const Var& a, const Mat& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw ShapeError("add constant: shape mismatch");
  const int ia = a.id();
  return a.tape().record(a.value() + c, "add_const", {a}, [ia](Tape& t, const Mat& g) { t.accumulate(ia, g); });
}

Var operator-(const Mat& c, const Var& a) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) throw ShapeError("sub from constant: shape mismatch");
  const int ia = a.id();
  return a.tape().record(c - a.value(), "rsub_const", {a}, [ia](Tape& t, const Mat& g) { t.accumulate(ia, -g); });
}

Var cwise_product(const Var& a, const Var& b) {
  require_same_shape(a, b, "cwise_product");
  const int ia = a.id(), ib = b.id();
  return a.tape().record(a.value().cwiseProduct(b.value()), "cwise_product", {a, b},
                         [ia, ib](Tape& t, const Mat& g) {
                           if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
                           if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
                         });
}

Var add_row(const Var& m, const Var& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) throw ShapeError("add_row: expected a 1 x cols row");
  const int im = m.id(), ir = row.id();
  Mat out = m.value().rowwise() + row.value().row(0);
  return m.tape().record(std::move(out), "add_row", {m, row}, [im, ir](Tape& t, const Mat& g) {
    t.accumulate(im, g);
    if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
  });
}

Var silu(const Var& a) {
  const int ia = a.id();
  const Mat sig = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  Mat out = a.value().cwiseProduct(sig);
  return a.tape().record(std::move(out), "silu", {a}, [ia, sig](Tape& t, const Mat& g) {
    const auto x = t.value(ia).array();
    const auto s = sig.array();
    t.accumulate(ia, (g.array() * (s * (1.0 + x * (1.0 - s)))).matrix());
  });
}

Var square(const Var& a) {
  const int ia = a.id();
  return a.tape().record(a.value().array().square().matrix(), "square", {a}, [ia](Tape& t, const Mat& g) {
    t.accumulate(ia, 2.0 * g.cwiseProduct(t.value(ia)));
  });
}

Var sum(const Var& a) {
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(Mat::Constant(1, 1, a.value().sum()), "sum", {a}, [ia, r, c](Tape& t, const Mat& g) {
    t.accumulate(ia, Mat::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& a) {
  if (a.value().size() == 0) throw ShapeError("mean of an empty matrix");
  return (1.0 / static_cast<double>(a.value().size())) * sum(a);
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Var& p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<std::pair<int, Index>> spans;  // (id, width)
  Index at = 0;
  for (const Var& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), p.cols());
    at += p.cols();
  }
  return parts.front().tape().record(std::move(out), "concat_cols", parts, [spans](Tape& t, const Mat& g) {
    Index off = 0;
    for (const auto& [id, width] : spans) {
      if (t.requires_grad(id)) t.accumulate(id, g.middleCols(off, width));
      off += width;
    }
  });
}

Var gather_rows(const Var& table, const std::vector<int>& rows) {
  const Index n = table.rows();
  Mat out(static_cast<Index>(rows.size()), table.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= n) throw std::out_of_range("gather_rows: row index out of range");
    out.row(static_cast<Index>(i)) = table.value().row(rows[i]);
  }
  const int it = table.id();
  const Index c = table.cols();
  return table.tape().record(std::move(out), "gather_rows", {table}, [it, rows, n, c](Tape& t, const Mat& g) {
    Mat scatter = Mat::Zero(n, c);
    for (std::size_t i = 0; i < rows.size(); ++i) scatter.row(rows[i]) += g.row(static_cast<Index>(i));
    t.accumulate(it, scatter);
  });
}

Var top_rows(const Var& a, Index n) {
  if (n > a.rows() || n < 0) throw ShapeError("top_rows: out of range");
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(a.value().topRows(n), "top_rows", {a}, [ia, r, c, n](Tape& t, const Mat& g) {
    Mat full = Mat::Zero(r, c);
    full.topRows(n) = g;
    t.accumulate(ia, full);
  });
}

Var softmax_rows(const Var& a) {
  Mat p = a.value();
  for (Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp().matrix();
    p.row(i) /= p.row(i).sum();
  }
  const int ia = a.id();
  Mat probs = p;
  return a.tape().record(std::move(p), "softmax_rows", {a}, [ia, probs](Tape& t, const Mat& g) {
    const Vec dot = (g.cwiseProduct(probs)).rowwise().sum();
    t.accumulate(ia, probs.cwiseProduct(g.colwise() - dot));
  });
}

Var log_softmax_rows(const Var& a) {
  Mat out = a.value();
  Mat probs(out.rows(), out.cols());
  for (Index i = 0; i < out.rows(); ++i) {
    const double mx = out.row(i).maxCoeff();
    const double lse = mx + std::log((out.row(i).array() - mx).exp().sum());
    out.row(i).array() -= lse;
    probs.row(i) = out.row(i).array().exp().matrix();
  }
  const int ia = a.id();
  return a.tape().record(std::move(out), "log_softmax_rows", {a}, [ia, probs](Tape& t, const Mat& g) {
    const Vec gsum = g.rowwise().sum();
    t.accumulate(ia, g - probs.cwiseProduct(gsum.replicate(1, probs.cols())));
  });
}

Var l2_normalize_rows(const Var& a, double guard) {
  const Mat& x = a.value();
  Vec norms = x.rowwise().norm();
  Vec denom = norms.cwiseMax(guard);
  Mat out = x.array().colwise() / denom.array();
  const int ia = a.id();
  Mat y = out;
  return a.tape().record(std::move(out), "l2_normalize_rows", {a}, [ia, y, norms, guard](Tape& t, const Mat& g) {
    Mat gin(g.rows(), g.cols());
    for (Index i = 0; i < g.rows(); ++i) {
      if (norms(i) > guard) {
        // d(x/|x|) = (g - y (y . g)) / |x|
        const double yg = y.row(i).dot(g.row(i));
        gin.row(i) = (g.row(i) - yg * y.row(i)) / norms(i);
      } else {
        gin.row(i) = g.row(i) / guard;
      }
    }
    t.accumulate(ia, gin);
  });
}

Var gather_per_row(const Var& a, const IndexMat& cols) {
  if (cols.rows() != a.rows()) throw ShapeError("gather_per_row: index rows differ from input rows");
  Mat out(cols.rows(), cols.cols());
  for (Index i = 0; i < cols.rows(); ++i)
    for (Index j = 0; j < cols.cols(); ++j) {
      const int c = cols(i, j);
      if (c < 0 || c >= a.cols()) throw std::out_of_range("gather_per_row: column index out of range");
      out(i, j) = a.value()(i, c);
    }
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().record(std::move(out), "gather_per_row", {a}, [ia, cols, r, c](Tape& t, const Mat& g) {
    Mat full = Mat::Zero(r, c);
    for (Index i = 0; i < cols.rows(); ++i)
      for (Index j = 0; j < cols.cols(); ++j) full(i, cols(i, j)) += g(i, j);
    t.accumulate(ia, full);
  });
}

Var weighted_row_sum(const Var& weights, const Var& values) {
  const Index n = weights.rows(), b = weights.cols(), d = values.cols();
  if (values.rows() != n * b) throw ShapeError("weighted_row_sum: values must have rows = weights.rows * weights.cols");
  Mat out = Mat::Zero(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < b; ++j) out.row(i) += weights.value()(i, j) * values.value().row(i * b + j);
  const int iw = weights.id(), iv = values.id();
  return weights.tape().record(std::move(out), "weighted_row_sum", {weights, values},
                               [iw, iv, n, b, d](Tape& t, const Mat& g) {
                                 if (t.requires_grad(iw)) {
                                   const Mat& v = t.value(iv);
                                   Mat gw(n, b);
                                   for (Index i = 0; i < n; ++i)
                                     for (Index j = 0; j < b; ++j) gw(i, j) = g.row(i).dot(v.row(i * b + j));
                                   t.accumulate(iw, gw);
                                 }
                                 if (t.requires_grad(iv)) {
                                   const Mat& w = t.value(iw);
                                   Mat gv(n * b, d);
                                   for (Index i = 0; i < n; ++i)
                                     for (Index j = 0; j < b; ++j) gv.row(i * b + j) = w(i, j) * g.row(i);
                                   t.accumulate(iv, gv);
                                 }
                               });
}

Var pixel_weighted_sum(const Var& weights, const Var& values, Index channels) {
  const Index b = weights.cols();
  if (b == 0 || values.rows() % b != 0) throw ShapeError("pixel_weighted_sum: values rows must be a multiple of b");
  const Index n = values.rows() / b;
  if (channels <= 0 || values.cols() % channels != 0) throw ShapeError("pixel_weighted_sum: bad channel count");
  const Index pixels = values.cols() / channels;
  if (weights.rows() != n * pixels) throw ShapeError("pixel_weighted_sum: weights must have N*P rows");
  const Mat& w = weights.value();
  const Mat& v = values.value();
  Mat out = Mat::Zero(n, pixels * channels);
  for (Index i = 0; i < n; ++i)
    for (Index p = 0; p < pixels; ++p)
      for (Index j = 0; j < b; ++j)
        out.row(i).segment(p * channels, channels) += w(i * pixels + p, j) * v.row(i * b + j).segment(p * channels, channels);
  const int iw = weights.id(), iv = values.id();
  return weights.tape().record(std::move(out), "pixel_weighted_sum", {weights, values},
                               [iw, iv, n, b, pixels, channels](Tape& t, const Mat& g) {
                                 const Mat& w = t.value(iw);
                                 const Mat& v = t.value(iv);
                                 if (t.requires_grad(iw)) {
                                   Mat gw(n * pixels, b);
                                   for (Index i = 0; i < n; ++i)
                                     for (Index p = 0; p < pixels; ++p)
                                       for (Index j = 0; j < b; ++j)
                                         gw(i * pixels + p, j) = g.row(i).segment(p * channels, channels).dot(
                                             v.row(i * b + j).segment(p * channels, channels));
                                   t.accumulate(iw, gw);
                                 }
                                 if (t.requires_grad(iv)) {
                                   Mat gv(n * b, pixels * channels);
                                   for (Index i = 0; i < n; ++i)
                                     for (Index j = 0; j < b; ++j)
                                       for (Index p = 0; p < pixels; ++p)
                                         gv.row(i * b + j).segment(p * channels, channels) =
                                             w(i * pixels + p, j) * g.row(i).segment(p * channels, channels);
                                   t.accumulate(iv, gv);
                                 }
                               });
}

Var stop_gradient(const Var& a) { return a.tape().constant(a.value(), "stop_gradient"); }

// -- gradients over parameter sets ------------------------------------------

ParamVars bind(Tape& tape, const ParamSet& params) {
  ParamVars vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.leaf(value, name));
  return vars;
}

ValueAndGrad value_and_grad(const LossFn& loss, const ParamSet& params) {
  Tape tape;
  const ParamVars vars = bind(tape, params);
  const Var out = loss(tape, vars);
  if (out.value().size() != 1) throw ShapeError("loss must evaluate to a 1x1 value");
  tape.backward(out);
  ValueAndGrad result;
  result.value = out.scalar();
  for (const auto& [name, v] : vars) result.grads.emplace(name, tape.gradient(v));
  return result;
}

ParamSet grad(const LossFn& loss, const ParamSet& params) { return value_and_grad(loss, params).grads; }

double evaluate(const LossFn& loss, const ParamSet& params) {
  Tape tape;
  ParamVars vars;
  for (const auto& [name, value] : params) vars.emplace(name, tape.constant(value));
  return loss(tape, vars).scalar();
}

ParamSet numeric_grad(const LossFn& loss, const ParamSet& params, double step) {
  ParamSet probe = params;
  ParamSet out;
  for (auto& [name, value] : probe) {
    Mat g(value.rows(), value.cols());
    for (Index k = 0; k < value.size(); ++k) {
      const double saved = value.data()[k];
      value.data()[k] = saved + step;
      const double up = evaluate(loss, probe);
      value.data()[k] = saved - step;
      const double down = evaluate(loss, probe);
      value.data()[k] = saved;
      g.data()[k] = (up - down) / (2.0 * step);
    }
    out.emplace(name, std::move(g));
  }
  return out;
}

double max_relative_error(const ParamSet& analytic, const ParamSet& numeric, double floor) {
  double worst = 0.0;
  for (const auto& [name, a] : analytic) {
    const auto it = numeric.find(name);
    if (it == numeric.end()) throw std::invalid_argument("max_relative_error: missing parameter " + name);
    const Mat& n = it->second;
    if (n.rows() != a.rows() || n.cols() != a.cols()) throw ShapeError("max_relative_error: shape mismatch for " + name);
    for (Index k = 0; k < a.size(); ++k) {
      const double x = a.data()[k], y = n.data()[k];
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  }
  return worst;
}

double grad_check(const LossFn& loss, const ParamSet& params, double step) {
  return max_relative_error(grad(loss, params), numeric_grad(loss, params, step));
}

}  // namespace dusa
