#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtlsent {

// All numerics are double; gradient checking at 1e-4 needs the headroom.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Clamp applied inside cross-entropy before the log.
inline constexpr double kXentClamp = 1e-12;

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

class Tape;

// Handle to a node on a tape. Vectors are column vectors (n x 1).
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& value() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

// Trainable leaf storage. Gradients accumulate (+=) across tapes and steps;
// callers zero them between optimizer updates.
struct Param {
  Mat value;
  Mat grad;

  Param() = default;
  explicit Param(Mat v) : value(std::move(v)) { grad = Mat::Zero(value.rows(), value.cols()); }
  void zero_grad() { grad.setZero(); }
};

// Define-by-run computation record. Rebuilt per batch; a single tape is not
// shareable across concurrent executions.
class Tape {
 public:
  Var constant(Mat v);
  Var leaf(Mat v);            // like constant but keeps a grad buffer (for grad inspection)
  Var param(Param& p);        // backward accumulates into p.grad

  // Runs the reverse pass from a scalar loss. Each record is visited once,
  // in reverse topological order.
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

  // internal, used by ops
  int push(Mat value, std::function<void(Tape&, int)> back);
  Mat& val(int id) { return nodes_[id].value; }
  Mat& grd(int id) { return nodes_[id].grad; }

 private:
  struct Node {
    Mat value;
    Mat grad;  // allocated at backward time
    std::function<void(Tape&, int)> back;
  };
  std::vector<Node> nodes_;
  std::vector<std::pair<int, Param*>> param_leaves_;
};

inline const Mat& Var::value() const { return const_cast<Tape*>(tape)->val(id); }
inline const Mat& Var::grad() const { return const_cast<Tape*>(tape)->grd(id); }

// ---- ops -------------------------------------------------------------------

Var matmul(Var a, Var b);

enum class EwOp { Add, Sub, Mul };
Var elementwise(EwOp op, Var a, Var b);
inline Var add(Var a, Var b) { return elementwise(EwOp::Add, a, b); }
inline Var sub(Var a, Var b) { return elementwise(EwOp::Sub, a, b); }
inline Var mul(Var a, Var b) { return elementwise(EwOp::Mul, a, b); }

Var sigmoid(Var x);
Var tanh(Var x);

// Numerically stable softmax over a column vector (n x 1).
Var softmax(Var logits);

// -log(max(probs[label], clamp)); probs is a column vector.
Var cross_entropy(Var probs, int label);

// Vertical stack; doubles as 1-D concatenation for column vectors.
Var concat_rows(const std::vector<Var>& parts);

Var slice_rows(Var x, int start, int count);

Var frobenius_sq(Var m);

Var sum(Var x);
Var scale(Var x, double c);

// X (m x n) plus column vector b (m x 1) broadcast over columns.
Var add_col_broadcast(Var x, Var b);

// X (m x n) scaled by the (i,0) entry of a Var s.
Var scale_by_entry(Var x, Var s, int i);

// Identity forward; multiplies the incoming gradient by -lambda. Implements
// the adversarial min-max in one pass.
Var grad_reverse(Var x, double lambda = 1.0);

// Mean over columns of -log softmax(logits[:, j])[labels[j]]; logits C x B.
Var softmax_xent_cols(Var logits, const std::vector<int>& labels);

// Columnwise softmax of logits (C x B).
Var softmax_cols(Var logits);

// Mean over columns of -log(max(probs(labels[j], j), clamp)); probs C x B.
Var pick_neg_log_cols(Var probs, const std::vector<int>& labels);

// Per-dimension max over timesteps. steps[t] is d x B; mask(b, t) == 1 marks
// a valid timestep for sentence b. Gradient routes to the earliest achieving
// timestep per dimension.
Var masked_max_time(const std::vector<Var>& steps, const Mat& mask);

// (1/B) * sum_b || Gram_b ||_F^2 with Gram_b = sum_t mask(b,t) *
// hs[t].col(b) * hp[t].col(b)^T. This is the orthogonality penalty between
// shared and private hidden states.
Var gram_frobenius(const std::vector<Var>& hs, const std::vector<Var>& hp, const Mat& mask);

// ---- gradient checking -----------------------------------------------------

// f builds a scalar loss on a fresh tape from the current param values.
// Returns the max over all parameter entries of the relative error between
// the analytic gradient and a central difference with step eps.
double grad_check(const std::function<Var(Tape&)>& f, const std::vector<Param*>& params,
                  double eps = 1e-4);

}  // namespace mtlsent
