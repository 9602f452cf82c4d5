#pragma once

// Reverse-mode automatic differentiation over dense rank-2 arrays of
// 64-bit floats. Define-by-run: every op records itself on a Tape, and
// backward() replays the tape in exact reverse order. A Value is a cheap
// handle (tape pointer + node id); all storage lives on the tape.
//
// Conventions:
//   - Every array is rows x cols, row-major. Scalars are 1x1, row
//     vectors 1xn. The batch dimension, where present, is rows.
//   - Gradient buffers are allocated lazily, the first time a child
//     writes into them; backward() skips nodes whose gradient was never
//     touched, so unused subgraphs cost nothing.
//   - leaf() views caller-owned memory (weights stay where the optimizer
//     can see them); constant() copies.
//   - ReLU subgradient at 0 is 0, as is sign(0) for abs/l1 gradients.

#include <cstddef>
#include <functional>
#include <vector>

namespace dubstyle::ad {

class Tape;

class Value {
 public:
  Value() = default;

  bool defined() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const { return rows() * cols(); }

  const double* data() const;
  double scalar() const;  // requires shape 1x1

  // Gradient of the last backward() root w.r.t. this node; nullptr if
  // the node was not reached (gradient identically zero).
  const double* grad() const;

 private:
  friend class Tape;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  explicit Tape(bool validate = false) : validate_(validate) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When enabled, every op checks its output for NaN/Inf and throws.
  void set_validate(bool on) { validate_ = on; }
  bool validate() const { return validate_; }

  // Trainable leaf viewing caller-owned memory (not copied; must outlive
  // the tape).
  Value leaf(std::size_t rows, std::size_t cols, double* data);
  // Non-trainable input, copied onto the tape.
  Value constant(std::size_t rows, std::size_t cols, const double* data);
  Value constant_scalar(double x);

  // Runs the backward pass from a scalar root. Clears previous gradients
  // first, so repeated calls from any root are independent and repeatable.
  void backward(const Value& root);

  std::size_t node_count() const { return nodes_.size(); }

  // Low-level node interface used by the op library below.
  Value handle(std::size_t id) { return Value(this, id); }
  std::size_t emplace(std::size_t rows, std::size_t cols, bool requires_grad);
  std::size_t rows_of(std::size_t id) const { return nodes_[id].rows; }
  std::size_t cols_of(std::size_t id) const { return nodes_[id].cols; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  double* storage(std::size_t id) { return nodes_[id].storage.data(); }
  const double* data(std::size_t id) const { return nodes_[id].data; }
  double* grad_accum(std::size_t id);  // zero-allocates on first touch
  bool grad_touched(std::size_t id) const { return !nodes_[id].grad.empty(); }
  const double* grad_data(std::size_t id) const;
  void set_backward(std::size_t id, std::function<void()> fn);
  void check_finite(std::size_t id, const char* op);

 private:
  struct Node {
    std::size_t rows = 0, cols = 0;
    const double* data = nullptr;       // storage.data() or external leaf
    std::vector<double> storage;        // owned forward buffer (empty for leaves)
    std::vector<double> grad;           // lazily allocated by children
    bool requires_grad = false;
    std::function<void()> backward;
  };

  std::vector<Node> nodes_;
  bool validate_ = false;
};

// ---- Op library ----------------------------------------------------------
// All ops validate shapes and throw std::invalid_argument naming the op
// and the offending shapes.

Value matmul(const Value& a, const Value& b);     // (m x k)·(k x n)
Value matmul_nt(const Value& a, const Value& b);  // (m x k)·(n x k)^T
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);        // elementwise
Value div(const Value& a, const Value& b);        // elementwise
Value scale(const Value& a, double c);
Value add_rowvec(const Value& a, const Value& v); // a (m x n) + v (1 x n) per row
Value relu(const Value& a);
Value sigmoid(const Value& a);
Value tanh_act(const Value& a);
Value log_nat(const Value& a);
Value abs_val(const Value& a);
Value sqrt_val(const Value& a);
Value clamp(const Value& a, double lo, double hi);  // gradient passes strictly inside
Value sum(const Value& a);       // 1x1
Value mean(const Value& a);      // 1x1
Value sum_cols(const Value& a);  // m x n -> m x 1 row sums
Value l1_norm(const Value& a);   // 1x1
Value dot(const Value& a, const Value& b);  // 1x1, same shapes
Value concat_cols(const Value& a, const Value& b);
Value slice_cols(const Value& a, std::size_t c0, std::size_t c1);  // [c0, c1)
Value gather_cols(const Value& a, const std::vector<std::size_t>& idx);
Value detach(const Value& a);    // constant copy, cuts gradient flow

// ---- Finite-difference verification --------------------------------------

struct LeafSpec {
  std::size_t rows = 1, cols = 1;
  std::vector<double> data;
};

// Builds a scalar graph from leaves; called once for the analytic gradient
// and 2·(#components) times for central differences.
using GraphFn = std::function<Value(Tape&, const std::vector<Value>&)>;

struct FiniteDiffReport {
  bool pass = false;
  double max_rel_err = 0.0;   // max over components of |ad-fd|/max(1,|ad|,|fd|)
  std::size_t worst_leaf = 0;
  std::size_t worst_component = 0;
  double worst_ad = 0.0;
  double worst_fd = 0.0;
  double h = 0.0, tol = 0.0;
};

// max_probes > 0 limits the check to an evenly strided subset of that many
// components across all leaves (analytic gradients are still computed for
// everything); 0 checks every component.
FiniteDiffReport finite_diff_check(const GraphFn& f, std::vector<LeafSpec> leaves,
                                   double h = 1e-5, double tol = 1e-5,
                                   std::size_t max_probes = 0);

}  // namespace dubstyle::ad
