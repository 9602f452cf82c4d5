#include "dubstyle/autodiff.hpp"

#include "dubstyle/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace dubstyle::ad {

namespace {

namespace kn = dubstyle::kernels;

std::string shape_str(std::size_t rows, std::size_t cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

std::string shape_str(const Value& v) { return shape_str(v.rows(), v.cols()); }

[[noreturn]] void shape_error(const char* op, const Value& a, const Value& b) {
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " +
                              shape_str(a) + " and " + shape_str(b));
}

Tape& same_tape(const char* op, const Value& a, const Value& b) {
  if (!a.defined() || !b.defined())
    throw std::invalid_argument(std::string(op) + ": undefined value");
  if (&a.tape() != &b.tape())
    throw std::invalid_argument(std::string(op) + ": values from different tapes");
  return a.tape();
}

Tape& own_tape(const char* op, const Value& a) {
  if (!a.defined())
    throw std::invalid_argument(std::string(op) + ": undefined value");
  return a.tape();
}

void require_same_shape(const char* op, const Value& a, const Value& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

}  // namespace

// ---- Value ----------------------------------------------------------------

std::size_t Value::rows() const { return tape_->rows_of(id_); }
std::size_t Value::cols() const { return tape_->cols_of(id_); }
const double* Value::data() const { return tape_->data(id_); }

double Value::scalar() const {
  if (size() != 1)
    throw std::logic_error("scalar() called on non-scalar value " +
                           shape_str(*this));
  return data()[0];
}

const double* Value::grad() const {
  return tape_->grad_touched(id_) ? tape_->grad_data(id_) : nullptr;
}

// ---- Tape -----------------------------------------------------------------

std::size_t Tape::emplace(std::size_t rows, std::size_t cols, bool requires_grad) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.requires_grad = requires_grad;
  n.storage.assign(rows * cols, 0.0);
  n.data = n.storage.data();
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Value Tape::leaf(std::size_t rows, std::size_t cols, double* data) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.requires_grad = true;
  n.data = data;
  nodes_.push_back(std::move(n));
  return Value(this, nodes_.size() - 1);
}

Value Tape::constant(std::size_t rows, std::size_t cols, const double* data) {
  std::size_t id = emplace(rows, cols, false);
  std::memcpy(storage(id), data, rows * cols * sizeof(double));
  return Value(this, id);
}

Value Tape::constant_scalar(double x) { return constant(1, 1, &x); }

double* Tape::grad_accum(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.rows * n.cols, 0.0);
  return n.grad.data();
}

const double* Tape::grad_data(std::size_t id) const {
  return nodes_[id].grad.data();
}

void Tape::set_backward(std::size_t id, std::function<void()> fn) {
  nodes_[id].backward = std::move(fn);
}

void Tape::check_finite(std::size_t id, const char* op) {
  if (!validate_) return;
  const Node& n = nodes_[id];
  for (std::size_t i = 0; i < n.rows * n.cols; ++i)
    if (!std::isfinite(n.data[i]))
      throw std::runtime_error(std::string(op) +
                               " produced a non-finite value at index " +
                               std::to_string(i));
}

void Tape::backward(const Value& root) {
  if (!root.defined() || &root.tape() != this)
    throw std::invalid_argument("backward: root is not on this tape");
  if (root.size() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " +
                                shape_str(root));
  for (Node& n : nodes_) n.grad.clear();
  grad_accum(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad.empty() && n.backward) n.backward();
  }
}

// ---- Ops ------------------------------------------------------------------

namespace {

// Shared plumbing: allocate the output node, then hand the forward buffer
// to `fwd`. `requires_grad` is inherited from the inputs.
template <typename Fwd>
Value unary_node(const char* op, const Value& a, std::size_t rows,
                 std::size_t cols, Fwd fwd) {
  Tape& t = own_tape(op, a);
  std::size_t id = t.emplace(rows, cols, t.requires_grad(a.id()));
  fwd(t, id);
  t.check_finite(id, op);
  return t.handle(id);
}

template <typename Fwd>
Value binary_node(const char* op, const Value& a, const Value& b,
                  std::size_t rows, std::size_t cols, Fwd fwd) {
  Tape& t = same_tape(op, a, b);
  std::size_t id =
      t.emplace(rows, cols, t.requires_grad(a.id()) || t.requires_grad(b.id()));
  fwd(t, id);
  t.check_finite(id, op);
  return t.handle(id);
}

}  // namespace

Value matmul(const Value& a, const Value& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const std::size_t ia = a.id(), ib = b.id();
  return binary_node("matmul", a, b, m, n, [=](Tape& t, std::size_t id) {
    kn::gemm_nn(m, n, k, t.data(ia), t.data(ib), t.storage(id));
    t.set_backward(id, [=, &t] {
      const double* dy = t.grad_data(id);
      if (t.requires_grad(ia)) kn::gemm_nt(m, k, n, dy, t.data(ib), t.grad_accum(ia));
      if (t.requires_grad(ib)) kn::gemm_tn(k, n, m, t.data(ia), dy, t.grad_accum(ib));
    });
  });
}

Value matmul_nt(const Value& a, const Value& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const std::size_t ia = a.id(), ib = b.id();
  return binary_node("matmul_nt", a, b, m, n, [=](Tape& t, std::size_t id) {
    kn::gemm_nt(m, n, k, t.data(ia), t.data(ib), t.storage(id));
    t.set_backward(id, [=, &t] {
      const double* dy = t.grad_data(id);
      if (t.requires_grad(ia)) kn::gemm_nn(m, k, n, dy, t.data(ib), t.grad_accum(ia));
      if (t.requires_grad(ib)) kn::gemm_tn(n, k, m, dy, t.data(ia), t.grad_accum(ib));
    });
  });
}

Value add(const Value& a, const Value& b) {
  require_same_shape("add", a, b);
  const std::size_t n = a.size(), ia = a.id(), ib = b.id();
  return binary_node("add", a, b, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::add(n, t.data(ia), t.data(ib), t.storage(id));
    t.set_backward(id, [=, &t] {
      const double* dy = t.grad_data(id);
      if (t.requires_grad(ia)) kn::axpy(n, 1.0, dy, t.grad_accum(ia));
      if (t.requires_grad(ib)) kn::axpy(n, 1.0, dy, t.grad_accum(ib));
    });
  });
}

Value sub(const Value& a, const Value& b) {
  require_same_shape("sub", a, b);
  const std::size_t n = a.size(), ia = a.id(), ib = b.id();
  return binary_node("sub", a, b, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::sub(n, t.data(ia), t.data(ib), t.storage(id));
    t.set_backward(id, [=, &t] {
      const double* dy = t.grad_data(id);
      if (t.requires_grad(ia)) kn::axpy(n, 1.0, dy, t.grad_accum(ia));
      if (t.requires_grad(ib)) kn::axpy(n, -1.0, dy, t.grad_accum(ib));
    });
  });
}

Value mul(const Value& a, const Value& b) {
  require_same_shape("mul", a, b);
  const std::size_t n = a.size(), ia = a.id(), ib = b.id();
  return binary_node("mul", a, b, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::mul(n, t.data(ia), t.data(ib), t.storage(id));
    t.set_backward(id, [=, &t] {
      const double* dy = t.grad_data(id);
      if (t.requires_grad(ia)) kn::madd(n, dy, t.data(ib), t.grad_accum(ia));
      if (t.requires_grad(ib)) kn::madd(n, dy, t.data(ia), t.grad_accum(ib));
    });
  });
}

Value div(const Value& a, const Value& b) {
  require_same_shape("div", a, b);
  const std::size_t n = a.size(), ia = a.id(), ib = b.id();
  return binary_node("div", a, b, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    const double* pa = t.data(ia);
    const double* pb = t.data(ib);
    double* out = t.storage(id);
    for (std::size_t i = 0; i < n; ++i) out[i] = pa[i] / pb[i];
    t.set_backward(id, [=, &t] {
      const double* dy = t.grad_data(id);
      const double* y = t.data(id);
      const double* db = t.data(ib);
      if (t.requires_grad(ia)) {
        double* g = t.grad_accum(ia);
        for (std::size_t i = 0; i < n; ++i) g[i] += dy[i] / db[i];
      }
      if (t.requires_grad(ib)) {
        double* g = t.grad_accum(ib);
        for (std::size_t i = 0; i < n; ++i) g[i] -= dy[i] * y[i] / db[i];
      }
    });
  });
}

Value scale(const Value& a, double c) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("scale", a, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::scale(n, c, t.data(ia), t.storage(id));
    t.set_backward(id, [=, &t] {
      if (t.requires_grad(ia)) kn::axpy(n, c, t.grad_data(id), t.grad_accum(ia));
    });
  });
}

Value add_rowvec(const Value& a, const Value& v) {
  if (v.rows() != 1 || v.cols() != a.cols()) shape_error("add_rowvec", a, v);
  const std::size_t m = a.rows(), n = a.cols(), ia = a.id(), iv = v.id();
  return binary_node("add_rowvec", a, v, m, n, [=](Tape& t, std::size_t id) {
    const double* pa = t.data(ia);
    const double* pv = t.data(iv);
    double* out = t.storage(id);
    for (std::size_t i = 0; i < m; ++i) kn::add(n, pa + i * n, pv, out + i * n);
    t.set_backward(id, [=, &t] {
      const double* dy = t.grad_data(id);
      if (t.requires_grad(ia)) kn::axpy(m * n, 1.0, dy, t.grad_accum(ia));
      if (t.requires_grad(iv)) {
        double* g = t.grad_accum(iv);
        for (std::size_t i = 0; i < m; ++i) kn::axpy(n, 1.0, dy + i * n, g);
      }
    });
  });
}

Value relu(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("relu", a, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::relu(n, t.data(ia), t.storage(id));
    t.set_backward(id, [=, &t] {
      if (t.requires_grad(ia))
        kn::relu_backward(n, t.data(ia), t.grad_data(id), t.grad_accum(ia));
    });
  });
}

Value sigmoid(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("sigmoid", a, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::sigmoid(n, t.data(ia), t.storage(id));
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      const double* y = t.data(id);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i) g[i] += dy[i] * (y[i] * (1.0 - y[i]));
    });
  });
}

Value tanh_act(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("tanh", a, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::tanh_act(n, t.data(ia), t.storage(id));
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      const double* y = t.data(id);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i) g[i] += dy[i] * (1.0 - y[i] * y[i]);
    });
  });
}

Value log_nat(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("log", a, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::log_nat(n, t.data(ia), t.storage(id));
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      const double* x = t.data(ia);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i) g[i] += dy[i] / x[i];
    });
  });
}

Value abs_val(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("abs", a, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    kn::abs_val(n, t.data(ia), t.storage(id));
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      const double* x = t.data(ia);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i)
        g[i] += x[i] > 0.0 ? dy[i] : (x[i] < 0.0 ? -dy[i] : 0.0);
    });
  });
}

Value sqrt_val(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("sqrt", a, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    const double* x = t.data(ia);
    double* out = t.storage(id);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(x[i]);
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      const double* y = t.data(id);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i) g[i] += dy[i] / (2.0 * y[i]);
    });
  });
}

Value clamp(const Value& a, double lo, double hi) {
  if (lo > hi)
    throw std::invalid_argument("clamp: lo " + std::to_string(lo) + " > hi " +
                                std::to_string(hi));
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("clamp", a, a.rows(), a.cols(), [=](Tape& t, std::size_t id) {
    const double* x = t.data(ia);
    double* out = t.storage(id);
    for (std::size_t i = 0; i < n; ++i)
      out[i] = x[i] < lo ? lo : (x[i] > hi ? hi : x[i]);
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      const double* x = t.data(ia);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i)
        if (x[i] > lo && x[i] < hi) g[i] += dy[i];
    });
  });
}

Value sum(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("sum", a, 1, 1, [=](Tape& t, std::size_t id) {
    t.storage(id)[0] = kn::sum(n, t.data(ia));
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double dy = t.grad_data(id)[0];
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i) g[i] += dy;
    });
  });
}

Value mean(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("mean", a, 1, 1, [=](Tape& t, std::size_t id) {
    t.storage(id)[0] = kn::sum(n, t.data(ia)) / static_cast<double>(n);
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double dy = t.grad_data(id)[0] / static_cast<double>(n);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i) g[i] += dy;
    });
  });
}

Value sum_cols(const Value& a) {
  const std::size_t m = a.rows(), n = a.cols(), ia = a.id();
  return unary_node("sum_cols", a, m, 1, [=](Tape& t, std::size_t id) {
    const double* x = t.data(ia);
    double* out = t.storage(id);
    for (std::size_t i = 0; i < m; ++i) out[i] = kn::sum(n, x + i * n);
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i * n + j] += dy[i];
    });
  });
}

Value l1_norm(const Value& a) {
  const std::size_t n = a.size(), ia = a.id();
  return unary_node("l1_norm", a, 1, 1, [=](Tape& t, std::size_t id) {
    t.storage(id)[0] = kn::l1_norm(n, t.data(ia));
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double dy = t.grad_data(id)[0];
      const double* x = t.data(ia);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < n; ++i)
        g[i] += x[i] > 0.0 ? dy : (x[i] < 0.0 ? -dy : 0.0);
    });
  });
}

Value dot(const Value& a, const Value& b) {
  require_same_shape("dot", a, b);
  const std::size_t n = a.size(), ia = a.id(), ib = b.id();
  return binary_node("dot", a, b, 1, 1, [=](Tape& t, std::size_t id) {
    t.storage(id)[0] = kn::dot(n, t.data(ia), t.data(ib));
    t.set_backward(id, [=, &t] {
      const double dy = t.grad_data(id)[0];
      if (t.requires_grad(ia)) kn::axpy(n, dy, t.data(ib), t.grad_accum(ia));
      if (t.requires_grad(ib)) kn::axpy(n, dy, t.data(ia), t.grad_accum(ib));
    });
  });
}

Value concat_cols(const Value& a, const Value& b) {
  if (a.rows() != b.rows()) shape_error("concat_cols", a, b);
  const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
  const std::size_t ia = a.id(), ib = b.id();
  return binary_node("concat_cols", a, b, m, na + nb, [=](Tape& t, std::size_t id) {
    const double* pa = t.data(ia);
    const double* pb = t.data(ib);
    double* out = t.storage(id);
    for (std::size_t i = 0; i < m; ++i) {
      std::memcpy(out + i * (na + nb), pa + i * na, na * sizeof(double));
      std::memcpy(out + i * (na + nb) + na, pb + i * nb, nb * sizeof(double));
    }
    t.set_backward(id, [=, &t] {
      const double* dy = t.grad_data(id);
      if (t.requires_grad(ia)) {
        double* g = t.grad_accum(ia);
        for (std::size_t i = 0; i < m; ++i)
          kn::axpy(na, 1.0, dy + i * (na + nb), g + i * na);
      }
      if (t.requires_grad(ib)) {
        double* g = t.grad_accum(ib);
        for (std::size_t i = 0; i < m; ++i)
          kn::axpy(nb, 1.0, dy + i * (na + nb) + na, g + i * nb);
      }
    });
  });
}

Value slice_cols(const Value& a, std::size_t c0, std::size_t c1) {
  if (c0 >= c1 || c1 > a.cols())
    throw std::invalid_argument("slice_cols: range [" + std::to_string(c0) +
                                ", " + std::to_string(c1) + ") invalid for " +
                                shape_str(a));
  const std::size_t m = a.rows(), n = a.cols(), w = c1 - c0, ia = a.id();
  return unary_node("slice_cols", a, m, w, [=](Tape& t, std::size_t id) {
    const double* x = t.data(ia);
    double* out = t.storage(id);
    for (std::size_t i = 0; i < m; ++i)
      std::memcpy(out + i * w, x + i * n + c0, w * sizeof(double));
    t.set_backward(id, [=, &t] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < m; ++i)
        kn::axpy(w, 1.0, dy + i * w, g + i * n + c0);
    });
  });
}

Value gather_cols(const Value& a, const std::vector<std::size_t>& idx) {
  for (std::size_t j : idx)
    if (j >= a.cols())
      throw std::invalid_argument("gather_cols: index " + std::to_string(j) +
                                  " out of range for " + shape_str(a));
  const std::size_t m = a.rows(), n = a.cols(), w = idx.size(), ia = a.id();
  return unary_node("gather_cols", a, m, w, [=, &idx](Tape& t, std::size_t id) {
    const double* x = t.data(ia);
    double* out = t.storage(id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * n + idx[j]];
    t.set_backward(id, [=, &t, idx] {
      if (!t.requires_grad(ia)) return;
      const double* dy = t.grad_data(id);
      double* g = t.grad_accum(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * n + idx[j]] += dy[i * w + j];
    });
  });
}

Value detach(const Value& a) {
  Tape& t = own_tape("detach", a);
  return t.constant(a.rows(), a.cols(), a.data());
}

// ---- Finite differences ---------------------------------------------------

FiniteDiffReport finite_diff_check(const GraphFn& f, std::vector<LeafSpec> leaves,
                                   double h, double tol, std::size_t max_probes) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h must be > 0");

  auto build = [&](Tape& tape) {
    std::vector<Value> vs;
    vs.reserve(leaves.size());
    for (LeafSpec& l : leaves) {
      if (l.data.size() != l.rows * l.cols)
        throw std::invalid_argument("finite_diff_check: leaf data length " +
                                    std::to_string(l.data.size()) +
                                    " does not match " +
                                    shape_str(l.rows, l.cols));
      vs.push_back(tape.leaf(l.rows, l.cols, l.data.data()));
    }
    Value root = f(tape, vs);
    if (root.size() != 1)
      throw std::invalid_argument("finite_diff_check: graph root must be scalar");
    if (!std::isfinite(root.scalar()))
      throw std::runtime_error("finite_diff_check: non-finite function value");
    return std::pair<Value, std::vector<Value>>(root, std::move(vs));
  };

  std::vector<std::vector<double>> analytic(leaves.size());
  {
    Tape tape;
    auto [root, vs] = build(tape);
    tape.backward(root);
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      analytic[l].assign(leaves[l].data.size(), 0.0);
      if (const double* g = vs[l].grad())
        std::copy(g, g + analytic[l].size(), analytic[l].begin());
    }
  }

  auto eval = [&]() {
    Tape tape;
    return build(tape).first.scalar();
  };

  std::size_t total = 0;
  for (const LeafSpec& l : leaves) total += l.data.size();
  std::vector<std::pair<std::size_t, std::size_t>> probes;
  if (max_probes == 0 || max_probes >= total) {
    probes.reserve(total);
    for (std::size_t l = 0; l < leaves.size(); ++l)
      for (std::size_t c = 0; c < leaves[l].data.size(); ++c)
        probes.emplace_back(l, c);
  } else {
    // Evenly strided flat indices, mapped back to (leaf, component).
    probes.reserve(max_probes);
    std::size_t l = 0, base = 0;
    for (std::size_t k = 0; k < max_probes; ++k) {
      const std::size_t flat = (k * total) / max_probes;
      while (flat - base >= leaves[l].data.size()) base += leaves[l++].data.size();
      probes.emplace_back(l, flat - base);
    }
  }

  FiniteDiffReport rep;
  rep.h = h;
  rep.tol = tol;
  {
    for (const auto& [l, c] : probes) {
      const double saved = leaves[l].data[c];
      leaves[l].data[c] = saved + h;
      const double yp = eval();
      leaves[l].data[c] = saved - h;
      const double ym = eval();
      leaves[l].data[c] = saved;
      const double fd = (yp - ym) / (2.0 * h);
      const double ad = analytic[l][c];
      const double rel =
          std::abs(ad - fd) / std::max({1.0, std::abs(ad), std::abs(fd)});
      if (rel >= rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_leaf = l;
        rep.worst_component = c;
        rep.worst_ad = ad;
        rep.worst_fd = fd;
      }
    }
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

}  // namespace dubstyle::ad
