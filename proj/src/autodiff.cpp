#include "spin/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "spin/errors.hpp"

namespace spin {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}
ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

Tape& common_tape(std::initializer_list<const Value*> values) {
  Tape* tape = nullptr;
  for (const Value* v : values) {
    if (!v->valid()) throw TapeError("operation on an unbound Value");
    if (tape == nullptr) {
      tape = &v->tape();
    } else if (tape != &v->tape()) {
      throw TapeError("operands recorded on different tapes");
    }
  }
  return *tape;
}

void accumulate(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

std::size_t matrix_rank_check(const Value& v, const char* what) {
  if (v.shape().rank() > 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got " + v.shape().str());
  }
  return v.shape().rank();
}

}  // namespace

// --------------------------------------------------------------------------- Value

Tape& Value::tape() const {
  if (tape_ == nullptr) throw TapeError("Value is not bound to a tape");
  return *tape_;
}
const Tensor& Value::data() const { return tape().data(*this); }
bool Value::requires_grad() const { return tape().requires_grad(*this); }
const Tensor& Value::grad() const { return tape().grad(*this); }

// --------------------------------------------------------------------------- Tape

const Tape::Node& Tape::node(const Value& v) const {
  if (!owns(v)) throw TapeError("Value does not belong to this tape");
  return nodes_[v.id_];
}

Tape::Node& Tape::node(const Value& v) {
  if (!owns(v)) throw TapeError("Value does not belong to this tape");
  return nodes_[v.id_];
}

Value Tape::leaf(Tensor data, bool requires_grad) {
  if (!data.all_finite()) throw NumericError("non-finite entry in leaf " + data.shape().str());
  nodes_.push_back(Node{std::move(data), Tensor{}, requires_grad, {}});
  return Value(this, nodes_.size() - 1);
}

Value Tape::record(Tensor data, std::span<const Value> parents, Backprop backprop) {
  if (!data.all_finite()) {
    throw NumericError("non-finite result of shape " + data.shape().str());
  }
  bool needs = false;
  for (const Value& p : parents) {
    if (!owns(p)) throw TapeError("parent Value does not belong to this tape");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  nodes_.push_back(Node{std::move(data), Tensor{}, needs, needs ? std::move(backprop) : Backprop{}});
  return Value(this, nodes_.size() - 1);
}

const Tensor& Tape::data(const Value& v) const { return node(v).data; }
bool Tape::requires_grad(const Value& v) const { return node(v).requires_grad; }

const Tensor& Tape::grad(const Value& v) const {
  const Node& n = node(v);
  if (n.grad.empty() && n.data.size() > 0) {
    // Untouched node: hand out zeros without mutating the record.
    static thread_local Tensor zeros;
    zeros = Tensor(n.data.shape(), 0.0);
    return zeros;
  }
  return n.grad;
}

Tensor& Tape::grad_of(const Value& v) {
  Node& n = node(v);
  if (n.grad.size() != n.data.size() || n.grad.empty()) n.grad = Tensor(n.data.shape(), 0.0);
  return n.grad;
}

void Tape::backward(const Value& root) {
  if (backward_done_) throw TapeError("backward called twice without reset_gradients()");
  Node& r = node(root);
  if (r.data.size() != 1) {
    throw TapeError("backward root must be scalar, got shape " + r.data.shape().str());
  }
  backward_done_ = true;
  if (!r.requires_grad) return;
  grad_of(root).fill(1.0);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backprop || n.grad.empty()) continue;
    n.backprop(*this, n.grad);
  }
}

void Tape::reset_gradients() {
  for (Node& n : nodes_) n.grad = Tensor{};
  backward_done_ = false;
}

// --------------------------------------------------------------------------- elementwise

Value add(const Value& a, const Value& b) {
  Tape& tape = common_tape({&a, &b});
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor out = a.data();
  accumulate(out, b.data());
  const Value parents[] = {a, b};
  return tape.record(std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) accumulate(t.grad_of(a), g);
    if (b.requires_grad()) accumulate(t.grad_of(b), g);
  });
}

Value sub(const Value& a, const Value& b) {
  Tape& tape = common_tape({&a, &b});
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor out = a.data();
  const Tensor& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  const Value parents[] = {a, b};
  return tape.record(std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) accumulate(t.grad_of(a), g);
    if (b.requires_grad()) {
      Tensor& gb = t.grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Value mul(const Value& a, const Value& b) {
  Tape& tape = common_tape({&a, &b});
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor out = a.data();
  const Tensor& bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  const Value parents[] = {a, b};
  return tape.record(std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    const Tensor& ad = a.data();
    const Tensor& bd = b.data();
    if (a.requires_grad()) {
      Tensor& ga = t.grad_of(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
    }
    if (b.requires_grad()) {
      Tensor& gb = t.grad_of(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
    }
  });
}

Value scale(const Value& a, double factor) {
  Tape& tape = common_tape({&a});
  Tensor out = a.data();
  for (double& x : out.values()) x *= factor;
  const Value parents[] = {a};
  return tape.record(std::move(out), parents, [a, factor](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Value relu(const Value& a) {
  Tape& tape = common_tape({&a});
  Tensor out = a.data();
  for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
  const Value parents[] = {a};
  return tape.record(std::move(out), parents, [a](Tape& t, const Tensor& g) {
    const Tensor& ad = a.data();
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ad[i] > 0.0) ga[i] += g[i];
    }
  });
}

Value abs(const Value& a) {
  Tape& tape = common_tape({&a});
  Tensor out = a.data();
  for (double& x : out.values()) x = std::fabs(x);
  const Value parents[] = {a};
  return tape.record(std::move(out), parents, [a](Tape& t, const Tensor& g) {
    const Tensor& ad = a.data();
    Tensor& ga = t.grad_of(a);
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (ad[i] > 0.0) {
        ga[i] += g[i];
      } else if (ad[i] < 0.0) {
        ga[i] -= g[i];
      }
    }
  });
}

Value reshape(const Value& a, Shape shape) {
  Tape& tape = common_tape({&a});
  Tensor out = a.data().reshaped(shape);
  const Value parents[] = {a};
  return tape.record(std::move(out), parents, [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// --------------------------------------------------------------------------- linear algebra

Value matmul(const Value& a, const Value& b) {
  Tape& tape = common_tape({&a, &b});
  matrix_rank_check(a, "matmul");
  matrix_rank_check(b, "matmul");
  if (a.data().cols() != b.data().rows()) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape().str() + " x " +
                         b.shape().str());
  }
  Tensor out(Shape{a.data().rows(), b.data().cols()});
  as_matrix(out).noalias() = as_matrix(a.data()) * as_matrix(b.data());
  const Value parents[] = {a, b};
  return tape.record(std::move(out), parents, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) {
      as_matrix(t.grad_of(a)).noalias() += as_matrix(g) * as_matrix(b.data()).transpose();
    }
    if (b.requires_grad()) {
      as_matrix(t.grad_of(b)).noalias() += as_matrix(a.data()).transpose() * as_matrix(g);
    }
  });
}

Value linear(const Value& x, const Value& w, const Value& bias) {
  Tape& tape = common_tape({&x, &w, &bias});
  matrix_rank_check(x, "linear");
  matrix_rank_check(w, "linear");
  if (x.data().cols() != w.data().rows()) {
    throw DimensionError("linear: input width " + std::to_string(x.data().cols()) +
                         " does not match weight " + w.shape().str());
  }
  if (bias.data().size() != w.data().cols()) {
    throw DimensionError("linear: bias " + bias.shape().str() + " does not match weight " +
                         w.shape().str());
  }
  Tensor out(Shape{x.data().rows(), w.data().cols()});
  auto om = as_matrix(out);
  om.noalias() = as_matrix(x.data()) * as_matrix(w.data());
  Eigen::Map<const Eigen::RowVectorXd> bv(bias.data().data(),
                                           static_cast<Eigen::Index>(bias.data().size()));
  om.rowwise() += bv;
  const Value parents[] = {x, w, bias};
  return tape.record(std::move(out), parents, [x, w, bias](Tape& t, const Tensor& g) {
    auto gm = as_matrix(g);
    if (x.requires_grad()) {
      as_matrix(t.grad_of(x)).noalias() += gm * as_matrix(w.data()).transpose();
    }
    if (w.requires_grad()) {
      as_matrix(t.grad_of(w)).noalias() += as_matrix(x.data()).transpose() * gm;
    }
    if (bias.requires_grad()) {
      Tensor& gb = t.grad_of(bias);
      Eigen::Map<Eigen::RowVectorXd>(gb.data(), static_cast<Eigen::Index>(gb.size())) +=
          gm.colwise().sum();
    }
  });
}

Value add_row_vector(const Value& x, const Value& row) {
  Tape& tape = common_tape({&x, &row});
  const std::size_t cols = x.data().cols();
  if (row.data().size() != cols) {
    throw DimensionError("add_row_vector: " + row.shape().str() + " vs " + x.shape().str());
  }
  Tensor out = x.data();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < cols; ++c) dst[c] += row.data()[c];
  }
  const Value parents[] = {x, row};
  return tape.record(std::move(out), parents, [x, row](Tape& t, const Tensor& g) {
    if (x.requires_grad()) accumulate(t.grad_of(x), g);
    if (row.requires_grad()) {
      Tensor& gr = t.grad_of(row);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto src = g.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) gr[c] += src[c];
      }
    }
  });
}

// --------------------------------------------------------------------------- indexing

Value concat_cols(std::span<const Value> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape& tape = parts.front().tape();
  const std::size_t rows = parts.front().data().rows();
  std::size_t cols = 0;
  for (const Value& p : parts) {
    common_tape({&parts.front(), &p});
    if (p.data().rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + parts.front().shape().str() + " vs " +
                           p.shape().str());
    }
    cols += p.data().cols();
  }
  Tensor out(Shape{rows, cols});
  std::size_t offset = 0;
  for (const Value& p : parts) {
    const Tensor& src = p.data();
    const std::size_t c = src.cols();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src.data() + r * c, c, out.data() + r * cols + offset);
    }
    offset += c;
  }
  std::vector<Value> owned(parts.begin(), parts.end());
  return tape.record(std::move(out), parts, [owned, cols](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (const Value& p : owned) {
      const std::size_t c = p.data().cols();
      if (p.requires_grad()) {
        Tensor& gp = t.grad_of(p);
        for (std::size_t r = 0; r < gp.rows(); ++r) {
          for (std::size_t k = 0; k < c; ++k) gp[r * c + k] += g[r * cols + off + k];
        }
      }
      off += c;
    }
  });
}

Value slice_rows(const Value& a, std::size_t begin, std::size_t end) {
  Tape& tape = common_tape({&a});
  const Tensor& src = a.data();
  if (begin > end || end > src.rows()) {
    throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + a.shape().str());
  }
  const std::size_t cols = src.cols();
  Tensor out(Shape{end - begin, cols},
             std::vector<double>(src.data() + begin * cols, src.data() + end * cols));
  const Value parents[] = {a};
  return tape.record(std::move(out), parents, [a, begin, cols](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
  });
}

Value gather_rows(const Value& a, std::span<const std::size_t> index) {
  Tape& tape = common_tape({&a});
  const Tensor& src = a.data();
  const std::size_t cols = src.cols();
  Tensor out(Shape{index.size(), cols});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= src.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(index[r]) + " outside " +
                           a.shape().str());
    }
    std::copy_n(src.data() + index[r] * cols, cols, out.data() + r * cols);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const Value parents[] = {a};
  return tape.record(std::move(out), parents,
                     [a, idx = std::move(idx), cols](Tape& t, const Tensor& g) {
                       Tensor& ga = t.grad_of(a);
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         double* dst = ga.data() + idx[r] * cols;
                         const double* s = g.data() + r * cols;
                         for (std::size_t c = 0; c < cols; ++c) dst[c] += s[c];
                       }
                     });
}

Value scatter_add_rows(const Value& a, std::span<const std::size_t> index, std::size_t out_rows) {
  Tape& tape = common_tape({&a});
  const Tensor& src = a.data();
  if (index.size() != src.rows()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) +
                         " indices for " + a.shape().str());
  }
  const std::size_t cols = src.cols();
  Tensor out(Shape{out_rows, cols});
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= out_rows) {
      throw DimensionError("scatter_add_rows: index " + std::to_string(index[r]) +
                           " outside " + std::to_string(out_rows) + " rows");
    }
    double* dst = out.data() + index[r] * cols;
    const double* s = src.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dst[c] += s[c];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const Value parents[] = {a};
  return tape.record(std::move(out), parents,
                     [a, idx = std::move(idx), cols](Tape& t, const Tensor& g) {
                       Tensor& ga = t.grad_of(a);
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         double* dst = ga.data() + r * cols;
                         const double* s = g.data() + idx[r] * cols;
                         for (std::size_t c = 0; c < cols; ++c) dst[c] += s[c];
                       }
                     });
}

Value scale_rows(const Value& a, std::span<const double> factor) {
  Tape& tape = common_tape({&a});
  const Tensor& src = a.data();
  if (factor.size() != src.rows()) {
    throw DimensionError("scale_rows: " + std::to_string(factor.size()) + " factors for " +
                         a.shape().str());
  }
  const std::size_t cols = src.cols();
  Tensor out = src;
  for (std::size_t r = 0; r < factor.size(); ++r) {
    for (double& x : out.row(r)) x *= factor[r];
  }
  std::vector<double> f(factor.begin(), factor.end());
  const Value parents[] = {a};
  return tape.record(std::move(out), parents,
                     [a, f = std::move(f), cols](Tape& t, const Tensor& g) {
                       Tensor& ga = t.grad_of(a);
                       for (std::size_t r = 0; r < f.size(); ++r) {
                         for (std::size_t c = 0; c < cols; ++c) {
                           ga[r * cols + c] += g[r * cols + c] * f[r];
                         }
                       }
                     });
}

// --------------------------------------------------------------------------- reductions

Value sum(const Value& a) {
  Tape& tape = common_tape({&a});
  double s = 0.0;
  for (double x : a.data().values()) s += x;
  const Value parents[] = {a};
  return tape.record(Tensor::scalar(s), parents, [a](Tape& t, const Tensor& g) {
    Tensor& ga = t.grad_of(a);
    for (double& x : ga.values()) x += g[0];
  });
}

Value mean(const Value& a) {
  const std::size_t n = a.data().size();
  if (n == 0) throw EmptySetError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Value softmax_stable(const Value& logits) {
  Tape& tape = common_tape({&logits});
  const Tensor& x = logits.data();
  const std::size_t cols = x.cols();
  if (cols == 0 || x.size() == 0) throw EmptySetError("softmax over an empty set");
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto o = out.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      o[c] = std::exp(in[c] - m);
      z += o[c];
    }
    for (double& v : o) v /= z;
  }
  Tensor probs = out;
  const Value parents[] = {logits};
  return tape.record(std::move(out), parents,
                     [logits, probs = std::move(probs), cols](Tape& t, const Tensor& g) {
                       Tensor& gl = t.grad_of(logits);
                       for (std::size_t r = 0; r < probs.rows(); ++r) {
                         auto p = probs.row(r);
                         auto gr = g.row(r);
                         double dot = 0.0;
                         for (std::size_t c = 0; c < cols; ++c) dot += p[c] * gr[c];
                         for (std::size_t c = 0; c < cols; ++c) {
                           gl[r * cols + c] += p[c] * (gr[c] - dot);
                         }
                       }
                     });
}

}  // namespace spin
