#include "autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace csna::ad {

namespace {

template <class T>
void check_same_tape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.valid() && b.valid(), ErrorKind::Contract, std::string(op) + ": invalid tensor");
  require(a.tape() == b.tape(), ErrorKind::Contract, std::string(op) + ": tensors on different tapes");
}

template <class T>
bool is_scalar(const Matrix<T>& m) {
  return m.rows == 1 && m.cols == 1;
}

void check_indices(std::span<const Index> index, std::size_t bound, const char* op) {
  for (std::size_t e = 0; e < index.size(); ++e) {
    if (index[e] >= bound) {
      fail(ErrorKind::Index, std::string(op) + ": index " + std::to_string(index[e]) +
                                 " at position " + std::to_string(e) + " out of range " +
                                 std::to_string(bound));
    }
  }
}

// C += A * B
template <class T>
void gemm_nn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c.data.data() + i * n;
    const T* arow = a.data.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      const T* brow = b.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T
template <class T>
void gemm_nt(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  // Transposing B first keeps the inner loop a contiguous axpy.
  Matrix<T> bt(b.cols, b.rows);
  for (std::size_t i = 0; i < b.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) bt(j, i) = b(i, j);
  gemm_nn(a, bt, c);
}

// C += A^T * B
template <class T>
void gemm_tn(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& c) {
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a.data.data() + i * k;
    const T* brow = b.data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T{0}) continue;
      T* crow = c.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T, class F, class D>
Tensor<T> unary(const char* op, const Tensor<T>& a, F forward, D derivative) {
  const Matrix<T>& x = a.value();
  Matrix<T> y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = forward(x.data[i]);
  const std::size_t ia = a.id();
  return a.tape()->record(op, std::move(y), {a}, [ia, derivative](Tape<T>& tape, std::size_t self) {
    Matrix<T>* ga = tape.grad_target(ia);
    if (!ga) return;
    const Matrix<T>& g = tape.upstream(self);
    const Matrix<T>& x = tape.value(ia);
    const Matrix<T>& y = tape.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g.data[i] * derivative(x.data[i], y.data[i]);
  });
}

}  // namespace

template <class T>
T stable_sigmoid(T x) {
  if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <class T>
T stable_softplus(T x) {
  return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
T Tensor<T>::item() const {
  const Matrix<T>& v = value();
  require(v.rows == 1 && v.cols == 1, ErrorKind::Dimension,
          "item() on non-scalar tensor " + shape_string(v.rows, v.cols));
  return v.data[0];
}

template <class T>
Tensor<T> Tape<T>::constant(Matrix<T> value) {
  return record("constant", std::move(value), {}, nullptr);
}

template <class T>
Tensor<T> Tape<T>::variable(Matrix<T> value) {
  Tensor<T> t = record("variable", std::move(value), {}, nullptr);
  nodes_[t.id()].requires_grad = true;
  return t;
}

template <class T>
Tensor<T> Tape<T>::record(const char* op, Matrix<T> value, std::span<const Tensor<T>> inputs,
                          BackwardFn backward) {
  for (const T v : value.data) {
    if (!std::isfinite(v)) {
      fail(ErrorKind::Numeric, std::string(op) + ": produced a non-finite value");
    }
  }
  bool needs_grad = false;
  for (const auto& in : inputs) {
    require(in.tape() == this, ErrorKind::Contract, std::string(op) + ": input from a different tape");
    needs_grad = needs_grad || nodes_[in.id()].requires_grad;
  }
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Tensor<T>(this, nodes_.size() - 1);
}

template <class T>
Matrix<T>* Tape<T>::grad_target(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix<T>(n.value.rows, n.value.cols);
  return &n.grad;
}

template <class T>
Matrix<T> Tape<T>::grad(const Tensor<T>& t) const {
  const Node& n = nodes_[t.id()];
  if (n.grad.empty()) return Matrix<T>(n.value.rows, n.value.cols);
  return n.grad;
}

template <class T>
void Tape<T>::backward(const Tensor<T>& loss) {
  require(loss.tape() == this, ErrorKind::Contract, "backward: loss is on a different tape");
  const Node& root = nodes_[loss.id()];
  require(root.value.rows == 1 && root.value.cols == 1, ErrorKind::Contract,
          "backward: loss must be scalar, got " + shape_string(root.value.rows, root.value.cols));
  for (auto& n : nodes_) n.grad = Matrix<T>();
  if (!root.requires_grad) return;
  nodes_[loss.id()].grad = Matrix<T>(1, 1, T{1});
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_same_tape(a, b, "matmul");
  const Matrix<T>& x = a.value();
  const Matrix<T>& y = b.value();
  require(x.cols == y.rows, ErrorKind::Dimension,
          "matmul: inner dimensions differ " + shape_string(x.rows, x.cols) + " * " +
              shape_string(y.rows, y.cols));
  Matrix<T> out(x.rows, y.cols);
  gemm_nn(x, y, out);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record("matmul", std::move(out), {a, b}, [ia, ib](Tape<T>& tape, std::size_t self) {
    const Matrix<T>& g = tape.upstream(self);
    if (Matrix<T>* ga = tape.grad_target(ia)) gemm_nt(g, tape.value(ib), *ga);
    if (Matrix<T>* gb = tape.grad_target(ib)) gemm_tn(tape.value(ia), g, *gb);
  });
}

namespace {

enum class BinaryKind { Add, Sub, Mul };

template <class T>
Tensor<T> binary(const char* op, BinaryKind kind, const Tensor<T>& a, const Tensor<T>& b) {
  check_same_tape(a, b, op);
  const Matrix<T>& x = a.value();
  const Matrix<T>& y = b.value();
  const bool same = x.same_shape(y);
  const bool a_scalar = !same && is_scalar(x);
  const bool b_scalar = !same && is_scalar(y);
  require(same || a_scalar || b_scalar, ErrorKind::Dimension,
          std::string(op) + ": cannot broadcast " + shape_string(x.rows, x.cols) + " with " +
              shape_string(y.rows, y.cols));
  const Matrix<T>& shape = a_scalar ? y : x;
  Matrix<T> out(shape.rows, shape.cols);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T u = a_scalar ? x.data[0] : x.data[i];
    const T v = b_scalar ? y.data[0] : y.data[i];
    switch (kind) {
      case BinaryKind::Add: out.data[i] = u + v; break;
      case BinaryKind::Sub: out.data[i] = u - v; break;
      case BinaryKind::Mul: out.data[i] = u * v; break;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(op, std::move(out), {a, b},
                          [ia, ib, kind, a_scalar, b_scalar](Tape<T>& tape, std::size_t self) {
    const Matrix<T>& g = tape.upstream(self);
    const Matrix<T>& x = tape.value(ia);
    const Matrix<T>& y = tape.value(ib);
    if (Matrix<T>* ga = tape.grad_target(ia)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        T d = g.data[i];
        if (kind == BinaryKind::Mul) d *= b_scalar ? y.data[0] : y.data[i];
        ga->data[a_scalar ? 0 : i] += d;
      }
    }
    if (Matrix<T>* gb = tape.grad_target(ib)) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        T d = g.data[i];
        if (kind == BinaryKind::Sub) d = -d;
        if (kind == BinaryKind::Mul) d *= a_scalar ? x.data[0] : x.data[i];
        gb->data[b_scalar ? 0 : i] += d;
      }
    }
  });
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("add", BinaryKind::Add, a, b);
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("sub", BinaryKind::Sub, a, b);
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary("mul", BinaryKind::Mul, a, b);
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary("scale", a, [factor](T x) { return factor * x; },
               [factor](T, T) { return factor; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T offset) {
  return unary("add_scalar", a, [offset](T x) { return x + offset; }, [](T, T) { return T{1}; });
}

template <class T>
Tensor<T> add_row_bias(const Tensor<T>& a, const Tensor<T>& bias) {
  check_same_tape(a, bias, "add_row_bias");
  const Matrix<T>& x = a.value();
  const Matrix<T>& b = bias.value();
  require(b.rows == 1 && b.cols == x.cols, ErrorKind::Dimension,
          "add_row_bias: bias " + shape_string(b.rows, b.cols) + " does not match " +
              shape_string(x.rows, x.cols));
  Matrix<T> out = x;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(i, j) += b.data[j];
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape()->record("add_row_bias", std::move(out), {a, bias},
                          [ia, ib](Tape<T>& tape, std::size_t self) {
    const Matrix<T>& g = tape.upstream(self);
    if (Matrix<T>* ga = tape.grad_target(ia))
      for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g.data[i];
    if (Matrix<T>* gb = tape.grad_target(ib))
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gb->data[j] += g(i, j);
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& a) {
  return unary("relu", a, [](T x) { return x > T{0} ? x : T{0}; },
               [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return unary("sigmoid", a, [](T x) { return stable_sigmoid(x); },
               [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Tensor<T> softplus(const Tensor<T>& a) {
  return unary("softplus", a, [](T x) { return stable_softplus(x); },
               [](T x, T) { return stable_sigmoid(x); });
}

template <class T>
Tensor<T> square(const Tensor<T>& a) {
  return unary("square", a, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
}

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
  const Matrix<T>& x = a.value();
  T acc{0};
  for (const T v : x.data) acc += v;
  const std::size_t ia = a.id();
  return a.tape()->record("sum", Matrix<T>(1, 1, acc), {a}, [ia](Tape<T>& tape, std::size_t self) {
    Matrix<T>* ga = tape.grad_target(ia);
    if (!ga) return;
    const T g = tape.upstream(self).data[0];
    for (T& v : ga->data) v += g;
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
  const std::size_t count = a.value().size();
  require(count > 0, ErrorKind::Dimension, "mean: empty tensor");
  return scale(sum(a), T{1} / static_cast<T>(count));
}

template <class T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  require(!parts.empty(), ErrorKind::Dimension, "concat_cols: no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (const auto& p : parts) {
    check_same_tape(parts[0], p, "concat_cols");
    require(p.rows() == rows, ErrorKind::Dimension, "concat_cols: row counts differ");
    cols += p.cols();
  }
  Matrix<T> out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const Matrix<T>& x = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(x.row(i).begin(), x.row(i).end(), out.row(i).begin() + static_cast<std::ptrdiff_t>(offset));
    ids.push_back(p.id());
    offsets.push_back(offset);
    offset += x.cols;
  }
  return parts[0].tape()->record("concat_cols", std::move(out), parts,
                                 [ids, offsets](Tape<T>& tape, std::size_t self) {
    const Matrix<T>& g = tape.upstream(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Matrix<T>* gp = tape.grad_target(ids[k]);
      if (!gp) continue;
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < gp->cols; ++j) (*gp)(i, j) += g(i, offsets[k] + j);
    }
  });
}

template <class T>
Tensor<T> column(const Tensor<T>& a, std::size_t k) {
  const Matrix<T>& x = a.value();
  require(k < x.cols, ErrorKind::Index, "column: index " + std::to_string(k) + " out of range");
  Matrix<T> out(x.rows, 1);
  for (std::size_t i = 0; i < x.rows; ++i) out.data[i] = x(i, k);
  const std::size_t ia = a.id();
  return a.tape()->record("column", std::move(out), {a}, [ia, k](Tape<T>& tape, std::size_t self) {
    Matrix<T>* ga = tape.grad_target(ia);
    if (!ga) return;
    const Matrix<T>& g = tape.upstream(self);
    for (std::size_t i = 0; i < g.rows; ++i) (*ga)(i, k) += g.data[i];
  });
}

template <class T>
Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& v) {
  check_same_tape(a, v, "scale_rows");
  const Matrix<T>& x = a.value();
  const Matrix<T>& s = v.value();
  require(s.cols == 1 && s.rows == x.rows, ErrorKind::Dimension,
          "scale_rows: scale " + shape_string(s.rows, s.cols) + " for " + shape_string(x.rows, x.cols));
  Matrix<T> out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = x(i, j) * s.data[i];
  const std::size_t ia = a.id(), iv = v.id();
  return a.tape()->record("scale_rows", std::move(out), {a, v}, [ia, iv](Tape<T>& tape, std::size_t self) {
    const Matrix<T>& g = tape.upstream(self);
    const Matrix<T>& x = tape.value(ia);
    const Matrix<T>& s = tape.value(iv);
    if (Matrix<T>* ga = tape.grad_target(ia))
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) (*ga)(i, j) += g(i, j) * s.data[i];
    if (Matrix<T>* gv = tape.grad_target(iv))
      for (std::size_t i = 0; i < g.rows; ++i) {
        T acc{0};
        for (std::size_t j = 0; j < g.cols; ++j) acc += g(i, j) * x(i, j);
        gv->data[i] += acc;
      }
  });
}

template <class T>
Tensor<T> row_softmax(const Tensor<T>& a) {
  const Matrix<T>& x = a.value();
  Matrix<T> out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto r = x.row(i);
    const T mx = *std::max_element(r.begin(), r.end());
    T z{0};
    for (std::size_t j = 0; j < x.cols; ++j) z += (out(i, j) = std::exp(r[j] - mx));
    for (std::size_t j = 0; j < x.cols; ++j) out(i, j) /= z;
  }
  const std::size_t ia = a.id();
  return a.tape()->record("row_softmax", std::move(out), {a}, [ia](Tape<T>& tape, std::size_t self) {
    Matrix<T>* ga = tape.grad_target(ia);
    if (!ga) return;
    const Matrix<T>& g = tape.upstream(self);
    const Matrix<T>& y = tape.value(self);
    for (std::size_t i = 0; i < g.rows; ++i) {
      T dot{0};
      for (std::size_t j = 0; j < g.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < g.cols; ++j) (*ga)(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

template <class T>
Tensor<T> gather_rows(const Tensor<T>& a, std::span<const Index> index) {
  const Matrix<T>& x = a.value();
  check_indices(index, x.rows, "gather_rows");
  Matrix<T> out(index.size(), x.cols);
  for (std::size_t e = 0; e < index.size(); ++e) {
    const auto src = x.row(index[e]);
    std::copy(src.begin(), src.end(), out.row(e).begin());
  }
  const std::size_t ia = a.id();
  std::vector<Index> idx(index.begin(), index.end());
  return a.tape()->record("gather_rows", std::move(out), {a},
                          [ia, idx = std::move(idx)](Tape<T>& tape, std::size_t self) {
    Matrix<T>* ga = tape.grad_target(ia);
    if (!ga) return;
    const Matrix<T>& g = tape.upstream(self);
    for (std::size_t e = 0; e < idx.size(); ++e) {
      T* dst = ga->data.data() + idx[e] * g.cols;
      const T* src = g.data.data() + e * g.cols;
      for (std::size_t j = 0; j < g.cols; ++j) dst[j] += src[j];
    }
  });
}

template <class T>
Tensor<T> row_pair_distance(const Tensor<T>& p, std::span<const Index> src,
                            std::span<const Index> dst) {
  const Matrix<T>& x = p.value();
  require(src.size() == dst.size(), ErrorKind::Dimension, "row_pair_distance: src/dst lengths differ");
  check_indices(src, x.rows, "row_pair_distance");
  check_indices(dst, x.rows, "row_pair_distance");
  Matrix<T> out(src.size(), 1);
  for (std::size_t e = 0; e < src.size(); ++e) {
    const auto a = x.row(src[e]);
    const auto b = x.row(dst[e]);
    T acc{0};
    for (std::size_t j = 0; j < x.cols; ++j) {
      const T d = a[j] - b[j];
      acc += d * d;
    }
    out.data[e] = std::sqrt(acc);
  }
  const std::size_t ip = p.id();
  std::vector<Index> s(src.begin(), src.end());
  std::vector<Index> t(dst.begin(), dst.end());
  return p.tape()->record("row_pair_distance", std::move(out), {p},
                          [ip, s = std::move(s), t = std::move(t)](Tape<T>& tape, std::size_t self) {
    Matrix<T>* gp = tape.grad_target(ip);
    if (!gp) return;
    const Matrix<T>& g = tape.upstream(self);
    const Matrix<T>& x = tape.value(ip);
    const Matrix<T>& dist = tape.value(self);
    for (std::size_t e = 0; e < s.size(); ++e) {
      const T d = dist.data[e];
      if (d == T{0}) continue;
      const T coef = g.data[e] / d;
      const auto a = x.row(s[e]);
      const auto b = x.row(t[e]);
      auto ga = gp->row(s[e]);
      auto gb = gp->row(t[e]);
      for (std::size_t j = 0; j < x.cols; ++j) {
        const T v = coef * (a[j] - b[j]);
        ga[j] += v;
        gb[j] -= v;
      }
    }
  });
}

template <class T>
Tensor<T> segment_softmax(const Tensor<T>& values, std::span<const Index> segment_of,
                          std::size_t n_segments) {
  const Matrix<T>& x = values.value();
  require(x.cols == 1 && x.rows == segment_of.size(), ErrorKind::Dimension,
          "segment_softmax: values " + shape_string(x.rows, x.cols) + " vs " +
              std::to_string(segment_of.size()) + " segment ids");
  check_indices(segment_of, n_segments, "segment_softmax");
  std::vector<T> mx(n_segments, -std::numeric_limits<T>::infinity());
  for (std::size_t e = 0; e < x.rows; ++e) mx[segment_of[e]] = std::max(mx[segment_of[e]], x.data[e]);
  std::vector<T> z(n_segments, T{0});
  Matrix<T> out(x.rows, 1);
  for (std::size_t e = 0; e < x.rows; ++e) {
    out.data[e] = std::exp(x.data[e] - mx[segment_of[e]]);
    z[segment_of[e]] += out.data[e];
  }
  for (std::size_t e = 0; e < x.rows; ++e) out.data[e] /= z[segment_of[e]];
  const std::size_t iv = values.id();
  std::vector<Index> seg(segment_of.begin(), segment_of.end());
  return values.tape()->record("segment_softmax", std::move(out), {values},
                               [iv, n_segments, seg = std::move(seg)](Tape<T>& tape, std::size_t self) {
    Matrix<T>* gv = tape.grad_target(iv);
    if (!gv) return;
    const Matrix<T>& g = tape.upstream(self);
    const Matrix<T>& y = tape.value(self);
    std::vector<T> dot(n_segments, T{0});
    for (std::size_t e = 0; e < seg.size(); ++e) dot[seg[e]] += g.data[e] * y.data[e];
    for (std::size_t e = 0; e < seg.size(); ++e) gv->data[e] += y.data[e] * (g.data[e] - dot[seg[e]]);
  });
}

template <class T>
Tensor<T> segment_weighted_sum(const Tensor<T>& weights, const Tensor<T>& messages,
                               std::span<const Index> segment_of, std::size_t n_segments) {
  check_same_tape(weights, messages, "segment_weighted_sum");
  const Matrix<T>& w = weights.value();
  const Matrix<T>& m = messages.value();
  require(w.cols == 1 && w.rows == m.rows && m.rows == segment_of.size(), ErrorKind::Dimension,
          "segment_weighted_sum: weights " + shape_string(w.rows, w.cols) + ", messages " +
              shape_string(m.rows, m.cols) + ", " + std::to_string(segment_of.size()) + " segment ids");
  check_indices(segment_of, n_segments, "segment_weighted_sum");
  Matrix<T> out(n_segments, m.cols);
  for (std::size_t e = 0; e < m.rows; ++e) {
    const T we = w.data[e];
    const T* src = m.data.data() + e * m.cols;
    T* dst = out.data.data() + segment_of[e] * m.cols;
    for (std::size_t j = 0; j < m.cols; ++j) dst[j] += we * src[j];
  }
  const std::size_t iw = weights.id(), im = messages.id();
  std::vector<Index> seg(segment_of.begin(), segment_of.end());
  return weights.tape()->record("segment_weighted_sum", std::move(out), {weights, messages},
                                [iw, im, seg = std::move(seg)](Tape<T>& tape, std::size_t self) {
    const Matrix<T>& g = tape.upstream(self);
    const Matrix<T>& w = tape.value(iw);
    const Matrix<T>& m = tape.value(im);
    Matrix<T>* gw = tape.grad_target(iw);
    Matrix<T>* gm = tape.grad_target(im);
    for (std::size_t e = 0; e < seg.size(); ++e) {
      const T* grow = g.data.data() + seg[e] * g.cols;
      if (gw) {
        const T* mrow = m.data.data() + e * m.cols;
        T acc{0};
        for (std::size_t j = 0; j < m.cols; ++j) acc += grow[j] * mrow[j];
        gw->data[e] += acc;
      }
      if (gm) {
        T* dst = gm->data.data() + e * m.cols;
        for (std::size_t j = 0; j < m.cols; ++j) dst[j] += w.data[e] * grow[j];
      }
    }
  });
}

template <class T>
Tensor<T> gather_weighted_sum(const Tensor<T>& weights, const Tensor<T>& values, std::span<const Index> src,
                              std::span<const Index> dst) {
  check_same_tape(weights, values, "gather_weighted_sum");
  const Matrix<T>& w = weights.value();
  const Matrix<T>& v = values.value();
  require(w.cols == 1 && w.rows == src.size() && src.size() == dst.size(), ErrorKind::Dimension,
          "gather_weighted_sum: weights " + shape_string(w.rows, w.cols) + ", " + std::to_string(src.size()) +
              " sources, " + std::to_string(dst.size()) + " targets");
  check_indices(src, v.rows, "gather_weighted_sum");
  check_indices(dst, v.rows, "gather_weighted_sum");
  const std::size_t h = v.cols;
  Matrix<T> out(v.rows, h);
  for (std::size_t e = 0; e < src.size(); ++e) {
    const T we = w.data[e];
    const T* from = v.data.data() + dst[e] * h;
    T* to = out.data.data() + src[e] * h;
    for (std::size_t j = 0; j < h; ++j) to[j] += we * from[j];
  }
  const std::size_t iw = weights.id(), iv = values.id();
  std::vector<Index> s(src.begin(), src.end()), d(dst.begin(), dst.end());
  return weights.tape()->record("gather_weighted_sum", std::move(out), {weights, values},
                                [iw, iv, s = std::move(s), d = std::move(d)](Tape<T>& tape, std::size_t self) {
    const Matrix<T>& g = tape.upstream(self);
    const Matrix<T>& w = tape.value(iw);
    const Matrix<T>& v = tape.value(iv);
    Matrix<T>* gw = tape.grad_target(iw);
    Matrix<T>* gv = tape.grad_target(iv);
    const std::size_t h = v.cols;
    for (std::size_t e = 0; e < s.size(); ++e) {
      const T* grow = g.data.data() + s[e] * h;
      if (gw) {
        const T* vrow = v.data.data() + d[e] * h;
        T acc{0};
        for (std::size_t j = 0; j < h; ++j) acc += grow[j] * vrow[j];
        gw->data[e] += acc;
      }
      if (gv) {
        T* to = gv->data.data() + d[e] * h;
        for (std::size_t j = 0; j < h; ++j) to[j] += w.data[e] * grow[j];
      }
    }
  });
}

template <class T>
Tensor<T> dropout(const Tensor<T>& a, double rate, Pcg32& rng, bool train) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::Contract, "dropout: rate must be in [0,1)");
  if (!train || rate == 0.0) return a;
  const Matrix<T>& x = a.value();
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  Matrix<T> mask(x.rows, x.cols);
  for (T& v : mask.data) v = rng.uniform() >= rate ? keep_scale : T{0};
  Matrix<T> out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] * mask.data[i];
  const std::size_t ia = a.id();
  return a.tape()->record("dropout", std::move(out), {a},
                          [ia, mask = std::move(mask)](Tape<T>& tape, std::size_t self) {
    Matrix<T>* ga = tape.grad_target(ia);
    if (!ga) return;
    const Matrix<T>& g = tape.upstream(self);
    for (std::size_t i = 0; i < g.size(); ++i) ga->data[i] += g.data[i] * mask.data[i];
  });
}

template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                                std::span<const Index> rows) {
  const Matrix<T>& x = logits.value();
  require(labels.size() == x.rows, ErrorKind::Dimension, "softmax_cross_entropy: label count differs from rows");
  require(!rows.empty(), ErrorKind::Contract, "softmax_cross_entropy: no rows selected");
  check_indices(rows, x.rows, "softmax_cross_entropy");
  Matrix<T> prob(rows.size(), x.cols);
  T loss{0};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = x.row(rows[r]);
    const int y = labels[rows[r]];
    require(y >= 0 && static_cast<std::size_t>(y) < x.cols, ErrorKind::Index,
            "softmax_cross_entropy: label out of range");
    const T mx = *std::max_element(row.begin(), row.end());
    T z{0};
    for (std::size_t j = 0; j < x.cols; ++j) z += (prob(r, j) = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < x.cols; ++j) prob(r, j) /= z;
    loss += std::log(z) + mx - row[static_cast<std::size_t>(y)];
  }
  loss /= static_cast<T>(rows.size());
  const std::size_t il = logits.id();
  std::vector<Index> sel(rows.begin(), rows.end());
  std::vector<int> ys;
  ys.reserve(sel.size());
  for (const Index r : sel) ys.push_back(labels[r]);
  return logits.tape()->record(
      "softmax_cross_entropy", Matrix<T>(1, 1, loss), {logits},
      [il, sel = std::move(sel), ys = std::move(ys), prob = std::move(prob)](Tape<T>& tape, std::size_t self) {
        Matrix<T>* gl = tape.grad_target(il);
        if (!gl) return;
        const T g = tape.upstream(self).data[0] / static_cast<T>(sel.size());
        for (std::size_t r = 0; r < sel.size(); ++r) {
          auto dst = gl->row(sel[r]);
          for (std::size_t j = 0; j < dst.size(); ++j) {
            const T onehot = static_cast<int>(j) == ys[r] ? T{1} : T{0};
            dst[j] += g * (prob(r, j) - onehot);
          }
        }
      });
}

#define CSNA_INSTANTIATE_AUTOGRAD(T)                                                              \
  template class Tensor<T>;                                                                       \
  template class Tape<T>;                                                                         \
  template T stable_sigmoid<T>(T);                                                                \
  template T stable_softplus<T>(T);                                                               \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                  \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                               \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                          \
  template Tensor<T> add_row_bias<T>(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                   \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                                                \
  template Tensor<T> softplus<T>(const Tensor<T>&);                                               \
  template Tensor<T> square<T>(const Tensor<T>&);                                                 \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                    \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                   \
  template Tensor<T> concat_cols<T>(std::span<const Tensor<T>>);                                  \
  template Tensor<T> column<T>(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> scale_rows<T>(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> row_softmax<T>(const Tensor<T>&);                                            \
  template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const Index>);                    \
  template Tensor<T> row_pair_distance<T>(const Tensor<T>&, std::span<const Index>,               \
                                          std::span<const Index>);                                \
  template Tensor<T> segment_softmax<T>(const Tensor<T>&, std::span<const Index>, std::size_t);   \
  template Tensor<T> gather_weighted_sum<T>(const Tensor<T>&, const Tensor<T>&, std::span<const Index>,       \
                                            std::span<const Index>);                                          \
  template Tensor<T> segment_weighted_sum<T>(const Tensor<T>&, const Tensor<T>&,                  \
                                             std::span<const Index>, std::size_t);                \
  template Tensor<T> dropout<T>(const Tensor<T>&, double, Pcg32&, bool);                          \
  template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const int>,             \
                                              std::span<const Index>);

CSNA_INSTANTIATE_AUTOGRAD(float)
CSNA_INSTANTIATE_AUTOGRAD(double)

}  // namespace csna::ad
