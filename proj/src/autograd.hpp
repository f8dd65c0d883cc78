#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "matrix.hpp"
#include "rng.hpp"

namespace csna::ad {

template <class T>
class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; the tape owns storage
/// and must outlive every handle into it.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  const Matrix<T>& value() const { return tape_->value(id_); }
  std::size_t rows() const { return value().rows; }
  std::size_t cols() const { return value().cols; }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  T item() const;

  Tape<T>* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tensor(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}
  friend class Tape<T>;

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of one forward pass. Nodes are stored in creation
/// order, which is a topological order, so backward is a single reverse sweep.
template <class T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<T> constant(Matrix<T> value);
  Tensor<T> variable(Matrix<T> value);

  /// Used by op implementations. Throws Numeric if the value is not finite.
  Tensor<T> record(const char* op, Matrix<T> value, std::span<const Tensor<T>> inputs,
                   BackwardFn backward);
  Tensor<T> record(const char* op, Matrix<T> value, std::initializer_list<Tensor<T>> inputs,
                   BackwardFn backward) {
    return record(op, std::move(value), std::span<const Tensor<T>>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  void backward(const Tensor<T>& loss);

  const Matrix<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  /// Accumulated gradient of a node (zeros if nothing flowed into it).
  Matrix<T> grad(const Tensor<T>& t) const;
  /// Upstream gradient of the node currently being differentiated.
  const Matrix<T>& upstream(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient buffer for an input, allocated on first use; null when the
  /// input does not require a gradient.
  Matrix<T>* grad_target(std::size_t id);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    const char* op = "leaf";
    Matrix<T> value;
    Matrix<T> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

using Index = std::uint32_t;

// Dense algebra.
template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// Binary ops accept equal shapes, or a 1x1 operand broadcast against a matrix.
template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <class T> Tensor<T> add_scalar(const Tensor<T>& a, T offset);
template <class T> Tensor<T> add_row_bias(const Tensor<T>& a, const Tensor<T>& bias);

// Pointwise nonlinearities.
template <class T> Tensor<T> relu(const Tensor<T>& a);
template <class T> Tensor<T> sigmoid(const Tensor<T>& a);
template <class T> Tensor<T> softplus(const Tensor<T>& a);
template <class T> Tensor<T> square(const Tensor<T>& a);

// Reductions to 1x1.
template <class T> Tensor<T> sum(const Tensor<T>& a);
template <class T> Tensor<T> mean(const Tensor<T>& a);

// Shape plumbing.
template <class T> Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <class T> Tensor<T> column(const Tensor<T>& a, std::size_t k);
/// out[i, :] = a[i, :] * v[i, 0]
template <class T> Tensor<T> scale_rows(const Tensor<T>& a, const Tensor<T>& v);
template <class T> Tensor<T> row_softmax(const Tensor<T>& a);
template <class T> Tensor<T> gather_rows(const Tensor<T>& a, std::span<const Index> index);

// Edge/segment kernels.
/// out[e] = ||p[src[e]] - p[dst[e]]||_2. Zero distance back-propagates zero.
template <class T>
Tensor<T> row_pair_distance(const Tensor<T>& p, std::span<const Index> src,
                            std::span<const Index> dst);
/// Max-subtracted softmax within each segment; empty segments are skipped.
template <class T>
Tensor<T> segment_softmax(const Tensor<T>& values, std::span<const Index> segment_of,
                          std::size_t n_segments);
/// out[s, :] = sum over e with segment_of[e] == s of weights[e] * messages[e, :]
template <class T>
Tensor<T> segment_weighted_sum(const Tensor<T>& weights, const Tensor<T>& messages,
                               std::span<const Index> segment_of, std::size_t n_segments);
/// out[src[e], :] += weights[e] * values[dst[e], :]; equivalent to
/// segment_weighted_sum(weights, gather_rows(values, dst), src) without the
/// |E| x h intermediate.
template <class T>
Tensor<T> gather_weighted_sum(const Tensor<T>& weights, const Tensor<T>& values, std::span<const Index> src,
                              std::span<const Index> dst);

/// Inverted dropout; identity when !train or rate == 0.
template <class T>
Tensor<T> dropout(const Tensor<T>& a, double rate, Pcg32& rng, bool train);

/// Mean over `rows` of -log softmax(logits[r])[labels[r]].
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels,
                                std::span<const Index> rows);

// Scalar helpers shared with oracles.
template <class T> T stable_sigmoid(T x);
template <class T> T stable_softplus(T x);

}  // namespace csna::ad
