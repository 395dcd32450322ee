#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tkg/nn/tensor.hpp"

namespace tkg::nn {

/// Handle to a node on a Tape. Every node holds a vector; scalars have size 1.
struct Var {
  std::uint32_t id = 0;
};

/// Reverse-mode automatic differentiation over vectors.
///
/// Nodes are appended in evaluation order and read parameters by pointer, so
/// parameter gradients accumulate straight into Tensor::grad on backward().
///
/// A tape can be cut in two: nodes before a mark form a shared prefix (for
/// instance rule embeddings used by a whole batch). backward(loss, mark)
/// only walks the suffix and leaves gradients of prefix nodes accumulated;
/// truncate(mark) then discards the suffix, and backward_prefix(mark) finally
/// pushes the accumulated prefix gradients into the parameters.
class Tape {
 public:
  std::size_t size() const { return nodes_.size(); }
  std::size_t mark() const { return nodes_.size(); }
  void clear();
  void truncate(std::size_t mark);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::span<const double> grad(Var v) const;
  std::size_t dim(Var v) const { return nodes_[v.id].size; }

  Var constant(std::span<const double> values);
  Var constant(double value);
  /// Row `r` of a parameter matrix.
  Var row(Tensor& t, std::size_t r);
  /// Whole parameter tensor, flattened.
  Var param(Tensor& t);
  /// W[:, col_offset : col_offset + dim(x)] * x.
  Var matvec(Tensor& w, Var x, std::size_t col_offset = 0);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  /// Vector times a scalar node.
  Var mul_scalar(Var a, Var s);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var cos(Var a);

  Var dot(Var a, Var b);
  /// Cosine similarity; 0 (with zero gradient) if either vector is zero.
  Var cosine(Var a, Var b);
  /// Sum of the elements of one vector.
  Var sum(Var a);
  /// Elementwise sum of equally sized vectors.
  Var sum(std::span<const Var> vars);
  Var concat(std::span<const Var> vars);
  Var slice(Var a, std::size_t offset, std::size_t length);
  Var element(Var a, std::size_t i) { return slice(a, i, 1); }
  Var softmax(Var a);
  /// x / sum(x). Inputs must be positive.
  Var normalize(Var a);

  /// Seeds d(loss) = seed and propagates back to (but not into) node `stop`.
  void backward(Var loss, std::size_t stop = 0, double seed = 1.0);
  /// Propagates gradients already accumulated on nodes [0, mark).
  void backward_prefix(std::size_t mark);

 private:
  enum class Op : std::uint8_t {
    constant, row, param, matvec, add, sub, mul, mul_scalar, scale, add_const, sigmoid, tanh, relu, exp, log,
    cos, dot, cosine, sum_elems, sum_vars, concat, slice, softmax, normalize,
  };
  struct Node {
    Op op = Op::constant;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::uint32_t size = 0;
    std::size_t offset = 0;
    std::size_t extra = 0;  ///< row/column offset, slice offset, or argument-list start
    double c = 0.0;
    Tensor* tensor = nullptr;
  };

  Var push(Op op, std::size_t size, std::uint32_t a = 0, std::uint32_t b = 0);
  double* val(std::uint32_t id) { return values_.data() + nodes_[id].offset; }
  double* grd(std::uint32_t id) { return grads_.data() + nodes_[id].offset; }
  void propagate(std::size_t index);

  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<std::uint32_t> args_;
};

}  // namespace tkg::nn
