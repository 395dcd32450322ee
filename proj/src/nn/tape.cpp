#include "tkg/nn/tape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>

namespace tkg::nn {

void Tape::clear() {
  nodes_.clear();
  values_.clear();
  grads_.clear();
  args_.clear();
}

void Tape::truncate(std::size_t mark) {
  if (mark >= nodes_.size()) return;
  nodes_.resize(mark);
  const std::size_t end = mark == 0 ? 0 : nodes_.back().offset + nodes_.back().size;
  values_.resize(end);
  grads_.resize(end);
  std::size_t args_end = 0;
  for (std::size_t i = mark; i-- > 0;) {
    const auto op = nodes_[i].op;
    if (op == Op::concat || op == Op::sum_vars) {
      args_end = nodes_[i].extra + nodes_[i].b;
      break;
    }
  }
  args_.resize(args_end);
}

std::span<const double> Tape::value(Var v) const {
  const auto& n = nodes_[v.id];
  return {values_.data() + n.offset, n.size};
}

double Tape::scalar(Var v) const { return values_[nodes_[v.id].offset]; }

std::span<const double> Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  return {grads_.data() + n.offset, n.size};
}

Var Tape::push(Op op, std::size_t size, std::uint32_t a, std::uint32_t b) {
  Node n;
  n.op = op;
  n.a = a;
  n.b = b;
  n.size = static_cast<std::uint32_t>(size);
  n.offset = values_.size();
  nodes_.push_back(n);
  values_.resize(values_.size() + size, 0.0);
  grads_.resize(grads_.size() + size, 0.0);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(std::span<const double> values) {
  const auto v = push(Op::constant, values.size());
  std::copy(values.begin(), values.end(), val(v.id));
  return v;
}

Var Tape::constant(double value) { return constant(std::span<const double>(&value, 1)); }

Var Tape::row(Tensor& t, std::size_t r) {
  assert(r < t.rows);
  const auto v = push(Op::row, t.cols);
  nodes_[v.id].tensor = &t;
  nodes_[v.id].extra = r * t.cols;
  std::copy_n(t.value.data() + r * t.cols, t.cols, val(v.id));
  return v;
}

Var Tape::param(Tensor& t) {
  const auto v = push(Op::param, t.size());
  nodes_[v.id].tensor = &t;
  std::copy(t.value.begin(), t.value.end(), val(v.id));
  return v;
}

Var Tape::matvec(Tensor& w, Var x, std::size_t col_offset) {
  const std::size_t n = dim(x);
  if (col_offset + n > w.cols) throw std::invalid_argument("matvec: input does not fit " + w.name);
  const auto v = push(Op::matvec, w.rows, x.id);
  nodes_[v.id].tensor = &w;
  nodes_[v.id].extra = col_offset;
  const double* xv = val(x.id);
  double* y = val(v.id);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const double* wr = w.value.data() + i * w.cols + col_offset;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += wr[j] * xv[j];
    y[i] = acc;
  }
  return v;
}

Var Tape::add(Var a, Var b) {
  assert(dim(a) == dim(b));
  const auto v = push(Op::add, dim(a), a.id, b.id);
  const double *x = val(a.id), *y = val(b.id);
  double* z = val(v.id);
  for (std::size_t i = 0; i < dim(v); ++i) z[i] = x[i] + y[i];
  return v;
}

Var Tape::sub(Var a, Var b) {
  assert(dim(a) == dim(b));
  const auto v = push(Op::sub, dim(a), a.id, b.id);
  const double *x = val(a.id), *y = val(b.id);
  double* z = val(v.id);
  for (std::size_t i = 0; i < dim(v); ++i) z[i] = x[i] - y[i];
  return v;
}

Var Tape::mul(Var a, Var b) {
  assert(dim(a) == dim(b));
  const auto v = push(Op::mul, dim(a), a.id, b.id);
  const double *x = val(a.id), *y = val(b.id);
  double* z = val(v.id);
  for (std::size_t i = 0; i < dim(v); ++i) z[i] = x[i] * y[i];
  return v;
}

Var Tape::mul_scalar(Var a, Var s) {
  assert(dim(s) == 1);
  const auto v = push(Op::mul_scalar, dim(a), a.id, s.id);
  const double* x = val(a.id);
  const double k = *val(s.id);
  double* z = val(v.id);
  for (std::size_t i = 0; i < dim(v); ++i) z[i] = x[i] * k;
  return v;
}

Var Tape::scale(Var a, double c) {
  const auto v = push(Op::scale, dim(a), a.id);
  nodes_[v.id].c = c;
  const double* x = val(a.id);
  double* z = val(v.id);
  for (std::size_t i = 0; i < dim(v); ++i) z[i] = x[i] * c;
  return v;
}

Var Tape::add_const(Var a, double c) {
  const auto v = push(Op::add_const, dim(a), a.id);
  nodes_[v.id].c = c;
  const double* x = val(a.id);
  double* z = val(v.id);
  for (std::size_t i = 0; i < dim(v); ++i) z[i] = x[i] + c;
  return v;
}

#define TKG_UNARY(NAME, OP, EXPR)                       \
  Var Tape::NAME(Var a) {                               \
    const auto v = push(Op::OP, dim(a), a.id);          \
    const double* x = val(a.id);                        \
    double* z = val(v.id);                              \
    for (std::size_t i = 0; i < dim(v); ++i) {          \
      const double t = x[i];                            \
      z[i] = (EXPR);                                    \
    }                                                   \
    return v;                                           \
  }

TKG_UNARY(sigmoid, sigmoid, t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)))
TKG_UNARY(tanh, tanh, std::tanh(t))
TKG_UNARY(relu, relu, t > 0 ? t : 0.0)
TKG_UNARY(exp, exp, std::exp(t))
TKG_UNARY(log, log, std::log(t))
TKG_UNARY(cos, cos, std::cos(t))
#undef TKG_UNARY

Var Tape::dot(Var a, Var b) {
  assert(dim(a) == dim(b));
  const auto v = push(Op::dot, 1, a.id, b.id);
  const double *x = val(a.id), *y = val(b.id);
  double acc = 0.0;
  for (std::size_t i = 0; i < dim(a); ++i) acc += x[i] * y[i];
  *val(v.id) = acc;
  return v;
}

Var Tape::cosine(Var a, Var b) {
  assert(dim(a) == dim(b));
  const auto v = push(Op::cosine, 1, a.id, b.id);
  const double *x = val(a.id), *y = val(b.id);
  double xy = 0.0, xx = 0.0, yy = 0.0;
  for (std::size_t i = 0; i < dim(a); ++i) {
    xy += x[i] * y[i];
    xx += x[i] * x[i];
    yy += y[i] * y[i];
  }
  *val(v.id) = (xx > 0.0 && yy > 0.0) ? xy / std::sqrt(xx * yy) : 0.0;
  return v;
}

Var Tape::sum(Var a) {
  const auto v = push(Op::sum_elems, 1, a.id);
  const double* x = val(a.id);
  double acc = 0.0;
  for (std::size_t i = 0; i < dim(a); ++i) acc += x[i];
  *val(v.id) = acc;
  return v;
}

Var Tape::sum(std::span<const Var> vars) {
  if (vars.empty()) throw std::invalid_argument("sum of no vectors");
  const std::size_t n = dim(vars[0]);
  const auto start = args_.size();
  for (const auto x : vars) {
    if (dim(x) != n) throw std::invalid_argument("sum: size mismatch");
    args_.push_back(x.id);
  }
  const auto v = push(Op::sum_vars, n, 0, static_cast<std::uint32_t>(vars.size()));
  nodes_[v.id].extra = start;
  double* z = val(v.id);
  for (const auto x : vars) {
    const double* xv = val(x.id);
    for (std::size_t i = 0; i < n; ++i) z[i] += xv[i];
  }
  return v;
}

Var Tape::concat(std::span<const Var> vars) {
  std::size_t n = 0;
  const auto start = args_.size();
  for (const auto x : vars) {
    n += dim(x);
    args_.push_back(x.id);
  }
  const auto v = push(Op::concat, n, 0, static_cast<std::uint32_t>(vars.size()));
  nodes_[v.id].extra = start;
  double* z = val(v.id);
  for (const auto x : vars) {
    z = std::copy_n(val(x.id), dim(x), z);
  }
  return v;
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length) {
  if (offset + length > dim(a)) throw std::out_of_range("slice out of range");
  const auto v = push(Op::slice, length, a.id);
  nodes_[v.id].extra = offset;
  std::copy_n(val(a.id) + offset, length, val(v.id));
  return v;
}

Var Tape::softmax(Var a) {
  const auto v = push(Op::softmax, dim(a), a.id);
  const double* x = val(a.id);
  double* z = val(v.id);
  const double top = *std::max_element(x, x + dim(a));
  double total = 0.0;
  for (std::size_t i = 0; i < dim(a); ++i) total += z[i] = std::exp(x[i] - top);
  for (std::size_t i = 0; i < dim(a); ++i) z[i] /= total;
  return v;
}

Var Tape::normalize(Var a) {
  const auto v = push(Op::normalize, dim(a), a.id);
  const double* x = val(a.id);
  double* z = val(v.id);
  double total = 0.0;
  for (std::size_t i = 0; i < dim(a); ++i) total += x[i];
  for (std::size_t i = 0; i < dim(a); ++i) z[i] = x[i] / total;
  nodes_[v.id].c = total;
  return v;
}

void Tape::backward(Var loss, std::size_t stop, double seed) {
  if (loss.id < stop) throw std::invalid_argument("backward: loss lies inside the prefix");
  grd(loss.id)[0] += seed;
  for (std::size_t i = loss.id + 1; i-- > stop;) propagate(i);
}

void Tape::backward_prefix(std::size_t mark) {
  for (std::size_t i = std::min(mark, nodes_.size()); i-- > 0;) propagate(i);
}

void Tape::propagate(std::size_t index) {
  const Node& n = nodes_[index];
  const double* g = grads_.data() + n.offset;
  const double* y = values_.data() + n.offset;
  const std::size_t size = n.size;
  switch (n.op) {
    case Op::constant:
      break;
    case Op::row:
    case Op::param: {
      double* tg = n.tensor->grad.data() + (n.op == Op::row ? n.extra : 0);
      for (std::size_t i = 0; i < size; ++i) tg[i] += g[i];
      break;
    }
    case Op::matvec: {
      const Tensor& w = *n.tensor;
      const std::size_t in = nodes_[n.a].size;
      const double* x = val(n.a);
      double* gx = grd(n.a);
      for (std::size_t r = 0; r < size; ++r) {
        const double gr = g[r];
        if (gr == 0.0) continue;
        const double* wr = w.value.data() + r * w.cols + n.extra;
        double* gw = n.tensor->grad.data() + r * w.cols + n.extra;
        for (std::size_t j = 0; j < in; ++j) {
          gx[j] += wr[j] * gr;
          gw[j] += gr * x[j];
        }
      }
      break;
    }
    case Op::add: {
      double *ga = grd(n.a), *gb = grd(n.b);
      for (std::size_t i = 0; i < size; ++i) {
        ga[i] += g[i];
        gb[i] += g[i];
      }
      break;
    }
    case Op::sub: {
      double *ga = grd(n.a), *gb = grd(n.b);
      for (std::size_t i = 0; i < size; ++i) {
        ga[i] += g[i];
        gb[i] -= g[i];
      }
      break;
    }
    case Op::mul: {
      const double *a = val(n.a), *b = val(n.b);
      double *ga = grd(n.a), *gb = grd(n.b);
      for (std::size_t i = 0; i < size; ++i) {
        ga[i] += g[i] * b[i];
        gb[i] += g[i] * a[i];
      }
      break;
    }
    case Op::mul_scalar: {
      const double* a = val(n.a);
      const double s = *val(n.b);
      double* ga = grd(n.a);
      double gs = 0.0;
      for (std::size_t i = 0; i < size; ++i) {
        ga[i] += g[i] * s;
        gs += g[i] * a[i];
      }
      *grd(n.b) += gs;
      break;
    }
    case Op::scale: {
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += n.c * g[i];
      break;
    }
    case Op::add_const: {
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
      break;
    }
    case Op::sigmoid: {
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
      break;
    }
    case Op::tanh: {
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::relu: {
      const double* a = val(n.a);
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) {
        if (a[i] > 0) ga[i] += g[i];
      }
      break;
    }
    case Op::exp: {
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] * y[i];
      break;
    }
    case Op::log: {
      const double* a = val(n.a);
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i] / a[i];
      break;
    }
    case Op::cos: {
      const double* a = val(n.a);
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] -= g[i] * std::sin(a[i]);
      break;
    }
    case Op::dot: {
      const std::size_t in = nodes_[n.a].size;
      const double *a = val(n.a), *b = val(n.b);
      double *ga = grd(n.a), *gb = grd(n.b);
      for (std::size_t i = 0; i < in; ++i) {
        ga[i] += g[0] * b[i];
        gb[i] += g[0] * a[i];
      }
      break;
    }
    case Op::cosine: {
      const std::size_t in = nodes_[n.a].size;
      const double *a = val(n.a), *b = val(n.b);
      double aa = 0.0, bb = 0.0;
      for (std::size_t i = 0; i < in; ++i) {
        aa += a[i] * a[i];
        bb += b[i] * b[i];
      }
      if (aa == 0.0 || bb == 0.0) break;
      const double na = std::sqrt(aa), nb = std::sqrt(bb), c = y[0];
      double *ga = grd(n.a), *gb = grd(n.b);
      for (std::size_t i = 0; i < in; ++i) {
        ga[i] += g[0] * (b[i] / (na * nb) - c * a[i] / aa);
        gb[i] += g[0] * (a[i] / (na * nb) - c * b[i] / bb);
      }
      break;
    }
    case Op::sum_elems: {
      const std::size_t in = nodes_[n.a].size;
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < in; ++i) ga[i] += g[0];
      break;
    }
    case Op::sum_vars: {
      for (std::size_t k = 0; k < n.b; ++k) {
        double* ga = grd(args_[n.extra + k]);
        for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
      }
      break;
    }
    case Op::concat: {
      std::size_t at = 0;
      for (std::size_t k = 0; k < n.b; ++k) {
        const auto id = args_[n.extra + k];
        double* ga = grd(id);
        for (std::size_t i = 0; i < nodes_[id].size; ++i) ga[i] += g[at + i];
        at += nodes_[id].size;
      }
      break;
    }
    case Op::slice: {
      double* ga = grd(n.a) + n.extra;
      for (std::size_t i = 0; i < size; ++i) ga[i] += g[i];
      break;
    }
    case Op::softmax: {
      double gy = 0.0;
      for (std::size_t i = 0; i < size; ++i) gy += g[i] * y[i];
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += y[i] * (g[i] - gy);
      break;
    }
    case Op::normalize: {
      double gy = 0.0;
      for (std::size_t i = 0; i < size; ++i) gy += g[i] * y[i];
      double* ga = grd(n.a);
      for (std::size_t i = 0; i < size; ++i) ga[i] += (g[i] - gy) / n.c;
      break;
    }
  }
}

}  // namespace tkg::nn
