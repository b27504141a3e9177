#include "tt2v/numerics/tape.hpp"

#include <cmath>

namespace tt2v::num {

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape != b.tape)
    throw UsageError(std::string(op) + ": operands live on different tapes");
  return *a.tape;
}

// Keep the reduced axis as extent 1 so the gradient broadcasts back.
Shape keepdim(const Shape& s, int axis) {
  Shape out = s;
  out[static_cast<std::size_t>(axis)] = 1;
  return out;
}

int normalized(int axis, int rank) { return axis < 0 ? axis + rank : axis; }

}  // namespace

const Tape::Node& Tape::node(Index id) const {
  if (id < 0 || id >= static_cast<Index>(nodes_.size()))
    throw UsageError("Tape: stale or foreign node id");
  return nodes_[static_cast<std::size_t>(id)];
}

Tape::Node& Tape::node(Index id) {
  return const_cast<Node&>(static_cast<const Tape*>(this)->node(id));
}

Var Tape::leaf(NDArray value) {
  return record(std::move(value), {}, nullptr);
}

Var Tape::record(NDArray value, std::vector<Index> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<Index>(nodes_.size()) - 1};
}

NDArray Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (n.grad.valid()) return n.grad;
  return NDArray::zeros(n.value.shape());
}

void Tape::accumulate(Index id, const NDArray& g) {
  Node& n = node(id);
  n.grad = n.grad.valid() ? add(n.grad, g) : g;
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.tape != this)
    throw UsageError("backward: loss is not on this tape");
  Node& top = node(loss.id);
  if (top.value.size() != 1)
    throw UsageError("backward: loss must be a scalar");
  top.grad = NDArray::full(top.value.shape(), 1.0);
  for (Index i = loss.id; i >= 0; --i) {
    Node& n = node(i);
    if (n.grad.valid() && n.backward) n.backward(*this, i);
  }
}

Var lift(Var like, NDArray value) {
  if (!like.valid()) throw UsageError("lift: invalid reference var");
  return like.tape->leaf(std::move(value));
}

// ---------------------------------------------------------------- elementwise

namespace {

template <typename Fwd, typename Bwd>
Var binary(Var a, Var b, const char* op, Fwd&& fwd, Bwd&& bwd) {
  Tape& t = same_tape(a, b, op);
  NDArray out = fwd(t.value(a), t.value(b));
  Index ia = a.id, ib = b.id;
  return t.record(std::move(out), {ia, ib},
                  [ia, ib, bwd](Tape& tp, Index self) { bwd(tp, self, ia, ib); });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](const NDArray& x, const NDArray& y) { return add(x, y); },
      [](Tape& t, Index self, Index ia, Index ib) {
        const NDArray& g = t.grad_at(self);
        t.accumulate(ia, reduce_to_shape(g, t.value_at(ia).shape()));
        t.accumulate(ib, reduce_to_shape(g, t.value_at(ib).shape()));
      });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](const NDArray& x, const NDArray& y) { return sub(x, y); },
      [](Tape& t, Index self, Index ia, Index ib) {
        const NDArray& g = t.grad_at(self);
        t.accumulate(ia, reduce_to_shape(g, t.value_at(ia).shape()));
        t.accumulate(ib, reduce_to_shape(scale(g, -1), t.value_at(ib).shape()));
      });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](const NDArray& x, const NDArray& y) { return mul(x, y); },
      [](Tape& t, Index self, Index ia, Index ib) {
        const NDArray& g = t.grad_at(self);
        t.accumulate(ia, reduce_to_shape(mul(g, t.value_at(ib)), t.value_at(ia).shape()));
        t.accumulate(ib, reduce_to_shape(mul(g, t.value_at(ia)), t.value_at(ib).shape()));
      });
}

Var divide(Var a, Var b) {
  return binary(
      a, b, "divide", [](const NDArray& x, const NDArray& y) { return divide(x, y); },
      [](Tape& t, Index self, Index ia, Index ib) {
        const NDArray& g = t.grad_at(self);
        const NDArray& bv = t.value_at(ib);
        const NDArray& out = t.value_at(self);
        t.accumulate(ia, reduce_to_shape(divide(g, bv), t.value_at(ia).shape()));
        t.accumulate(ib, reduce_to_shape(scale(mul(g, divide(out, bv)), -1),
                                         t.value_at(ib).shape()));
      });
}

Var scale(Var a, Scalar c) {
  Tape& t = *a.tape;
  Index ia = a.id;
  return t.record(scale(t.value(a), c), {ia}, [ia, c](Tape& tp, Index self) {
    tp.accumulate(ia, scale(tp.grad_at(self), c));
  });
}

Var sin(Var a) {
  Tape& t = *a.tape;
  Index ia = a.id;
  return t.record(sin(t.value(a)), {ia}, [ia](Tape& tp, Index self) {
    const NDArray& x = tp.value_at(ia);
    NDArray c = NDArray::uninit(x.shape());
    c.flat_mutable() = x.flat().cos();
    tp.accumulate(ia, mul(tp.grad_at(self), c));
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Index ia = a.id;
  return t.record(relu(t.value(a)), {ia}, [ia](Tape& tp, Index self) {
    const NDArray& x = tp.value_at(ia);
    NDArray m = NDArray::uninit(x.shape());
    m.flat_mutable() = (x.flat() > Scalar{0}).cast<Scalar>();
    tp.accumulate(ia, mul(tp.grad_at(self), m));
  });
}

// ------------------------------------------------------------ linear algebra

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  Index ia = a.id, ib = b.id;
  NDArray out = matmul(t.value(a), t.value(b));
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, Index self) {
    const NDArray& g = tp.grad_at(self);
    const NDArray& av = tp.value_at(ia);
    const NDArray& bv = tp.value_at(ib);
    tp.accumulate(ia, matmul_nt(g, bv));
    if (av.rank() == 3 && bv.rank() == 2) {
      Index k = av.dim(2), rows = av.dim(0) * av.dim(1), n = bv.dim(1);
      tp.accumulate(ib, matmul_tn(av.reshaped({rows, k}), g.reshaped({rows, n})));
    } else {
      tp.accumulate(ib, matmul_tn(av, g));
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul_nt");
  Index ia = a.id, ib = b.id;
  NDArray out = matmul_nt(t.value(a), t.value(b));
  return t.record(std::move(out), {ia, ib}, [ia, ib](Tape& tp, Index self) {
    const NDArray& g = tp.grad_at(self);
    const NDArray& av = tp.value_at(ia);
    const NDArray& bv = tp.value_at(ib);
    tp.accumulate(ia, matmul(g, bv));
    if (av.rank() == 3 && bv.rank() == 2) {
      Index rows = g.dim(0) * g.dim(1);
      tp.accumulate(ib, matmul_tn(g.reshaped({rows, g.dim(2)}),
                                  av.reshaped({rows, av.dim(2)})));
    } else {
      tp.accumulate(ib, matmul_tn(g, av));
    }
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  Index ia = a.id;
  return t.record(transpose(t.value(a)), {ia}, [ia](Tape& tp, Index self) {
    tp.accumulate(ia, transpose(tp.grad_at(self)));
  });
}

// ------------------------------------------------------------- normalization

Var softmax(Var a, int axis) {
  Tape& t = *a.tape;
  Index ia = a.id;
  int ax = normalized(axis, t.value(a).rank());
  NDArray out = softmax(t.value(a), ax);
  return t.record(std::move(out), {ia}, [ia, ax](Tape& tp, Index self) {
    const NDArray& y = tp.value_at(self);
    const NDArray& g = tp.grad_at(self);
    NDArray dot = reduce_sum(mul(g, y), ax);
    NDArray dot_keep = dot.reshaped(keepdim(y.shape(), ax));
    tp.accumulate(ia, mul(y, sub(g, dot_keep)));
  });
}

Var layer_norm(Var x, Var gain, Var bias, Scalar eps) {
  Tape& t = same_tape(x, gain, "layer_norm");
  same_tape(gain, bias, "layer_norm");
  const NDArray& xv = t.value(x);
  NDArray out = layer_norm(xv, t.value(gain), t.value(bias), eps);

  // Save the normalized rows and inverse deviations for the reverse pass.
  Index d = xv.dim(xv.rank() - 1);
  Index rows = xv.size() / d;
  NDArray xhat = NDArray::uninit(xv.shape());
  NDArray inv_sd = NDArray::uninit({rows});
  for (Index r = 0; r < rows; ++r) {
    auto line = Eigen::Map<const Storage>(xv.data() + r * d, d);
    Scalar mu = line.mean();
    Scalar inv = 1 / std::sqrt((line - mu).square().mean() + eps);
    Eigen::Map<Storage>(xhat.mutable_data() + r * d, d) = (line - mu) * inv;
    inv_sd.mutable_data()[r] = inv;
  }

  Index ix = x.id, ig = gain.id, ib = bias.id;
  return t.record(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, xhat, inv_sd, d, rows](Tape& tp, Index self) {
    const NDArray& g = tp.grad_at(self);
    const NDArray& gainv = tp.value_at(ig);
    tp.accumulate(ig, reduce_to_shape(mul(g, xhat), tp.value_at(ig).shape()));
    tp.accumulate(ib, reduce_to_shape(g, tp.value_at(ib).shape()));

    NDArray dx = NDArray::uninit(xhat.shape());
    auto gv = Eigen::Map<const Storage>(gainv.data(), d);
    for (Index r = 0; r < rows; ++r) {
      auto gy = Eigen::Map<const Storage>(g.data() + r * d, d);
      auto xh = Eigen::Map<const Storage>(xhat.data() + r * d, d);
      Storage gg = gy * gv;
      Scalar m1 = gg.mean();
      Scalar m2 = (gg * xh).mean();
      Eigen::Map<Storage>(dx.mutable_data() + r * d, d) =
          (gg - m1 - xh * m2) * inv_sd[r];
    }
    tp.accumulate(ix, dx);
  });
}

// ------------------------------------------------------- reductions & layout

Var reduce_mean(Var a, int axis) {
  Tape& t = *a.tape;
  Index ia = a.id;
  int ax = normalized(axis, t.value(a).rank());
  Scalar inv_n = 1 / static_cast<Scalar>(t.value(a).dim(ax));
  NDArray out = reduce_mean(t.value(a), ax);
  return t.record(std::move(out), {ia}, [ia, ax, inv_n](Tape& tp, Index self) {
    const NDArray& av = tp.value_at(ia);
    NDArray g = scale(tp.grad_at(self), inv_n).reshaped(keepdim(av.shape(), ax));
    tp.accumulate(ia, broadcast_to(g, av.shape()));
  });
}

Var reduce_max(Var a, int axis) {
  Tape& t = *a.tape;
  Index ia = a.id;
  int ax = normalized(axis, t.value(a).rank());
  auto argmax = std::make_shared<std::vector<Index>>();
  NDArray out = reduce_max(t.value(a), ax, argmax.get());
  return t.record(std::move(out), {ia}, [ia, argmax](Tape& tp, Index self) {
    const NDArray& g = tp.grad_at(self);
    NDArray dx = NDArray::zeros(tp.value_at(ia).shape());
    for (Index i = 0; i < g.size(); ++i)
      dx.mutable_data()[(*argmax)[static_cast<std::size_t>(i)]] += g[i];
    tp.accumulate(ia, dx);
  });
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  Tape& t = *parts[0].tape;
  std::vector<Index> ids;
  std::vector<NDArray> values;
  for (Var p : parts) {
    same_tape(parts[0], p, "concat");
    ids.push_back(p.id);
    values.push_back(t.value(p));
  }
  int ax = normalized(axis, values[0].rank());
  NDArray out = concat(values, ax);
  return t.record(std::move(out), ids, [ids, ax](Tape& tp, Index self) {
    const NDArray& g = tp.grad_at(self);
    Index offset = 0;
    for (Index id : ids) {
      Index len = tp.value_at(id).dim(ax);
      tp.accumulate(id, slice(g, ax, offset, len));
      offset += len;
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tape& t = *a.tape;
  Index ia = a.id;
  NDArray out = t.value(a).reshaped(std::move(shape));
  return t.record(std::move(out), {ia}, [ia](Tape& tp, Index self) {
    tp.accumulate(ia, tp.grad_at(self).reshaped(tp.value_at(ia).shape()));
  });
}

Var broadcast_to(Var a, Shape shape) {
  Tape& t = *a.tape;
  Index ia = a.id;
  NDArray out = broadcast_to(t.value(a), shape);
  return t.record(std::move(out), {ia}, [ia](Tape& tp, Index self) {
    tp.accumulate(ia, reduce_to_shape(tp.grad_at(self), tp.value_at(ia).shape()));
  });
}

Var dropout(Var a, Scalar drop_p, CounterRng& rng) {
  if (drop_p == 0) return a;
  Tape& t = *a.tape;
  Index ia = a.id;
  NDArray mask = dropout_mask(t.value(a).shape(), drop_p, rng);
  NDArray out = mul(t.value(a), mask);
  return t.record(std::move(out), {ia}, [ia, mask](Tape& tp, Index self) {
    tp.accumulate(ia, mul(tp.grad_at(self), mask));
  });
}

}  // namespace tt2v::num
