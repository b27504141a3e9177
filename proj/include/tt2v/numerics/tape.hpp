#pragma once

#include <functional>
#include <vector>

#include "tt2v/numerics/kernels.hpp"
#include "tt2v/numerics/ndarray.hpp"
#include "tt2v/numerics/rng.hpp"

namespace tt2v::num {

class Tape;

// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  Index id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Ordered record of primitive operations. Ops append nodes in execution
// order, which is a topological order, so the reverse pass is a single
// backward sweep. A tape is built, differentiated once, then discarded;
// training uses a fresh tape per step.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Index)>;

  Var leaf(NDArray value);

  // Values are returned as (cheap, buffer-sharing) copies: recording a node
  // may grow the node vector, so references into it must not escape.
  NDArray value(Var v) const { return node(v.id).value; }
  // Zero for nodes the loss never reached.
  NDArray grad(Var v) const;

  // Reverse sweep from a scalar loss; fills gradients of every reachable node.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  // Recording interface used by the op layer.
  Var record(NDArray value, std::vector<Index> inputs, BackwardFn fn);
  NDArray value_at(Index id) const { return node(id).value; }
  NDArray grad_at(Index id) const { return node(id).grad; }
  void accumulate(Index id, const NDArray& g);

 private:
  struct Node {
    NDArray value;
    std::vector<Index> inputs;
    BackwardFn backward;
    NDArray grad;
  };

  const Node& node(Index id) const;
  Node& node(Index id);

  std::vector<Node> nodes_;
};

// Taped counterparts of the kernels in kernels.hpp. Each records a node whose
// backward accumulates vector-Jacobian products into its inputs.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var scale(Var a, Scalar c);
Var sin(Var a);
Var relu(Var a);
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var softmax(Var a, int axis);
Var layer_norm(Var x, Var gain, Var bias, Scalar eps);
Var reduce_mean(Var a, int axis);
Var reduce_max(Var a, int axis);
Var concat(const std::vector<Var>& parts, int axis);
Var reshape(Var a, Shape shape);
Var broadcast_to(Var a, Shape shape);
// Identity when drop_p == 0; otherwise multiplies by a fresh inverted mask.
Var dropout(Var a, Scalar drop_p, CounterRng& rng);

// Convenience: lift a plain array onto a's tape (e.g. targets, masks).
Var lift(Var like, NDArray value);

}  // namespace tt2v::num
