#pragma once

#include <vector>

#include "tt2v/numerics/ndarray.hpp"
#include "tt2v/numerics/rng.hpp"

// Eager array kernels. These are pure functions; the tape layer in tape.hpp
// wraps them with reverse-mode derivatives. Binary elementwise ops broadcast
// numpy-style (trailing axes aligned, extent 1 stretches).
namespace tt2v::num {

Shape broadcast_shape(const Shape& a, const Shape& b);

NDArray add(const NDArray& a, const NDArray& b);
NDArray sub(const NDArray& a, const NDArray& b);
NDArray mul(const NDArray& a, const NDArray& b);
NDArray divide(const NDArray& a, const NDArray& b);
NDArray scale(const NDArray& a, Scalar c);
NDArray sin(const NDArray& a);
NDArray relu(const NDArray& a);

// Matrix products. Accepted rank combinations: (2,2); (3,2) applies the same
// right factor to every slice of a; (3,3) multiplies slice by slice.
NDArray matmul(const NDArray& a, const NDArray& b);
// a . b^T over the last two axes, same rank combinations as matmul.
NDArray matmul_nt(const NDArray& a, const NDArray& b);
// a^T . b; for rank-3 inputs the batch axis is contracted as well, which is
// exactly the weight-gradient reduction of a batched product.
NDArray matmul_tn(const NDArray& a, const NDArray& b);

NDArray transpose(const NDArray& a);  // rank 2 only

NDArray softmax(const NDArray& a, int axis);
NDArray layer_norm(const NDArray& x, const NDArray& gain, const NDArray& bias,
                   Scalar eps);

NDArray reduce_mean(const NDArray& a, int axis);
NDArray reduce_sum(const NDArray& a, int axis);
// Max along axis; argmax receives the flat input index of each winner.
NDArray reduce_max(const NDArray& a, int axis, std::vector<Index>* argmax = nullptr);

NDArray concat(const std::vector<NDArray>& parts, int axis);
NDArray slice(const NDArray& a, int axis, Index start, Index len);

NDArray broadcast_to(const NDArray& a, const Shape& shape);
// Sum-reduce a gradient back onto the (broadcast) shape of its source.
NDArray reduce_to_shape(const NDArray& grad, const Shape& shape);

// Inverted-scaling dropout mask: entries are 1/keep with probability keep,
// else 0. Multiplying by it is the whole train-time dropout transform.
NDArray dropout_mask(const Shape& shape, Scalar drop_p, CounterRng& rng);

}  // namespace tt2v::num
