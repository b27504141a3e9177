#include "tt2v/numerics/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace tt2v::num {

namespace {

using MatMap = Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

int norm_axis(int axis, int rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank)
    throw DimensionError(std::string(op) + ": axis out of range");
  return axis;
}

Shape pad_left(const Shape& s, int rank) {
  Shape out(static_cast<std::size_t>(rank), 1);
  std::copy(s.begin(), s.end(), out.end() - static_cast<std::ptrdiff_t>(s.size()));
  return out;
}

// Extents before / at / after an axis, for iterating lines along it.
struct AxisSplit {
  Index outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit sp;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    Index d = s[static_cast<std::size_t>(i)];
    if (i < axis)
      sp.outer *= d;
    else if (i == axis)
      sp.len = d;
    else
      sp.inner *= d;
  }
  return sp;
}

template <typename F>
NDArray binary_op(const NDArray& a, const NDArray& b, F&& f, const char* op) {
  if (!a.valid() || !b.valid()) throw UsageError(std::string(op) + ": empty operand");
  if (a.shape() == b.shape()) {
    NDArray out = NDArray::uninit(a.shape());
    out.flat_mutable() = f(a.flat(), b.flat());
    return out;
  }
  Shape out_shape = broadcast_shape(a.shape(), b.shape());
  if (b.size() == 1 && out_shape == a.shape()) {
    NDArray out = NDArray::uninit(a.shape());
    out.flat_mutable() = f(a.flat(), Storage::Constant(a.size(), b[0]));
    return out;
  }
  if (a.size() == 1 && out_shape == b.shape()) {
    NDArray out = NDArray::uninit(b.shape());
    out.flat_mutable() = f(Storage::Constant(b.size(), a[0]), b.flat());
    return out;
  }

  // Fast path: b spans a contiguous trailing block of a (bias adds, masks).
  if (out_shape == a.shape()) {
    Shape pb = pad_left(b.shape(), a.rank());
    Index tail = 1;
    int i = a.rank() - 1;
    for (; i >= 0 && pb[static_cast<std::size_t>(i)] == a.dim(i); --i)
      tail *= a.dim(i);
    bool leading_ones = true;
    for (int j = 0; j <= i; ++j)
      leading_ones = leading_ones && pb[static_cast<std::size_t>(j)] == 1;
    if (leading_ones && tail == b.size()) {
      NDArray out = NDArray::uninit(a.shape());
      Index rows = a.size() / tail;
      for (Index r = 0; r < rows; ++r)
        out.flat_mutable().segment(r * tail, tail) =
            f(a.flat().segment(r * tail, tail), b.flat());
      return out;
    }
  }

  // General strided broadcast.
  int rank = static_cast<int>(out_shape.size());
  Shape pa = pad_left(a.shape(), rank), pb = pad_left(b.shape(), rank);
  std::vector<Index> sa(static_cast<std::size_t>(rank)), sb(sa.size());
  Index stra = 1, strb = 1;
  for (int i = rank - 1; i >= 0; --i) {
    auto ui = static_cast<std::size_t>(i);
    sa[ui] = pa[ui] == 1 ? 0 : stra;
    sb[ui] = pb[ui] == 1 ? 0 : strb;
    stra *= pa[ui];
    strb *= pb[ui];
  }
  NDArray out = NDArray::uninit(out_shape);
  std::vector<Index> idx(static_cast<std::size_t>(rank), 0);
  const Scalar* ap = a.data();
  const Scalar* bp = b.data();
  Scalar* op_ = out.mutable_data();
  Index total = out.size(), oa = 0, ob = 0;
  for (Index lin = 0; lin < total; ++lin) {
    op_[lin] = f(Storage::Constant(1, ap[oa]), Storage::Constant(1, bp[ob]))(0);
    for (int i = rank - 1; i >= 0; --i) {
      auto ui = static_cast<std::size_t>(i);
      oa += sa[ui];
      ob += sb[ui];
      if (++idx[ui] < out_shape[ui]) break;
      oa -= sa[ui] * out_shape[ui];
      ob -= sb[ui] * out_shape[ui];
      idx[ui] = 0;
    }
  }
  return out;
}

void check_matmul_ranks(const NDArray& a, const NDArray& b, const char* op) {
  if ((a.rank() != 2 && a.rank() != 3) || (b.rank() != 2 && b.rank() != 3) ||
      (a.rank() == 2 && b.rank() == 3))
    throw DimensionError(std::string(op) + ": unsupported ranks");
  if (a.rank() == 3 && b.rank() == 3 && a.dim(0) != b.dim(0))
    throw DimensionError(std::string(op) + ": batch extents differ");
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  int rank = std::max(static_cast<int>(a.size()), static_cast<int>(b.size()));
  Shape pa = pad_left(a, rank), pb = pad_left(b, rank);
  Shape out(static_cast<std::size_t>(rank));
  for (int i = 0; i < rank; ++i) {
    auto ui = static_cast<std::size_t>(i);
    if (pa[ui] == pb[ui] || pa[ui] == 1 || pb[ui] == 1)
      out[ui] = std::max(pa[ui], pb[ui]);
    else
      throw DimensionError("broadcast: incompatible shapes");
  }
  return out;
}

NDArray add(const NDArray& a, const NDArray& b) {
  return binary_op(a, b, [](const auto& x, const auto& y) { return x + y; }, "add");
}

NDArray sub(const NDArray& a, const NDArray& b) {
  return binary_op(a, b, [](const auto& x, const auto& y) { return x - y; }, "sub");
}

NDArray mul(const NDArray& a, const NDArray& b) {
  return binary_op(a, b, [](const auto& x, const auto& y) { return x * y; }, "mul");
}

NDArray divide(const NDArray& a, const NDArray& b) {
  return binary_op(a, b, [](const auto& x, const auto& y) { return x / y; }, "divide");
}

NDArray scale(const NDArray& a, Scalar c) {
  NDArray out = NDArray::uninit(a.shape());
  out.flat_mutable() = a.flat() * c;
  return out;
}

NDArray sin(const NDArray& a) {
  NDArray out = NDArray::uninit(a.shape());
  out.flat_mutable() = a.flat().sin();
  return out;
}

NDArray relu(const NDArray& a) {
  NDArray out = NDArray::uninit(a.shape());
  out.flat_mutable() = a.flat().max(Scalar{0});
  return out;
}

NDArray matmul(const NDArray& a, const NDArray& b) {
  check_matmul_ranks(a, b, "matmul");
  Index k = a.dim(a.rank() - 1);
  Index kb = b.dim(b.rank() - 2);
  if (k != kb) throw DimensionError("matmul: inner extents do not match");
  Index m = a.dim(a.rank() - 2), n = b.dim(b.rank() - 1);
  if (a.rank() == 2) {
    NDArray out = NDArray::uninit({m, n});
    MatMap(out.mutable_data(), m, n).noalias() =
        ConstMatMap(a.data(), m, k) * ConstMatMap(b.data(), k, n);
    return out;
  }
  Index batch = a.dim(0);
  NDArray out = NDArray::uninit({batch, m, n});
  if (b.rank() == 2) {
    MatMap(out.mutable_data(), batch * m, n).noalias() =
        ConstMatMap(a.data(), batch * m, k) * ConstMatMap(b.data(), k, n);
    return out;
  }
  for (Index i = 0; i < batch; ++i)
    MatMap(out.mutable_data() + i * m * n, m, n).noalias() =
        ConstMatMap(a.data() + i * m * k, m, k) * ConstMatMap(b.data() + i * k * n, k, n);
  return out;
}

NDArray matmul_nt(const NDArray& a, const NDArray& b) {
  check_matmul_ranks(a, b, "matmul_nt");
  Index k = a.dim(a.rank() - 1);
  if (k != b.dim(b.rank() - 1)) throw DimensionError("matmul_nt: inner extents do not match");
  Index m = a.dim(a.rank() - 2), n = b.dim(b.rank() - 2);
  if (a.rank() == 2) {
    NDArray out = NDArray::uninit({m, n});
    MatMap(out.mutable_data(), m, n).noalias() =
        ConstMatMap(a.data(), m, k) * ConstMatMap(b.data(), n, k).transpose();
    return out;
  }
  Index batch = a.dim(0);
  NDArray out = NDArray::uninit({batch, m, n});
  if (b.rank() == 2) {
    MatMap(out.mutable_data(), batch * m, n).noalias() =
        ConstMatMap(a.data(), batch * m, k) * ConstMatMap(b.data(), n, k).transpose();
    return out;
  }
  for (Index i = 0; i < batch; ++i)
    MatMap(out.mutable_data() + i * m * n, m, n).noalias() =
        ConstMatMap(a.data() + i * m * k, m, k) *
        ConstMatMap(b.data() + i * n * k, n, k).transpose();
  return out;
}

NDArray matmul_tn(const NDArray& a, const NDArray& b) {
  check_matmul_ranks(a, b, "matmul_tn");
  if (a.rank() != b.rank()) throw DimensionError("matmul_tn: rank mismatch");
  Index m = a.dim(a.rank() - 2);
  if (m != b.dim(b.rank() - 2)) throw DimensionError("matmul_tn: inner extents do not match");
  Index k = a.dim(a.rank() - 1), n = b.dim(b.rank() - 1);
  if (a.rank() == 2) {
    NDArray out = NDArray::uninit({k, n});
    MatMap(out.mutable_data(), k, n).noalias() =
        ConstMatMap(a.data(), m, k).transpose() * ConstMatMap(b.data(), m, n);
    return out;
  }
  Index batch = a.dim(0);
  NDArray out = NDArray::uninit({batch, k, n});
  for (Index i = 0; i < batch; ++i)
    MatMap(out.mutable_data() + i * k * n, k, n).noalias() =
        ConstMatMap(a.data() + i * m * k, m, k).transpose() *
        ConstMatMap(b.data() + i * m * n, m, n);
  return out;
}

NDArray transpose(const NDArray& a) {
  if (a.rank() != 2) throw DimensionError("transpose: rank-2 input required");
  NDArray out = NDArray::uninit({a.dim(1), a.dim(0)});
  MatMap(out.mutable_data(), a.dim(1), a.dim(0)) =
      ConstMatMap(a.data(), a.dim(0), a.dim(1)).transpose();
  return out;
}

NDArray softmax(const NDArray& a, int axis) {
  int ax = norm_axis(axis, a.rank(), "softmax");
  if (a.flat().isNaN().any()) throw NumericError("softmax: NaN input");
  AxisSplit sp = split_at(a.shape(), ax);
  NDArray out = NDArray::uninit(a.shape());
  const Scalar* src = a.data();
  Scalar* dst = out.mutable_data();
  if (sp.inner == 1) {
    for (Index o = 0; o < sp.outer; ++o) {
      auto line = Eigen::Map<const Storage>(src + o * sp.len, sp.len);
      auto res = Eigen::Map<Storage>(dst + o * sp.len, sp.len);
      res = (line - line.maxCoeff()).exp();
      res /= res.sum();
    }
    return out;
  }
  using StridedC = Eigen::Map<const Storage, 0, Eigen::InnerStride<>>;
  using Strided = Eigen::Map<Storage, 0, Eigen::InnerStride<>>;
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      Index base = o * sp.len * sp.inner + i;
      StridedC line(src + base, sp.len, Eigen::InnerStride<>(sp.inner));
      Strided res(dst + base, sp.len, Eigen::InnerStride<>(sp.inner));
      res = (line - line.maxCoeff()).exp();
      res /= res.sum();
    }
  return out;
}

NDArray layer_norm(const NDArray& x, const NDArray& gain, const NDArray& bias, Scalar eps) {
  if (eps <= 0) throw UsageError("layer_norm: eps must be positive");
  if (x.rank() < 1) throw DimensionError("layer_norm: rank >= 1 required");
  Index d = x.dim(x.rank() - 1);
  if (gain.size() != d || bias.size() != d)
    throw DimensionError("layer_norm: gain/bias length must match last axis");
  NDArray out = NDArray::uninit(x.shape());
  Index rows = x.size() / d;
  auto g = Eigen::Map<const Storage>(gain.data(), d);
  auto b = Eigen::Map<const Storage>(bias.data(), d);
  for (Index r = 0; r < rows; ++r) {
    auto line = Eigen::Map<const Storage>(x.data() + r * d, d);
    auto res = Eigen::Map<Storage>(out.mutable_data() + r * d, d);
    Scalar mu = line.mean();
    Scalar var = (line - mu).square().mean();
    res = ((line - mu) / std::sqrt(var + eps)) * g + b;
  }
  return out;
}

namespace {

Shape drop_axis(const Shape& s, int axis) {
  Shape out;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) out.push_back(s[static_cast<std::size_t>(i)]);
  return out;
}

template <typename F>
NDArray reduce_lines(const NDArray& a, int axis, const char* op, F&& f) {
  int ax = norm_axis(axis, a.rank(), op);
  AxisSplit sp = split_at(a.shape(), ax);
  NDArray out = NDArray::uninit(drop_axis(a.shape(), ax));
  const Scalar* src = a.data();
  Scalar* dst = out.mutable_data();
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      Index base = o * sp.len * sp.inner + i;
      dst[o * sp.inner + i] = f(src, base, sp.len, sp.inner);
    }
  return out;
}

}  // namespace

NDArray reduce_sum(const NDArray& a, int axis) {
  return reduce_lines(a, axis, "reduce_sum",
                      [](const Scalar* src, Index base, Index len, Index stride) {
                        Scalar s = 0;
                        for (Index j = 0; j < len; ++j) s += src[base + j * stride];
                        return s;
                      });
}

NDArray reduce_mean(const NDArray& a, int axis) {
  int ax = norm_axis(axis, a.rank(), "reduce_mean");
  NDArray s = reduce_sum(a, ax);
  return scale(s, Scalar{1} / static_cast<Scalar>(a.dim(ax)));
}

NDArray reduce_max(const NDArray& a, int axis, std::vector<Index>* argmax) {
  int ax = norm_axis(axis, a.rank(), "reduce_max");
  if (argmax) argmax->assign(static_cast<std::size_t>(a.size() / a.dim(ax)), 0);
  AxisSplit sp = split_at(a.shape(), ax);
  NDArray out = NDArray::uninit(drop_axis(a.shape(), ax));
  const Scalar* src = a.data();
  Scalar* dst = out.mutable_data();
  for (Index o = 0; o < sp.outer; ++o)
    for (Index i = 0; i < sp.inner; ++i) {
      Index base = o * sp.len * sp.inner + i;
      Scalar best = src[base];
      Index best_at = base;
      for (Index j = 1; j < sp.len; ++j) {
        Scalar v = src[base + j * sp.inner];
        if (v > best) {
          best = v;
          best_at = base + j * sp.inner;
        }
      }
      dst[o * sp.inner + i] = best;
      if (argmax) (*argmax)[static_cast<std::size_t>(o * sp.inner + i)] = best_at;
    }
  return out;
}

NDArray concat(const std::vector<NDArray>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  int rank = parts[0].rank();
  int ax = norm_axis(axis, rank, "concat");
  Shape out_shape = parts[0].shape();
  Index total_axis = 0;
  for (const NDArray& p : parts) {
    if (p.rank() != rank) throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != ax && p.dim(i) != out_shape[static_cast<std::size_t>(i)])
        throw DimensionError("concat: extents differ off the concat axis");
    total_axis += p.dim(ax);
  }
  out_shape[static_cast<std::size_t>(ax)] = total_axis;
  NDArray out = NDArray::uninit(out_shape);
  AxisSplit sp = split_at(out_shape, ax);
  Index dst_row = total_axis * sp.inner;
  Index offset = 0;
  for (const NDArray& p : parts) {
    Index chunk = p.dim(ax) * sp.inner;
    for (Index o = 0; o < sp.outer; ++o)
      std::memcpy(out.mutable_data() + o * dst_row + offset, p.data() + o * chunk,
                  static_cast<std::size_t>(chunk) * sizeof(Scalar));
    offset += chunk;
  }
  return out;
}

NDArray slice(const NDArray& a, int axis, Index start, Index len) {
  int ax = norm_axis(axis, a.rank(), "slice");
  if (start < 0 || len <= 0 || start + len > a.dim(ax))
    throw DimensionError("slice: range out of bounds");
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(ax)] = len;
  NDArray out = NDArray::uninit(out_shape);
  AxisSplit sp = split_at(a.shape(), ax);
  Index src_row = sp.len * sp.inner, chunk = len * sp.inner;
  for (Index o = 0; o < sp.outer; ++o)
    std::memcpy(out.mutable_data() + o * chunk, a.data() + o * src_row + start * sp.inner,
                static_cast<std::size_t>(chunk) * sizeof(Scalar));
  return out;
}

NDArray broadcast_to(const NDArray& a, const Shape& shape) {
  Shape check = broadcast_shape(a.shape(), shape);
  if (check != shape) throw DimensionError("broadcast_to: source does not broadcast to target");
  if (a.shape() == shape) return a;
  return add(a, NDArray::zeros(shape));
}

NDArray reduce_to_shape(const NDArray& grad, const Shape& shape) {
  if (grad.shape() == shape) return grad;
  NDArray g = grad;
  while (g.rank() > static_cast<int>(shape.size())) g = reduce_sum(g, 0);
  for (int i = 0; i < g.rank(); ++i)
    if (shape[static_cast<std::size_t>(i)] == 1 && g.dim(i) != 1) {
      g = reduce_sum(g, i).reshaped([&] {
        Shape s = g.shape();
        s[static_cast<std::size_t>(i)] = 1;
        return s;
      }());
    }
  if (g.shape() != shape) g = g.reshaped(shape);
  return g;
}

NDArray dropout_mask(const Shape& shape, Scalar drop_p, CounterRng& rng) {
  if (drop_p < 0 || drop_p >= 1) throw UsageError("dropout: p must be in [0, 1)");
  Scalar keep = 1 - drop_p;
  NDArray mask = NDArray::uninit(shape);
  Scalar inv = 1 / keep;
  for (Index i = 0; i < mask.size(); ++i)
    mask.mutable_data()[i] = rng.uniform() < keep ? inv : Scalar{0};
  return mask;
}

}  // namespace tt2v::num
