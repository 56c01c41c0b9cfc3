#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ulrn/autodiff/tensor.hpp"

// Differentiable primitives. Every op records its result on the graph of its
// first argument; all tensor arguments must belong to the same graph.
namespace ulrn::ad {

// Floor applied inside every logarithm: log(x) is evaluated as log(max(x, eps)).
inline constexpr float kLogEpsilon = 1e-12f;

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
Tensor transpose(const Tensor& x);               // rank 2
Tensor reshape(const Tensor& x, Shape shape);

// Numpy-style broadcast of trailing dimensions; backward sums over the
// broadcast axes.
Tensor broadcast_to(const Tensor& x, const Shape& shape);

// Elementwise binary ops broadcast the smaller operand when shapes differ.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, float factor);
Tensor add_scalar(const Tensor& x, float offset);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // clamped at kLogEpsilon, zero gradient below it
Tensor rsqrt(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor gelu(const Tensor& x);  // tanh approximation

Tensor sum(const Tensor& x);   // scalar, accumulated in double
Tensor mean(const Tensor& x);  // scalar, accumulated in double

// Max-subtracted softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& x, int axis = -1);
// Row i of a square [T,T] score matrix is normalized over columns 0..i only;
// the masked entries are exactly zero.
Tensor causal_softmax(const Tensor& x);

// x / rms(x) * gain over the last axis.
Tensor rms_norm(const Tensor& x, const Tensor& gain, float eps = 1e-5f);

// Rows of `table` ([V,d]) selected by ids -> [T,d].
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);

// out[i] = x[i, index[i]] for a [N,V] matrix.
Tensor pick(const Tensor& x, std::span<const std::int32_t> index);

// Rotary position embedding over a [T, n_heads*head_dim] matrix. Pairs
// (2j, 2j+1) of each head are rotated by angle pos * base^(-2j/head_dim).
Tensor rope(const Tensor& x, std::size_t n_heads, float base,
            std::size_t position_offset = 0);

}  // namespace ulrn::ad
