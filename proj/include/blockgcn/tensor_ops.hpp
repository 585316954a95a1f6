#pragma once

#include <cstdint>
#include <vector>

#include "blockgcn/tensor.hpp"

namespace blockgcn {

// a [m,k] times b [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);
// Gradients of sum(g * (a@b)) with respect to a and b. Accumulates into
// grad_a / grad_b, which must be preallocated to the operand shapes.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& grad_a,
                     Tensor& grad_b);

Tensor relu(const Tensor& x);
// grad_x += g where x > 0.
void relu_backward(const Tensor& x, const Tensor& g, Tensor& grad_x);

// Row-wise softmax over the last axis of a 2-d tensor, max-subtracted.
Tensor softmax_rows(const Tensor& logits);

// Mean cross entropy over the batch from raw logits [n, c] and labels [n].
// Computed via the log-sum-exp form, never through explicit probabilities.
double softmax_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels,
                             Tensor* grad_logits);

// Temporal 1-d convolution over x [C,T,V]: each output channel is a sum over
// input channels and kernel taps along T, applied independently per vertex.
// weight [Cout,Cin,k], bias [Cout]. Output [Cout,T',V] with
//   T' = (T + 2*pad - dilation*(k-1) - 1) / stride + 1.
struct Conv1dSpec {
  std::int64_t kernel = 1;
  std::int64_t stride = 1;
  std::int64_t pad = 0;
  std::int64_t dilation = 1;
};

std::int64_t conv1d_out_len(std::int64_t t, const Conv1dSpec& spec);
Tensor conv1d_temporal(const Tensor& x, const Tensor& weight, const Tensor& bias,
                       const Conv1dSpec& spec);
void conv1d_temporal_backward(const Tensor& x, const Tensor& weight, const Conv1dSpec& spec,
                              const Tensor& g, Tensor& grad_x, Tensor& grad_weight,
                              Tensor& grad_bias);

// Mean over the T and V axes of [C,T,V] -> [C].
Tensor mean_pool_tv(const Tensor& x);
void mean_pool_tv_backward(const std::vector<std::int64_t>& x_shape, const Tensor& g,
                           Tensor& grad_x);

// Elementwise helpers. Shapes must match exactly.
void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double alpha, const Tensor& b);  // a += alpha*b
void scale_inplace(Tensor& a, double alpha);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace blockgcn
