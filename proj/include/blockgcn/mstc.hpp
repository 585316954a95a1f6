#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "blockgcn/rng.hpp"
#include "blockgcn/tensor.hpp"
#include "blockgcn/tensor_ops.hpp"

namespace blockgcn {

enum class MSTCBranchKind { conv, pool, none };

// What a branch does after its 1x1 channel reduction. kernel/dilation are
// ignored for `none`; dilation is ignored for `pool`.
struct MSTCBranchSpec {
  MSTCBranchKind kind = MSTCBranchKind::conv;
  std::int64_t kernel = 5;
  std::int64_t dilation = 1;
};

std::vector<MSTCBranchSpec> default_mstc_branches();
std::string branch_spec_to_string(const MSTCBranchSpec& s);
MSTCBranchSpec branch_spec_from_string(const std::string& s);

struct MSTCBranch {
  MSTCBranchSpec spec;
  std::int64_t channels = 0;
  Tensor rw, rb;  // 1x1 reduction conv [Cb, Din, 1], [Cb]
  Tensor tw, tb;  // temporal conv [Cb, Cb, k], [Cb]; empty unless kind==conv
};

// Parallel temporal branches over [D,T,V]; outputs concatenated on channels.
// Every branch lands on the same output length (T-1)/stride + 1 thanks to
// "same" padding dilation*(k-1)/2, so kernels must be odd.
struct MSTCParams {
  std::int64_t d_in = 0;
  std::int64_t d_out = 0;
  std::int64_t stride = 1;
  std::vector<MSTCBranch> branches;

  static MSTCParams init(std::int64_t d_in, std::int64_t d_out, std::int64_t stride,
                         const std::vector<MSTCBranchSpec>& specs, Rng& rng);
  MSTCParams zeros_like() const;
};

std::int64_t mstc_param_count(const MSTCParams& p);
std::int64_t mstc_out_len(const MSTCParams& p, std::int64_t t);

struct MSTCSaved {
  std::vector<Tensor> reduced;                       // per branch, post 1x1
  std::vector<std::vector<std::int64_t>> pool_src;   // per pool branch, argmax
};

Tensor mstc_forward(const MSTCParams& p, const Tensor& x, MSTCSaved* saved = nullptr);
void mstc_backward(const MSTCParams& p, const Tensor& x, const MSTCSaved& saved, const Tensor& g,
                   MSTCParams& grads, Tensor& grad_x);

}  // namespace blockgcn
