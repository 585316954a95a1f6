#include "blockgcn/mstc.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "blockgcn/error.hpp"

namespace blockgcn {

std::vector<MSTCBranchSpec> default_mstc_branches() {
  return {{MSTCBranchKind::conv, 5, 1},
          {MSTCBranchKind::conv, 5, 2},
          {MSTCBranchKind::none, 1, 1}};
}

std::string branch_spec_to_string(const MSTCBranchSpec& s) {
  std::ostringstream os;
  switch (s.kind) {
    case MSTCBranchKind::conv: os << "conv" << s.kernel << "d" << s.dilation; break;
    case MSTCBranchKind::pool: os << "pool" << s.kernel; break;
    case MSTCBranchKind::none: os << "none"; break;
  }
  return os.str();
}

MSTCBranchSpec branch_spec_from_string(const std::string& s) {
  MSTCBranchSpec out;
  if (s == "none") {
    out.kind = MSTCBranchKind::none;
    out.kernel = 1;
    out.dilation = 1;
    return out;
  }
  auto parse_int = [&](std::size_t pos, std::size_t end) {
    const std::string sub = s.substr(pos, end - pos);
    try {
      return static_cast<std::int64_t>(std::stoll(sub));
    } catch (...) {
      throw ValueError("bad branch spec: " + s);
    }
  };
  if (s.rfind("conv", 0) == 0) {
    const std::size_t dpos = s.find('d', 4);
    if (dpos == std::string::npos) throw ValueError("bad branch spec: " + s);
    out.kind = MSTCBranchKind::conv;
    out.kernel = parse_int(4, dpos);
    out.dilation = parse_int(dpos + 1, s.size());
    return out;
  }
  if (s.rfind("pool", 0) == 0) {
    out.kind = MSTCBranchKind::pool;
    out.kernel = parse_int(4, s.size());
    out.dilation = 1;
    return out;
  }
  throw ValueError("bad branch spec: " + s);
}

namespace {

std::int64_t same_pad(const MSTCBranchSpec& s) {
  if (s.kind == MSTCBranchKind::none) return 0;
  if (s.kernel % 2 == 0) {
    throw ValueError("temporal kernels must be odd for same padding, got " +
                     std::to_string(s.kernel));
  }
  if (s.kind == MSTCBranchKind::pool) return (s.kernel - 1) / 2;
  return s.dilation * (s.kernel - 1) / 2;
}

Conv1dSpec branch_conv_spec(const MSTCBranchSpec& s, std::int64_t stride) {
  Conv1dSpec cs;
  cs.kernel = s.kernel;
  cs.stride = stride;
  cs.pad = same_pad(s);
  cs.dilation = s.dilation;
  return cs;
}

// Max pool along T of [C,T,V]; src records the argmax flat input index of
// every output element for the backward pass.
Tensor maxpool_temporal(const Tensor& x, std::int64_t kernel, std::int64_t stride,
                        std::int64_t pad, std::vector<std::int64_t>& src) {
  const std::int64_t c = x.dim(0), t = x.dim(1), v = x.dim(2);
  Conv1dSpec spec;
  spec.kernel = kernel;
  spec.stride = stride;
  spec.pad = pad;
  const std::int64_t to = conv1d_out_len(t, spec);
  Tensor out({c, to, v});
  src.assign(static_cast<std::size_t>(c * to * v), -1);
  for (std::int64_t cc = 0; cc < c; ++cc) {
    for (std::int64_t tt = 0; tt < to; ++tt) {
      const std::int64_t base = tt * stride - pad;
      for (std::int64_t vv = 0; vv < v; ++vv) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_idx = -1;
        for (std::int64_t kk = 0; kk < kernel; ++kk) {
          const std::int64_t ti = base + kk;
          if (ti < 0 || ti >= t) continue;
          const std::int64_t idx = (cc * t + ti) * v + vv;
          if (x[idx] > best) {
            best = x[idx];
            best_idx = idx;
          }
        }
        if (best_idx < 0) throw ShapeError("max pool window fell entirely outside the input");
        out[(cc * to + tt) * v + vv] = best;
        src[static_cast<std::size_t>((cc * to + tt) * v + vv)] = best_idx;
      }
    }
  }
  return out;
}

}  // namespace

MSTCParams MSTCParams::init(std::int64_t d_in, std::int64_t d_out, std::int64_t stride,
                            const std::vector<MSTCBranchSpec>& specs, Rng& rng) {
  if (specs.empty()) throw ValueError("MS-TC needs at least one branch");
  if (d_in < 1 || d_out < 1 || stride < 1) throw ValueError("MS-TC: bad dimensions");
  const std::int64_t nb = static_cast<std::int64_t>(specs.size());
  if (d_out < nb) throw ValueError("MS-TC: d_out smaller than branch count");
  MSTCParams p;
  p.d_in = d_in;
  p.d_out = d_out;
  p.stride = stride;
  const std::int64_t base = d_out / nb;
  auto uniform_fill = [&rng](Tensor& t, std::int64_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  };
  for (std::int64_t i = 0; i < nb; ++i) {
    MSTCBranch br;
    br.spec = specs[static_cast<std::size_t>(i)];
    same_pad(br.spec);  // validates odd kernel early
    br.channels = i == nb - 1 ? d_out - base * (nb - 1) : base;
    br.rw = Tensor({br.channels, d_in, 1});
    br.rb = Tensor({br.channels});
    uniform_fill(br.rw, d_in);
    uniform_fill(br.rb, d_in);
    if (br.spec.kind == MSTCBranchKind::conv) {
      br.tw = Tensor({br.channels, br.channels, br.spec.kernel});
      br.tb = Tensor({br.channels});
      uniform_fill(br.tw, br.channels * br.spec.kernel);
      uniform_fill(br.tb, br.channels * br.spec.kernel);
    }
    p.branches.push_back(std::move(br));
  }
  return p;
}

MSTCParams MSTCParams::zeros_like() const {
  MSTCParams z = *this;
  for (MSTCBranch& br : z.branches) {
    br.rw.fill(0.0);
    br.rb.fill(0.0);
    if (br.spec.kind == MSTCBranchKind::conv) {
      br.tw.fill(0.0);
      br.tb.fill(0.0);
    }
  }
  return z;
}

std::int64_t mstc_param_count(const MSTCParams& p) {
  std::int64_t n = 0;
  for (const MSTCBranch& br : p.branches) {
    n += br.rw.size() + br.rb.size() + br.tw.size() + br.tb.size();
  }
  return n;
}

std::int64_t mstc_out_len(const MSTCParams& p, std::int64_t t) {
  Conv1dSpec spec;
  spec.stride = p.stride;
  return conv1d_out_len(t, spec);
}

Tensor mstc_forward(const MSTCParams& p, const Tensor& x, MSTCSaved* saved) {
  if (x.ndim() != 3 || x.dim(0) != p.d_in) {
    throw ShapeError("mstc expects x [Din,T,V], got " + x.shape_str());
  }
  const std::int64_t t = x.dim(1), v = x.dim(2);
  const std::int64_t to = mstc_out_len(p, t);
  Tensor out({p.d_out, to, v});
  if (saved != nullptr) {
    saved->reduced.clear();
    saved->pool_src.clear();
  }
  std::int64_t offset = 0;
  for (const MSTCBranch& br : p.branches) {
    Conv1dSpec one{1, 1, 0, 1};
    Tensor y;
    Tensor reduced;
    std::vector<std::int64_t> src;
    switch (br.spec.kind) {
      case MSTCBranchKind::none: {
        one.stride = p.stride;
        y = conv1d_temporal(x, br.rw, br.rb, one);
        break;
      }
      case MSTCBranchKind::conv: {
        reduced = conv1d_temporal(x, br.rw, br.rb, one);
        y = conv1d_temporal(reduced, br.tw, br.tb, branch_conv_spec(br.spec, p.stride));
        break;
      }
      case MSTCBranchKind::pool: {
        reduced = conv1d_temporal(x, br.rw, br.rb, one);
        y = maxpool_temporal(reduced, br.spec.kernel, p.stride, same_pad(br.spec), src);
        break;
      }
    }
    if (y.dim(1) != to) {
      throw ShapeError("mstc branch output length " + std::to_string(y.dim(1)) +
                       " does not match expected " + std::to_string(to));
    }
    for (std::int64_t cb = 0; cb < br.channels; ++cb) {
      const double* from = y.data() + cb * to * v;
      double* dst = out.data() + (offset + cb) * to * v;
      for (std::int64_t s = 0; s < to * v; ++s) dst[s] = from[s];
    }
    offset += br.channels;
    if (saved != nullptr) {
      saved->reduced.push_back(std::move(reduced));
      saved->pool_src.push_back(std::move(src));
    }
  }
  return out;
}

void mstc_backward(const MSTCParams& p, const Tensor& x, const MSTCSaved& saved, const Tensor& g,
                   MSTCParams& grads, Tensor& grad_x) {
  const std::int64_t t = x.dim(1), v = x.dim(2);
  const std::int64_t to = mstc_out_len(p, t);
  if (g.ndim() != 3 || g.dim(0) != p.d_out || g.dim(1) != to || g.dim(2) != v) {
    throw ShapeError("mstc_backward: bad upstream grad shape " + g.shape_str());
  }
  if (saved.reduced.size() != p.branches.size()) {
    throw ValueError("mstc_backward: forward state missing");
  }
  if (!grad_x.same_shape(x)) throw ShapeError("mstc_backward: bad grad_x buffer");
  Conv1dSpec one{1, 1, 0, 1};
  std::int64_t offset = 0;
  for (std::size_t bi = 0; bi < p.branches.size(); ++bi) {
    const MSTCBranch& br = p.branches[bi];
    MSTCBranch& gbr = grads.branches[bi];
    Tensor gy({br.channels, to, v});
    for (std::int64_t cb = 0; cb < br.channels; ++cb) {
      const double* from = g.data() + (offset + cb) * to * v;
      double* dst = gy.data() + cb * to * v;
      for (std::int64_t s = 0; s < to * v; ++s) dst[s] = from[s];
    }
    offset += br.channels;
    switch (br.spec.kind) {
      case MSTCBranchKind::none: {
        Conv1dSpec strided = one;
        strided.stride = p.stride;
        conv1d_temporal_backward(x, br.rw, strided, gy, grad_x, gbr.rw, gbr.rb);
        break;
      }
      case MSTCBranchKind::conv: {
        const Tensor& reduced = saved.reduced[bi];
        Tensor greduced(reduced.shape());
        conv1d_temporal_backward(reduced, br.tw, branch_conv_spec(br.spec, p.stride), gy,
                                 greduced, gbr.tw, gbr.tb);
        conv1d_temporal_backward(x, br.rw, one, greduced, grad_x, gbr.rw, gbr.rb);
        break;
      }
      case MSTCBranchKind::pool: {
        const Tensor& reduced = saved.reduced[bi];
        const auto& src = saved.pool_src[bi];
        Tensor greduced(reduced.shape());
        for (std::int64_t i = 0; i < gy.size(); ++i) {
          greduced[src[static_cast<std::size_t>(i)]] += gy[i];
        }
        conv1d_temporal_backward(x, br.rw, one, greduced, grad_x, gbr.rw, gbr.rb);
        break;
      }
    }
  }
}

}  // namespace blockgcn
