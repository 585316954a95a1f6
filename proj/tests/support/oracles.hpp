#pragma once

// Slow reference implementations the tests compare the library against.
// Everything here is written independently from src/, favouring the most
// literal possible loops over any shared helper.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <utility>
#include <vector>

#include "blockgcn/blockgc.hpp"
#include "blockgcn/mstc.hpp"
#include "blockgcn/rng.hpp"
#include "blockgcn/tensor.hpp"
#include "blockgcn/tensor_ops.hpp"

namespace oracle {

using blockgcn::Tensor;

constexpr std::int64_t kUnreached = std::numeric_limits<std::int64_t>::max() / 4;

// All-pairs shortest paths by Floyd-Warshall over an undirected edge list.
inline std::vector<std::int64_t> floyd_warshall(
    std::int64_t v, const std::vector<std::pair<std::int64_t, std::int64_t>>& edges) {
  std::vector<std::int64_t> d(static_cast<std::size_t>(v * v), kUnreached);
  for (std::int64_t i = 0; i < v; ++i) d[static_cast<std::size_t>(i * v + i)] = 0;
  for (const auto& [a, b] : edges) {
    d[static_cast<std::size_t>(a * v + b)] = 1;
    d[static_cast<std::size_t>(b * v + a)] = 1;
  }
  for (std::int64_t k = 0; k < v; ++k) {
    for (std::int64_t i = 0; i < v; ++i) {
      for (std::int64_t j = 0; j < v; ++j) {
        const std::int64_t via = d[static_cast<std::size_t>(i * v + k)] +
                                 d[static_cast<std::size_t>(k * v + j)];
        if (via < d[static_cast<std::size_t>(i * v + j)]) {
          d[static_cast<std::size_t>(i * v + j)] = via;
        }
      }
    }
  }
  return d;
}

// BFS depth of every vertex from the root; kUnreached marks disconnection.
inline std::vector<std::int64_t> bfs_depths(
    std::int64_t v, const std::vector<std::pair<std::int64_t, std::int64_t>>& edges,
    std::int64_t root) {
  std::vector<std::vector<std::int64_t>> adj(static_cast<std::size_t>(v));
  for (const auto& [a, b] : edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  std::vector<std::int64_t> depth(static_cast<std::size_t>(v), kUnreached);
  std::vector<std::int64_t> queue = {root};
  depth[static_cast<std::size_t>(root)] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::int64_t cur = queue[head];
    for (std::int64_t nxt : adj[static_cast<std::size_t>(cur)]) {
      if (depth[static_cast<std::size_t>(nxt)] == kUnreached) {
        depth[static_cast<std::size_t>(nxt)] = depth[static_cast<std::size_t>(cur)] + 1;
        queue.push_back(nxt);
      }
    }
  }
  return depth;
}

// Random connected graph: a random attachment tree plus a few extra edges.
inline std::vector<std::pair<std::int64_t, std::int64_t>> random_connected_graph(
    blockgcn::Rng& rng, std::int64_t v) {
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  std::vector<std::pair<std::int64_t, std::int64_t>> edges;
  for (std::int64_t i = 1; i < v; ++i) {
    const std::int64_t j = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(i)));
    edges.emplace_back(j, i);
    seen.insert({j, i});
  }
  const std::int64_t extra = v > 2 ? static_cast<std::int64_t>(rng.next_below(
                                         static_cast<std::uint64_t>(v))) : 0;
  for (std::int64_t e = 0; e < extra; ++e) {
    std::int64_t a = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(v)));
    std::int64_t b = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(v)));
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    if (seen.count({a, b}) != 0) continue;
    seen.insert({a, b});
    edges.emplace_back(a, b);
  }
  return edges;
}

// Per-channel spatial aggregation plus grouped projection, written as the
// most direct quintuple loop. b may be empty, [V,V] or [V,V,Din]; c may be
// empty, [V,V,1] or [V,V,Din].
inline Tensor naive_blockgc(const blockgcn::BlockGCParams& p, const Tensor& h, const Tensor& b,
                            const Tensor& c) {
  const std::int64_t v = p.v, t = h.dim(1);
  const std::int64_t gin = p.d_in / p.k;
  auto b_at = [&](std::int64_t i, std::int64_t j, std::int64_t d) {
    if (b.size() == 0) return 0.0;
    if (b.ndim() == 2) return b[i * v + j];
    return b[(i * v + j) * b.dim(2) + d];
  };
  auto c_at = [&](std::int64_t i, std::int64_t j, std::int64_t d) {
    if (c.size() == 0) return 0.0;
    if (c.dim(2) == 1) return c[i * v + j];
    return c[(i * v + j) * c.dim(2) + d];
  };
  Tensor y({p.d_in, t, v});
  for (std::int64_t d = 0; d < p.d_in; ++d) {
    const std::int64_t g = d / gin;
    for (std::int64_t tt = 0; tt < t; ++tt) {
      for (std::int64_t vv = 0; vv < v; ++vv) {
        double acc = 0.0;
        for (std::int64_t u = 0; u < v; ++u) {
          const double m = p.a[(g * v + vv) * v + u] + b_at(vv, u, d) + c_at(vv, u, d);
          acc += m * h[(d * t + tt) * v + u];
        }
        y[(d * t + tt) * v + vv] = acc;
      }
    }
  }
  Tensor out({p.d_out, t, v});
  const bool grouped = p.variant == blockgcn::GCVariant::block;
  const std::int64_t pg = grouped ? p.k : 1;
  const std::int64_t pin = p.d_in / pg, pout = p.d_out / pg;
  for (std::int64_t g = 0; g < pg; ++g) {
    for (std::int64_t ol = 0; ol < pout; ++ol) {
      const std::int64_t od = g * pout + ol;
      for (std::int64_t tt = 0; tt < t; ++tt) {
        for (std::int64_t vv = 0; vv < v; ++vv) {
          double acc = p.has_bias ? p.bias[od] : 0.0;
          for (std::int64_t dl = 0; dl < pin; ++dl) {
            acc += p.w[(g * pin + dl) * pout + ol] * y[((g * pin + dl) * t + tt) * v + vv];
          }
          out[(od * t + tt) * v + vv] = acc;
        }
      }
    }
  }
  return out;
}

// Dilated strided cross-correlation along T of [C,T,V], direct loops.
inline Tensor naive_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                           const blockgcn::Conv1dSpec& spec) {
  const std::int64_t cin = x.dim(0), t = x.dim(1), v = x.dim(2);
  const std::int64_t cout = w.dim(0), k = w.dim(2);
  const std::int64_t to = (t + 2 * spec.pad - spec.dilation * (k - 1) - 1) / spec.stride + 1;
  Tensor out({cout, to, v});
  for (std::int64_t oc = 0; oc < cout; ++oc) {
    for (std::int64_t tt = 0; tt < to; ++tt) {
      for (std::int64_t vv = 0; vv < v; ++vv) {
        double acc = bias.size() > 0 ? bias[oc] : 0.0;
        for (std::int64_t ic = 0; ic < cin; ++ic) {
          for (std::int64_t kk = 0; kk < k; ++kk) {
            const std::int64_t ti = tt * spec.stride - spec.pad + kk * spec.dilation;
            if (ti < 0 || ti >= t) continue;
            acc += w[(oc * cin + ic) * k + kk] * x[(ic * t + ti) * v + vv];
          }
        }
        out[(oc * to + tt) * v + vv] = acc;
      }
    }
  }
  return out;
}

// Branch-by-branch MS-TC evaluation through naive_conv1d and a direct pool.
inline Tensor naive_mstc(const blockgcn::MSTCParams& p, const Tensor& x) {
  const std::int64_t t = x.dim(1), v = x.dim(2);
  const std::int64_t to = (t - 1) / p.stride + 1;
  Tensor out({p.d_out, to, v});
  std::int64_t offset = 0;
  for (const blockgcn::MSTCBranch& br : p.branches) {
    blockgcn::Conv1dSpec one;
    Tensor y;
    if (br.spec.kind == blockgcn::MSTCBranchKind::none) {
      one.stride = p.stride;
      y = naive_conv1d(x, br.rw, br.rb, one);
    } else {
      const Tensor red = naive_conv1d(x, br.rw, br.rb, one);
      if (br.spec.kind == blockgcn::MSTCBranchKind::conv) {
        blockgcn::Conv1dSpec cs;
        cs.kernel = br.spec.kernel;
        cs.stride = p.stride;
        cs.dilation = br.spec.dilation;
        cs.pad = br.spec.dilation * (br.spec.kernel - 1) / 2;
        y = naive_conv1d(red, br.tw, br.tb, cs);
      } else {
        const std::int64_t pad = (br.spec.kernel - 1) / 2;
        y = Tensor({br.channels, to, v});
        for (std::int64_t cc = 0; cc < br.channels; ++cc) {
          for (std::int64_t tt = 0; tt < to; ++tt) {
            for (std::int64_t vv = 0; vv < v; ++vv) {
              double best = -std::numeric_limits<double>::infinity();
              for (std::int64_t kk = 0; kk < br.spec.kernel; ++kk) {
                const std::int64_t ti = tt * p.stride - pad + kk;
                if (ti < 0 || ti >= t) continue;
                best = std::max(best, red[(cc * t + ti) * v + vv]);
              }
              y[(cc * to + tt) * v + vv] = best;
            }
          }
        }
      }
    }
    for (std::int64_t cc = 0; cc < br.channels; ++cc) {
      for (std::int64_t s = 0; s < to * v; ++s) {
        out[(offset + cc) * to * v + s] = y[cc * to * v + s];
      }
    }
    offset += br.channels;
  }
  return out;
}

// Mean cross entropy straight through explicit probabilities.
inline double naive_cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
  const std::int64_t n = logits.dim(0), c = logits.dim(1);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double denom = 0.0;
    for (std::int64_t j = 0; j < c; ++j) denom += std::exp(logits[i * c + j]);
    total += -std::log(std::exp(logits[i * c + labels[static_cast<std::size_t>(i)]]) / denom);
  }
  return total / static_cast<double>(n);
}

}  // namespace oracle
