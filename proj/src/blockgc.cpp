#include "blockgcn/blockgc.hpp"

#include <cmath>

#include "blockgcn/error.hpp"

namespace blockgcn {

GCVariant gc_variant_from_string(const std::string& s) {
  if (s == "block") return GCVariant::block;
  if (s == "vanilla") return GCVariant::vanilla;
  if (s == "decoupling") return GCVariant::decoupling;
  throw ValueError("unknown gc variant: " + s);
}

std::string to_string(GCVariant v) {
  switch (v) {
    case GCVariant::block: return "block";
    case GCVariant::vanilla: return "vanilla";
    case GCVariant::decoupling: return "decoupling";
  }
  return "?";
}

AInit a_init_from_string(const std::string& s) {
  if (s == "physical") return AInit::physical;
  if (s == "identity") return AInit::identity;
  if (s == "ones") return AInit::ones;
  if (s == "uniform") return AInit::uniform;
  throw ValueError("unknown adjacency init: " + s);
}

std::string to_string(AInit i) {
  switch (i) {
    case AInit::physical: return "physical";
    case AInit::identity: return "identity";
    case AInit::ones: return "ones";
    case AInit::uniform: return "uniform";
  }
  return "?";
}

BlockGCParams BlockGCParams::init(GCVariant variant, std::int64_t k, std::int64_t d_in,
                                  std::int64_t d_out, const Skeleton& skeleton, AInit a_init,
                                  Rng& rng, bool bias) {
  if (variant == GCVariant::vanilla && k != 1) {
    throw ValueError("vanilla GC requires K=1, got K=" + std::to_string(k));
  }
  if (k < 1) throw ValueError("K must be >= 1");
  if (d_in % k != 0 || d_out % k != 0) {
    throw ValueError("channels must divide by K: Din=" + std::to_string(d_in) +
                     " Dout=" + std::to_string(d_out) + " K=" + std::to_string(k));
  }
  BlockGCParams p;
  p.variant = variant;
  p.k = k;
  p.v = skeleton.num_joints;
  p.d_in = d_in;
  p.d_out = d_out;
  p.has_bias = bias;
  const std::int64_t v = p.v;

  p.a = Tensor({k, v, v});
  Tensor base;
  if (a_init == AInit::physical) base = bone_adjacency(skeleton, true);
  for (std::int64_t g = 0; g < k; ++g) {
    double* ag = p.a.data() + g * v * v;
    switch (a_init) {
      case AInit::physical:
        for (std::int64_t i = 0; i < v * v; ++i) ag[i] = base[i];
        break;
      case AInit::identity:
        for (std::int64_t i = 0; i < v; ++i) ag[i * v + i] = 1.0;
        break;
      case AInit::ones:
        for (std::int64_t i = 0; i < v * v; ++i) ag[i] = 1.0;
        break;
      case AInit::uniform: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(v));
        for (std::int64_t i = 0; i < v * v; ++i) ag[i] = rng.uniform(-bound, bound);
        break;
      }
    }
  }

  if (variant == GCVariant::block) {
    p.w = Tensor({k, d_in / k, d_out / k});
  } else {
    p.w = Tensor({d_in, d_out});
  }
  const std::int64_t fan_in = variant == GCVariant::block ? d_in / k : d_in;
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < p.w.size(); ++i) p.w[i] = rng.uniform(-bound, bound);

  if (bias) p.bias = Tensor({d_out});
  return p;
}

BlockGCParams BlockGCParams::zeros_like() const {
  BlockGCParams z = *this;
  z.a.fill(0.0);
  z.w.fill(0.0);
  if (has_bias) z.bias.fill(0.0);
  return z;
}

std::int64_t blockgc_projection_params(GCVariant variant, std::int64_t k, std::int64_t d_in,
                                       std::int64_t d_out) {
  if (variant == GCVariant::block) return d_in * d_out / k;
  return d_in * d_out;
}

std::int64_t blockgc_param_count(const BlockGCParams& p) {
  std::int64_t n = p.k * p.v * p.v + blockgc_projection_params(p.variant, p.k, p.d_in, p.d_out);
  if (p.has_bias) n += p.d_out;
  return n;
}

std::int64_t blockgc_flop_count(const BlockGCParams& p, std::int64_t t) {
  // Multiply-accumulates: aggregation touches every adjacency entry once per
  // frame and input channel of its group; each projection weight fires once
  // per (t, v) site.
  const std::int64_t agg = p.d_in * t * p.v * p.v;
  const std::int64_t proj =
      blockgc_projection_params(p.variant, p.k, p.d_in, p.d_out) * t * p.v;
  const std::int64_t bias = p.has_bias ? p.d_out * t * p.v : 0;
  return agg + proj + bias;
}

namespace {

enum class EncShape { absent, shared, feature_wise };

EncShape classify_b(const Tensor& b, std::int64_t v, std::int64_t d_in) {
  if (b.size() == 0) return EncShape::absent;
  if (b.ndim() == 2 && b.dim(0) == v && b.dim(1) == v) return EncShape::shared;
  if (b.ndim() == 3 && b.dim(0) == v && b.dim(1) == v && b.dim(2) == d_in) {
    return EncShape::feature_wise;
  }
  throw ShapeError("B must be [V,V] or [V,V,Din], got " + b.shape_str());
}

EncShape classify_c(const Tensor& c, std::int64_t v, std::int64_t d_in) {
  if (c.size() == 0) return EncShape::absent;
  if (c.ndim() == 3 && c.dim(0) == v && c.dim(1) == v) {
    if (c.dim(2) == 1) return EncShape::shared;
    if (c.dim(2) == d_in) return EncShape::feature_wise;
  }
  throw ShapeError("C must be [V,V,1] or [V,V,Din], got " + c.shape_str());
}

// Spatial mixing matrix for one channel, stored transposed so the
// aggregation kernel reads it row-contiguously:
// mt[u][v] = A_g[v][u] + B[v][u](,d) + C[v][u](,d).
void build_mt(const double* ag, const Tensor* b, EncShape bs, const Tensor* c, EncShape cs,
              std::int64_t d, std::int64_t d_in, std::int64_t v, double* mt) {
  for (std::int64_t vv = 0; vv < v; ++vv) {
    for (std::int64_t u = 0; u < v; ++u) mt[u * v + vv] = ag[vv * v + u];
  }
  if (bs == EncShape::shared) {
    const double* pb = b->data();
    for (std::int64_t vv = 0; vv < v; ++vv) {
      for (std::int64_t u = 0; u < v; ++u) mt[u * v + vv] += pb[vv * v + u];
    }
  } else if (bs == EncShape::feature_wise) {
    const double* pb = b->data();
    for (std::int64_t vv = 0; vv < v; ++vv) {
      for (std::int64_t u = 0; u < v; ++u) mt[u * v + vv] += pb[(vv * v + u) * d_in + d];
    }
  }
  if (cs != EncShape::absent) {
    const double* pc = c->data();
    const std::int64_t cd = cs == EncShape::shared ? 1 : d_in;
    const std::int64_t ci = cs == EncShape::shared ? 0 : d;
    for (std::int64_t vv = 0; vv < v; ++vv) {
      for (std::int64_t u = 0; u < v; ++u) mt[u * v + vv] += pc[(vv * v + u) * cd + ci];
    }
  }
}

// y[t][v] = sum_u h[t][u] * mt[u][v]; y must be zeroed by the caller.
void aggregate(const double* h, const double* mt, double* y, std::int64_t t, std::int64_t v) {
  for (std::int64_t tt = 0; tt < t; ++tt) {
    const double* hrow = h + tt * v;
    double* yrow = y + tt * v;
    for (std::int64_t u = 0; u < v; ++u) {
      const double hv = hrow[u];
      const double* mrow = mt + u * v;
      for (std::int64_t vv = 0; vv < v; ++vv) yrow[vv] += hv * mrow[vv];
    }
  }
}

// Accumulates gh += gy @ mt^T and gmt += h^T @ gy.
void aggregate_backward(const double* h, const double* mt, const double* gy, double* gh,
                        double* gmt, std::int64_t t, std::int64_t v) {
  for (std::int64_t tt = 0; tt < t; ++tt) {
    const double* gyrow = gy + tt * v;
    double* ghrow = gh + tt * v;
    for (std::int64_t u = 0; u < v; ++u) {
      const double* mrow = mt + u * v;
      double acc = 0.0;
      for (std::int64_t vv = 0; vv < v; ++vv) acc += gyrow[vv] * mrow[vv];
      ghrow[u] += acc;
      const double hv = h[tt * v + u];
      double* gmrow = gmt + u * v;
      for (std::int64_t vv = 0; vv < v; ++vv) gmrow[vv] += hv * gyrow[vv];
    }
  }
}

bool fast_path_legal(EncShape bs, EncShape cs) {
  return cs == EncShape::absent && bs != EncShape::feature_wise;
}

void check_forward_shapes(const BlockGCParams& p, const Tensor& h) {
  if (h.ndim() != 3 || h.dim(0) != p.d_in || h.dim(2) != p.v) {
    throw ShapeError("blockgc expects h [Din,T,V] = [" + std::to_string(p.d_in) + ",T," +
                     std::to_string(p.v) + "], got " + h.shape_str());
  }
}

}  // namespace

Tensor blockgc_forward(const BlockGCParams& p, const Tensor& h, const Tensor& b, const Tensor& c,
                       BlockGCSaved* saved, AggPath path) {
  check_forward_shapes(p, h);
  const std::int64_t v = p.v, t = h.dim(1);
  const EncShape bs = classify_b(b, v, p.d_in);
  const EncShape cs = classify_c(c, v, p.d_in);
  const bool fast = path == AggPath::fast ||
                    (path == AggPath::automatic && fast_path_legal(bs, cs));
  if (fast && !fast_path_legal(bs, cs)) {
    throw ValueError("fast aggregation path requires shared/absent B and no C");
  }

  const std::int64_t gin = p.group_in();
  Tensor y({p.d_in, t, v});
  std::vector<double> mt(static_cast<std::size_t>(v * v));
  for (std::int64_t g = 0; g < p.k; ++g) {
    const double* ag = p.a.data() + g * v * v;
    if (fast) build_mt(ag, &b, bs, &c, cs, 0, p.d_in, v, mt.data());
    for (std::int64_t dl = 0; dl < gin; ++dl) {
      const std::int64_t d = g * gin + dl;
      if (!fast) build_mt(ag, &b, bs, &c, cs, d, p.d_in, v, mt.data());
      aggregate(h.data() + d * t * v, mt.data(), y.data() + d * t * v, t, v);
    }
  }

  Tensor out({p.d_out, t, v});
  if (p.has_bias) {
    for (std::int64_t od = 0; od < p.d_out; ++od) {
      double* row = out.data() + od * t * v;
      const double bv = p.bias[od];
      for (std::int64_t s = 0; s < t * v; ++s) row[s] = bv;
    }
  }
  const bool grouped = p.variant == GCVariant::block;
  const std::int64_t pg = grouped ? p.k : 1;
  const std::int64_t pin = p.d_in / pg, pout = p.d_out / pg;
  for (std::int64_t g = 0; g < pg; ++g) {
    const double* wg = p.w.data() + g * pin * pout;
    for (std::int64_t dl = 0; dl < pin; ++dl) {
      const double* yrow = y.data() + (g * pin + dl) * t * v;
      for (std::int64_t ol = 0; ol < pout; ++ol) {
        const double wv = wg[dl * pout + ol];
        double* orow = out.data() + (g * pout + ol) * t * v;
        for (std::int64_t s = 0; s < t * v; ++s) orow[s] += wv * yrow[s];
      }
    }
  }
  if (saved != nullptr) saved->y = std::move(y);
  return out;
}

void blockgc_backward(const BlockGCParams& p, const Tensor& h, const Tensor& b, const Tensor& c,
                      const BlockGCSaved& saved, const Tensor& g, BlockGCParams& grads,
                      Tensor& grad_h, Tensor* grad_b, Tensor* grad_c, AggPath path) {
  check_forward_shapes(p, h);
  const std::int64_t v = p.v, t = h.dim(1);
  if (g.ndim() != 3 || g.dim(0) != p.d_out || g.dim(1) != t || g.dim(2) != v) {
    throw ShapeError("blockgc_backward: bad upstream grad shape " + g.shape_str());
  }
  if (saved.y.size() == 0) throw ValueError("blockgc_backward: forward state missing");
  if (!grad_h.same_shape(h)) throw ShapeError("blockgc_backward: bad grad_h buffer");
  const EncShape bs = classify_b(b, v, p.d_in);
  const EncShape cs = classify_c(c, v, p.d_in);
  if (grad_b != nullptr && !grad_b->same_shape(b)) {
    throw ShapeError("blockgc_backward: grad_b buffer mismatch");
  }
  if (grad_c != nullptr && !grad_c->same_shape(c)) {
    throw ShapeError("blockgc_backward: grad_c buffer mismatch");
  }
  const bool fast = path == AggPath::fast ||
                    (path == AggPath::automatic && fast_path_legal(bs, cs));
  if (fast && !fast_path_legal(bs, cs)) {
    throw ValueError("fast aggregation path requires shared/absent B and no C");
  }

  if (p.has_bias) {
    for (std::int64_t od = 0; od < p.d_out; ++od) {
      const double* grow = g.data() + od * t * v;
      double acc = 0.0;
      for (std::int64_t s = 0; s < t * v; ++s) acc += grow[s];
      grads.bias[od] += acc;
    }
  }

  Tensor gy({p.d_in, t, v});
  const bool grouped = p.variant == GCVariant::block;
  const std::int64_t pg = grouped ? p.k : 1;
  const std::int64_t pin = p.d_in / pg, pout = p.d_out / pg;
  for (std::int64_t g2 = 0; g2 < pg; ++g2) {
    const double* wg = p.w.data() + g2 * pin * pout;
    double* gwg = grads.w.data() + g2 * pin * pout;
    for (std::int64_t dl = 0; dl < pin; ++dl) {
      const double* yrow = saved.y.data() + (g2 * pin + dl) * t * v;
      double* gyrow = gy.data() + (g2 * pin + dl) * t * v;
      for (std::int64_t ol = 0; ol < pout; ++ol) {
        const double* grow = g.data() + (g2 * pout + ol) * t * v;
        const double wv = wg[dl * pout + ol];
        double acc = 0.0;
        for (std::int64_t s = 0; s < t * v; ++s) {
          acc += yrow[s] * grow[s];
          gyrow[s] += wv * grow[s];
        }
        gwg[dl * pout + ol] += acc;
      }
    }
  }

  const std::int64_t gin = p.group_in();
  std::vector<double> mt(static_cast<std::size_t>(v * v));
  std::vector<double> gmt(static_cast<std::size_t>(v * v));
  for (std::int64_t g2 = 0; g2 < p.k; ++g2) {
    const double* ag = p.a.data() + g2 * v * v;
    double* gag = grads.a.data() + g2 * v * v;
    if (fast) build_mt(ag, &b, bs, &c, cs, 0, p.d_in, v, mt.data());
    for (std::int64_t dl = 0; dl < gin; ++dl) {
      const std::int64_t d = g2 * gin + dl;
      if (!fast) build_mt(ag, &b, bs, &c, cs, d, p.d_in, v, mt.data());
      std::fill(gmt.begin(), gmt.end(), 0.0);
      aggregate_backward(h.data() + d * t * v, mt.data(), gy.data() + d * t * v,
                         grad_h.data() + d * t * v, gmt.data(), t, v);
      for (std::int64_t vv = 0; vv < v; ++vv) {
        for (std::int64_t u = 0; u < v; ++u) {
          const double gm = gmt[static_cast<std::size_t>(u * v + vv)];
          gag[vv * v + u] += gm;
          if (grad_b != nullptr && bs == EncShape::shared) {
            (*grad_b)[vv * v + u] += gm;
          } else if (grad_b != nullptr && bs == EncShape::feature_wise) {
            (*grad_b)[(vv * v + u) * p.d_in + d] += gm;
          }
          if (grad_c != nullptr && cs == EncShape::shared) {
            (*grad_c)[vv * v + u] += gm;
          } else if (grad_c != nullptr && cs == EncShape::feature_wise) {
            (*grad_c)[(vv * v + u) * p.d_in + d] += gm;
          }
        }
      }
    }
  }
}

}  // namespace blockgcn
