#pragma once
// Learned polygonal basis functions. Three strategies share one bundle /
// evaluation interface:
//
//   h: each basis function is an expansion in a harmonic space (scaled
//      harmonic polynomials plus three vertex-transplanted corner functions);
//      a value network predicts the expansion coefficients and a second
//      network predicts gradient coefficients. Trained on boundary misfit.
//   b: each basis function is psi0 * N + psi_j, an interior bubble times a
//      network correction plus the boundary interpolant, so the boundary
//      trace is exact for any weights. Trained on the interior Laplacian
//      residual.
//   p: same composition with a single scalar network shared by all learned
//      functions; the function at the widest corner is derived from the
//      others so the partition of unity (and zero gradient sum) is exact.
//      Trained on reproduction of linear gradients.
//
// Triangles bypass the networks entirely: the P1 hat functions are exact
// there, so no model is ever trained or looked up for 3-vertex classes.

#include "navem/common.hpp"
#include "navem/geometry.hpp"
#include "navem/harmonic.hpp"
#include "navem/neural.hpp"
#include "navem/optim.hpp"
#include "navem/quadrature.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace navem {

// ---------------------------------------------------------------------------
// Strategies and input encodings
// ---------------------------------------------------------------------------

enum class Strategy { h, b, p };

inline std::string strategy_tag(Strategy s) {
  switch (s) {
    case Strategy::h: return "h";
    case Strategy::b: return "b";
    case Strategy::p: return "p";
  }
  throw ValidationError("unknown strategy");
}

inline Strategy strategy_from_tag(const std::string& tag) {
  if (tag == "h") return Strategy::h;
  if (tag == "b") return Strategy::b;
  if (tag == "p") return Strategy::p;
  throw ValidationError("unknown strategy tag '" + tag + "'");
}

// Metadata tag stored inside model files.
inline std::string strategy_metadata_name(Strategy s) {
  switch (s) {
    case Strategy::h: return "H";
    case Strategy::b: return "B";
    case Strategy::p: return "P";
  }
  throw ValidationError("unknown strategy");
}

inline constexpr const char* kEncodingVersion = "ref-anchor-v1";

// Geometry encoding: with the element normalized in the anchor's frame, the
// flat coordinates of the n-1 vertices following the anchor in cyclic order.
inline VecX anchor_encoding(const Polygon& norm_anchor_frame, int anchor) {
  const int n = norm_anchor_frame.n();
  VecX x0(2 * (n - 1));
  for (int k = 1; k < n; ++k) {
    const Vec2 v = norm_anchor_frame.vertex(anchor + k);
    x0[2 * (k - 1)] = v.x();
    x0[2 * (k - 1) + 1] = v.y();
  }
  return x0;
}

inline int h_input_dim(int n_vertices) { return 2 * (n_vertices - 1); }
// b/p networks additionally receive the evaluation point (anchor frame).
inline int bp_input_dim(int n_vertices) { return 2 * n_vertices; }

// ---------------------------------------------------------------------------
// Bundles: trained models keyed by polygon class
// ---------------------------------------------------------------------------

struct BasisBundle {
  Strategy strategy = Strategy::h;
  int harmonic_degree = 20;  // h only
  PhiModel phi;              // h only: shared corner-singularity model
  std::map<std::string, Mlp> value_nets;     // key: to_string(PolygonClass)
  std::map<std::string, Mlp> gradient_nets;  // h only
};

inline const Mlp& bundle_value_net(const BasisBundle& bundle,
                                   const PolygonClass& cls) {
  const auto it = bundle.value_nets.find(to_string(cls));
  if (it == bundle.value_nets.end())
    throw MissingModel("no '" + strategy_tag(bundle.strategy) +
                       "' model for polygon class " + to_string(cls));
  return it->second;
}

inline const Mlp& bundle_gradient_net(const BasisBundle& bundle,
                                      const PolygonClass& cls) {
  const auto it = bundle.gradient_nets.find(to_string(cls));
  if (it == bundle.gradient_nets.end())
    throw MissingModel("no gradient model for polygon class " +
                       to_string(cls));
  return it->second;
}

// ---------------------------------------------------------------------------
// Pointwise evaluation
// ---------------------------------------------------------------------------

struct BasisEval {
  VecX phi;  // one value per local basis function
  MatX q;    // 2 x n physical gradients; empty for values-only requests
};

// Exact barycentric hat functions on a triangle.
inline BasisEval triangle_hats(const Polygon& p, const Vec2& x,
                               JetOrder order) {
  if (p.n() != 3) throw ValidationError("triangle path needs 3 vertices");
  const auto cross = [](const Vec2& u, const Vec2& w) {
    return u.x() * w.y() - u.y() * w.x();
  };
  const Vec2 v0 = p.vertex(0), v1 = p.vertex(1), v2 = p.vertex(2);
  const double twice_area = cross(v1 - v0, v2 - v0);
  BasisEval ev;
  ev.phi.resize(3);
  for (int a = 0; a < 3; ++a) {
    const Vec2 vb = p.vertex(a + 1), vc = p.vertex(a + 2);
    ev.phi[a] = cross(vb - x, vc - x) / twice_area;
  }
  if (order != JetOrder::values_only) {
    ev.q.resize(2, 3);
    for (int a = 0; a < 3; ++a) {
      const Vec2 e = p.vertex(a + 2) - p.vertex(a + 1);
      ev.q.col(a) = Vec2(-e.y(), e.x()) / twice_area;
    }
  }
  return ev;
}

// Index of the function derived from the partition of unity in strategy p:
// the vertex with the largest interior angle (lowest index wins ties).
inline int pnavem_derived_index(const Polygon& p) {
  int best = 0;
  double best_angle = p.interior_angle(0);
  for (int i = 1; i < p.n(); ++i) {
    const double a = p.interior_angle(i);
    if (a > best_angle) {
      best = i;
      best_angle = a;
    }
  }
  return best;
}

// Everything needed to evaluate one element's basis at many points. Holds
// pointers into the bundle; do not outlive it.
struct ElementContext {
  Strategy strategy = Strategy::h;
  Polygon element;
  bool triangle = false;

  // h: per-anchor frame, corner transplants, and predicted coefficients.
  HarmonicSpace space;
  std::vector<ReferenceMap> maps;
  std::vector<HarmonicContext> contexts;
  std::vector<VecX> coeff_value;  // 2*degree+4 per anchor
  std::vector<VecX> coeff_grad;   // 2*degree+3 per anchor

  // b/p: one shared frame plus per-anchor rotations and encodings.
  ReferenceMap map0;
  Polygon norm0;
  std::vector<Mat2> rot;    // rot[j] maps frame-j vectors into frame 0
  std::vector<VecX> tails;  // per-anchor geometry encoding (frame-j coords)
  const Mlp* net = nullptr;
  int derived = -1;  // p only
};

namespace detail {

// Shared-frame bookkeeping for strategies b and p. All anchor frames share
// the centre and scale of frame 0 and differ by a rotation, so anchor-frame
// quantities are obtained by rotating frame-0 ones instead of re-normalizing
// the polygon once per anchor.
struct BpFrames {
  ReferenceMap map0;
  Polygon norm0;
  std::vector<Mat2> rot;
  std::vector<VecX> tails;
};

inline BpFrames bp_frames(const Polygon& e) {
  BpFrames fr{reference_map(e, 0), Polygon(), {}, {}};
  fr.norm0 = normalized(e, fr.map0);
  const int n = e.n();
  fr.rot.resize(static_cast<std::size_t>(n));
  fr.tails.resize(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    fr.rot[static_cast<std::size_t>(j)] =
        fr.map0.rot * reference_map(e, j).rot.transpose();
    VecX tail(2 * (n - 1));
    const Mat2 to_frame_j = fr.rot[static_cast<std::size_t>(j)].transpose();
    for (int k = 1; k < n; ++k) {
      const Vec2 v = to_frame_j * fr.norm0.vertex(j + k);
      tail[2 * (k - 1)] = v.x();
      tail[2 * (k - 1) + 1] = v.y();
    }
    fr.tails[static_cast<std::size_t>(j)] = std::move(tail);
  }
  return fr;
}

}  // namespace detail

inline ElementContext element_context(const BasisBundle& bundle,
                                      const Polygon& e) {
  ElementContext ctx;
  ctx.strategy = bundle.strategy;
  ctx.element = e;
  if (e.n() == 3) {
    ctx.triangle = true;
    return ctx;
  }
  const int n = e.n();
  if (bundle.strategy == Strategy::h) {
    const Mlp& vnet = bundle_value_net(bundle, e.cls());
    const Mlp& gnet = bundle_gradient_net(bundle, e.cls());
    ctx.space = HarmonicSpace{bundle.harmonic_degree, bundle.phi};
    ctx.maps.reserve(static_cast<std::size_t>(n));
    ctx.contexts.reserve(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      ctx.maps.push_back(reference_map(e, j));
      const Polygon norm = normalized(e, ctx.maps.back());
      ctx.contexts.push_back(harmonic_context(ctx.space, norm, j));
      const VecX x0 = anchor_encoding(norm, j);
      ctx.coeff_value.push_back(forward(vnet, x0));
      ctx.coeff_grad.push_back(forward(gnet, x0));
    }
    return ctx;
  }
  detail::BpFrames fr = detail::bp_frames(e);
  ctx.map0 = fr.map0;
  ctx.norm0 = std::move(fr.norm0);
  ctx.rot = std::move(fr.rot);
  ctx.tails = std::move(fr.tails);
  ctx.net = &bundle_value_net(bundle, e.cls());
  if (bundle.strategy == Strategy::p) ctx.derived = pnavem_derived_index(e);
  return ctx;
}

inline BasisEval eval_basis(const ElementContext& ctx, const Vec2& x,
                            JetOrder order = JetOrder::with_gradient) {
  if (order == JetOrder::with_hessian)
    throw UnsupportedOrder("basis evaluation stops at gradients");
  if (ctx.triangle) return triangle_hats(ctx.element, x, order);

  const int n = ctx.element.n();
  const bool with_grad = order != JetOrder::values_only;
  BasisEval ev;
  ev.phi.resize(n);
  if (with_grad) ev.q.resize(2, n);

  if (ctx.strategy == Strategy::h) {
    std::vector<Jet2> jets;
    for (int j = 0; j < n; ++j) {
      const std::size_t ji = static_cast<std::size_t>(j);
      const Vec2 z = ctx.maps[ji].to_ref(x);
      harmonic_basis_eval(ctx.space, ctx.contexts[ji], z, order, jets);
      double value = 0.0;
      for (int k = 0; k < ctx.space.dim(); ++k)
        value += ctx.coeff_value[ji][k] * jets[static_cast<std::size_t>(k)].v;
      ev.phi[j] = value;
      if (with_grad) {
        Vec2 g = Vec2::Zero();
        for (int k = 0; k + 1 < ctx.space.dim(); ++k)
          g += ctx.coeff_grad[ji][k] * jets[static_cast<std::size_t>(k + 1)].g;
        ev.q.col(j) = ctx.maps[ji].grad_to_phys(g);
      }
    }
    return ev;
  }

  // Strategies b and p share the bubble-times-network composition.
  const Vec2 z0 = ctx.map0.to_ref(x);
  const Jet2 bub = bubble(ctx.norm0, z0, order);
  MatX inputs(bp_input_dim(n), n);
  for (int j = 0; j < n; ++j) {
    const std::size_t ji = static_cast<std::size_t>(j);
    inputs.block(0, j, 2, 1) = ctx.rot[ji].transpose() * z0;
    inputs.block(2, j, 2 * (n - 1), 1) = ctx.tails[ji];
  }
  const BatchJets nets = mlp_forward(*ctx.net, inputs, order);
  for (int j = 0; j < n; ++j) {
    if (ctx.strategy == Strategy::p && j == ctx.derived) continue;
    const std::size_t ji = static_cast<std::size_t>(j);
    const Jet2 psi = transfinite(ctx.norm0, j, z0, order);
    ev.phi[j] = bub.v * nets.value(0, j) + psi.v;
    if (with_grad) {
      const Vec2 grad_frame_j(nets.d1(0, j), nets.d2(0, j));
      const Vec2 g = bub.v * (ctx.rot[ji] * grad_frame_j) +
                     nets.value(0, j) * bub.g + psi.g;
      ev.q.col(j) = ctx.map0.grad_to_phys(g);
    }
  }
  if (ctx.strategy == Strategy::p) {
    double rest = 0.0;
    Vec2 grad_rest = Vec2::Zero();
    for (int j = 0; j < n; ++j) {
      if (j == ctx.derived) continue;
      rest += ev.phi[j];
      if (with_grad) grad_rest += ev.q.col(j);
    }
    ev.phi[ctx.derived] = 1.0 - rest;
    if (with_grad) ev.q.col(ctx.derived) = -grad_rest;
  }
  return ev;
}

inline BasisEval basis_eval(const BasisBundle& bundle, const Polygon& e,
                            const Vec2& x,
                            JetOrder order = JetOrder::with_gradient) {
  return eval_basis(element_context(bundle, e), x, order);
}

inline BasisEval hnavem_eval(const BasisBundle& bundle, const Polygon& e,
                             const Vec2& x,
                             JetOrder order = JetOrder::with_gradient) {
  if (bundle.strategy != Strategy::h)
    throw ValidationError("hnavem_eval needs an 'h' bundle");
  return basis_eval(bundle, e, x, order);
}

inline BasisEval bnavem_eval(const BasisBundle& bundle, const Polygon& e,
                             const Vec2& x,
                             JetOrder order = JetOrder::with_gradient) {
  if (bundle.strategy != Strategy::b)
    throw ValidationError("bnavem_eval needs a 'b' bundle");
  return basis_eval(bundle, e, x, order);
}

inline BasisEval pnavem_eval(const BasisBundle& bundle, const Polygon& e,
                             const Vec2& x,
                             JetOrder order = JetOrder::with_gradient) {
  if (bundle.strategy != Strategy::p)
    throw ValidationError("pnavem_eval needs a 'p' bundle");
  return basis_eval(bundle, e, x, order);
}

// ---------------------------------------------------------------------------
// Training losses. Each loss owns a geometry cache built once per batch so
// repeated evaluations during optimization only run the networks.
// ---------------------------------------------------------------------------

namespace detail {

inline void check_same_class(const std::vector<Polygon>& batch,
                             const char* what) {
  if (batch.empty())
    throw ValidationError(std::string(what) + ": empty polygon batch");
  const int n = batch.front().n();
  for (const Polygon& p : batch)
    if (p.n() != n)
      throw ValidationError(std::string(what) +
                            ": batch mixes vertex counts");
}

// ---- strategy h ----

struct HPairCache {
  VecX input;        // geometry encoding
  MatX member_value; // samples x dim: expansion member values on the boundary
  MatX member_tan;   // samples x dim: their tangential derivatives
  VecX target_value; // exact piecewise-linear trace
  VecX target_tan;   // its tangential derivative
  VecX w;            // boundary quadrature weights (carry edge lengths)
};

struct HLossCache {
  int dim = 0;
  std::vector<HPairCache> pairs;
  MatX inputs;  // encoding per pair, stacked as columns
};

inline HLossCache build_h_cache(const HarmonicSpace& space,
                                const std::vector<Polygon>& batch,
                                int edge_points) {
  check_same_class(batch, "h loss");
  const EdgeRule rule = edge_points_exponential(edge_points);
  HLossCache cache;
  cache.dim = space.dim();
  std::vector<Jet2> jets;
  for (const Polygon& e : batch) {
    const int n = e.n();
    for (int j = 0; j < n; ++j) {
      const ReferenceMap map = reference_map(e, j);
      const Polygon norm = normalized(e, map);
      const HarmonicContext hctx = harmonic_context(space, norm, j);
      HPairCache pc;
      pc.input = anchor_encoding(norm, j);
      const int rows = n * edge_points;
      pc.member_value.resize(rows, cache.dim);
      pc.member_tan.resize(rows, cache.dim);
      pc.target_value.resize(rows);
      pc.target_tan.resize(rows);
      pc.w.resize(rows);
      int r = 0;
      for (int i = 0; i < n; ++i) {
        const Vec2 a = norm.vertex(i);
        const Vec2 ev = norm.edge_vector(i);
        const double len = norm.edge_length(i);
        const Vec2 tangent = ev / len;
        const double slope =
            (((i + 1) % n == j) ? 1.0 : 0.0) - ((i == j) ? 1.0 : 0.0);
        for (std::size_t k = 0; k < rule.params.size(); ++k, ++r) {
          const double s = rule.params[k];
          harmonic_basis_eval(space, hctx, a + s * ev,
                              JetOrder::with_gradient, jets);
          for (int c = 0; c < cache.dim; ++c) {
            pc.member_value(r, c) = jets[static_cast<std::size_t>(c)].v;
            pc.member_tan(r, c) =
                jets[static_cast<std::size_t>(c)].g.dot(tangent);
          }
          pc.target_value[r] = edge_trace(n, i, j, s);
          pc.target_tan[r] = slope / len;
          pc.w[r] = rule.weights[k] * len;
        }
      }
      cache.pairs.push_back(std::move(pc));
    }
  }
  const auto n_pairs = static_cast<int>(cache.pairs.size());
  cache.inputs.resize(cache.pairs.front().input.size(), n_pairs);
  for (int b = 0; b < n_pairs; ++b)
    cache.inputs.col(b) = cache.pairs[static_cast<std::size_t>(b)].input;
  return cache;
}

// Mean over (function, element) pairs of the squared boundary misfit of the
// value expansion, measured in both the trace and its tangential derivative.
inline double h_value_loss(const Mlp& net, const HLossCache& cache,
                           VecX* grad) {
  const auto n_pairs = static_cast<int>(cache.pairs.size());
  ForwardTrace trace;
  const BatchJets out = mlp_forward(net, cache.inputs, JetOrder::values_only,
                                    grad ? &trace : nullptr);
  double loss = 0.0;
  MatX seeds;
  if (grad) seeds = MatX::Zero(cache.dim, n_pairs);
  for (int b = 0; b < n_pairs; ++b) {
    const HPairCache& pc = cache.pairs[static_cast<std::size_t>(b)];
    const VecX c = out.value.col(b);
    const VecX v = pc.member_value * c - pc.target_value;
    const VecX vt = pc.member_tan * c - pc.target_tan;
    loss += pc.w.dot(v.cwiseProduct(v)) + pc.w.dot(vt.cwiseProduct(vt));
    if (grad)
      seeds.col(b) =
          2.0 * (pc.member_value.transpose() * pc.w.cwiseProduct(v) +
                 pc.member_tan.transpose() * pc.w.cwiseProduct(vt));
  }
  loss /= n_pairs;
  if (grad) {
    seeds /= static_cast<double>(n_pairs);
    BatchJets adj;
    adj.value = std::move(seeds);
    *grad = mlp_backward(net, trace, adj);
  }
  require_finite(loss, "h value loss");
  return loss;
}

// Mean over pairs of the squared tangential misfit of the gradient
// expansion; coefficient k weights the gradient of expansion member k+1
// (the constant member has no gradient).
inline double h_gradient_loss(const Mlp& net, const HLossCache& cache,
                              VecX* grad) {
  const auto n_pairs = static_cast<int>(cache.pairs.size());
  const int gdim = cache.dim - 1;
  ForwardTrace trace;
  const BatchJets out = mlp_forward(net, cache.inputs, JetOrder::values_only,
                                    grad ? &trace : nullptr);
  double loss = 0.0;
  MatX seeds;
  if (grad) seeds = MatX::Zero(gdim, n_pairs);
  for (int b = 0; b < n_pairs; ++b) {
    const HPairCache& pc = cache.pairs[static_cast<std::size_t>(b)];
    const auto members = pc.member_tan.rightCols(gdim);
    const VecX c = out.value.col(b);
    const VecX vt = members * c - pc.target_tan;
    loss += pc.w.dot(vt.cwiseProduct(vt));
    if (grad) seeds.col(b) = 2.0 * (members.transpose() * pc.w.cwiseProduct(vt));
  }
  loss /= n_pairs;
  if (grad) {
    seeds /= static_cast<double>(n_pairs);
    BatchJets adj;
    adj.value = std::move(seeds);
    *grad = mlp_backward(net, trace, adj);
  }
  require_finite(loss, "h gradient loss");
  return loss;
}

// ---- strategies b and p ----

// Per-(function, element) interior sampling data shared by the b loss; the
// p loss reuses the same fields grouped per element.
struct BpPointData {
  MatX inputs;         // network inputs, one column per sample point
  Mat2 rot;            // frame-j -> frame-0 rotation
  VecX psi0;           // bubble values
  MatX psi0_grad_rot;  // 2 x P: bubble gradient rotated into frame j
  VecX psi0_lap;       // bubble Laplacians
  VecX psij_lap;       // interpolant Laplacians (b loss)
  MatX psij_grad;      // 2 x P interpolant gradients in frame 0 (p loss)
  VecX w;              // weights normalized to sum 1 (area-weighted mean)
};

struct BLossCache {
  std::vector<BpPointData> pairs;
};

struct PElementCache {
  std::vector<BpPointData> learned;  // one entry per learned function
  std::vector<Vec2> a;               // vertex offsets v_j - v_derived
  MatX psi0_grad;                    // 2 x P bubble gradient in frame 0
  VecX psi0, w;
};

struct PLossCache {
  std::vector<PElementCache> elements;
};

// Shared interior sampling of one element in its frame-0 normalization.
struct BpElementSamples {
  BpFrames frames;
  QuadratureRule rule;
  VecX psi0, psi0_lap, w;
  MatX psi0_grad;                 // 2 x P, frame 0
  std::vector<Jet2> psij;         // n * P interpolant jets, j-major
};

inline BpElementSamples bp_element_samples(const Polygon& e, int lattice_n) {
  BpElementSamples s;
  s.frames = bp_frames(e);
  s.rule = polygon_sample_points(s.frames.norm0, lattice_n);
  const auto np = static_cast<int>(s.rule.size());
  const int n = e.n();
  s.psi0.resize(np);
  s.psi0_lap.resize(np);
  s.psi0_grad.resize(2, np);
  s.w.resize(np);
  double total = 0.0;
  for (int p = 0; p < np; ++p) {
    const Jet2 bub = bubble(s.frames.norm0, s.rule.points[static_cast<std::size_t>(p)],
                            JetOrder::with_hessian);
    s.psi0[p] = bub.v;
    s.psi0_grad.col(p) = bub.g;
    s.psi0_lap[p] = bub.laplacian();
    s.w[p] = s.rule.weights[static_cast<std::size_t>(p)];
    total += s.w[p];
  }
  s.w /= total;
  s.psij.reserve(static_cast<std::size_t>(n * np));
  for (int j = 0; j < n; ++j)
    for (int p = 0; p < np; ++p)
      s.psij.push_back(transfinite(s.frames.norm0, j,
                                   s.rule.points[static_cast<std::size_t>(p)],
                                   JetOrder::with_hessian));
  return s;
}

inline MatX bp_inputs(const BpElementSamples& s, int j) {
  const int n = s.frames.norm0.n();
  const auto np = static_cast<int>(s.rule.size());
  const Mat2 to_frame_j = s.frames.rot[static_cast<std::size_t>(j)].transpose();
  MatX inputs(bp_input_dim(n), np);
  for (int p = 0; p < np; ++p) {
    inputs.block(0, p, 2, 1) =
        to_frame_j * s.rule.points[static_cast<std::size_t>(p)];
    inputs.block(2, p, 2 * (n - 1), 1) =
        s.frames.tails[static_cast<std::size_t>(j)];
  }
  return inputs;
}

inline BLossCache build_b_cache(const std::vector<Polygon>& batch,
                                int lattice_n) {
  check_same_class(batch, "b loss");
  BLossCache cache;
  for (const Polygon& e : batch) {
    const BpElementSamples s = bp_element_samples(e, lattice_n);
    const int n = e.n();
    const auto np = static_cast<int>(s.rule.size());
    for (int j = 0; j < n; ++j) {
      BpPointData pd;
      pd.inputs = bp_inputs(s, j);
      pd.rot = s.frames.rot[static_cast<std::size_t>(j)];
      pd.psi0 = s.psi0;
      pd.psi0_lap = s.psi0_lap;
      pd.psi0_grad_rot = pd.rot.transpose() * s.psi0_grad;
      pd.w = s.w;
      pd.psij_lap.resize(np);
      for (int p = 0; p < np; ++p)
        pd.psij_lap[p] =
            s.psij[static_cast<std::size_t>(j * np + p)].laplacian();
      cache.pairs.push_back(std::move(pd));
    }
  }
  return cache;
}

// Mean over (function, element) pairs of the area-weighted mean squared
// Laplacian of the composed function, measured in normalized coordinates.
inline double b_loss(const Mlp& net, const BLossCache& cache, VecX* grad,
                     int threads) {
  const std::size_t n_pairs = cache.pairs.size();
  std::vector<double> chunk_loss(chunk_count(n_pairs, 4), 0.0);
  std::vector<VecX> chunk_grad;
  if (grad)
    chunk_grad.assign(chunk_loss.size(), VecX::Zero(net.n_params()));
  for_chunks(
      n_pairs, threads,
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        for (std::size_t b = begin; b < end; ++b) {
          const BpPointData& pd = cache.pairs[b];
          const auto np = static_cast<int>(pd.psi0.size());
          ForwardTrace trace;
          const BatchJets out =
              mlp_forward(net, pd.inputs, JetOrder::with_hessian,
                          grad ? &trace : nullptr);
          double pair_loss = 0.0;
          BatchJets adj;
          if (grad) {
            adj.value = MatX::Zero(1, np);
            adj.d1 = MatX::Zero(1, np);
            adj.d2 = MatX::Zero(1, np);
            adj.l11 = MatX::Zero(1, np);
            adj.l22 = MatX::Zero(1, np);
          }
          for (int p = 0; p < np; ++p) {
            const double lap_net = out.l11(0, p) + out.l22(0, p);
            const double residual =
                pd.psi0[p] * lap_net +
                2.0 * (pd.psi0_grad_rot(0, p) * out.d1(0, p) +
                       pd.psi0_grad_rot(1, p) * out.d2(0, p)) +
                out.value(0, p) * pd.psi0_lap[p] + pd.psij_lap[p];
            pair_loss += pd.w[p] * residual * residual;
            if (grad) {
              const double seed = 2.0 * pd.w[p] * residual;
              adj.value(0, p) = seed * pd.psi0_lap[p];
              adj.d1(0, p) = seed * 2.0 * pd.psi0_grad_rot(0, p);
              adj.d2(0, p) = seed * 2.0 * pd.psi0_grad_rot(1, p);
              adj.l11(0, p) = seed * pd.psi0[p];
              adj.l22(0, p) = seed * pd.psi0[p];
            }
          }
          chunk_loss[chunk] += pair_loss;
          if (grad) chunk_grad[chunk] += mlp_backward(net, trace, adj);
        }
      },
      4);
  double loss = 0.0;
  for (const double l : chunk_loss) loss += l;
  loss /= static_cast<double>(n_pairs);
  if (grad) {
    *grad = VecX::Zero(net.n_params());
    for (const VecX& g : chunk_grad) *grad += g;
    *grad /= static_cast<double>(n_pairs);
  }
  require_finite(loss, "b loss");
  return loss;
}

inline PLossCache build_p_cache(const std::vector<Polygon>& batch,
                                int lattice_n) {
  check_same_class(batch, "p loss");
  PLossCache cache;
  for (const Polygon& e : batch) {
    const BpElementSamples s = bp_element_samples(e, lattice_n);
    const int n = e.n();
    const auto np = static_cast<int>(s.rule.size());
    const int derived = pnavem_derived_index(e);
    PElementCache ec;
    ec.psi0 = s.psi0;
    ec.psi0_grad = s.psi0_grad;
    ec.w = s.w;
    for (int j = 0; j < n; ++j) {
      if (j == derived) continue;
      BpPointData pd;
      pd.inputs = bp_inputs(s, j);
      pd.rot = s.frames.rot[static_cast<std::size_t>(j)];
      pd.psij_grad.resize(2, np);
      for (int p = 0; p < np; ++p)
        pd.psij_grad.col(p) = s.psij[static_cast<std::size_t>(j * np + p)].g;
      ec.learned.push_back(std::move(pd));
      ec.a.push_back(s.frames.norm0.vertex(j) -
                     s.frames.norm0.vertex(derived));
    }
    cache.elements.push_back(std::move(ec));
  }
  return cache;
}

// Mean over elements of the area-weighted mean squared misfit between the
// reconstructed gradients of the two linear monomials and their exact
// gradients (all in frame-0 normalized coordinates).
inline double p_loss(const Mlp& net, const PLossCache& cache, VecX* grad,
                     int threads) {
  const std::size_t n_elems = cache.elements.size();
  std::vector<double> chunk_loss(chunk_count(n_elems, 1), 0.0);
  std::vector<VecX> chunk_grad;
  if (grad)
    chunk_grad.assign(chunk_loss.size(), VecX::Zero(net.n_params()));
  for_chunks(
      n_elems, threads,
      [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        for (std::size_t el = begin; el < end; ++el) {
          const PElementCache& ec = cache.elements[el];
          const auto np = static_cast<int>(ec.psi0.size());
          const auto m = ec.learned.size();
          std::vector<ForwardTrace> traces(m);
          std::vector<BatchJets> outs(m);
          std::vector<MatX> q(m);  // frame-0 gradients, 2 x P
          for (std::size_t j = 0; j < m; ++j) {
            const BpPointData& pd = ec.learned[j];
            outs[j] = mlp_forward(net, pd.inputs, JetOrder::with_gradient,
                                  grad ? &traces[j] : nullptr);
            q[j].resize(2, np);
            for (int p = 0; p < np; ++p) {
              const Vec2 grad_frame_j(outs[j].d1(0, p), outs[j].d2(0, p));
              q[j].col(p) = ec.psi0[p] * (pd.rot * grad_frame_j) +
                            outs[j].value(0, p) * ec.psi0_grad.col(p) +
                            pd.psij_grad.col(p);
            }
          }
          double elem_loss = 0.0;
          std::vector<Mat2> misfit(static_cast<std::size_t>(np));
          for (int p = 0; p < np; ++p) {
            Mat2 g = Mat2::Zero();
            for (std::size_t j = 0; j < m; ++j)
              g += q[j].col(p) * ec.a[j].transpose();
            misfit[static_cast<std::size_t>(p)] = g - Mat2::Identity();
            elem_loss +=
                ec.w[p] * misfit[static_cast<std::size_t>(p)].squaredNorm();
          }
          chunk_loss[chunk] += elem_loss;
          if (grad) {
            for (std::size_t j = 0; j < m; ++j) {
              const BpPointData& pd = ec.learned[j];
              BatchJets adj;
              adj.value = MatX::Zero(1, np);
              adj.d1 = MatX::Zero(1, np);
              adj.d2 = MatX::Zero(1, np);
              for (int p = 0; p < np; ++p) {
                const Vec2 dq = 2.0 * ec.w[p] *
                                (misfit[static_cast<std::size_t>(p)] * ec.a[j]);
                adj.value(0, p) = dq.dot(ec.psi0_grad.col(p));
                const Vec2 dgrad = ec.psi0[p] * (pd.rot.transpose() * dq);
                adj.d1(0, p) = dgrad.x();
                adj.d2(0, p) = dgrad.y();
              }
              chunk_grad[chunk] += mlp_backward(net, traces[j], adj);
            }
          }
        }
      },
      1);
  double loss = 0.0;
  for (const double l : chunk_loss) loss += l;
  loss /= static_cast<double>(n_elems);
  if (grad) {
    *grad = VecX::Zero(net.n_params());
    for (const VecX& g : chunk_grad) *grad += g;
    *grad /= static_cast<double>(n_elems);
  }
  require_finite(loss, "p loss");
  return loss;
}

}  // namespace detail

struct HLossPair {
  double value = 0.0;
  double gradient = 0.0;
};

// Boundary-misfit losses of the h strategy over all (function, element)
// pairs of the batch. Optional outputs receive the weight gradients.
inline HLossPair hnavem_losses(const Mlp& value_net, const Mlp& gradient_net,
                               const HarmonicSpace& space,
                               const std::vector<Polygon>& batch,
                               int edge_points = 50,
                               VecX* value_grad = nullptr,
                               VecX* gradient_grad = nullptr) {
  const detail::HLossCache cache =
      detail::build_h_cache(space, batch, edge_points);
  HLossPair out;
  out.value = detail::h_value_loss(value_net, cache, value_grad);
  out.gradient = detail::h_gradient_loss(gradient_net, cache, gradient_grad);
  return out;
}

// Interior Laplacian-residual loss of the b strategy.
inline double bnavem_loss(const Mlp& net, const std::vector<Polygon>& batch,
                          int lattice_n = 10, VecX* grad = nullptr) {
  return detail::b_loss(net, detail::build_b_cache(batch, lattice_n), grad, 1);
}

// Linear-gradient reproduction loss of the p strategy.
inline double pnavem_loss(const Mlp& net, const std::vector<Polygon>& batch,
                          int lattice_n = 10, VecX* grad = nullptr) {
  return detail::p_loss(net, detail::build_p_cache(batch, lattice_n), grad, 1);
}

// ---------------------------------------------------------------------------
// Reproduction metrics: how well the evaluated basis reconstructs the two
// linear monomials and their gradients, in each element's normalized frame.
// Comparable across strategies because the sample points are identical.
// ---------------------------------------------------------------------------

struct ReproductionMetrics {
  double value = 0.0;
  double gradient = 0.0;
};

inline ReproductionMetrics reproduction_metrics(
    const BasisBundle& bundle, const std::vector<Polygon>& elements,
    int lattice_n = 13) {
  if (elements.empty())
    throw ValidationError("reproduction metrics need at least one element");
  ReproductionMetrics out;
  for (const Polygon& e : elements) {
    const ElementContext ctx = element_context(bundle, e);
    const ReferenceMap map = reference_map(e, 0);
    const Polygon norm = normalized(e, map);
    const QuadratureRule rule = polygon_sample_points(norm, lattice_n);
    const int n = e.n();
    double value_misfit = 0.0, grad_misfit = 0.0, total = 0.0;
    for (std::size_t p = 0; p < rule.size(); ++p) {
      const Vec2 z = rule.points[p];
      const BasisEval ev =
          eval_basis(ctx, map.to_phys(z), JetOrder::with_gradient);
      Vec2 value_rec = Vec2::Zero();
      Mat2 grad_rec = Mat2::Zero();
      for (int j = 0; j < n; ++j) {
        const Vec2 vj = norm.vertex(j);
        value_rec += ev.phi[j] * vj;
        // Physical gradient pulled back to the normalized frame.
        const Vec2 qn = (map.rot * ev.q.col(j)) / map.scale;
        grad_rec += qn * vj.transpose();
      }
      const double w = rule.weights[p];
      total += w;
      value_misfit += w * (value_rec - z).squaredNorm();
      grad_misfit += w * (grad_rec - Mat2::Identity()).squaredNorm();
    }
    out.value += value_misfit / total;
    out.gradient += grad_misfit / total;
  }
  out.value /= static_cast<double>(elements.size());
  out.gradient /= static_cast<double>(elements.size());
  return out;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

// Rejection-sampled random quadrilaterals of the requested convexity,
// returned in their frame-0 normalization. Deterministic per seed.
inline std::vector<Polygon> dataset_random_quads(int count, bool convex,
                                                 std::uint64_t seed) {
  if (count < 0) throw ValidationError("negative dataset size");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::uniform_real_distribution<double> radius(0.45, 1.0);
  std::uniform_real_distribution<double> pulled(0.08, 0.30);
  std::vector<Polygon> out;
  out.reserve(static_cast<std::size_t>(count));
  long attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > 200000L * (count + 1))
      throw GenerationError("quad sampler failed to converge");
    std::array<double, 4> th{angle(rng), angle(rng), angle(rng), angle(rng)};
    std::sort(th.begin(), th.end());
    double min_gap = th[0] + 2.0 * M_PI - th[3];
    for (int i = 1; i < 4; ++i) min_gap = std::min(min_gap, th[i] - th[i - 1]);
    std::array<double, 4> r{radius(rng), radius(rng), radius(rng),
                            radius(rng)};
    const int pulled_vertex = static_cast<int>(rng() % 4);
    if (!convex) r[static_cast<std::size_t>(pulled_vertex)] = pulled(rng);
    if (min_gap < 0.35) continue;
    std::vector<Vec2> verts;
    verts.reserve(4);
    for (int i = 0; i < 4; ++i)
      verts.emplace_back(r[static_cast<std::size_t>(i)] * std::cos(th[i]),
                         r[static_cast<std::size_t>(i)] * std::sin(th[i]));
    try {
      const Polygon p = Polygon::make(std::move(verts));
      if (!(p.cls() == PolygonClass{4, convex})) continue;
      double min_edge = p.edge_length(0);
      double max_angle = p.interior_angle(0);
      for (int i = 1; i < 4; ++i) {
        min_edge = std::min(min_edge, p.edge_length(i));
        max_angle = std::max(max_angle, p.interior_angle(i));
      }
      if (min_edge <= 0.05 * p.diameter()) continue;
      // Keep a safety margin to the straight-angle classification boundary.
      if (convex && max_angle > M_PI - 0.1) continue;
      if (!convex && max_angle < M_PI + 0.15) continue;
      out.push_back(normalized(p, 0));
    } catch (const Error&) {
      continue;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainProtocol {
  int adam_epochs = 2000;
  int qn_epochs = 10000;
  std::uint64_t seed = 0;
  int lattice_n = 10;        // interior sampling density (b/p)
  int edge_points = 50;      // boundary sampling (h)
  int harmonic_degree = 20;  // expansion degree (h)
  int threads = 0;           // 0: NAVEM_LAB_THREADS or 1
};

struct TrainHistoryEntry {
  int epoch = 0;
  double loss = 0.0;
  double wall_s = 0.0;
};

struct TrainResult {
  BasisBundle bundle;
  std::vector<TrainHistoryEntry> history;           // primary (value) net
  std::vector<TrainHistoryEntry> gradient_history;  // h only: gradient net
  double initial_loss = 0.0, final_loss = 0.0;
  double initial_gradient_loss = 0.0, final_gradient_loss = 0.0;
  int qn_iterations = 0, qn_gradient_iterations = 0;
};

namespace detail {

inline std::vector<int> compose_dims(int in, const std::vector<int>& hidden,
                                     int out) {
  std::vector<int> dims;
  dims.reserve(hidden.size() + 2);
  dims.push_back(in);
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

struct PhaseStats {
  double initial_loss = 0.0, final_loss = 0.0;
  int qn_iterations = 0;
};

// Both training phases over one network: Adam with the decaying schedule,
// then the quasi-Newton loop. History entries carry wall-clock seconds.
inline PhaseStats run_phases(Mlp& net, const LossFn& fn,
                             const TrainProtocol& proto,
                             std::vector<TrainHistoryEntry>& history) {
  PhaseStats stats;
  VecX w = net.flat();
  VecX g(w.size());
  const auto t0 = std::chrono::steady_clock::now();
  const auto wall = [&t0] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t0)
        .count();
  };
  stats.initial_loss = fn(w, g);
  AdamState adam;
  for (int e = 0; e < proto.adam_epochs; ++e) {
    const double loss = fn(w, g);
    history.push_back({e, loss, wall()});
    adam_step(adam, w, g, lr_schedule(e, proto.adam_epochs));
  }
  const QuasiNewtonResult qn = quasi_newton_run(
      w, fn, proto.qn_epochs, 1e-10, 20, [&](int iter, double loss) {
        history.push_back({proto.adam_epochs + iter, loss, wall()});
      });
  net.set_flat(w);
  stats.final_loss = qn.final_loss;
  stats.qn_iterations = qn.iterations;
  return stats;
}

}  // namespace detail

// Trains one polygon class with the requested strategy. The h strategy
// trains its value network first and warm-starts the gradient network's
// hidden layers from it (the output layer, whose width differs by one, is
// freshly initialized). Deterministic per protocol seed.
inline TrainResult train_strategy(Strategy strategy,
                                  const std::vector<Polygon>& dataset,
                                  const std::vector<int>& hidden,
                                  const TrainProtocol& proto) {
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  const PolygonClass cls = dataset.front().cls();
  for (const Polygon& p : dataset)
    if (!(p.cls() == cls))
      throw ValidationError("training dataset mixes polygon classes");
  if (cls.n_vertices == 3)
    throw ValidationError(
        "3-vertex elements use the exact hat basis; nothing to train");
  if (hidden.empty())
    throw ValidationError("at least one hidden layer is required");
  const int threads = resolve_thread_count(proto.threads);
  const std::string key = to_string(cls);

  TrainResult res;
  res.bundle.strategy = strategy;

  if (strategy == Strategy::h) {
    HarmonicSpace space{proto.harmonic_degree, fit_phi()};
    res.bundle.harmonic_degree = proto.harmonic_degree;
    res.bundle.phi = space.phi;
    const auto cache = std::make_shared<detail::HLossCache>(
        detail::build_h_cache(space, dataset, proto.edge_points));

    Mlp vnet = init_glorot(
        detail::compose_dims(h_input_dim(cls.n_vertices), hidden, space.dim()),
        proto.seed);
    vnet.strategy = strategy_metadata_name(strategy);
    vnet.cls = cls;
    const auto vscratch = std::make_shared<Mlp>(vnet);
    const LossFn vfn = [vscratch, cache](const VecX& w, VecX& g) {
      vscratch->set_flat(w);
      return detail::h_value_loss(*vscratch, *cache, &g);
    };
    const detail::PhaseStats vstats =
        detail::run_phases(vnet, vfn, proto, res.history);
    res.initial_loss = vstats.initial_loss;
    res.final_loss = vstats.final_loss;
    res.qn_iterations = vstats.qn_iterations;

    Mlp gnet = init_glorot(detail::compose_dims(h_input_dim(cls.n_vertices),
                                                hidden, space.dim() - 1),
                           proto.seed + 1);
    gnet.strategy = strategy_metadata_name(strategy);
    gnet.cls = cls;
    for (int l = 0; l + 1 < gnet.n_layers(); ++l) {
      gnet.weights[static_cast<std::size_t>(l)] =
          vnet.weights[static_cast<std::size_t>(l)];
      gnet.biases[static_cast<std::size_t>(l)] =
          vnet.biases[static_cast<std::size_t>(l)];
    }
    const auto gscratch = std::make_shared<Mlp>(gnet);
    const LossFn gfn = [gscratch, cache](const VecX& w, VecX& g) {
      gscratch->set_flat(w);
      return detail::h_gradient_loss(*gscratch, *cache, &g);
    };
    const detail::PhaseStats gstats =
        detail::run_phases(gnet, gfn, proto, res.gradient_history);
    res.initial_gradient_loss = gstats.initial_loss;
    res.final_gradient_loss = gstats.final_loss;
    res.qn_gradient_iterations = gstats.qn_iterations;

    res.bundle.value_nets.emplace(key, std::move(vnet));
    res.bundle.gradient_nets.emplace(key, std::move(gnet));
    return res;
  }

  Mlp net = init_glorot(
      detail::compose_dims(bp_input_dim(cls.n_vertices), hidden, 1),
      proto.seed);
  net.strategy = strategy_metadata_name(strategy);
  net.cls = cls;
  const auto scratch = std::make_shared<Mlp>(net);
  LossFn fn;
  if (strategy == Strategy::b) {
    const auto cache = std::make_shared<detail::BLossCache>(
        detail::build_b_cache(dataset, proto.lattice_n));
    fn = [scratch, cache, threads](const VecX& w, VecX& g) {
      scratch->set_flat(w);
      return detail::b_loss(*scratch, *cache, &g, threads);
    };
  } else {
    const auto cache = std::make_shared<detail::PLossCache>(
        detail::build_p_cache(dataset, proto.lattice_n));
    fn = [scratch, cache, threads](const VecX& w, VecX& g) {
      scratch->set_flat(w);
      return detail::p_loss(*scratch, *cache, &g, threads);
    };
  }
  const detail::PhaseStats stats =
      detail::run_phases(net, fn, proto, res.history);
  res.initial_loss = stats.initial_loss;
  res.final_loss = stats.final_loss;
  res.qn_iterations = stats.qn_iterations;
  res.bundle.value_nets.emplace(key, std::move(net));
  return res;
}

// ---------------------------------------------------------------------------
// Bundle serialization. Directory layout: one JSON file per class named
// "{strategy}_{nv}_{convex|concave}.json"; h bundles additionally store the
// shared corner model as "phi_model.json" and keep both networks of a class
// in one file (gradient-net arrays carry a "_grad" key suffix).
// ---------------------------------------------------------------------------

namespace detail {

inline std::string class_file_name(Strategy s, const PolygonClass& cls) {
  return strategy_tag(s) + "_" + std::to_string(cls.n_vertices) + "_" +
         (cls.convex ? "convex" : "concave") + ".json";
}

inline std::string h_class_to_json(const Mlp& value_net, const Mlp& grad_net,
                                   int harmonic_degree) {
  std::ostringstream out;
  write_json_net_header(out, value_net);
  out << "  \"harmonic_degree\": " << harmonic_degree << ",\n";
  write_json_net_arrays(out, value_net, "");
  out << ",\n";
  write_json_net_arrays(out, grad_net, "_grad");
  out << "\n}\n";
  return out.str();
}

inline void h_class_from_json(const std::string& text, Mlp& value_net,
                              Mlp& grad_net, int& harmonic_degree) {
  const nlohmann::json doc = parse_model_document(text);
  try {
    value_net = parse_json_net_arrays(doc, "");
    read_model_metadata(doc, value_net);
    grad_net = parse_json_net_arrays(doc, "_grad");
    grad_net.strategy = value_net.strategy;
    grad_net.cls = value_net.cls;
    grad_net.encoding = value_net.encoding;
    harmonic_degree = doc.at("harmonic_degree").get<int>();
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("model JSON has wrong shape: ") +
                     err.what());
  }
}

}  // namespace detail

inline void save_bundle(const BasisBundle& bundle, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (bundle.value_nets.empty())
    throw ValidationError("refusing to save an empty bundle");
  if (bundle.strategy == Strategy::h)
    save_phi(bundle.phi, (fs::path(dir) / "phi_model.json").string());
  for (const auto& [key, net] : bundle.value_nets) {
    const fs::path path =
        fs::path(dir) / detail::class_file_name(bundle.strategy, net.cls);
    if (bundle.strategy == Strategy::h) {
      const auto git = bundle.gradient_nets.find(key);
      if (git == bundle.gradient_nets.end())
        throw MissingModel("bundle lacks the gradient net for class " + key);
      std::ofstream out(path, std::ios::binary);
      if (!out)
        throw ParseError("cannot open model file for writing: " +
                         path.string());
      out << detail::h_class_to_json(net, git->second,
                                     bundle.harmonic_degree);
      if (!out) throw ParseError("failed writing model file: " + path.string());
    } else {
      save_model(net, path.string());
    }
  }
}

inline BasisBundle load_bundle(const std::string& dir, Strategy strategy) {
  namespace fs = std::filesystem;
  BasisBundle bundle;
  bundle.strategy = strategy;
  if (!fs::is_directory(dir))
    throw MissingModel("model directory not found: " + dir);
  if (strategy == Strategy::h) {
    const fs::path phi_path = fs::path(dir) / "phi_model.json";
    if (!fs::exists(phi_path))
      throw MissingModel("missing phi_model.json in " + dir);
    bundle.phi = load_phi(phi_path.string());
  }
  const std::string prefix = strategy_tag(strategy) + "_";
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind(prefix, 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  int degree = -1;
  for (const fs::path& path : files) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open model file: " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    Mlp value_net;
    if (strategy == Strategy::h) {
      Mlp grad_net;
      int file_degree = 0;
      detail::h_class_from_json(text.str(), value_net, grad_net, file_degree);
      if (degree >= 0 && degree != file_degree)
        throw ParseError("bundle mixes harmonic degrees in " + dir);
      degree = file_degree;
      bundle.gradient_nets.emplace(to_string(grad_net.cls),
                                   std::move(grad_net));
    } else {
      value_net = mlp_from_json(text.str());
    }
    if (value_net.strategy != strategy_metadata_name(strategy))
      throw ParseError("model file " + path.string() +
                       " carries strategy tag '" + value_net.strategy +
                       "', expected '" + strategy_metadata_name(strategy) +
                       "'");
    if (path.filename().string() !=
        detail::class_file_name(strategy, value_net.cls))
      throw ParseError("model file name " + path.filename().string() +
                       " does not match its class metadata");
    bundle.value_nets.emplace(to_string(value_net.cls), std::move(value_net));
  }
  if (degree >= 0) bundle.harmonic_degree = degree;
  if (bundle.value_nets.empty())
    throw MissingModel("no '" + strategy_tag(strategy) + "' models in " + dir);
  return bundle;
}

}  // namespace navem
