#pragma once
// Global Galerkin assembly and solution on polygonal meshes, generic over
// the basis backend: the closed-form network bases (h/b/p), the exact P1
// triangle path, and the projected VEM baseline. Covers linear
// diffusion-advection-reaction problems, a nonlinear diffusion problem
// solved with Newton's method, manufactured benchmark data, and the error
// norms of the discrete solutions.

#include <Eigen/Sparse>

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "navem/basis.hpp"
#include "navem/vemref.hpp"

namespace navem {

// ---------------------------------------------------------------------------
// Methods: which basis backend drives the assembly.
// ---------------------------------------------------------------------------
enum class Method { hnavem, bnavem, pnavem, vem, fem };

inline std::string method_tag(Method m) {
  switch (m) {
    case Method::hnavem: return "h";
    case Method::bnavem: return "b";
    case Method::pnavem: return "p";
    case Method::vem: return "vem";
    case Method::fem: return "fem";
  }
  throw ValidationError("unknown method");
}

inline Method method_from_tag(const std::string& tag) {
  if (tag == "h") return Method::hnavem;
  if (tag == "b") return Method::bnavem;
  if (tag == "p") return Method::pnavem;
  if (tag == "vem") return Method::vem;
  if (tag == "fem") return Method::fem;
  throw ValidationError("unknown method tag '" + tag +
                        "' (expected h|b|p|vem|fem)");
}

inline bool method_is_neural(Method m) {
  return m == Method::hnavem || m == Method::bnavem || m == Method::pnavem;
}

inline Strategy method_strategy(Method m) {
  switch (m) {
    case Method::hnavem: return Strategy::h;
    case Method::bnavem: return Strategy::b;
    case Method::pnavem: return Strategy::p;
    default:
      throw ValidationError("method '" + method_tag(m) +
                            "' has no network strategy");
  }
}

// ---------------------------------------------------------------------------
// Problem descriptions. Empty callables mean: identity diffusion, zero
// advection / reaction / source / boundary data, unknown exact solution.
// ---------------------------------------------------------------------------
struct ProblemSpec {
  std::function<Mat2(const Vec2&)> diffusion;
  std::function<Vec2(const Vec2&)> advection;
  std::function<double(const Vec2&)> reaction;
  std::function<double(const Vec2&)> source;
  std::function<double(const Vec2&)> dirichlet;
  std::function<Jet2(const Vec2&)> exact;  // for error norms only
};

inline ProblemSpec poisson_problem(std::function<double(const Vec2&)> source,
                                   std::function<double(const Vec2&)> dirichlet,
                                   std::function<Jet2(const Vec2&)> exact = {}) {
  ProblemSpec p;
  p.source = std::move(source);
  p.dirichlet = std::move(dirichlet);
  p.exact = std::move(exact);
  return p;
}

// Classic product-of-sines Poisson problem on the unit square with a
// closed-form solution: -lap(u) = 2 pi^2 sin(pi x1) sin(pi x2), u = 0 on
// the boundary.
inline Jet2 sine_exact(const Vec2& x) {
  const Jet2 x1 = Jet2::affine(x.x(), Vec2(1.0, 0.0));
  const Jet2 x2 = Jet2::affine(x.y(), Vec2(0.0, 1.0));
  return sin(M_PI * x1) * sin(M_PI * x2);
}

inline ProblemSpec sine_poisson() {
  return poisson_problem(
      [](const Vec2& x) { return 2.0 * M_PI * M_PI * sine_exact(x).v; },
      [](const Vec2& x) { return sine_exact(x).v; }, sine_exact);
}

// Smooth oscillatory field driving the linear benchmark; every derivative
// up to second order is carried analytically by the jet.
inline Jet2 dar_exact(const Vec2& x) {
  const Jet2 x1 = Jet2::affine(x.x(), Vec2(1.0, 0.0));
  const Jet2 x2 = Jet2::affine(x.y(), Vec2(0.0, 1.0));
  const Jet2 rho = sq(x1 - 0.5) + sq(x2 - 0.5);
  return sin(M_PI * M_PI * rho) * (x1 - 0.5) *
         (1.0 + sin(M_PI * x1) * sin(M_PI * x2));
}

inline Mat2 dar_diffusion(const Vec2& x) {
  Mat2 d;
  d << 1.0 + x.y() * x.y(), -x.x() * x.y(),
      -x.x() * x.y(), 1.0 + x.x() * x.x();
  return d;
}

inline Vec2 dar_advection(const Vec2& x) { return Vec2(x.x(), -x.y()); }

inline double dar_reaction(const Vec2& x) { return x.x() * x.y(); }

// Full diffusion-advection-reaction benchmark on the unit square, with the
// source manufactured from the exact solution:
//   div(D grad u) = D : H(u) + (div D) . grad u,   div D = (-x1, -x2).
inline ProblemSpec dar_benchmark() {
  ProblemSpec p;
  p.diffusion = dar_diffusion;
  p.advection = dar_advection;
  p.reaction = dar_reaction;
  p.exact = dar_exact;
  p.dirichlet = [](const Vec2& x) { return dar_exact(x).v; };
  p.source = [](const Vec2& x) {
    const Jet2 u = dar_exact(x);
    const Mat2 d = dar_diffusion(x);
    const double div_flux = (d.array() * u.h.array()).sum() - x.dot(u.g);
    return -div_flux + dar_advection(x).dot(u.g) + dar_reaction(x) * u.v;
  };
  return p;
}

// Nonlinear diffusion problem -div(D(u) grad u) = f with D(u) = 1/(l + u^2).
struct NonlinearDiffusion {
  double lambda = 1.0;
  std::function<double(const Vec2&)> source;
  std::function<double(const Vec2&)> dirichlet;
  std::function<Jet2(const Vec2&)> exact;

  double diffusion(double u) const { return 1.0 / (lambda + u * u); }
  double diffusion_du(double u) const {
    const double den = lambda + u * u;
    return -2.0 * u / (den * den);
  }
};

// Concentric-ring exact field for the nonlinear benchmark.
inline Jet2 ring_exact(const Vec2& x) {
  const Jet2 x1 = Jet2::affine(x.x(), Vec2(1.0, 0.0));
  const Jet2 x2 = Jet2::affine(x.y(), Vec2(0.0, 1.0));
  const Jet2 s = sin(3.0 * M_PI * (sq(x1 - 0.5) + sq(x2 - 0.5)));
  return s * s * s / 8.0;
}

inline NonlinearDiffusion ring_benchmark(double lambda) {
  if (!(lambda > 0.0))
    throw ValidationError("nonlinear diffusion needs lambda > 0");
  NonlinearDiffusion p;
  p.lambda = lambda;
  p.exact = ring_exact;
  p.dirichlet = [](const Vec2& x) { return ring_exact(x).v; };
  p.source = [lambda](const Vec2& x) {
    const Jet2 u = ring_exact(x);
    const double den = lambda + u.v * u.v;
    const double dp = -2.0 * u.v / (den * den);
    return -(dp * u.g.squaredNorm() + u.laplacian() / den);
  };
  return p;
}

// ---------------------------------------------------------------------------
// Linear system with eliminated Dirichlet values.
// ---------------------------------------------------------------------------
struct LinearSystem {
  Eigen::SparseMatrix<double> matrix;  // free x free
  VecX rhs;                            // free
  VecX lift;  // per-vertex boundary values, zero at free vertices
  DofMap dofs;
};

namespace detail {

// Uniform per-cell basis view: closed-form values/gradients for the network
// and triangle paths, projected polynomials (plus stabilizer) for VEM.
struct CellBasis {
  int n = 0;
  bool vem = false;
  ElementProjector proj;              // vem only
  std::optional<ElementContext> ctx;  // closed-form paths

  void eval(const Vec2& x, VecX& phi, MatX& q) const {
    if (vem) {
      phi = proj.projected_values(x);
      q = proj.projected_gradients();
      return;
    }
    BasisEval ev = eval_basis(*ctx, x, JetOrder::with_gradient);
    phi = std::move(ev.phi);
    q = std::move(ev.q);
  }
};

inline CellBasis cell_basis(Method method, const BasisBundle* bundle,
                            const Polygon& e) {
  CellBasis cb;
  cb.n = e.n();
  if (method == Method::vem) {
    cb.vem = true;
    cb.proj = build_projector(e);
    return cb;
  }
  if (method == Method::fem) {
    if (e.n() != 3)
      throw ValidationError(
          "the triangle finite element path needs a pure-triangle mesh");
    static const BasisBundle hat_only{};  // triangles bypass the networks
    cb.ctx.emplace(element_context(hat_only, e));
    return cb;
  }
  if (bundle == nullptr)
    throw MissingModel("method '" + method_tag(method) +
                       "' needs a trained model bundle");
  if (bundle->strategy != method_strategy(method))
    throw ValidationError("bundle strategy '" +
                          strategy_tag(bundle->strategy) +
                          "' does not match method '" + method_tag(method) +
                          "'");
  cb.ctx.emplace(element_context(*bundle, e));
  return cb;
}

struct LocalWork {
  MatX a;    // n x n, row = test function
  VecX rhs;  // n
};

inline LocalWork local_linear_forms(const CellBasis& cb, const Polygon& e,
                                    const ProblemSpec& prob, int quad_order) {
  if (cb.vem) {
    const LocalForms forms =
        vem_local_forms(e, cb.proj, prob.diffusion, prob.advection,
                        prob.reaction, prob.source, quad_order);
    return {forms.a, forms.rhs};
  }
  const int n = cb.n;
  LocalWork w{MatX::Zero(n, n), VecX::Zero(n)};
  const QuadratureRule rule = polygon_gauss_rule(e, quad_order);
  VecX phi;
  MatX q;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Vec2& x = rule.points[k];
    const double wq = rule.weights[k];
    cb.eval(x, phi, q);
    const Mat2 dq = prob.diffusion ? prob.diffusion(x) : Mat2::Identity();
    w.a.noalias() += wq * (q.transpose() * dq * q);
    if (prob.advection)
      w.a.noalias() += wq * phi * (prob.advection(x).transpose() * q);
    if (prob.reaction)
      w.a.noalias() += (wq * prob.reaction(x)) * phi * phi.transpose();
    if (prob.source) w.rhs.noalias() += (wq * prob.source(x)) * phi;
  }
  return w;
}

// Residual and Jacobian of the nonlinear diffusion form at the local state.
struct NonlinearWork {
  MatX jac;
  VecX res;
};

inline NonlinearWork local_nonlinear_forms(const CellBasis& cb,
                                           const Polygon& e,
                                           const NonlinearDiffusion& prob,
                                           const VecX& u_loc, int quad_order) {
  const int n = cb.n;
  NonlinearWork w{MatX::Zero(n, n), VecX::Zero(n)};
  const QuadratureRule rule = polygon_gauss_rule(e, quad_order);
  VecX phi;
  MatX q;
  double stab_scale = 0.0;
  VecX stab_scale_du = VecX::Zero(n);
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const Vec2& x = rule.points[k];
    const double wq = rule.weights[k];
    cb.eval(x, phi, q);
    const double uh = phi.dot(u_loc);
    const Vec2 guh = q * u_loc;
    const double d = prob.diffusion(uh);
    const double dp = prob.diffusion_du(uh);
    const double f = prob.source ? prob.source(x) : 0.0;
    w.res.noalias() += wq * (q.transpose() * (d * guh)) - (wq * f) * phi;
    w.jac.noalias() += (wq * d) * (q.transpose() * q);
    w.jac.noalias() += (wq * dp) * (q.transpose() * guh) * phi.transpose();
    if (cb.vem) {
      stab_scale += wq * d;
      stab_scale_du.noalias() += (wq * dp) * phi;
    }
  }
  if (cb.vem) {
    stab_scale /= cb.proj.area;
    stab_scale_du /= cb.proj.area;
    const VecX su = cb.proj.s * u_loc;
    w.res.noalias() += stab_scale * su;
    w.jac.noalias() += stab_scale * cb.proj.s + su * stab_scale_du.transpose();
  }
  return w;
}

inline void scatter_cell(const std::vector<int>& cell, const MatX& a,
                         const VecX& rhs_loc, const DofMap& dofs,
                         const VecX& lift,
                         std::vector<Eigen::Triplet<double>>& triplets,
                         VecX& rhs) {
  const int n = static_cast<int>(cell.size());
  for (int j = 0; j < n; ++j) {
    const int fj = dofs.global_to_free[static_cast<std::size_t>(cell[j])];
    if (fj < 0) continue;
    rhs[fj] += rhs_loc[j];
    for (int i = 0; i < n; ++i) {
      const int gi = cell[static_cast<std::size_t>(i)];
      const int fi = dofs.global_to_free[static_cast<std::size_t>(gi)];
      if (fi >= 0)
        triplets.emplace_back(fj, fi, a(j, i));
      else
        rhs[fj] -= a(j, i) * lift[gi];
    }
  }
}

// Chunked element loop with per-chunk buffers merged in chunk order, so the
// assembled system is bit-identical for any thread count.
template <class CellFn>
inline void assemble_cells(const Mesh& mesh, int threads, int n_free,
                           Eigen::SparseMatrix<double>& matrix, VecX& rhs,
                           const CellFn& cell_fn) {
  const std::size_t n_cells = mesh.cells.size();
  constexpr std::size_t kMinChunk = 4;
  const std::size_t k = chunk_count(n_cells, kMinChunk);
  std::vector<std::vector<Eigen::Triplet<double>>> triplets(k);
  std::vector<VecX> partial(k, VecX::Zero(n_free));
  std::vector<std::exception_ptr> errors(k);
  for_chunks(
      n_cells, resolve_thread_count(threads),
      [&](std::size_t c, std::size_t b, std::size_t e) {
        try {
          for (std::size_t idx = b; idx < e; ++idx)
            cell_fn(idx, triplets[c], partial[c]);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      },
      kMinChunk);
  for (const std::exception_ptr& err : errors)
    if (err) std::rethrow_exception(err);

  std::size_t total = 0;
  for (const auto& t : triplets) total += t.size();
  std::vector<Eigen::Triplet<double>> all;
  all.reserve(total);
  for (const auto& t : triplets) all.insert(all.end(), t.begin(), t.end());
  matrix.resize(n_free, n_free);
  matrix.setFromTriplets(all.begin(), all.end());
  rhs = VecX::Zero(n_free);
  for (const VecX& p : partial) rhs += p;
}

// Direct factorization with a conjugate-gradient fallback for symmetric
// systems; throws SingularMatrix when neither reaches a trustworthy result.
inline VecX solve_free(const Eigen::SparseMatrix<double>& matrix,
                       const VecX& rhs) {
  if (matrix.rows() == 0) return VecX();
  Eigen::SparseMatrix<double> mat = matrix;
  mat.makeCompressed();
  const double scale = std::max(rhs.norm(), 1e-300);

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(mat);
  if (lu.info() == Eigen::Success) {
    const VecX x = lu.solve(rhs);
    if (lu.info() == Eigen::Success && x.allFinite() &&
        (mat * x - rhs).norm() <= 1e-8 * scale)
      return x;
  }

  const Eigen::SparseMatrix<double> asym =
      mat - Eigen::SparseMatrix<double>(mat.transpose());
  if (asym.norm() <= 1e-12 * mat.norm()) {
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>,
                             Eigen::Lower | Eigen::Upper>
        cg;
    cg.setTolerance(1e-13);
    cg.setMaxIterations(20 * mat.rows());
    cg.compute(mat);
    const VecX x = cg.solve(rhs);
    if (cg.info() == Eigen::Success && x.allFinite() &&
        (mat * x - rhs).norm() <= 1e-12 * scale)
      return x;
  }
  throw SingularMatrix("linear solve failed: factorization unsuccessful and "
                       "no symmetric fallback converged");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Assembly and linear solve.
// ---------------------------------------------------------------------------
inline LinearSystem assemble(const Mesh& mesh, Method method,
                             const BasisBundle* bundle,
                             const ProblemSpec& prob, int quad_order = 4,
                             int threads = 0) {
  LinearSystem sys;
  sys.dofs = build_dof_map(mesh);
  sys.lift = VecX::Zero(mesh.n_vertices());
  if (prob.dirichlet)
    for (int v = 0; v < mesh.n_vertices(); ++v)
      if (mesh.dirichlet[static_cast<std::size_t>(v)])
        sys.lift[v] = prob.dirichlet(mesh.vertices[static_cast<std::size_t>(v)]);

  detail::assemble_cells(
      mesh, threads, sys.dofs.n_free, sys.matrix, sys.rhs,
      [&](std::size_t idx, std::vector<Eigen::Triplet<double>>& triplets,
          VecX& rhs) {
        const Polygon& poly = mesh.polygons[idx];
        const detail::CellBasis cb = detail::cell_basis(method, bundle, poly);
        const detail::LocalWork w =
            detail::local_linear_forms(cb, poly, prob, quad_order);
        detail::scatter_cell(mesh.cells[idx], w.a, w.rhs, sys.dofs, sys.lift,
                             triplets, rhs);
      });
  return sys;
}

// Full vertex-value field: Dirichlet lifts plus the solved free values.
inline VecX solve_linear(const LinearSystem& sys) {
  const VecX free_vals = detail::solve_free(sys.matrix, sys.rhs);
  VecX full = sys.lift;
  for (int k = 0; k < sys.dofs.n_free; ++k)
    full[sys.dofs.free_to_global[static_cast<std::size_t>(k)]] = free_vals[k];
  return full;
}

// ---------------------------------------------------------------------------
// Newton iteration for the nonlinear diffusion problem, from the zero
// initial guess. Stops when BOTH the residual and the update are small:
//   ||r_m|| <= alpha_rf * ||r_0|| + alpha_af   and   ||delta_m|| <= alpha_ad.
// ---------------------------------------------------------------------------
struct NewtonConfig {
  double alpha_rf = 1e-8;
  double alpha_af = 1e-12;
  double alpha_ad = 1e-10;
  int max_iterations = 50;
};

struct NewtonResult {
  VecX values;  // full vertex field
  int iterations = 0;
  std::vector<double> residual_history;  // ||r||, initial state included
  std::vector<double> iteration_seconds;
  double assemble_seconds = 0.0;
  double solve_seconds = 0.0;
};

inline NewtonResult newton_solve(const Mesh& mesh, Method method,
                                 const BasisBundle* bundle,
                                 const NonlinearDiffusion& prob,
                                 const NewtonConfig& cfg = {},
                                 int quad_order = 4, int threads = 0) {
  if (!(cfg.alpha_rf > 0.0) || !(cfg.alpha_af > 0.0) || !(cfg.alpha_ad > 0.0))
    throw ValidationError("Newton tolerances must be positive");
  if (cfg.max_iterations < 1)
    throw ValidationError("Newton needs at least one iteration");

  const DofMap dofs = build_dof_map(mesh);
  VecX u = VecX::Zero(mesh.n_vertices());
  if (prob.dirichlet)
    for (int v = 0; v < mesh.n_vertices(); ++v)
      if (mesh.dirichlet[static_cast<std::size_t>(v)])
        u[v] = prob.dirichlet(mesh.vertices[static_cast<std::size_t>(v)]);

  NewtonResult result;
  const VecX no_lift = VecX::Zero(mesh.n_vertices());
  Eigen::SparseMatrix<double> jac;
  VecX res;
  const auto clock = [] { return std::chrono::steady_clock::now(); };
  const auto seconds = [](auto a, auto b) {
    return std::chrono::duration<double>(b - a).count();
  };

  const auto assemble_state = [&] {
    const auto t0 = clock();
    detail::assemble_cells(
        mesh, threads, dofs.n_free, jac, res,
        [&](std::size_t idx, std::vector<Eigen::Triplet<double>>& triplets,
            VecX& rhs) {
          const Polygon& poly = mesh.polygons[idx];
          const auto& cell = mesh.cells[idx];
          const detail::CellBasis cb =
              detail::cell_basis(method, bundle, poly);
          VecX u_loc(poly.n());
          for (int i = 0; i < poly.n(); ++i)
            u_loc[i] = u[cell[static_cast<std::size_t>(i)]];
          const detail::NonlinearWork w =
              detail::local_nonlinear_forms(cb, poly, prob, u_loc, quad_order);
          // the Jacobian sees only free columns (updates vanish on the
          // boundary), so the zero lift drops them
          detail::scatter_cell(cell, w.jac, -w.res, dofs, no_lift, triplets,
                               rhs);
        });
    res = -res;  // scatter accumulated -res as a right-hand side
    result.assemble_seconds += seconds(t0, clock());
  };

  assemble_state();
  const double initial_residual = res.norm();
  result.residual_history.push_back(initial_residual);
  const double residual_tol = cfg.alpha_rf * initial_residual + cfg.alpha_af;

  for (int m = 1; m <= cfg.max_iterations; ++m) {
    const auto t0 = clock();
    const VecX delta = detail::solve_free(jac, -res);
    result.solve_seconds += seconds(t0, clock());
    for (int k = 0; k < dofs.n_free; ++k)
      u[dofs.free_to_global[static_cast<std::size_t>(k)]] += delta[k];
    assemble_state();
    result.iterations = m;
    result.residual_history.push_back(res.norm());
    result.iteration_seconds.push_back(seconds(t0, clock()));
    if (res.norm() <= residual_tol && delta.norm() <= cfg.alpha_ad) {
      result.values = u;
      return result;
    }
  }
  throw NewtonDiverged("Newton did not meet both stop criteria within " +
                       std::to_string(cfg.max_iterations) + " iterations");
}

// ---------------------------------------------------------------------------
// Error norms of closed-form discrete solutions (network bases and the
// triangle path; use vem_errors for the projected VEM baseline).
// ---------------------------------------------------------------------------
inline ErrorPair neural_errors(const Mesh& mesh, const BasisBundle& bundle,
                               const VecX& dofs,
                               const std::function<double(const Vec2&)>& exact_u,
                               const std::function<Vec2(const Vec2&)>& exact_grad,
                               int quad_order = 6) {
  if (dofs.size() != mesh.n_vertices())
    throw ValidationError("dof vector length does not match the mesh");
  double err0 = 0.0, errg = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Polygon& e = mesh.polygons[static_cast<std::size_t>(c)];
    const auto& cell = mesh.cells[static_cast<std::size_t>(c)];
    const ElementContext ctx = element_context(bundle, e);
    VecX u_loc(e.n());
    for (int i = 0; i < e.n(); ++i)
      u_loc[i] = dofs[cell[static_cast<std::size_t>(i)]];
    const QuadratureRule rule = polygon_gauss_rule(e, quad_order);
    for (std::size_t k = 0; k < rule.size(); ++k) {
      const Vec2& x = rule.points[k];
      const double w = rule.weights[k];
      const BasisEval ev = eval_basis(ctx, x, JetOrder::with_gradient);
      const double uh = ev.phi.dot(u_loc);
      const Vec2 guh = ev.q * u_loc;
      err0 += w * (exact_u(x) - uh) * (exact_u(x) - uh);
      errg += w * (exact_grad(x) - guh).squaredNorm();
    }
  }
  return {std::sqrt(err0), std::sqrt(errg)};
}

// ---------------------------------------------------------------------------
// One-shot runs producing result records (the rows of the results CSV).
// ---------------------------------------------------------------------------
struct SolveRecord {
  std::string mesh;
  double h = 0.0;
  int n_dof = 0;
  std::string method;
  double err0 = std::numeric_limits<double>::quiet_NaN();
  double errgrad = std::numeric_limits<double>::quiet_NaN();
  double assemble_s = 0.0;
  double solve_s = 0.0;
  int newton_iters = 0;
};

inline std::string solve_record_header() {
  return "mesh,h,n_dof,method,err0,errgrad,assemble_s,solve_s,newton_iters";
}

inline std::string solve_record_csv(const SolveRecord& r) {
  std::ostringstream out;
  out << r.mesh << ',' << fmt17(r.h) << ',' << r.n_dof << ',' << r.method
      << ',' << fmt17(r.err0) << ',' << fmt17(r.errgrad) << ','
      << fmt17(r.assemble_s) << ',' << fmt17(r.solve_s) << ','
      << r.newton_iters;
  return out.str();
}

namespace detail {

inline ErrorPair field_errors(const Mesh& mesh, Method method,
                              const BasisBundle* bundle, const VecX& field,
                              const std::function<Jet2(const Vec2&)>& exact,
                              int error_order) {
  const auto exact_u = [&exact](const Vec2& x) { return exact(x).v; };
  const auto exact_g = [&exact](const Vec2& x) { return Vec2(exact(x).g); };
  if (method == Method::vem)
    return vem_errors(mesh, field, exact_u, exact_g, error_order);
  static const BasisBundle hat_only{};
  const BasisBundle& b = method_is_neural(method) ? *bundle : hat_only;
  return neural_errors(mesh, b, field, exact_u, exact_g, error_order);
}

}  // namespace detail

inline SolveRecord run_linear(const std::string& mesh_name, const Mesh& mesh,
                              Method method, const BasisBundle* bundle,
                              const ProblemSpec& prob, int quad_order = 4,
                              int error_order = 6, int threads = 0,
                              VecX* field_out = nullptr) {
  SolveRecord rec;
  rec.mesh = mesh_name;
  rec.h = mesh.h;
  rec.method = method_tag(method);
  const auto t0 = std::chrono::steady_clock::now();
  const LinearSystem sys = assemble(mesh, method, bundle, prob, quad_order,
                                    threads);
  const auto t1 = std::chrono::steady_clock::now();
  const VecX field = solve_linear(sys);
  const auto t2 = std::chrono::steady_clock::now();
  rec.n_dof = sys.dofs.n_free;
  rec.assemble_s = std::chrono::duration<double>(t1 - t0).count();
  rec.solve_s = std::chrono::duration<double>(t2 - t1).count();
  if (prob.exact) {
    const ErrorPair errs = detail::field_errors(mesh, method, bundle, field,
                                                prob.exact, error_order);
    rec.err0 = errs.value;
    rec.errgrad = errs.gradient;
  }
  if (field_out) *field_out = field;
  return rec;
}

inline SolveRecord run_nonlinear(const std::string& mesh_name,
                                 const Mesh& mesh, Method method,
                                 const BasisBundle* bundle,
                                 const NonlinearDiffusion& prob,
                                 const NewtonConfig& cfg = {},
                                 int quad_order = 4, int error_order = 6,
                                 int threads = 0, VecX* field_out = nullptr,
                                 NewtonResult* newton_out = nullptr) {
  SolveRecord rec;
  rec.mesh = mesh_name;
  rec.h = mesh.h;
  rec.method = method_tag(method);
  rec.n_dof = build_dof_map(mesh).n_free;
  const NewtonResult newton =
      newton_solve(mesh, method, bundle, prob, cfg, quad_order, threads);
  rec.assemble_s = newton.assemble_seconds;
  rec.solve_s = newton.solve_seconds;
  rec.newton_iters = newton.iterations;
  if (prob.exact) {
    const ErrorPair errs = detail::field_errors(mesh, method, bundle,
                                                newton.values, prob.exact,
                                                error_order);
    rec.err0 = errs.value;
    rec.errgrad = errs.gradient;
  }
  if (field_out) *field_out = newton.values;
  if (newton_out) *newton_out = newton;
  return rec;
}

// Least-squares slope of log(err) against log(h); the convergence order.
inline double fitted_slope(const std::vector<double>& hs,
                           const std::vector<double>& errs) {
  if (hs.size() != errs.size() || hs.size() < 2)
    throw ValidationError("slope fit needs two or more matched samples");
  const auto n = static_cast<double>(hs.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    if (!(hs[i] > 0.0) || !(errs[i] > 0.0))
      throw ValidationError("slope fit needs positive samples");
    const double x = std::log(hs[i]);
    const double y = std::log(errs[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace navem
