#pragma once
// Lowest-order virtual element baseline on polygons: the energy projection
// onto linear polynomials, the dofi-dofi stabilization, local bilinear forms
// for diffusion-advection-reaction coefficients, and the projected error
// norms. On triangles the construction collapses to the exact P1 finite
// element (empty projection remainder, zero stabilization).

#include <cmath>
#include <functional>
#include <vector>

#include "navem/mesh.hpp"
#include "navem/quadrature.hpp"

namespace navem {

// Energy projector of one element onto span{1, (x1-c1)/h, (x2-c2)/h}.
struct ElementProjector {
  Vec2 centroid = Vec2::Zero();
  double diameter = 0.0;
  double area = 0.0;
  MatX d;        // n x 3, monomial values at the vertices
  MatX b;        // 3 x n, boundary functionals of the monomial gradients
  Mat3 g;        // b * d
  MatX pi_star;  // 3 x n, dof vector -> monomial coefficients
  MatX pi;       // n x n, dof form of the projection
  MatX s;        // n x n, (I - pi)^T (I - pi)

  // Scaled monomial values (1, m2, m3) at a physical point.
  Vec3 monomials(const Vec2& x) const {
    return Vec3(1.0, (x.x() - centroid.x()) / diameter,
                (x.y() - centroid.y()) / diameter);
  }
  // Values of the n projected basis polynomials at x.
  VecX projected_values(const Vec2& x) const {
    return pi_star.transpose() * monomials(x);
  }
  // Constant projected gradients, one column per basis function (2 x n).
  MatX projected_gradients() const { return pi_star.bottomRows(2) / diameter; }
};

inline ElementProjector build_projector(const Polygon& e) {
  const int n = e.n();
  ElementProjector proj;
  proj.centroid = e.centroid();
  proj.diameter = e.diameter();
  proj.area = e.area();

  proj.d.resize(n, 3);
  for (int i = 0; i < n; ++i)
    proj.d.row(i) = proj.monomials(e.vertex(i)).transpose();

  // B row 1: the mean-value functional fixing the projection's kernel.
  // Rows 2-3: exact trapezoid boundary integrals of the hat traces against
  // the (constant) outward normals, divided by the monomial scale.
  proj.b.resize(3, n);
  proj.b.row(0).setConstant(1.0 / n);
  for (int i = 0; i < n; ++i) {
    const Vec2 half_normals =
        0.5 * (e.edge_length(i - 1) * (-e.inward_normal(i - 1)) +
               e.edge_length(i) * (-e.inward_normal(i)));
    proj.b(1, i) = half_normals.x() / proj.diameter;
    proj.b(2, i) = half_normals.y() / proj.diameter;
  }

  proj.g = proj.b * proj.d;
  const Eigen::FullPivLU<Mat3> lu(proj.g);
  if (!lu.isInvertible())
    throw DegenerateGeometry("projector Gram matrix is singular");
  proj.pi_star = lu.solve(proj.b);
  proj.pi = proj.d * proj.pi_star;
  const MatX remainder = MatX::Identity(n, n) - proj.pi;
  proj.s = remainder.transpose() * remainder;
  return proj;
}

// Gradient-energy Gram matrix of the monomial basis (first row zeroed: the
// constant has no energy). Exact because the monomials are harmonic.
inline Mat3 energy_gram(const ElementProjector& proj) {
  Mat3 gt = proj.g;
  gt.row(0).setZero();
  return gt;
}

// Local Poisson stiffness: projected consistency plus identity-scaled
// stabilization. In 2D the gradient energy is scale-invariant, so the
// stabilization needs no dimensional factor.
inline MatX vem_stiffness(const ElementProjector& proj) {
  return proj.pi_star.transpose() * energy_gram(proj) * proj.pi_star + proj.s;
}

// Variable-coefficient local forms. Empty callables mean: identity
// diffusion, zero advection/reaction/source. Row = test function,
// column = trial function. The stabilization enters only the diffusive
// part, scaled by the element mean of trace(D)/2.
struct LocalForms {
  MatX a;    // n x n
  VecX rhs;  // n
};

inline LocalForms vem_local_forms(
    const Polygon& e, const ElementProjector& proj,
    const std::function<Mat2(const Vec2&)>& diffusion = {},
    const std::function<Vec2(const Vec2&)>& advection = {},
    const std::function<double(const Vec2&)>& reaction = {},
    const std::function<double(const Vec2&)>& source = {},
    int quad_order = 4) {
  const int n = e.n();
  const QuadratureRule rule = polygon_gauss_rule(e, quad_order);
  const MatX grads = proj.projected_gradients();  // 2 x n, constant

  LocalForms out;
  out.a = MatX::Zero(n, n);
  out.rhs = VecX::Zero(n);
  double diffusive_scale = 0.0;
  for (std::size_t q = 0; q < rule.size(); ++q) {
    const Vec2& x = rule.points[q];
    const double w = rule.weights[q];
    const Mat2 dq = diffusion ? diffusion(x) : Mat2::Identity();
    diffusive_scale += w * 0.5 * dq.trace();
    out.a.noalias() += w * (grads.transpose() * dq * grads);
    if (advection || reaction || source) {
      const VecX values = proj.projected_values(x);
      if (advection)
        out.a.noalias() += w * values * (advection(x).transpose() * grads);
      if (reaction) out.a.noalias() += (w * reaction(x)) * values * values.transpose();
      if (source) out.rhs.noalias() += (w * source(x)) * values;
    }
  }
  out.a.noalias() += (diffusive_scale / proj.area) * proj.s;
  return out;
}

// Projected error norms: element-wise L2 distances between the exact fields
// and the linear projection of the discrete solution (values and constant
// gradients alike, the lowest-order identification of both projections).
struct ErrorPair {
  double value = 0.0;
  double gradient = 0.0;
};

inline ErrorPair vem_errors(const Mesh& mesh, const VecX& dofs,
                            const std::function<double(const Vec2&)>& exact_u,
                            const std::function<Vec2(const Vec2&)>& exact_grad,
                            int quad_order = 6) {
  if (dofs.size() != mesh.n_vertices())
    throw ValidationError("dof vector length does not match the mesh");
  double err0 = 0.0, errg = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Polygon& e = mesh.polygons[static_cast<std::size_t>(c)];
    const auto& cell = mesh.cells[static_cast<std::size_t>(c)];
    const ElementProjector proj = build_projector(e);
    VecX local(e.n());
    for (int i = 0; i < e.n(); ++i)
      local[i] = dofs[cell[static_cast<std::size_t>(i)]];
    const Vec3 coeffs = proj.pi_star * local;
    const Vec2 grad = proj.projected_gradients() * local;
    const QuadratureRule rule = polygon_gauss_rule(e, quad_order);
    for (std::size_t q = 0; q < rule.size(); ++q) {
      const Vec2& x = rule.points[q];
      const double w = rule.weights[q];
      const double uh = coeffs.dot(proj.monomials(x));
      err0 += w * (exact_u(x) - uh) * (exact_u(x) - uh);
      errg += w * (exact_grad(x) - grad).squaredNorm();
    }
  }
  return {std::sqrt(err0), std::sqrt(errg)};
}

}  // namespace navem
