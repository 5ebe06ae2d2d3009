#pragma once
// Harmonic expansion machinery: a rational+polynomial least-squares model of
// a corner-singular harmonic function on the reference square (poles
// clustered exponentially at the corner-like boundary point (1,0)), affine
// complex transplants of it onto element vertices, and the full expansion
// basis {1, Re z^l, Im z^l, three transplanted singular functions}. Every
// member is harmonic by construction, so analytic Laplacians are exactly 0.

#include "navem/common.hpp"
#include "navem/geometry.hpp"

#include <json.hpp>

#include <array>
#include <complex>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace navem {

using Complex = std::complex<double>;

// ---------------------------------------------------------------------------
// Jets of Re(G) and Im(G) for analytic G with complex derivatives G', G''.
// The Cauchy-Riemann structure gives grad Re G = (Re G', -Im G') and a
// trace-free Hessian, so these jets are harmonic identically.
// ---------------------------------------------------------------------------

namespace detail {

inline Jet2 re_part_jet(Complex g, Complex g1, Complex g2) {
  Jet2 out;
  out.v = g.real();
  out.g = Vec2(g1.real(), -g1.imag());
  out.h << g2.real(), -g2.imag(), -g2.imag(), -g2.real();
  return out;
}

inline Jet2 im_part_jet(Complex g, Complex g1, Complex g2) {
  // Im(G) = Re(-i G)
  const Complex mi(0.0, -1.0);
  return re_part_jet(mi * g, mi * g1, mi * g2);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// The auxiliary singular model: fit on the boundary of (-1,1)^2 against
// tent-shaped Dirichlet data (1 - |x2| on the right edge, 0 elsewhere).
// ---------------------------------------------------------------------------

struct PhiModel {
  int n_poles = 0;
  int n_poly = 0;          // polynomial degrees 0..n_poly (n_poly+1 terms)
  VecX poles;              // z_alpha, real, in (1, 3]
  VecX pole_coeff;         // one per pole
  VecX poly_coeff;         // n_poly + 1 entries
  double max_residual = 0.0;

  struct ComplexJet {
    Complex g{0.0, 0.0}, g1{0.0, 0.0}, g2{0.0, 0.0};
  };

  // Analytic value/derivatives of the underlying complex model at z.
  ComplexJet complex_jet(Complex z, JetOrder order) const {
    ComplexJet out;
    for (int a = 0; a < n_poles; ++a) {
      const double d = 3.0 - poles[a];
      const Complex inv = 1.0 / (z - poles[a]);
      const Complex base = pole_coeff[a] * d * inv;
      out.g += base;
      if (order != JetOrder::values_only) out.g1 -= base * inv;
      if (order == JetOrder::with_hessian) out.g2 += 2.0 * base * inv * inv;
    }
    const Complex half = 0.5 * z;
    Complex pw = 1.0;           // (z/2)^b
    Complex pw1 = 0.0, pw2 = 0.0;
    for (int b = 0; b <= n_poly; ++b) {
      out.g += poly_coeff[b] * pw;
      if (order != JetOrder::values_only && b >= 1)
        out.g1 += poly_coeff[b] * 0.5 * static_cast<double>(b) * pw1;
      if (order == JetOrder::with_hessian && b >= 2)
        out.g2 += poly_coeff[b] * 0.25 * static_cast<double>(b * (b - 1)) *
                  pw2;
      pw2 = pw1;
      pw1 = pw;
      pw *= half;
    }
    return out;
  }

  Jet2 eval(const Vec2& x, JetOrder order) const {
    const ComplexJet cj = complex_jet(Complex(x.x(), x.y()), order);
    return detail::re_part_jet(cj.g, cj.g1, cj.g2);
  }
};

// Pole ladder: z_alpha = 1 + 2 exp(-4 (sqrt(N) - sqrt(alpha))), alpha=1..N.
// Monotone in alpha, clustering exponentially at 1, with z_N = 3 exactly.
inline VecX phi_pole_positions(int n_poles) {
  VecX z(n_poles);
  const double root_n = std::sqrt(static_cast<double>(n_poles));
  for (int a = 1; a <= n_poles; ++a)
    z[a - 1] =
        1.0 + 2.0 * std::exp(-4.0 * (root_n - std::sqrt(static_cast<double>(a))));
  return z;
}

// Tent Dirichlet data on the boundary of (-1,1)^2.
inline double phi_boundary_data(const Vec2& x) {
  if (x.x() >= 1.0 - 1e-14) return 1.0 - std::abs(x.y());
  return 0.0;
}

// Boundary samples clustered exponentially toward (1,0): walk the boundary
// distance delta_k = 4 exp(-4 sqrt(N) (1 - sqrt(k/K))) both ways from (1,0)
// (perimeter 8, so delta covers (0,4] each way).
inline std::vector<Vec2> phi_boundary_samples(int count, int n_poles) {
  if (count < 8) throw ValidationError("need at least 8 boundary samples");
  const int half = count / 2;
  const double root_n = std::sqrt(static_cast<double>(n_poles));
  std::vector<Vec2> pts;
  pts.reserve(2 * half);
  for (int k = 1; k <= half; ++k) {
    const double frac = std::sqrt(static_cast<double>(k) / half);
    const double delta = 4.0 * std::exp(-4.0 * root_n * (1.0 - frac));
    Vec2 ccw;
    if (delta <= 1.0) ccw = Vec2(1.0, delta);
    else if (delta <= 3.0) ccw = Vec2(2.0 - delta, 1.0);
    else ccw = Vec2(-1.0, 4.0 - delta);
    pts.push_back(ccw);
    pts.emplace_back(ccw.x(), -ccw.y());
  }
  return pts;
}

// Least-squares fit of the rational+polynomial model to the tent data with
// column-normalized QR. Reports the max boundary residual; a residual above
// 1e-3 means the basis cannot represent the data and the fit is rejected.
inline PhiModel fit_phi(int n_poles = 80, int n_poly = 40,
                        int n_samples = 2000) {
  if (n_poles < 1 || n_poly < 0)
    throw ValidationError("fit_phi needs at least one pole");
  PhiModel model;
  model.n_poles = n_poles;
  model.n_poly = n_poly;
  model.poles = phi_pole_positions(n_poles);

  const std::vector<Vec2> pts = phi_boundary_samples(n_samples, n_poles);
  const int rows = static_cast<int>(pts.size());
  const int cols = n_poles + n_poly + 1;
  MatX A(rows, cols);
  VecX rhs(rows);
  for (int s = 0; s < rows; ++s) {
    const Complex z(pts[s].x(), pts[s].y());
    for (int a = 0; a < n_poles; ++a)
      A(s, a) = ((3.0 - model.poles[a]) / (z - model.poles[a])).real();
    Complex pw = 1.0;
    for (int b = 0; b <= n_poly; ++b) {
      A(s, n_poles + b) = pw.real();
      pw *= 0.5 * z;
    }
    rhs[s] = phi_boundary_data(pts[s]);
  }

  VecX col_norm(cols);
  for (int c = 0; c < cols; ++c) {
    col_norm[c] = A.col(c).norm();
    if (col_norm[c] == 0.0) col_norm[c] = 1.0;
    A.col(c) /= col_norm[c];
  }
  const VecX scaled = A.colPivHouseholderQr().solve(rhs);
  const VecX coeff = scaled.cwiseQuotient(col_norm);
  model.max_residual = (A * scaled - rhs).cwiseAbs().maxCoeff();
  if (!std::isfinite(model.max_residual) || model.max_residual > 1e-3)
    throw FitDiverged("auxiliary boundary fit residual " +
                      std::to_string(model.max_residual) + " exceeds 1e-3");
  model.pole_coeff = coeff.head(n_poles);
  model.poly_coeff = coeff.tail(n_poly + 1);
  return model;
}

// ---------------------------------------------------------------------------
// Transplanting the singular model onto an element vertex: w(z) = a(z-1)+v
// sends the singular point (1,0) to the vertex and the pole ray (the real
// axis beyond 1) along the outward angle bisector. The scale halves until
// every pole lands strictly outside the polygon.
// ---------------------------------------------------------------------------

struct PhiMap {
  Vec2 vertex;
  Complex a;      // rotation+scale of the complex affine map
  int halvings = 0;
};

namespace detail {

// Outward direction at a vertex: bisector of the exterior wedge; straight
// (hanging-node) vertices fall back to the outward edge normal. The sign is
// settled with a containment probe so reflex vertices work too.
inline Vec2 outward_direction(const Polygon& p, int v) {
  const Vec2 vert = p.vertex(v);
  const Vec2 u = (p.vertex(v - 1) - vert).normalized();
  const Vec2 w = (p.vertex(v + 1) - vert).normalized();
  Vec2 dir = u + w;
  if (dir.norm() < 1e-8) dir = -p.inward_normal(v);
  dir.normalize();
  if (p.contains(vert + 1e-6 * p.diameter() * dir)) dir = -dir;
  return dir;
}

inline bool all_poles_outside(const Polygon& p, const PhiModel& model,
                              const Vec2& vertex, const Vec2& dir,
                              double scale) {
  for (int a = 0; a < model.n_poles; ++a) {
    const double t = (model.poles[a] - 1.0) * scale;
    // poles indistinguishable from the vertex sit on the outward ray by
    // construction; containment tests at that distance are pure roundoff
    if (t < 1e-12 * p.diameter()) continue;
    const Vec2 pt = vertex + t * dir;
    if (p.contains(pt)) return false;
    if (p.distance_to_boundary(pt) <= 0.0) return false;
  }
  return true;
}

}  // namespace detail

inline PhiMap make_phi_map(const PhiModel& model, const Polygon& p,
                           int target_vertex, int max_halvings = 6) {
  const Vec2 vertex = p.vertex(target_vertex);
  const Vec2 dir = detail::outward_direction(p, target_vertex);
  double scale = 2.0;
  for (int h = 0; h <= max_halvings; ++h, scale *= 0.5) {
    if (detail::all_poles_outside(p, model, vertex, dir, scale)) {
      PhiMap map;
      map.vertex = vertex;
      map.a = scale * Complex(dir.x(), dir.y());
      map.halvings = h;
      return map;
    }
  }
  throw PoleInsideElement(
      "no admissible scale keeps the transplanted poles outside the element");
}

inline Jet2 transformed_phi(const PhiModel& model, const PhiMap& map,
                            const Vec2& x, JetOrder order) {
  const Complex dx(x.x() - map.vertex.x(), x.y() - map.vertex.y());
  const Complex z = dx / map.a + 1.0;
  PhiModel::ComplexJet cj = model.complex_jet(z, order);
  const Complex inv_a = 1.0 / map.a;
  cj.g1 *= inv_a;
  cj.g2 *= inv_a * inv_a;
  return detail::re_part_jet(cj.g, cj.g1, cj.g2);
}

// convenience: build the map and evaluate in one call
inline Jet2 transformed_phi(const PhiModel& model, const Polygon& p,
                            int target_vertex, const Vec2& x,
                            JetOrder order) {
  return transformed_phi(model, make_phi_map(model, p, target_vertex), x,
                         order);
}

// ---------------------------------------------------------------------------
// The expansion space: 1, Re z^l, Im z^l (l = 1..degree) plus the three
// transplanted singular functions attached to vertices anchor-1, anchor,
// anchor+1. Dimension 2*degree + 4; dropping the constant leaves the
// gradient space of dimension 2*degree + 3.
// ---------------------------------------------------------------------------

struct HarmonicSpace {
  int degree = 20;
  PhiModel phi;
  int dim() const { return 2 * degree + 4; }
};

struct HarmonicContext {
  int anchor = 0;
  std::array<PhiMap, 3> maps;  // targets anchor-1, anchor, anchor+1
};

inline HarmonicContext harmonic_context(const HarmonicSpace& space,
                                        const Polygon& p, int anchor) {
  HarmonicContext ctx;
  ctx.anchor = anchor;
  const int n = p.n();
  ctx.maps[0] = make_phi_map(space.phi, p, ((anchor - 1) % n + n) % n);
  ctx.maps[1] = make_phi_map(space.phi, p, anchor % n);
  ctx.maps[2] = make_phi_map(space.phi, p, (anchor + 1) % n);
  return ctx;
}

// Jets of all members at x (coordinates of the normalized element).
inline void harmonic_basis_eval(const HarmonicSpace& space,
                                const HarmonicContext& ctx, const Vec2& x,
                                JetOrder order, std::vector<Jet2>& out) {
  out.assign(space.dim(), Jet2{});
  out[0] = Jet2::constant(1.0);
  const Complex z(x.x(), x.y());
  Complex zm2(0.0, 0.0), zm1(0.0, 0.0), zp(1.0, 0.0);  // z^{l-2}, z^{l-1}, z^l
  for (int l = 1; l <= space.degree; ++l) {
    zm2 = zm1;
    zm1 = zp;
    zp *= z;
    const double dl = static_cast<double>(l);
    const Complex g1 = dl * zm1;
    const Complex g2 = dl * (dl - 1.0) * zm2;
    out[2 * l - 1] = detail::re_part_jet(zp, g1, g2);
    out[2 * l] = detail::im_part_jet(zp, g1, g2);
  }
  for (int m = 0; m < 3; ++m)
    out[2 * space.degree + 1 + m] =
        transformed_phi(space.phi, ctx.maps[m], x, order);
}

// ---------------------------------------------------------------------------
// PhiModel serialization (bundle support).
// ---------------------------------------------------------------------------

inline constexpr const char* kPhiSchema = "navem-phi/1";

inline std::string phi_to_json(const PhiModel& model) {
  std::ostringstream out;
  out << "{\n  \"schema\": \"" << kPhiSchema << "\",\n"
      << "  \"n_poles\": " << model.n_poles << ",\n"
      << "  \"n_poly\": " << model.n_poly << ",\n"
      << "  \"max_residual\": " << fmt17(model.max_residual) << ",\n";
  const auto write_vec = [&out](const char* name, const VecX& v,
                                const char* tail) {
    out << "  \"" << name << "\": [";
    for (int i = 0; i < v.size(); ++i)
      out << fmt17(v[i]) << (i + 1 < v.size() ? ", " : "");
    out << "]" << tail << "\n";
  };
  write_vec("pole_coeff", model.pole_coeff, ",");
  write_vec("poly_coeff", model.poly_coeff, "");
  out << "}\n";
  return out.str();
}

inline PhiModel phi_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("phi JSON is malformed: ") + err.what());
  }
  try {
    if (!doc.contains("schema") || !doc.at("schema").is_string())
      throw ParseError("phi JSON lacks a schema tag");
    if (doc.at("schema").get<std::string>() != kPhiSchema)
      throw SchemaVersionError("unsupported phi schema '" +
                               doc.at("schema").get<std::string>() + "'");
    PhiModel model;
    model.n_poles = doc.at("n_poles").get<int>();
    model.n_poly = doc.at("n_poly").get<int>();
    model.max_residual = doc.at("max_residual").get<double>();
    const auto pc = doc.at("pole_coeff").get<std::vector<double>>();
    const auto qc = doc.at("poly_coeff").get<std::vector<double>>();
    if (static_cast<int>(pc.size()) != model.n_poles ||
        static_cast<int>(qc.size()) != model.n_poly + 1)
      throw ParseError("phi coefficient arrays do not match counts");
    model.poles = phi_pole_positions(model.n_poles);
    model.pole_coeff = Eigen::Map<const VecX>(pc.data(), pc.size());
    model.poly_coeff = Eigen::Map<const VecX>(qc.data(), qc.size());
    return model;
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("phi JSON has wrong shape: ") + err.what());
  }
}

inline void save_phi(const PhiModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open phi file for writing: " + path);
  out << phi_to_json(model);
  if (!out) throw ParseError("failed writing phi file: " + path);
}

inline PhiModel load_phi(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open phi file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return phi_from_json(text.str());
}

}  // namespace navem
