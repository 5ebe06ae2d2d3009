#pragma once
// Fully connected tanh networks: forward evaluation, analytic first/second
// derivatives with respect to two designated spatial input slots, reverse-
// mode gradients of losses (including losses built from those spatial
// derivatives) with respect to all weights, and JSON serialization.
//
// Batched evaluation works on matrices whose columns are input points. The
// spatial machinery propagates five streams per layer: the value, the two
// first directional derivatives, and the two pure second directional
// derivatives (enough for gradients and Laplacians; mixed second derivatives
// are never needed by any caller).

#include "navem/common.hpp"
#include "navem/geometry.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace navem {

struct Mlp {
  std::vector<int> dims;       // [N0, N1, ..., NL]
  std::vector<MatX> weights;   // weights[l]: dims[l+1] x dims[l]
  std::vector<VecX> biases;    // biases[l]: dims[l+1]
  // metadata carried through serialization
  std::string strategy;        // "H" | "B" | "P" | ""
  PolygonClass cls{0, false};
  std::string encoding = "ref-anchor-v1";

  int n_layers() const { return static_cast<int>(weights.size()); }
  int in_dim() const { return dims.front(); }
  int out_dim() const { return dims.back(); }

  int n_params() const {
    int count = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l)
      count += (dims[l] + 1) * dims[l + 1];
    return count;
  }

  // Flat parameter vector: per layer the weight matrix in row-major order,
  // then the bias (matches the JSON layout).
  VecX flat() const {
    VecX out(n_params());
    int at = 0;
    for (int l = 0; l < n_layers(); ++l) {
      const MatX& A = weights[l];
      for (int r = 0; r < A.rows(); ++r)
        for (int c = 0; c < A.cols(); ++c) out[at++] = A(r, c);
      out.segment(at, biases[l].size()) = biases[l];
      at += static_cast<int>(biases[l].size());
    }
    return out;
  }

  void set_flat(const VecX& w) {
    if (w.size() != n_params())
      throw DimMismatch("flat weight vector has wrong length");
    int at = 0;
    for (int l = 0; l < n_layers(); ++l) {
      MatX& A = weights[l];
      for (int r = 0; r < A.rows(); ++r)
        for (int c = 0; c < A.cols(); ++c) A(r, c) = w[at++];
      biases[l] = w.segment(at, biases[l].size());
      at += static_cast<int>(biases[l].size());
    }
  }
};

// Glorot-normal initialization: A_l entries ~ N(0, 2/(fan_in + fan_out)),
// biases zero; deterministic for a given seed.
inline Mlp init_glorot(std::vector<int> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw InvalidDims("need at least input and output");
  for (int d : dims)
    if (d <= 0) throw InvalidDims("layer sizes must be positive");
  Mlp net;
  net.dims = std::move(dims);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    const int fan_in = net.dims[l], fan_out = net.dims[l + 1];
    std::normal_distribution<double> dist(
        0.0, std::sqrt(2.0 / (fan_in + fan_out)));
    MatX A(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) A(r, c) = dist(rng);
    net.weights.push_back(std::move(A));
    net.biases.push_back(VecX::Zero(fan_out));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Forward evaluation with spatial jets.
// ---------------------------------------------------------------------------

// Batched jets: each matrix is (out_dim x batch). d*/l* refer to the two
// spatial slots; l11/l22 are pure second derivatives (laplacian = l11+l22).
// Streams not requested by the JetOrder stay empty.
struct BatchJets {
  MatX value;
  MatX d1, d2;
  MatX l11, l22;
};

// Single-point jet (spec'd convenience shape).
struct SpatialJet {
  VecX output;
  MatX d_dx;        // out_dim x 2
  VecX laplacian_x;
};

// Retained forward state for the reverse pass. in_* are the post-activation
// streams feeding each affine layer (l = 0..L-1); zd* are the pre-activation
// derivative streams of each tanh layer (l = 0..L-2). The post-activation
// value of tanh layer l is in_x[l+1].
struct ForwardTrace {
  JetOrder order = JetOrder::values_only;
  std::vector<MatX> in_x, in_u1, in_u2, in_p, in_q;
  std::vector<MatX> zd1, zd2, zdp, zdq;
};

inline BatchJets mlp_forward(const Mlp& net, const MatX& inputs,
                             JetOrder order, ForwardTrace* trace = nullptr,
                             std::pair<int, int> slots = {0, 1}) {
  if (inputs.rows() != net.in_dim())
    throw DimMismatch("input rows " + std::to_string(inputs.rows()) +
                      " != network input size " +
                      std::to_string(net.in_dim()));
  const bool first = order != JetOrder::values_only;
  const bool second = order == JetOrder::with_hessian;
  if (first) {
    if (slots.first == slots.second || slots.first < 0 || slots.second < 0 ||
        slots.first >= net.in_dim() || slots.second >= net.in_dim())
      throw DimMismatch("invalid spatial input slots");
  }
  const int L = net.n_layers();
  const auto B = inputs.cols();

  MatX x = inputs, u1, u2, p, q;
  if (first) {
    u1 = MatX::Zero(inputs.rows(), B);
    u2 = MatX::Zero(inputs.rows(), B);
    u1.row(slots.first).setOnes();
    u2.row(slots.second).setOnes();
  }
  if (second) {
    p = MatX::Zero(inputs.rows(), B);
    q = MatX::Zero(inputs.rows(), B);
  }
  if (trace) {
    trace->order = order;
    trace->in_x.clear(); trace->in_u1.clear(); trace->in_u2.clear();
    trace->in_p.clear(); trace->in_q.clear();
    trace->zd1.clear(); trace->zd2.clear();
    trace->zdp.clear(); trace->zdq.clear();
  }

  for (int l = 0; l < L; ++l) {
    if (trace) {
      trace->in_x.push_back(x);
      if (first) { trace->in_u1.push_back(u1); trace->in_u2.push_back(u2); }
      if (second) { trace->in_p.push_back(p); trace->in_q.push_back(q); }
    }
    const MatX& A = net.weights[l];
    MatX z = (A * x).colwise() + net.biases[l];
    MatX z1, z2, zp, zq;
    if (first) { z1 = A * u1; z2 = A * u2; }
    if (second) { zp = A * p; zq = A * q; }
    if (l + 1 < L) {
      const MatX rho = z.array().tanh().matrix();
      const MatX rp = (1.0 - rho.array().square()).matrix();
      if (trace && first) { trace->zd1.push_back(z1); trace->zd2.push_back(z2); }
      if (trace && second) { trace->zdp.push_back(zp); trace->zdq.push_back(zq); }
      x = rho;
      if (second) {
        const MatX rpp = (-2.0 * rho.array() * rp.array()).matrix();
        p = (rpp.array() * z1.array().square() + rp.array() * zp.array())
                .matrix();
        q = (rpp.array() * z2.array().square() + rp.array() * zq.array())
                .matrix();
      }
      if (first) {
        u1 = (rp.array() * z1.array()).matrix();
        u2 = (rp.array() * z2.array()).matrix();
      }
    } else {
      x = std::move(z);
      if (first) { u1 = std::move(z1); u2 = std::move(z2); }
      if (second) { p = std::move(zp); q = std::move(zq); }
    }
  }

  BatchJets jets;
  jets.value = std::move(x);
  if (first) { jets.d1 = std::move(u1); jets.d2 = std::move(u2); }
  if (second) { jets.l11 = std::move(p); jets.l22 = std::move(q); }
  return jets;
}

inline VecX forward(const Mlp& net, const VecX& x0) {
  return mlp_forward(net, x0, JetOrder::values_only).value.col(0);
}

inline SpatialJet spatial_jet(const Mlp& net, const VecX& x0,
                              std::pair<int, int> slots = {0, 1}) {
  BatchJets jets = mlp_forward(net, x0, JetOrder::with_hessian, nullptr,
                               slots);
  SpatialJet out;
  out.output = jets.value.col(0);
  out.d_dx.resize(net.out_dim(), 2);
  out.d_dx.col(0) = jets.d1.col(0);
  out.d_dx.col(1) = jets.d2.col(0);
  out.laplacian_x = jets.l11.col(0) + jets.l22.col(0);
  return out;
}

// ---------------------------------------------------------------------------
// Reverse pass: given adjoint seeds dLoss/d(output streams) for the batch
// that produced `trace`, accumulate dLoss/d(weights) as a flat vector.
// Seed matrices may be empty (treated as zero); seeds for streams the trace
// never computed must be empty.
// ---------------------------------------------------------------------------

inline VecX mlp_backward(const Mlp& net, const ForwardTrace& trace,
                         const BatchJets& seeds) {
  const int L = net.n_layers();
  const bool first = trace.order != JetOrder::values_only;
  const bool second = trace.order == JetOrder::with_hessian;
  const auto B = trace.in_x.front().cols();
  const auto zeros_like = [B](int rows) { return MatX::Zero(rows, B); };
  const auto seed_or_zero = [&](const MatX& s, int rows) {
    return s.size() ? s : zeros_like(rows);
  };
  if ((!first && (seeds.d1.size() || seeds.d2.size())) ||
      (!second && (seeds.l11.size() || seeds.l22.size())))
    throw DimMismatch("adjoint seeds for streams missing from the trace");

  const int out = net.out_dim();
  MatX ax = seed_or_zero(seeds.value, out);
  MatX a1, a2, ap, aq;
  if (first) { a1 = seed_or_zero(seeds.d1, out); a2 = seed_or_zero(seeds.d2, out); }
  if (second) { ap = seed_or_zero(seeds.l11, out); aq = seed_or_zero(seeds.l22, out); }

  std::vector<MatX> gw(L);
  std::vector<VecX> gb(L);
  for (int l = L - 1; l >= 0; --l) {
    MatX zx, z1, z2, zp, zq;
    if (l == L - 1) {
      zx = std::move(ax);
      if (first) { z1 = std::move(a1); z2 = std::move(a2); }
      if (second) { zp = std::move(ap); zq = std::move(aq); }
    } else {
      // pull adjoints through y = tanh(z) and its derivative streams
      const MatX& rho = trace.in_x[l + 1];
      const Eigen::ArrayXXd r = rho.array();
      const Eigen::ArrayXXd rp = 1.0 - r.square();
      zx = (ax.array() * rp).matrix();
      if (first || second) {
        const Eigen::ArrayXXd rpp = -2.0 * r * rp;
        const Eigen::ArrayXXd zd1 = first ? trace.zd1[l].array()
                                          : Eigen::ArrayXXd();
        const Eigen::ArrayXXd zd2 = first ? trace.zd2[l].array()
                                          : Eigen::ArrayXXd();
        if (first) {
          zx.array() += a1.array() * rpp * zd1 + a2.array() * rpp * zd2;
          z1 = (a1.array() * rp).matrix();
          z2 = (a2.array() * rp).matrix();
        }
        if (second) {
          const Eigen::ArrayXXd rppp = -2.0 * (rp.square() + r * rpp);
          const Eigen::ArrayXXd zdp = trace.zdp[l].array();
          const Eigen::ArrayXXd zdq = trace.zdq[l].array();
          zx.array() += ap.array() * (rppp * zd1.square() + rpp * zdp) +
                        aq.array() * (rppp * zd2.square() + rpp * zdq);
          z1.array() += 2.0 * ap.array() * rpp * zd1;
          z2.array() += 2.0 * aq.array() * rpp * zd2;
          zp = (ap.array() * rp).matrix();
          zq = (aq.array() * rp).matrix();
        }
      }
    }

    gw[l] = zx * trace.in_x[l].transpose();
    if (first)
      gw[l] += z1 * trace.in_u1[l].transpose() +
               z2 * trace.in_u2[l].transpose();
    if (second)
      gw[l] += zp * trace.in_p[l].transpose() +
               zq * trace.in_q[l].transpose();
    gb[l] = zx.rowwise().sum();

    if (l > 0) {
      const MatX& A = net.weights[l];
      ax = A.transpose() * zx;
      if (first) { a1 = A.transpose() * z1; a2 = A.transpose() * z2; }
      if (second) { ap = A.transpose() * zp; aq = A.transpose() * zq; }
    }
  }

  VecX grad(net.n_params());
  int at = 0;
  for (int l = 0; l < L; ++l) {
    for (int r = 0; r < gw[l].rows(); ++r)
      for (int c = 0; c < gw[l].cols(); ++c) grad[at++] = gw[l](r, c);
    grad.segment(at, gb[l].size()) = gb[l];
    at += static_cast<int>(gb[l].size());
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Serialization. One JSON object per model; floats carry 17 significant
// digits so save -> load -> save is byte-identical and weights round-trip
// bit-exactly.
// ---------------------------------------------------------------------------

inline constexpr const char* kModelSchema = "navem-mlp/1";

namespace detail {

inline void write_json_net_arrays(std::ostream& out, const Mlp& net,
                                  const std::string& suffix) {
  out << "  \"dims" << suffix << "\": [";
  for (std::size_t i = 0; i < net.dims.size(); ++i)
    out << net.dims[i] << (i + 1 < net.dims.size() ? ", " : "");
  out << "],\n  \"weights" << suffix << "\": [\n";
  for (int l = 0; l < net.n_layers(); ++l) {
    out << "    [";
    const MatX& A = net.weights[l];
    for (int r = 0; r < A.rows(); ++r)
      for (int c = 0; c < A.cols(); ++c)
        out << fmt17(A(r, c))
            << (r + 1 == A.rows() && c + 1 == A.cols() ? "" : ", ");
    out << "]" << (l + 1 < net.n_layers() ? "," : "") << "\n";
  }
  out << "  ],\n  \"biases" << suffix << "\": [\n";
  for (int l = 0; l < net.n_layers(); ++l) {
    out << "    [";
    for (int r = 0; r < net.biases[l].size(); ++r)
      out << fmt17(net.biases[l][r])
          << (r + 1 < net.biases[l].size() ? ", " : "");
    out << "]" << (l + 1 < net.n_layers() ? "," : "") << "\n";
  }
  out << "  ]";
}

inline void write_json_net_header(std::ostream& out, const Mlp& net) {
  out << "{\n  \"schema\": \"" << kModelSchema << "\",\n"
      << "  \"strategy\": \"" << net.strategy << "\",\n"
      << "  \"polygon_class\": {\"nv\": " << net.cls.n_vertices
      << ", \"convex\": " << (net.cls.convex ? "true" : "false") << "},\n"
      << "  \"encoding\": \"" << net.encoding << "\",\n";
}

inline Mlp parse_json_net_arrays(const nlohmann::json& doc,
                                 const std::string& suffix) {
  Mlp net;
  net.dims = doc.at("dims" + suffix).get<std::vector<int>>();
  if (net.dims.size() < 2) throw ParseError("model has fewer than 2 layers");
  const auto& ws = doc.at("weights" + suffix);
  const auto& bs = doc.at("biases" + suffix);
  if (ws.size() + 1 != net.dims.size() || bs.size() + 1 != net.dims.size())
    throw ParseError("layer count does not match dims");
  for (std::size_t l = 0; l + 1 < net.dims.size(); ++l) {
    const int rows = net.dims[l + 1], cols = net.dims[l];
    const auto wflat = ws[l].get<std::vector<double>>();
    const auto bflat = bs[l].get<std::vector<double>>();
    if (static_cast<int>(wflat.size()) != rows * cols ||
        static_cast<int>(bflat.size()) != rows)
      throw ParseError("weight array size does not match dims");
    MatX A(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) A(r, c) = wflat[r * cols + c];
    if (!A.allFinite()) throw ParseError("non-finite weight in model file");
    net.weights.push_back(std::move(A));
    net.biases.push_back(
        Eigen::Map<const VecX>(bflat.data(), rows));
    if (!net.biases.back().allFinite())
      throw ParseError("non-finite bias in model file");
  }
  return net;
}

inline nlohmann::json parse_model_document(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("model JSON is malformed: ") + err.what());
  }
  if (!doc.is_object() || !doc.contains("schema") ||
      !doc.at("schema").is_string())
    throw ParseError("model JSON lacks a schema tag");
  if (doc.at("schema").get<std::string>() != kModelSchema)
    throw SchemaVersionError("unsupported model schema '" +
                             doc.at("schema").get<std::string>() + "'");
  return doc;
}

inline void read_model_metadata(const nlohmann::json& doc, Mlp& net) {
  net.strategy = doc.at("strategy").get<std::string>();
  net.cls.n_vertices = doc.at("polygon_class").at("nv").get<int>();
  net.cls.convex = doc.at("polygon_class").at("convex").get<bool>();
  net.encoding = doc.at("encoding").get<std::string>();
}

}  // namespace detail

inline std::string mlp_to_json(const Mlp& net) {
  std::ostringstream out;
  detail::write_json_net_header(out, net);
  detail::write_json_net_arrays(out, net, "");
  out << "\n}\n";
  return out.str();
}

inline Mlp mlp_from_json(const std::string& text) {
  const nlohmann::json doc = detail::parse_model_document(text);
  try {
    Mlp net = detail::parse_json_net_arrays(doc, "");
    detail::read_model_metadata(doc, net);
    return net;
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(std::string("model JSON has wrong shape: ") +
                     err.what());
  }
}

inline void save_model(const Mlp& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open model file for writing: " + path);
  out << mlp_to_json(net);
  if (!out) throw ParseError("failed writing model file: " + path);
}

inline Mlp load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open model file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return mlp_from_json(text.str());
}

}  // namespace navem
