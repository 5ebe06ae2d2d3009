#pragma once
// Shared aliases, the error hierarchy, and small utilities (deterministic
// chunked parallelism, finiteness checks) used by every other header.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace navem {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors. Everything thrown by the library derives from Error so callers can
// catch one type; the concrete classes mirror the failure modes of the
// individual modules (I/O, geometry, training, linear/nonlinear solves).
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// file / JSON layer
struct ParseError : Error { using Error::Error; };
struct ValidationError : Error { using Error::Error; };
struct SchemaVersionError : Error { using Error::Error; };

// geometry
struct DegenerateGeometry : Error { using Error::Error; };
struct NotStarShaped : Error { using Error::Error; };
struct DerivativeSingular : Error { using Error::Error; };
struct GenerationError : Error { using Error::Error; };
struct PoleInsideElement : Error { using Error::Error; };

// quadrature / numerics
struct UnsupportedOrder : Error { using Error::Error; };
struct DimMismatch : Error { using Error::Error; };
struct InvalidDims : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct FitDiverged : Error { using Error::Error; };

// model management / solvers
struct MissingModel : Error { using Error::Error; };
struct SingularMatrix : Error { using Error::Error; };
struct NewtonDiverged : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Thread-count resolution: explicit request > NAVEM_LAB_THREADS > 1.
// ---------------------------------------------------------------------------
inline int resolve_thread_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("NAVEM_LAB_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0 && v < 1024) return static_cast<int>(v);
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Deterministic chunked parallel-for. The chunk grid depends only on the
// problem size, never on the worker count, so per-chunk partial results
// merged in chunk order are bit-identical for any thread count.
// fn(chunk_index, begin, end) must only write chunk-local state.
// ---------------------------------------------------------------------------
inline std::size_t chunk_count(std::size_t n, std::size_t min_chunk = 512,
                               std::size_t max_chunks = 64) {
  if (n == 0) return 0;
  std::size_t k = (n + min_chunk - 1) / min_chunk;
  if (k < 1) k = 1;
  if (k > max_chunks) k = max_chunks;
  return k;
}

template <class Fn>
void for_chunks(std::size_t n, int threads, Fn&& fn,
                std::size_t min_chunk = 512) {
  const std::size_t k = chunk_count(n, min_chunk);
  if (k == 0) return;
  auto run_chunk = [&](std::size_t c) {
    const std::size_t b = c * n / k;
    const std::size_t e = (c + 1) * n / k;
    fn(c, b, e);
  };
  if (threads <= 1 || k == 1) {
    for (std::size_t c = 0; c < k; ++c) run_chunk(c);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= k) return;
      run_chunk(c);
    }
  };
  const int t = std::min<std::size_t>(static_cast<std::size_t>(threads), k);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  for (int i = 0; i < t; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Canonical float formatting for JSON writers: 17 significant digits round-
// trip any double exactly, so save->load->save is byte-identical.
// ---------------------------------------------------------------------------
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Finiteness guards.
// ---------------------------------------------------------------------------
inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFinite(std::string("non-finite value in ") + what);
}

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NonFinite(std::string("non-finite entries in ") + what);
}

}  // namespace navem
