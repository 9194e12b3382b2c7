#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "projreg/dual.hpp"
#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"
#include "projreg/orthobasis.hpp"
#include "projreg/projected_operator.hpp"
#include "projreg/projection.hpp"
#include "projreg/version.hpp"

namespace projreg {

// ---------------------------------------------------------------------------
// Binary model container.  Layout (all integers and floats little-endian):
//
//   magic "PRJM" | u32 version | u8 kind
//   u8 has_basis_shape  [i32 rows, i32 cols]
//   u8 has_mirror_shape [i32 rows, i32 cols]
//   i64 basis_dim | i64 mirror_dim | i32 count | i32 pairs_seen | i32 refreshes
//   f64 rdiag[count]
//   f64 basis columns   (basis_dim  x count, column-major)
//   f64 rcols triangle  (column j carries j+1 coefficients)
//   f64 mirror columns  (mirror_dim x count, column-major)
//   [kind dual] f64 gram (count x count, column-major)
//   i32 n_accepted, values... | i32 n_rejected, values...
//
// The basis is the orthonormalised side of the model (outputs for the
// projection and dual models, inputs for the input-side model); the mirror
// holds the vectors carrying the same triangular coefficients on the other
// side.  A JSON sidecar (<path>.json) summarises the header for humans and
// tooling; loading reads the binary only.
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[4] = {'P', 'R', 'J', 'M'};

enum class ModelKind : std::uint8_t { projection = 1, dual = 2, input = 3 };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::projection: return "projection";
    case ModelKind::dual: return "dual";
    case ModelKind::input: return "input";
  }
  return "unknown";
}

namespace detail {

static_assert(sizeof(double) == 8, "container format requires 64-bit doubles");

inline void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), std::streamsize(n));
}

inline void put_u8(std::ostream& out, std::uint8_t v) { put_bytes(out, &v, 1); }

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  put_bytes(out, b, 4);
}

inline void put_i32(std::ostream& out, std::int32_t v) {
  put_u32(out, static_cast<std::uint32_t>(v));
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(out, b, 8);
}

inline void put_i64(std::ostream& out, std::int64_t v) {
  put_u64(out, static_cast<std::uint64_t>(v));
}

inline void put_f64_block(std::ostream& out, const double* p, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    put_bytes(out, p, 8 * n);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      put_u64(out, std::bit_cast<std::uint64_t>(p[i]));
    }
  }
}

inline void get_bytes(std::istream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), std::streamsize(n));
  if (std::size_t(in.gcount()) != n) {
    throw IoError("model container: truncated file");
  }
}

inline std::uint8_t get_u8(std::istream& in) {
  std::uint8_t v = 0;
  get_bytes(in, &v, 1);
  return v;
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  get_bytes(in, b, 4);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
         std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
}

inline std::int32_t get_i32(std::istream& in) {
  return static_cast<std::int32_t>(get_u32(in));
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  get_bytes(in, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline std::int64_t get_i64(std::istream& in) {
  return static_cast<std::int64_t>(get_u64(in));
}

inline void get_f64_block(std::istream& in, double* p, std::size_t n) {
  if constexpr (std::endian::native == std::endian::little) {
    get_bytes(in, p, 8 * n);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::bit_cast<double>(get_u64(in));
    }
  }
}

inline void put_shape(std::ostream& out, const std::optional<GridShape>& s) {
  put_u8(out, s ? 1 : 0);
  if (s) {
    put_i32(out, s->rows);
    put_i32(out, s->cols);
  }
}

inline std::optional<GridShape> get_shape(std::istream& in) {
  if (get_u8(in) == 0) return std::nullopt;
  GridShape s;
  s.rows = get_i32(in);
  s.cols = get_i32(in);
  if (s.rows <= 0 || s.cols <= 0) {
    throw IoError("model container: invalid shape block");
  }
  return s;
}

inline void put_index_list(std::ostream& out, const std::vector<int>& v) {
  put_i32(out, static_cast<std::int32_t>(v.size()));
  for (int x : v) put_i32(out, x);
}

inline std::vector<int> get_index_list(std::istream& in) {
  const std::int32_t n = get_i32(in);
  if (n < 0) throw IoError("model container: negative index count");
  std::vector<int> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = get_i32(in);
  return v;
}

// Header fields shared by every kind; the mirror matrix and the optional
// dual gram block follow the basis payload.
struct ContainerHeader {
  ModelKind kind = ModelKind::projection;
  std::optional<GridShape> basis_shape, mirror_shape;
  std::int64_t basis_dim = 0, mirror_dim = 0;
  std::int32_t count = 0, pairs_seen = 0, refreshes = 0;
};

inline void put_header(std::ostream& out, const ContainerHeader& h) {
  put_bytes(out, kModelMagic, 4);
  put_u32(out, kModelFormatVersion);
  put_u8(out, static_cast<std::uint8_t>(h.kind));
  put_shape(out, h.basis_shape);
  put_shape(out, h.mirror_shape);
  put_i64(out, h.basis_dim);
  put_i64(out, h.mirror_dim);
  put_i32(out, h.count);
  put_i32(out, h.pairs_seen);
  put_i32(out, h.refreshes);
}

inline ContainerHeader get_header(std::istream& in) {
  char magic[4];
  get_bytes(in, magic, 4);
  if (std::memcmp(magic, kModelMagic, 4) != 0) {
    throw IoError("model container: bad magic (not a model file)");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kModelFormatVersion) {
    throw IoError("model container: unsupported version " +
                  std::to_string(version));
  }
  ContainerHeader h;
  const std::uint8_t kind = get_u8(in);
  if (kind < 1 || kind > 3) {
    throw IoError("model container: unknown model kind " + std::to_string(kind));
  }
  h.kind = static_cast<ModelKind>(kind);
  h.basis_shape = get_shape(in);
  h.mirror_shape = get_shape(in);
  h.basis_dim = get_i64(in);
  h.mirror_dim = get_i64(in);
  h.count = get_i32(in);
  h.pairs_seen = get_i32(in);
  h.refreshes = get_i32(in);
  if (h.basis_dim < 0 || h.mirror_dim < 0 || h.count < 0 || h.pairs_seen < 0 ||
      h.refreshes < 0 || h.count > h.pairs_seen) {
    throw IoError("model container: inconsistent header counts");
  }
  return h;
}

inline void put_basis(std::ostream& out, const OrthonormalBasis& b) {
  const int count = b.size();
  put_f64_block(out, b.rdiag().data(), static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    put_f64_block(out, b.col(j).data(), static_cast<std::size_t>(b.dim()));
  }
  for (int j = 0; j < count; ++j) {
    put_f64_block(out, b.rcols()[size_t(j)].data(), static_cast<std::size_t>(j + 1));
  }
}

inline OrthonormalBasis get_basis(std::istream& in, std::int64_t dim, int count,
                                  std::optional<GridShape> shape) {
  std::vector<double> rdiag(static_cast<std::size_t>(count));
  get_f64_block(in, rdiag.data(), rdiag.size());
  Eigen::MatrixXd q(dim, count);
  for (int j = 0; j < count; ++j) {
    get_f64_block(in, q.col(j).data(), static_cast<std::size_t>(dim));
  }
  OrthonormalBasis basis;
  for (int j = 0; j < count; ++j) {
    std::vector<double> rcol(static_cast<std::size_t>(j + 1));
    get_f64_block(in, rcol.data(), rcol.size());
    if (rcol.back() != rdiag[size_t(j)]) {
      throw IoError("model container: rdiag does not match triangular data");
    }
    basis.append(q.col(j), std::move(rcol));
  }
  basis.set_shape(std::move(shape));
  return basis;
}

inline void put_columns(std::ostream& out, Eigen::Ref<const Eigen::MatrixXd> m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    put_f64_block(out, m.col(j).data(), static_cast<std::size_t>(m.rows()));
  }
}

inline Eigen::MatrixXd get_columns(std::istream& in, std::int64_t rows,
                                   std::int64_t cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    get_f64_block(in, m.col(j).data(), static_cast<std::size_t>(rows));
  }
  return m;
}

// Friend of the model classes: packs and restores their private state.
struct ModelSerde {
  static void save(std::ostream& out, const ProjectionModel& m) {
    ContainerHeader h;
    h.kind = ModelKind::projection;
    h.basis_shape = m.ybar_.shape();
    h.mirror_shape = m.domain_shape_;
    h.basis_dim = m.ybar_.dim();
    h.mirror_dim = m.count_ > 0 ? m.ubar_.rows() : 0;
    h.count = m.count_;
    h.pairs_seen = m.pairs_seen_;
    h.refreshes = m.refresh_count_;
    put_header(out, h);
    put_basis(out, m.ybar_);
    put_columns(out, m.ubar_.leftCols(m.count_));
    put_index_list(out, m.accepted_);
    put_index_list(out, m.rejected_);
  }

  static void save(std::ostream& out, const DualModel& m) {
    ContainerHeader h;
    h.kind = ModelKind::dual;
    h.basis_shape = m.ybar_.shape();
    h.mirror_shape = m.domain_shape_;
    h.basis_dim = m.ybar_.dim();
    h.mirror_dim = m.count_ > 0 ? m.vbar_.rows() : 0;
    h.count = m.count_;
    h.pairs_seen = m.pairs_seen_;
    put_header(out, h);
    put_basis(out, m.ybar_);
    put_columns(out, m.vbar_.leftCols(m.count_));
    put_columns(out, m.gram_.topLeftCorner(m.count_, m.count_));
    put_index_list(out, m.accepted_);
    put_index_list(out, m.rejected_);
  }

  static void save(std::ostream& out, const InputModel& m) {
    ContainerHeader h;
    h.kind = ModelKind::input;
    h.basis_shape = m.uhat_.shape();
    h.mirror_shape = m.range_shape_;
    h.basis_dim = m.uhat_.dim();
    h.mirror_dim = m.count_ > 0 ? m.yhat_.rows() : 0;
    h.count = m.count_;
    h.pairs_seen = m.pairs_seen_;
    put_header(out, h);
    put_basis(out, m.uhat_);
    put_columns(out, m.yhat_.leftCols(m.count_));
    put_index_list(out, m.accepted_);
    put_index_list(out, m.rejected_);
  }

  static ProjectionModel load_projection(std::istream& in,
                                         const ContainerHeader& h) {
    ProjectionModel m;
    m.ybar_ = get_basis(in, h.basis_dim, h.count, h.basis_shape);
    m.ubar_ = get_columns(in, h.mirror_dim, h.count);
    m.count_ = h.count;
    m.pairs_seen_ = h.pairs_seen;
    m.refresh_count_ = h.refreshes;
    m.accepted_ = get_index_list(in);
    m.rejected_ = get_index_list(in);
    m.domain_shape_ = h.mirror_shape;
    check_lists(m.accepted_, m.rejected_, h);
    return m;
  }

  static DualModel load_dual(std::istream& in, const ContainerHeader& h) {
    DualModel m;
    m.ybar_ = get_basis(in, h.basis_dim, h.count, h.basis_shape);
    m.vbar_ = get_columns(in, h.mirror_dim, h.count);
    m.gram_ = get_columns(in, h.count, h.count);
    m.count_ = h.count;
    m.pairs_seen_ = h.pairs_seen;
    m.accepted_ = get_index_list(in);
    m.rejected_ = get_index_list(in);
    m.domain_shape_ = h.mirror_shape;
    check_lists(m.accepted_, m.rejected_, h);
    return m;
  }

  static InputModel load_input(std::istream& in, const ContainerHeader& h) {
    InputModel m;
    m.uhat_ = get_basis(in, h.basis_dim, h.count, h.basis_shape);
    m.yhat_ = get_columns(in, h.mirror_dim, h.count);
    m.count_ = h.count;
    m.pairs_seen_ = h.pairs_seen;
    m.accepted_ = get_index_list(in);
    m.rejected_ = get_index_list(in);
    m.range_shape_ = h.mirror_shape;
    check_lists(m.accepted_, m.rejected_, h);
    return m;
  }

  static void check_lists(const std::vector<int>& accepted,
                          const std::vector<int>& rejected,
                          const ContainerHeader& h) {
    if (accepted.size() != std::size_t(h.count) ||
        accepted.size() + rejected.size() != std::size_t(h.pairs_seen)) {
      throw IoError("model container: index lists disagree with header counts");
    }
  }
};

inline nlohmann::json shape_json(const std::optional<GridShape>& s) {
  if (!s) return nullptr;
  return nlohmann::json{{"rows", s->rows}, {"cols", s->cols}};
}

inline void write_sidecar(const std::filesystem::path& path,
                          const ContainerHeader& h) {
  nlohmann::json j{{"format", "projreg-model"},
                   {"version", kModelFormatVersion},
                   {"kind", to_string(h.kind)},
                   {"basis_dim", h.basis_dim},
                   {"mirror_dim", h.mirror_dim},
                   {"count", h.count},
                   {"pairs_seen", h.pairs_seen},
                   {"rejected", h.pairs_seen - h.count},
                   {"basis_shape", shape_json(h.basis_shape)},
                   {"mirror_shape", shape_json(h.mirror_shape)}};
  std::filesystem::path side = path;
  side += ".json";
  std::ofstream out(side, std::ios::trunc);
  if (!out) throw IoError("cannot write sidecar " + side.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + side.string());
}

template <class Model>
void save_model_impl(const Model& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write model container " + path.string());
  ModelSerde::save(out, m);
  if (!out) throw IoError("write failed: " + path.string());
  out.close();

  std::ifstream back(path, std::ios::binary);
  write_sidecar(path, get_header(back));
}

inline std::ifstream open_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open model container " + path.string());
  return in;
}

}  // namespace detail

inline void save_model(const ProjectionModel& m,
                       const std::filesystem::path& path) {
  detail::save_model_impl(m, path);
}

inline void save_model(const DualModel& m, const std::filesystem::path& path) {
  detail::save_model_impl(m, path);
}

inline void save_model(const InputModel& m, const std::filesystem::path& path) {
  detail::save_model_impl(m, path);
}

inline ModelKind peek_model_kind(const std::filesystem::path& path) {
  std::ifstream in = detail::open_container(path);
  return detail::get_header(in).kind;
}

inline ProjectionModel load_projection_model(const std::filesystem::path& path) {
  std::ifstream in = detail::open_container(path);
  detail::ContainerHeader h = detail::get_header(in);
  if (h.kind != ModelKind::projection) {
    throw IoError("model container " + path.string() + " holds a " +
                  to_string(h.kind) + " model, expected projection");
  }
  return detail::ModelSerde::load_projection(in, h);
}

inline DualModel load_dual_model(const std::filesystem::path& path) {
  std::ifstream in = detail::open_container(path);
  detail::ContainerHeader h = detail::get_header(in);
  if (h.kind != ModelKind::dual) {
    throw IoError("model container " + path.string() + " holds a " +
                  to_string(h.kind) + " model, expected dual");
  }
  return detail::ModelSerde::load_dual(in, h);
}

inline InputModel load_input_model(const std::filesystem::path& path) {
  std::ifstream in = detail::open_container(path);
  detail::ContainerHeader h = detail::get_header(in);
  if (h.kind != ModelKind::input) {
    throw IoError("model container " + path.string() + " holds a " +
                  to_string(h.kind) + " model, expected input");
  }
  return detail::ModelSerde::load_input(in, h);
}

}  // namespace projreg
