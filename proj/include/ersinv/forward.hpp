#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ersinv/common.hpp"
#include "ersinv/model.hpp"

namespace ersinv {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Survey geometry

struct ElectrodeLayout {
  std::vector<double> positions;  // surface x (m), strictly increasing
  double spacing = 4.0;           // a (m)

  // One electrode every `every_cols` columns starting at x = 0.
  static ElectrodeLayout regular(const GridSpec& grid, std::size_t every_cols = 4);
  void validate(const GridSpec& grid) const;
  std::size_t size() const { return positions.size(); }
};

enum class ArrayKind : std::uint8_t { Wenner = 0, WennerSchlumberger = 1 };

std::string to_string(ArrayKind kind);

struct ArrayConfig {
  ArrayKind kind = ArrayKind::Wenner;
  std::size_t max_level = 1;

  // Largest level with at least one quadrupole on `n_electrodes`, capped at `max_rows`.
  static ArrayConfig largest_feasible(ArrayKind kind, std::size_t n_electrodes, std::size_t max_rows);
};

struct Measurement {
  // Electrode indices into the layout.
  std::size_t a = 0, b = 0, m = 0, n = 0;
  double a_pos = 0, b_pos = 0, m_pos = 0, n_pos = 0;
  std::size_t level = 1;
  double geometric_factor = 0;
  double delta_v_over_i = 0;
  double apparent_resistivity = 0;
  double midpoint = 0;
};

// Quadrupoles of `array` on `n_electrodes` electrodes, ordered by level then position.
std::vector<Measurement> enumerate_quadrupoles(ArrayKind kind, std::size_t max_level,
                                               const ElectrodeLayout& layout);

struct Section {
  ArrayKind kind = ArrayKind::Wenner;
  Field values;              // H x W apparent resistivity (ohm-m)
  Array2D<std::uint8_t> coverage;  // 1 where the cell carries (interpolated) measured data
  std::vector<Measurement> measurements;
  std::size_t max_level = 0;
};

// ---------------------------------------------------------------------------
// Analytic half-space pieces

// rho0 / (2 pi r) for a unit surface point source; query (x, z) with z >= 0 downwards.
double primary_potential(double rho0, double source_x, double query_x, double query_z);

double geometric_factor(ArrayKind kind, double a, std::size_t n);

// ---------------------------------------------------------------------------
// Wavenumber quadrature for the inverse cosine transform.

struct WavenumberQuadrature {
  std::vector<double> wavenumbers;
  std::vector<double> weights;

  // Four Gauss-Legendre nodes on log k plus two Gauss-Laguerre tail nodes, weights fitted by
  // least squares so that (2/pi) sum g_j K0(k_j r) ~ 1/r over [r_min, r_max].
  static WavenumberQuadrature fit(double r_min, double r_max);

  std::size_t size() const { return wavenumbers.size(); }
  // (2/pi) sum_j g_j K0(k_j r); approximates 1/r.
  double inverse_r(double r) const;
};

// ---------------------------------------------------------------------------
// Finite-element mesh and system

struct MeshOptions {
  std::size_t pad_side = 8;
  std::size_t pad_down = 8;
  double growth = 1.3;
};

struct PaddedMesh {
  std::vector<double> x;  // node x coordinates (m), core starts at x = 0
  std::vector<double> z;  // node depths (m), z[0] = 0 is the surface
  std::size_t pad_side = 0;
  std::size_t pad_down = 0;
  std::size_t core_rows = 0;
  std::size_t core_cols = 0;
  double reference_x = 0;  // Robin boundary reference point (surface)

  static PaddedMesh build(const GridSpec& grid, const MeshOptions& opts = {});
  // Explicit coordinates without padding; handy for hand-checkable systems.
  static PaddedMesh from_coordinates(std::vector<double> x, std::vector<double> z);

  std::size_t nx() const { return x.size(); }
  std::size_t nz() const { return z.size(); }
  std::size_t node_count() const { return nx() * nz(); }
  std::size_t node(std::size_t iz, std::size_t ix) const { return iz * nx() + ix; }
  std::size_t element_rows() const { return nz() - 1; }
  std::size_t element_cols() const { return nx() - 1; }
  // Surface node index of x coordinate `pos`; throws if not on a node.
  std::size_t surface_node_at(double pos) const;
};

// Element conductivities (S/m) on the padded mesh; pad elements copy the nearest core cell.
Field element_conductivity(const ResistivityModel& model, const PaddedMesh& mesh);

enum class NodeTag : std::uint8_t { Interior = 0, Surface = 1, Robin = 2 };

struct SparseSystem {
  SparseMatrix matrix;
  std::vector<NodeTag> tags;
  double wavenumber = 0;
  std::size_t dimension() const { return static_cast<std::size_t>(matrix.rows()); }
};

// Bilinear FE discretisation of -div(sigma grad u) + k^2 sigma u with a no-flux surface and
// mixed conditions on the bottom and sides.
SparseSystem assemble(const PaddedMesh& mesh, const Field& conductivity, double k);
SparseSystem assemble(const ResistivityModel& model, double k, const MeshOptions& opts = {});

struct CgResult {
  Vector x;
  std::size_t iterations = 0;
  double relative_residual = 0;
};

// Jacobi-preconditioned conjugate gradients. max_iterations = 0 means 10 * dimension.
CgResult solve_cg(const SparseMatrix& a, const Vector& b, double rel_tol = 1e-10,
                  std::size_t max_iterations = 0);

enum class LinearSolverKind : std::uint8_t { ConjugateGradient = 0, SparseCholesky = 1 };

// ---------------------------------------------------------------------------
// Forward operator

struct ForwardOptions {
  MeshOptions mesh;
  double background = kBackgroundResistivity;
  LinearSolverKind solver = LinearSolverKind::SparseCholesky;
  double cg_tolerance = 1e-10;
};

// Owns the mesh, quadrature and the homogeneous reference solutions for one grid and survey
// line. The reference solutions are computed lazily and reused across models.
class ForwardSolver {
 public:
  ForwardSolver(const GridSpec& grid, ElectrodeLayout layout, ForwardOptions opts = {});
  ForwardSolver(const ForwardSolver&) = delete;
  ForwardSolver& operator=(const ForwardSolver&) = delete;
  ~ForwardSolver();

  const PaddedMesh& mesh() const { return mesh_; }
  const WavenumberQuadrature& quadrature() const { return quadrature_; }
  const ElectrodeLayout& layout() const { return layout_; }
  const ForwardOptions& options() const { return opts_; }

  // Secondary potential (transformed domain) for a unit source at surface node `source_node`.
  Vector solve_secondary(const ResistivityModel& model, const SparseSystem& system,
                         std::size_t source_node, std::size_t wavenumber_index);

  // Total potential per unit current at every core surface node (W + 1 values). The value at
  // the source node itself is not finite.
  std::vector<double> surface_potential(const ResistivityModel& model, double source_x);

  // Same, but from the purely discrete homogeneous solution. Diagnostic for mesh accuracy.
  std::vector<double> discrete_halfspace_surface_potential(double source_x);

  // phi[s][e] = potential at electrode e for a unit source at electrode s.
  Field electrode_potentials(const ResistivityModel& model);

  Section pseudo_section(const ResistivityModel& model, const ArrayConfig& array);
  // Both arrays from one set of solves.
  std::pair<Section, Section> sections(const ResistivityModel& model, const ArrayConfig& wenner,
                                       const ArrayConfig& ws);

 private:
  struct Reference;

  const Vector& reference_field(std::size_t wavenumber_index, std::size_t source_node);

  GridSpec grid_;
  ElectrodeLayout layout_;
  ForwardOptions opts_;
  PaddedMesh mesh_;
  WavenumberQuadrature quadrature_;
  std::unique_ptr<Reference> ref_;
};

// Fill a section from measured quadrupoles: place each reading at (level - 1, midpoint column),
// interpolate linearly along rows, extend laterally and downwards with the nearest valid value.
Section rasterize_section(ArrayKind kind, std::size_t max_level, std::vector<Measurement> data,
                          const GridSpec& grid);

}  // namespace ersinv
