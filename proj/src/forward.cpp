#include "ersinv/forward.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ersinv {

namespace {

constexpr double kPi = std::numbers::pi;

// K1(x) / K0(x); the direct ratio underflows for large x.
double bessel_ratio(double x) {
  if (x > 40.0) {
    // Asymptotic expansion of K1/K0.
    return 1.0 + 0.5 / x - 0.125 / (x * x) + 0.125 / (x * x * x);
  }
  return std::cyl_bessel_k(1.0, x) / std::cyl_bessel_k(0.0, x);
}

class SystemSolver {
 public:
  SystemSolver(const SparseMatrix& a, const ForwardOptions& opts) : a_(a), opts_(opts) {
    if (opts.solver == LinearSolverKind::SparseCholesky) {
      ldlt_.compute(a);
      if (ldlt_.info() != Eigen::Success)
        throw Error(ErrorCode::SolverDivergence, "sparse LDLT factorisation failed");
    }
  }

  Vector solve(const Vector& b) const {
    if (opts_.solver == LinearSolverKind::SparseCholesky) {
      Vector x = ldlt_.solve(b);
      if (ldlt_.info() != Eigen::Success)
        throw Error(ErrorCode::SolverDivergence, "sparse LDLT solve failed");
      return x;
    }
    return solve_cg(a_, b, opts_.cg_tolerance).x;
  }

 private:
  const SparseMatrix& a_;
  const ForwardOptions& opts_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ArrayKind kind) {
  return kind == ArrayKind::Wenner ? "wenner" : "wenner_schlumberger";
}

ElectrodeLayout ElectrodeLayout::regular(const GridSpec& grid, std::size_t every_cols) {
  grid.validate();
  if (every_cols == 0) throw Error(ErrorCode::InvalidArgument, "electrode step must be >= 1");
  ElectrodeLayout layout;
  layout.spacing = static_cast<double>(every_cols) * grid.cell_size;
  for (std::size_t c = 0; c <= grid.width; c += every_cols)
    layout.positions.push_back(static_cast<double>(c) * grid.cell_size);
  return layout;
}

void ElectrodeLayout::validate(const GridSpec& grid) const {
  if (!(spacing > 0.0)) throw Error(ErrorCode::InvalidArgument, "electrode spacing must be positive");
  const double extent = static_cast<double>(grid.width) * grid.cell_size;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] < -1e-9 || positions[i] > extent + 1e-9)
      throw Error(ErrorCode::OutOfBounds, "electrode outside the grid");
    if (i > 0 && std::abs(positions[i] - positions[i - 1] - spacing) > 1e-9 * spacing)
      throw Error(ErrorCode::InvalidArgument, "electrodes must be equally spaced by a");
  }
}

ArrayConfig ArrayConfig::largest_feasible(ArrayKind kind, std::size_t n_electrodes,
                                          std::size_t max_rows) {
  if (n_electrodes < 4) throw Error(ErrorCode::NoFeasibleQuadrupole, "need at least 4 electrodes");
  const std::size_t gaps = n_electrodes - 1;
  std::size_t level = kind == ArrayKind::Wenner ? gaps / 3 : (gaps - 1) / 2;
  level = std::min(level, max_rows);
  if (level < 1) throw Error(ErrorCode::NoFeasibleQuadrupole, "no feasible level");
  return ArrayConfig{kind, level};
}

std::vector<Measurement> enumerate_quadrupoles(ArrayKind kind, std::size_t max_level,
                                               const ElectrodeLayout& layout) {
  std::vector<Measurement> out;
  const std::size_t e = layout.size();
  for (std::size_t n = 1; n <= max_level; ++n) {
    const std::size_t span = kind == ArrayKind::Wenner ? 3 * n : 2 * n + 1;
    if (span >= e) break;
    for (std::size_t i = 0; i + span < e; ++i) {
      Measurement m;
      m.level = n;
      m.a = i;
      m.b = i + span;
      if (kind == ArrayKind::Wenner) {
        m.m = i + n;
        m.n = i + 2 * n;
      } else {
        m.m = i + n;
        m.n = i + n + 1;
      }
      m.a_pos = layout.positions[m.a];
      m.b_pos = layout.positions[m.b];
      m.m_pos = layout.positions[m.m];
      m.n_pos = layout.positions[m.n];
      m.midpoint = 0.5 * (m.a_pos + m.b_pos);
      m.geometric_factor = geometric_factor(kind, layout.spacing, n);
      out.push_back(m);
    }
  }
  return out;
}

double primary_potential(double rho0, double source_x, double query_x, double query_z) {
  if (rho0 < 0.0) throw Error(ErrorCode::NonPositiveResistivity, "rho0 must be non-negative");
  const double r = std::hypot(query_x - source_x, query_z);
  if (r == 0.0) throw Error(ErrorCode::Singular, "query coincides with the source");
  return rho0 / (2.0 * kPi * r);
}

double geometric_factor(ArrayKind kind, double a, std::size_t n) {
  if (!(a > 0.0) || n < 1) throw Error(ErrorCode::InvalidArgument, "need a > 0 and n >= 1");
  const double nd = static_cast<double>(n);
  if (kind == ArrayKind::Wenner) return 2.0 * kPi * nd * a;
  return kPi * nd * (nd + 1.0) * a;
}

// ---------------------------------------------------------------------------

WavenumberQuadrature WavenumberQuadrature::fit(double r_min, double r_max) {
  if (!(r_min > 0.0) || !(r_max > r_min))
    throw Error(ErrorCode::InvalidArgument, "quadrature range must satisfy 0 < r_min < r_max");
  const double k_min = 0.3 / r_max;
  const double k_max = 0.5 / r_min;
  const double tail_scale = 0.5 / r_min;

  static constexpr std::array<double, 4> kLegendre{-0.8611363115940526, -0.3399810435848563,
                                                   0.3399810435848563, 0.8611363115940526};
  static constexpr std::array<double, 2> kLaguerre{0.5857864376269049, 3.414213562373095};

  WavenumberQuadrature q;
  const double lo = std::log(k_min), hi = std::log(k_max);
  for (double t : kLegendre) q.wavenumbers.push_back(std::exp(0.5 * (hi - lo) * t + 0.5 * (hi + lo)));
  for (double t : kLaguerre) q.wavenumbers.push_back(k_max + t * tail_scale);

  constexpr int kSamples = 200;
  const int n = static_cast<int>(q.wavenumbers.size());
  Eigen::MatrixXd design(kSamples, n);
  Eigen::VectorXd target = Eigen::VectorXd::Ones(kSamples);
  for (int i = 0; i < kSamples; ++i) {
    const double r = r_min * std::pow(r_max / r_min, static_cast<double>(i) / (kSamples - 1));
    for (int j = 0; j < n; ++j)
      design(i, j) = (2.0 / kPi) * std::cyl_bessel_k(0.0, q.wavenumbers[j] * r) * r;
  }
  Eigen::VectorXd g = design.colPivHouseholderQr().solve(target);
  q.weights.assign(g.data(), g.data() + n);
  return q;
}

double WavenumberQuadrature::inverse_r(double r) const {
  double s = 0.0;
  for (std::size_t j = 0; j < size(); ++j) s += weights[j] * std::cyl_bessel_k(0.0, wavenumbers[j] * r);
  return (2.0 / kPi) * s;
}

// ---------------------------------------------------------------------------

PaddedMesh PaddedMesh::build(const GridSpec& grid, const MeshOptions& opts) {
  grid.validate();
  if (!(opts.growth >= 1.0)) throw Error(ErrorCode::InvalidArgument, "pad growth must be >= 1");
  PaddedMesh mesh;
  mesh.pad_side = opts.pad_side;
  mesh.pad_down = opts.pad_down;
  mesh.core_rows = grid.height;
  mesh.core_cols = grid.width;
  const double h = grid.cell_size;

  std::vector<double> left;
  double w = h, pos = 0.0;
  for (std::size_t p = 0; p < opts.pad_side; ++p) {
    w *= opts.growth;
    pos -= w;
    left.push_back(pos);
  }
  std::reverse(left.begin(), left.end());
  mesh.x = left;
  for (std::size_t c = 0; c <= grid.width; ++c) mesh.x.push_back(static_cast<double>(c) * h);
  w = h;
  pos = static_cast<double>(grid.width) * h;
  for (std::size_t p = 0; p < opts.pad_side; ++p) {
    w *= opts.growth;
    pos += w;
    mesh.x.push_back(pos);
  }

  for (std::size_t r = 0; r <= grid.height; ++r) mesh.z.push_back(static_cast<double>(r) * h);
  w = h;
  pos = static_cast<double>(grid.height) * h;
  for (std::size_t p = 0; p < opts.pad_down; ++p) {
    w *= opts.growth;
    pos += w;
    mesh.z.push_back(pos);
  }
  mesh.reference_x = 0.5 * static_cast<double>(grid.width) * h;
  return mesh;
}

PaddedMesh PaddedMesh::from_coordinates(std::vector<double> x, std::vector<double> z) {
  if (x.size() < 2 || z.size() < 2) throw Error(ErrorCode::InvalidArgument, "mesh needs >= 2 nodes per axis");
  PaddedMesh mesh;
  mesh.core_cols = x.size() - 1;
  mesh.core_rows = z.size() - 1;
  mesh.reference_x = 0.5 * (x.front() + x.back());
  mesh.x = std::move(x);
  mesh.z = std::move(z);
  return mesh;
}

std::size_t PaddedMesh::surface_node_at(double pos) const {
  const double scale = std::max(1.0, std::abs(x.back() - x.front()));
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::abs(x[i] - pos) <= 1e-9 * scale) return i;
  throw Error(ErrorCode::InvalidArgument, "position " + std::to_string(pos) + " is not a mesh node");
}

Field element_conductivity(const ResistivityModel& model, const PaddedMesh& mesh) {
  model.validate();
  if (model.grid.height != mesh.core_rows || model.grid.width != mesh.core_cols)
    throw Error(ErrorCode::DimensionMismatch, "mesh core does not match the model grid");
  Field sigma(mesh.element_rows(), mesh.element_cols());
  for (std::size_t i = 0; i < sigma.rows(); ++i) {
    const std::size_t ci = std::min(i, mesh.core_rows - 1);
    for (std::size_t j = 0; j < sigma.cols(); ++j) {
      const std::size_t shifted = j < mesh.pad_side ? 0 : j - mesh.pad_side;
      const std::size_t cj = std::min(shifted, mesh.core_cols - 1);
      sigma(i, j) = 1.0 / model.values(ci, cj);
    }
  }
  return sigma;
}

SparseSystem assemble(const PaddedMesh& mesh, const Field& conductivity, double k) {
  if (k < 0.0) throw Error(ErrorCode::InvalidArgument, "wavenumber must be >= 0");
  if (conductivity.rows() != mesh.element_rows() || conductivity.cols() != mesh.element_cols())
    throw Error(ErrorCode::DimensionMismatch, "conductivity does not match the mesh");
  for (double s : conductivity.data())
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(ErrorCode::NonPositiveResistivity, "element conductivity must be positive");

  const std::size_t nx = mesh.nx(), nz = mesh.nz();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.element_rows() * mesh.element_cols() * 16 + 4 * (nx + nz));

  // Local index = a + 2b with a the x offset and b the z offset of the corner.
  for (std::size_t ez = 0; ez + 1 < nz; ++ez) {
    const double dz = mesh.z[ez + 1] - mesh.z[ez];
    const double sz[2][2] = {{1.0 / dz, -1.0 / dz}, {-1.0 / dz, 1.0 / dz}};
    const double mz[2][2] = {{dz / 3.0, dz / 6.0}, {dz / 6.0, dz / 3.0}};
    for (std::size_t ex = 0; ex + 1 < nx; ++ex) {
      const double dx = mesh.x[ex + 1] - mesh.x[ex];
      const double sx[2][2] = {{1.0 / dx, -1.0 / dx}, {-1.0 / dx, 1.0 / dx}};
      const double mx[2][2] = {{dx / 3.0, dx / 6.0}, {dx / 6.0, dx / 3.0}};
      const double sigma = conductivity(ez, ex);
      std::size_t nodes[4];
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) nodes[a + 2 * b] = mesh.node(ez + b, ex + a);
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a)
          for (int bb = 0; bb < 2; ++bb)
            for (int aa = 0; aa < 2; ++aa) {
              const double v = sigma * (sx[a][aa] * mz[b][bb] + mx[a][aa] * sz[b][bb] +
                                        k * k * mx[a][aa] * mz[b][bb]);
              trips.emplace_back(static_cast<int>(nodes[a + 2 * b]),
                                 static_cast<int>(nodes[aa + 2 * bb]), v);
            }
    }
  }

  // Mixed boundary: sigma * k * K1(kr)/K0(kr) * cos(theta) on bottom and side edges, with r
  // measured from the surface reference point.
  auto robin = [&](std::size_t n0, std::size_t n1, double length, double mid_x, double mid_z,
                   double nxv, double nzv, double sigma) {
    const double rx = mid_x - mesh.reference_x, rz = mid_z;
    const double r = std::hypot(rx, rz);
    const double cos_theta = (rx * nxv + rz * nzv) / r;
    double coef = 0.0;
    if (k > 0.0) {
      coef = sigma * k * bessel_ratio(k * r) * cos_theta;
    } else {
      coef = sigma * cos_theta / r;  // k -> 0 limit of the point-source decay
    }
    const double m[2][2] = {{length / 3.0, length / 6.0}, {length / 6.0, length / 3.0}};
    const std::size_t nn[2] = {n0, n1};
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2; ++q)
        trips.emplace_back(static_cast<int>(nn[p]), static_cast<int>(nn[q]), coef * m[p][q]);
  };

  const std::size_t last_z = nz - 1, last_x = nx - 1;
  for (std::size_t ex = 0; ex + 1 < nx; ++ex) {
    const double len = mesh.x[ex + 1] - mesh.x[ex];
    robin(mesh.node(last_z, ex), mesh.node(last_z, ex + 1), len, 0.5 * (mesh.x[ex] + mesh.x[ex + 1]),
          mesh.z[last_z], 0.0, 1.0, conductivity(last_z - 1, ex));
  }
  for (std::size_t ez = 0; ez + 1 < nz; ++ez) {
    const double len = mesh.z[ez + 1] - mesh.z[ez];
    const double mid_z = 0.5 * (mesh.z[ez] + mesh.z[ez + 1]);
    robin(mesh.node(ez, 0), mesh.node(ez + 1, 0), len, mesh.x[0], mid_z, -1.0, 0.0,
          conductivity(ez, 0));
    robin(mesh.node(ez, last_x), mesh.node(ez + 1, last_x), len, mesh.x[last_x], mid_z, 1.0, 0.0,
          conductivity(ez, last_x - 1));
  }

  SparseSystem sys;
  sys.wavenumber = k;
  const auto n = static_cast<Eigen::Index>(mesh.node_count());
  sys.matrix.resize(n, n);
  sys.matrix.setFromTriplets(trips.begin(), trips.end());
  sys.matrix.makeCompressed();
  sys.tags.assign(mesh.node_count(), NodeTag::Interior);
  for (std::size_t ix = 0; ix < nx; ++ix) sys.tags[mesh.node(0, ix)] = NodeTag::Surface;
  for (std::size_t ix = 0; ix < nx; ++ix) sys.tags[mesh.node(last_z, ix)] = NodeTag::Robin;
  for (std::size_t iz = 1; iz < nz; ++iz) {
    sys.tags[mesh.node(iz, 0)] = NodeTag::Robin;
    sys.tags[mesh.node(iz, last_x)] = NodeTag::Robin;
  }
  return sys;
}

SparseSystem assemble(const ResistivityModel& model, double k, const MeshOptions& opts) {
  const auto mesh = PaddedMesh::build(model.grid, opts);
  return assemble(mesh, element_conductivity(model, mesh), k);
}

CgResult solve_cg(const SparseMatrix& a, const Vector& b, double rel_tol, std::size_t max_iterations) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.size() != n) throw Error(ErrorCode::DimensionMismatch, "cg: shape mismatch");
  if (max_iterations == 0) max_iterations = 10 * static_cast<std::size_t>(n);

  Vector inv_diag = a.diagonal();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(inv_diag[i] > 0.0)) throw Error(ErrorCode::SolverDivergence, "cg: non-positive diagonal");
    inv_diag[i] = 1.0 / inv_diag[i];
  }

  CgResult res;
  res.x = Vector::Zero(n);
  const double b_norm = b.norm();
  if (b_norm == 0.0) return res;

  Vector r = b;
  Vector z = inv_diag.cwiseProduct(r);
  Vector p = z;
  Vector q(n);
  double rz = r.dot(z);
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    q.noalias() = a * p;
    const double alpha = rz / p.dot(q);
    res.x.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    const double r_norm = r.norm();
    res.iterations = it;
    res.relative_residual = r_norm / b_norm;
    if (res.relative_residual <= rel_tol) return res;
    z = inv_diag.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  throw Error(ErrorCode::SolverDivergence, "cg: no convergence after " +
                                               std::to_string(max_iterations) + " iterations (residual " +
                                               std::to_string(res.relative_residual) + ")");
}

// ---------------------------------------------------------------------------

struct ForwardSolver::Reference {
  Field sigma0;
  std::vector<SparseSystem> systems;
  std::vector<std::unique_ptr<SystemSolver>> solvers;
  std::map<std::pair<std::size_t, std::size_t>, Vector> fields;
};

ForwardSolver::ForwardSolver(const GridSpec& grid, ElectrodeLayout layout, ForwardOptions opts)
    : grid_(grid), layout_(std::move(layout)), opts_(opts), ref_(std::make_unique<Reference>()) {
  grid_.validate();
  layout_.validate(grid_);
  if (!(opts_.background > 0.0)) throw Error(ErrorCode::NonPositiveResistivity, "background must be positive");
  mesh_ = PaddedMesh::build(grid_, opts_.mesh);
  const double span = static_cast<double>(grid_.width) * grid_.cell_size;
  quadrature_ = WavenumberQuadrature::fit(layout_.spacing, std::max(24.0 * layout_.spacing, span));
  ref_->sigma0 = Field(mesh_.element_rows(), mesh_.element_cols(), 1.0 / opts_.background);
  for (double k : quadrature_.wavenumbers) {
    ref_->systems.push_back(assemble(mesh_, ref_->sigma0, k));
  }
  ref_->solvers.resize(quadrature_.size());
}

ForwardSolver::~ForwardSolver() = default;

const Vector& ForwardSolver::reference_field(std::size_t j, std::size_t source_node) {
  const auto key = std::make_pair(j, source_node);
  auto it = ref_->fields.find(key);
  if (it != ref_->fields.end()) return it->second;
  if (!ref_->solvers[j]) ref_->solvers[j] = std::make_unique<SystemSolver>(ref_->systems[j].matrix, opts_);
  Vector rhs = Vector::Zero(static_cast<Eigen::Index>(mesh_.node_count()));
  rhs[static_cast<Eigen::Index>(mesh_.node(0, source_node))] = 0.5;  // half-space, unit current
  return ref_->fields.emplace(key, ref_->solvers[j]->solve(rhs)).first->second;
}

Vector ForwardSolver::solve_secondary(const ResistivityModel& model, const SparseSystem& system,
                                      std::size_t source_node, std::size_t j) {
  if (j >= quadrature_.size() || system.wavenumber != quadrature_.wavenumbers[j])
    throw Error(ErrorCode::InvalidArgument, "system was not assembled for this wavenumber");
  if (!(model.grid == grid_)) throw Error(ErrorCode::DimensionMismatch, "model grid differs from solver grid");
  const SparseMatrix delta = (system.matrix - ref_->systems[j].matrix).pruned(0.0);
  if (delta.nonZeros() == 0) return Vector::Zero(system.matrix.rows());
  const Vector rhs = -(delta * reference_field(j, source_node));
  SystemSolver solver(system.matrix, opts_);
  return solver.solve(rhs);
}

std::vector<double> ForwardSolver::surface_potential(const ResistivityModel& model, double source_x) {
  model.validate();
  const std::size_t src = mesh_.surface_node_at(source_x);
  const Field sigma = element_conductivity(model, mesh_);
  const std::size_t first = mesh_.pad_side, count = grid_.width + 1;
  std::vector<double> out(count, 0.0);
  for (std::size_t j = 0; j < quadrature_.size(); ++j) {
    const SparseSystem sys = assemble(mesh_, sigma, quadrature_.wavenumbers[j]);
    const Vector phi = solve_secondary(model, sys, src, j);
    for (std::size_t c = 0; c < count; ++c)
      out[c] += (2.0 / std::numbers::pi) * quadrature_.weights[j] *
                phi[static_cast<Eigen::Index>(mesh_.node(0, first + c))];
  }
  for (std::size_t c = 0; c < count; ++c) {
    const double x = mesh_.x[first + c];
    out[c] = (first + c == src) ? std::numeric_limits<double>::infinity()
                                : out[c] + primary_potential(opts_.background, source_x, x, 0.0);
  }
  return out;
}

std::vector<double> ForwardSolver::discrete_halfspace_surface_potential(double source_x) {
  const std::size_t src = mesh_.surface_node_at(source_x);
  const std::size_t first = mesh_.pad_side, count = grid_.width + 1;
  std::vector<double> out(count, 0.0);
  for (std::size_t j = 0; j < quadrature_.size(); ++j) {
    const Vector& p = reference_field(j, src);
    for (std::size_t c = 0; c < count; ++c)
      out[c] += (2.0 / std::numbers::pi) * quadrature_.weights[j] *
                p[static_cast<Eigen::Index>(mesh_.node(0, first + c))];
  }
  return out;
}

Field ForwardSolver::electrode_potentials(const ResistivityModel& model) {
  model.validate();
  if (!(model.grid == grid_)) throw Error(ErrorCode::DimensionMismatch, "model grid differs from solver grid");
  const std::size_t e = layout_.size();
  std::vector<std::size_t> nodes(e);
  for (std::size_t i = 0; i < e; ++i) nodes[i] = mesh_.surface_node_at(layout_.positions[i]);

  Field phi(e, e, 0.0);
  const Field sigma = element_conductivity(model, mesh_);
  for (std::size_t j = 0; j < quadrature_.size(); ++j) {
    const SparseSystem sys = assemble(mesh_, sigma, quadrature_.wavenumbers[j]);
    const SparseMatrix delta = (sys.matrix - ref_->systems[j].matrix).pruned(0.0);
    if (delta.nonZeros() == 0) continue;
    SystemSolver solver(sys.matrix, opts_);
    const double w = (2.0 / std::numbers::pi) * quadrature_.weights[j];
    for (std::size_t s = 0; s < e; ++s) {
      const Vector rhs = -(delta * reference_field(j, nodes[s]));
      const Vector sec = solver.solve(rhs);
      for (std::size_t r = 0; r < e; ++r) phi(s, r) += w * sec[static_cast<Eigen::Index>(mesh_.node(0, nodes[r]))];
    }
  }
  for (std::size_t s = 0; s < e; ++s)
    for (std::size_t r = 0; r < e; ++r)
      phi(s, r) = s == r ? std::numeric_limits<double>::quiet_NaN()
                         : phi(s, r) + primary_potential(opts_.background, layout_.positions[s],
                                                         layout_.positions[r], 0.0);
  return phi;
}

namespace {

std::vector<Measurement> measure(const Field& phi, ArrayKind kind, std::size_t max_level,
                                 const ElectrodeLayout& layout) {
  auto data = enumerate_quadrupoles(kind, max_level, layout);
  if (data.empty()) throw Error(ErrorCode::NoFeasibleQuadrupole, "layout admits no quadrupole");
  for (auto& m : data) {
    m.delta_v_over_i = phi(m.a, m.m) - phi(m.a, m.n) - phi(m.b, m.m) + phi(m.b, m.n);
    m.apparent_resistivity = m.geometric_factor * m.delta_v_over_i;
  }
  return data;
}

void check_array(const ArrayConfig& array, const ElectrodeLayout& layout, const GridSpec& grid) {
  if (array.max_level < 1) throw Error(ErrorCode::InvalidArgument, "max_level must be >= 1");
  if (array.max_level > grid.height) throw Error(ErrorCode::InvalidArgument, "max_level exceeds grid rows");
  const std::size_t span = array.kind == ArrayKind::Wenner ? 3 * array.max_level : 2 * array.max_level + 1;
  if (span >= layout.size())
    throw Error(ErrorCode::NoFeasibleQuadrupole, "not enough electrodes for level " +
                                                     std::to_string(array.max_level));
}

}  // namespace

Section ForwardSolver::pseudo_section(const ResistivityModel& model, const ArrayConfig& array) {
  check_array(array, layout_, grid_);
  const Field phi = electrode_potentials(model);
  return rasterize_section(array.kind, array.max_level, measure(phi, array.kind, array.max_level, layout_),
                           grid_);
}

std::pair<Section, Section> ForwardSolver::sections(const ResistivityModel& model, const ArrayConfig& wenner,
                                                    const ArrayConfig& ws) {
  check_array(wenner, layout_, grid_);
  check_array(ws, layout_, grid_);
  const Field phi = electrode_potentials(model);
  return {rasterize_section(wenner.kind, wenner.max_level, measure(phi, wenner.kind, wenner.max_level, layout_), grid_),
          rasterize_section(ws.kind, ws.max_level, measure(phi, ws.kind, ws.max_level, layout_), grid_)};
}

Section rasterize_section(ArrayKind kind, std::size_t max_level, std::vector<Measurement> data,
                          const GridSpec& grid) {
  if (data.empty()) throw Error(ErrorCode::NoFeasibleQuadrupole, "no measurements to rasterize");
  Section sec;
  sec.kind = kind;
  sec.max_level = std::min(max_level, grid.height);
  sec.values = Field(grid.height, grid.width, 0.0);
  sec.coverage = Array2D<std::uint8_t>(grid.height, grid.width, 0);

  for (std::size_t level = 1; level <= sec.max_level; ++level) {
    std::vector<std::pair<double, double>> pts;  // (column coordinate, value)
    for (const auto& m : data)
      if (m.level == level) pts.emplace_back(m.midpoint / grid.cell_size - 0.5, m.apparent_resistivity);
    if (pts.empty()) throw Error(ErrorCode::NoFeasibleQuadrupole, "level " + std::to_string(level) + " is empty");
    std::sort(pts.begin(), pts.end());
    const std::size_t row = level - 1;
    for (std::size_t j = 0; j < grid.width; ++j) {
      const double c = static_cast<double>(j);
      double v;
      bool covered = false;
      if (c <= pts.front().first) {
        v = pts.front().second;
        covered = pts.front().first - c <= 0.5;
      } else if (c >= pts.back().first) {
        v = pts.back().second;
        covered = c - pts.back().first <= 0.5;
      } else {
        auto hi = std::upper_bound(pts.begin(), pts.end(), std::make_pair(c, -std::numeric_limits<double>::infinity()));
        auto lo = hi - 1;
        const double t = (c - lo->first) / (hi->first - lo->first);
        v = (1.0 - t) * lo->second + t * hi->second;
        covered = true;
      }
      sec.values(row, j) = v;
      sec.coverage(row, j) = covered ? 1 : 0;
    }
  }
  for (std::size_t row = sec.max_level; row < grid.height; ++row)
    for (std::size_t j = 0; j < grid.width; ++j) sec.values(row, j) = sec.values(sec.max_level - 1, j);
  sec.measurements = std::move(data);
  return sec;
}

}  // namespace ersinv
