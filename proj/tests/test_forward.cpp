#include "doctest.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ersinv/forward.hpp"

using namespace ersinv;

namespace {

constexpr double kPi = std::numbers::pi;

// Superposed half-space potentials: K = 2 pi / (1/AM - 1/AN - 1/BM + 1/BN).
double superposition_k(double a, double b, double m, double n) {
  auto inv = [](double p, double q) { return 1.0 / std::abs(p - q); };
  return 2.0 * kPi / (inv(a, m) - inv(a, n) - inv(b, m) + inv(b, n));
}

ResistivityModel block_model(const GridSpec& g, double value, std::size_t r0, std::size_t r1, std::size_t c0,
                             std::size_t c1) {
  auto m = ResistivityModel::homogeneous(g);
  for (std::size_t i = r0; i < r1; ++i)
    for (std::size_t j = c0; j < c1; ++j) m.values(i, j) = value;
  return m;
}

Eigen::MatrixXd dense(const SparseMatrix& s) { return Eigen::MatrixXd(s); }

}  // namespace

TEST_CASE("primary potential closed form") {
  CHECK(primary_potential(500.0, 0.0, 1.0, 0.0) == doctest::Approx(79.5774715459).epsilon(1e-10));
  // Image method in a full space: source and its mirror coincide for a surface source.
  const double r = std::hypot(3.0, 4.0);
  const double image = 500.0 / (4.0 * kPi) * (1.0 / r + 1.0 / r);
  CHECK(primary_potential(500.0, 1.0, 4.0, 4.0) == doctest::Approx(image).epsilon(1e-12));
  CHECK(primary_potential(500.0, 0.0, 2.0, 0.0) == doctest::Approx(0.5 * primary_potential(500.0, 0.0, 1.0, 0.0)));
  CHECK(primary_potential(0.0, 0.0, 2.0, 0.0) == 0.0);
  try {
    primary_potential(500.0, 2.0, 2.0, 0.0);
    FAIL("expected Singular");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Singular);
  }
}

TEST_CASE("geometric factors match superposition") {
  CHECK(geometric_factor(ArrayKind::Wenner, 3.0, 1) == doctest::Approx(6.0 * kPi).epsilon(1e-12));
  CHECK(geometric_factor(ArrayKind::Wenner, 3.0, 1) == doctest::Approx(superposition_k(0, 9, 3, 6)).epsilon(1e-12));
  CHECK(geometric_factor(ArrayKind::WennerSchlumberger, 1.0, 2) == doctest::Approx(6.0 * kPi).epsilon(1e-12));
  for (std::size_t n = 1; n <= 6; ++n) {
    const double a = 4.0;
    const double nd = static_cast<double>(n);
    CHECK(geometric_factor(ArrayKind::Wenner, a, n) ==
          doctest::Approx(superposition_k(0, 3 * nd * a, nd * a, 2 * nd * a)).epsilon(1e-12));
    CHECK(geometric_factor(ArrayKind::WennerSchlumberger, a, n) ==
          doctest::Approx(superposition_k(0, (2 * nd + 1) * a, nd * a, (nd + 1) * a)).epsilon(1e-12));
    CHECK(geometric_factor(ArrayKind::Wenner, 2 * a, n) == doctest::Approx(2 * geometric_factor(ArrayKind::Wenner, a, n)));
  }
}

TEST_CASE("quadrature reproduces the inverse distance") {
  const auto q = WavenumberQuadrature::fit(4.0, 96.0);
  REQUIRE(q.size() == 6);
  for (std::size_t j = 0; j < q.size(); ++j) {
    CHECK(q.weights[j] > 0.0);
    if (j) CHECK(q.wavenumbers[j] > q.wavenumbers[j - 1]);
  }
  for (double r = 4.0; r <= 40.0; r += 0.5) CHECK(std::abs(q.inverse_r(r) * r - 1.0) <= 0.005);
}

TEST_CASE("hand-assembled 2x2 element mesh") {
  const auto mesh = PaddedMesh::from_coordinates({0.0, 1.0, 2.0}, {0.0, 1.0, 2.0});
  const double sigma = 0.01, k = 0.3;
  const auto sys = assemble(mesh, Field(2, 2, sigma), k);
  REQUIRE(sys.dimension() == 9);
  const auto a = dense(sys.matrix);
  const std::size_t c = mesh.node(1, 1);
  // Unit square bilinear element: stiffness 2/3 (self), -1/6 (edge), -1/3 (diagonal);
  // mass 4/36, 2/36, 1/36. The centre node touches all four elements.
  const double stiff_self = 4 * (2.0 / 3.0), stiff_edge = 2 * (-1.0 / 6.0), stiff_diag = -1.0 / 3.0;
  const double mass_self = 4 * 4.0 / 36.0, mass_edge = 2 * 2.0 / 36.0, mass_diag = 1.0 / 36.0;
  CHECK(a(c, c) == doctest::Approx(sigma * (stiff_self + k * k * mass_self)).epsilon(1e-14));
  for (auto [iz, ix] : {std::pair{0, 1}, {1, 0}, {1, 2}, {2, 1}})
    CHECK(a(c, mesh.node(iz, ix)) == doctest::Approx(sigma * (stiff_edge + k * k * mass_edge)).epsilon(1e-14));
  for (auto [iz, ix] : {std::pair{0, 0}, {0, 2}, {2, 0}, {2, 2}})
    CHECK(a(c, mesh.node(iz, ix)) == doctest::Approx(sigma * (stiff_diag + k * k * mass_diag)).epsilon(1e-14));
  // Interior row sum = k^2 sigma * (total mass around the node) = k^2 sigma h^2.
  CHECK(a.row(static_cast<Eigen::Index>(c)).sum() == doctest::Approx(k * k * sigma).epsilon(1e-12));
  CHECK((a - a.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sys.tags[c] == NodeTag::Interior);
  CHECK(sys.tags[mesh.node(0, 1)] == NodeTag::Surface);
  CHECK(sys.tags[mesh.node(2, 1)] == NodeTag::Robin);
}

TEST_CASE("assembled matrix symmetry, scaling and size") {
  const GridSpec g = desk_grid();
  auto m = block_model(g, 10.0, 4, 12, 30, 40);
  m.values(20, 70) = 2000.0;
  const auto sys = assemble(m, 0.05);
  const MeshOptions o;
  CHECK(sys.dimension() == (g.height + o.pad_down + 1) * (g.width + 2 * o.pad_side + 1));
  const SparseMatrix t = sys.matrix.transpose();
  CHECK((sys.matrix - t).norm() == 0.0);

  ResistivityModel scaled = m;
  for (auto& v : scaled.values.data()) v *= 4.0;
  const auto s0 = assemble(m, 0.0), s4 = assemble(scaled, 0.0);
  CHECK((s0.matrix - 4.0 * s4.matrix).norm() <= 1e-12 * s0.matrix.norm());

  auto bad = m;
  bad.values(3, 3) = 0.0;
  try {
    assemble(bad, 0.1);
    FAIL("expected NonPositiveResistivity");
  } catch (const Error& e) {
    CHECK((e.code() == ErrorCode::NonPositiveResistivity || e.code() == ErrorCode::InvalidArgument));
  }
}

TEST_CASE("conjugate gradients agree with a direct solve") {
  const auto m = block_model(desk_grid(), 20.0, 6, 14, 40, 52);
  const auto sys = assemble(m, 0.1);
  Vector b = Vector::Zero(sys.matrix.rows());
  b[123] = 0.5;
  b[400] = -0.25;
  const auto cg = solve_cg(sys.matrix, b);
  CHECK(cg.relative_residual <= 1e-10);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(sys.matrix);
  const Vector x = ldlt.solve(b);
  CHECK((cg.x - x).norm() <= 1e-8 * x.norm());
  const auto cg2 = solve_cg(sys.matrix, 2.0 * b);
  CHECK((cg2.x - 2.0 * cg.x).norm() <= 1e-8 * cg.x.norm());
  CHECK_THROWS_AS(solve_cg(sys.matrix, b, 1e-14, 3), Error);
}

TEST_CASE("secondary potential: zero for homogeneous, negative above a conductor") {
  const GridSpec g{16, 16, 1.0};
  ForwardSolver solver(g, ElectrodeLayout::regular(g, 4));
  const auto& mesh = solver.mesh();
  const std::size_t src = mesh.surface_node_at(8.0);

  const auto homo = ResistivityModel::homogeneous(g);
  const auto sys_h = assemble(mesh, element_conductivity(homo, mesh), solver.quadrature().wavenumbers[0]);
  CHECK(solver.solve_secondary(homo, sys_h, src, 0).cwiseAbs().maxCoeff() == 0.0);

  const auto block = block_model(g, 10.0, 2, 6, 6, 10);
  const double k = solver.quadrature().wavenumbers[0];
  const auto sys = assemble(mesh, element_conductivity(block, mesh), k);
  const Vector phi = solver.solve_secondary(block, sys, src, 0);

  // Dense oracle: phi_s = (A^-1 - A0^-1) (e_s / 2).
  Eigen::VectorXd e = Eigen::VectorXd::Zero(sys.matrix.rows());
  e[static_cast<Eigen::Index>(src)] = 0.5;
  const Eigen::VectorXd full = dense(sys.matrix).lu().solve(e);
  const Eigen::VectorXd base = dense(sys_h.matrix).lu().solve(e);
  const Eigen::VectorXd oracle = full - base;
  CHECK((phi - oracle).norm() <= 1e-8 * oracle.norm());
  for (double x : {7.0, 8.0, 9.0}) {
    const auto node = static_cast<Eigen::Index>(mesh.surface_node_at(x));
    CHECK(phi[node] < 0.0);
    CHECK(oracle[node] < 0.0);
  }
}

TEST_CASE("homogeneous half-space closes on the analytic potential") {
  const GridSpec g = desk_grid();
  ForwardSolver solver(g, ElectrodeLayout::regular(g, 4));
  const auto homo = ResistivityModel::homogeneous(g);
  const auto phi = solver.surface_potential(homo, 40.0);
  REQUIRE(phi.size() == g.width + 1);
  for (std::size_t c = 0; c <= g.width; ++c) {
    if (c == 40) {
      CHECK(std::isinf(phi[c]));
      continue;
    }
    const double exact = primary_potential(500.0, 40.0, static_cast<double>(c), 0.0);
    CHECK(std::abs(phi[c] / exact - 1.0) <= 0.01);
  }
  // The purely discrete solution carries the mesh error; it must still be close beyond one spacing.
  const auto disc = solver.discrete_halfspace_surface_potential(40.0);
  for (std::size_t c = 0; c <= g.width; ++c) {
    const double r = std::abs(static_cast<double>(c) - 40.0);
    if (r < 4.0) continue;
    const double exact = primary_potential(500.0, 40.0, static_cast<double>(c), 0.0);
    CHECK(std::abs(disc[c] / exact - 1.0) <= (r < 8.0 ? 0.02 : 0.01));
  }
}

TEST_CASE("mesh refinement reduces the discrete half-space error") {
  const GridSpec coarse{32, 96, 1.0}, fine{64, 192, 0.5};
  ForwardSolver sc(coarse, ElectrodeLayout::regular(coarse, 4));
  ForwardSolver sf(fine, ElectrodeLayout::regular(fine, 8));
  const auto pc = sc.discrete_halfspace_surface_potential(40.0);
  const auto pf = sf.discrete_halfspace_surface_potential(40.0);
  for (double x : {44.0, 48.0, 52.0}) {
    const double exact = primary_potential(500.0, 40.0, x, 0.0);
    const double err_c = std::abs(pc[static_cast<std::size_t>(x)] / exact - 1.0);
    const double err_f = std::abs(pf[static_cast<std::size_t>(2 * x)] / exact - 1.0);
    CHECK(err_f < err_c);
  }
}

TEST_CASE("reciprocity of electrode potentials") {
  const GridSpec g = desk_grid();
  ForwardSolver solver(g, ElectrodeLayout::regular(g, 4));
  auto m = block_model(g, 10.0, 3, 11, 20, 28);
  for (std::size_t i = 10; i < 18; ++i)
    for (std::size_t j = 60; j < 80; ++j) m.values(i, j) = 2000.0;
  const auto phi = solver.electrode_potentials(m);
  for (std::size_t s = 0; s < phi.rows(); ++s)
    for (std::size_t e = s + 1; e < phi.cols(); ++e)
      CHECK(std::abs(phi(s, e) - phi(e, s)) <= 1e-8 * std::abs(phi(s, e)));
}

TEST_CASE("pseudo-sections: half-space, conductor, resistor, superposition") {
  const GridSpec g = desk_grid();
  const auto layout = ElectrodeLayout::regular(g, 4);
  ForwardSolver solver(g, layout);
  const auto wen = ArrayConfig::largest_feasible(ArrayKind::Wenner, layout.size(), g.height);
  const auto ws = ArrayConfig::largest_feasible(ArrayKind::WennerSchlumberger, layout.size(), g.height);
  CHECK(wen.max_level == 8);
  CHECK(ws.max_level == 11);

  const auto [hw, hs] = solver.sections(ResistivityModel::homogeneous(g), wen, ws);
  for (const auto* sec : {&hw, &hs}) {
    CHECK(sec->values.rows() == g.height);
    CHECK(sec->values.cols() == g.width);
    CHECK(!sec->measurements.empty());
    for (const auto& m : sec->measurements) CHECK(std::abs(m.apparent_resistivity / 500.0 - 1.0) <= 0.05);
    for (double v : sec->values.data()) CHECK(std::abs(v / 500.0 - 1.0) <= 0.05);
  }

  const auto cond = block_model(g, 10.0, 6, 14, 36, 44);
  const auto [cw, cs] = solver.sections(cond, wen, ws);
  double mn = 1e9;
  for (const auto& m : cw.measurements) mn = std::min(mn, m.apparent_resistivity);
  CHECK(mn < 500.0);

  const auto res = block_model(g, 2000.0, 6, 14, 36, 44);
  const auto rw = solver.pseudo_section(res, wen);
  double mx = 0.0;
  for (const auto& m : rw.measurements) mx = std::max(mx, m.apparent_resistivity);
  CHECK(mx > 500.0);

  // Each reading is K * (phi_A - phi_B) at M minus at N, from single-source potentials.
  const auto phi = solver.electrode_potentials(cond);
  for (const auto& m : cw.measurements) {
    const double dv = (phi(m.a, m.m) - phi(m.b, m.m)) - (phi(m.a, m.n) - phi(m.b, m.n));
    CHECK(m.delta_v_over_i == doctest::Approx(dv).epsilon(1e-12));
    CHECK(m.apparent_resistivity == doctest::Approx(m.geometric_factor * dv).epsilon(1e-12));
  }
}

TEST_CASE("quadrupole enumeration and infeasible arrays") {
  const auto layout = ElectrodeLayout::regular(desk_grid(), 4);
  CHECK(layout.size() == 25);
  const auto q = enumerate_quadrupoles(ArrayKind::Wenner, 2, layout);
  // Level n uses 3n+1 consecutive slots: 22 quadrupoles at n=1, 19 at n=2.
  CHECK(q.size() == 22 + 19);
  for (const auto& m : q) {
    CHECK(m.m - m.a == m.level);
    CHECK(m.n - m.m == m.level);
    CHECK(m.b - m.n == m.level);
  }
  const auto qs = enumerate_quadrupoles(ArrayKind::WennerSchlumberger, 1, layout);
  for (const auto& m : qs) {
    CHECK(m.n - m.m == 1);
    CHECK(m.m - m.a == 1);
  }
  try {
    ArrayConfig::largest_feasible(ArrayKind::Wenner, 3, 32);
    FAIL("expected NoFeasibleQuadrupole");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoFeasibleQuadrupole);
  }
}

TEST_CASE("rasterized section places readings on tier rows") {
  const GridSpec g = desk_grid();
  const auto layout = ElectrodeLayout::regular(g, 4);
  auto data = enumerate_quadrupoles(ArrayKind::Wenner, 8, layout);
  for (auto& m : data) {
    m.apparent_resistivity = 100.0 * static_cast<double>(m.level) + m.midpoint;
  }
  const auto sec = rasterize_section(ArrayKind::Wenner, 8, data, g);
  // Readings are linear in the midpoint along each tier, so interpolation is exact inside the
  // covered span and flat outside it.
  for (std::size_t n = 1; n <= 8; ++n) {
    double lo = 1e9, hi = -1e9;
    for (const auto& m : data)
      if (m.level == n) {
        lo = std::min(lo, m.midpoint);
        hi = std::max(hi, m.midpoint);
      }
    for (std::size_t j = 0; j < g.width; ++j) {
      const double x = (static_cast<double>(j) + 0.5) * g.cell_size;
      const double expect = 100.0 * static_cast<double>(n) + std::clamp(x, lo, hi);
      CHECK(sec.values(n - 1, j) == doctest::Approx(expect).epsilon(1e-12));
      // Cells within half a cell of a reading count as covered.
      const double half = 0.5 * g.cell_size;
      CHECK(sec.coverage(n - 1, j) == ((x >= lo - half && x <= hi + half) ? 1 : 0));
    }
  }
  // Rows below the deepest level repeat it.
  for (std::size_t i = 8; i < g.height; ++i)
    for (std::size_t j = 0; j < g.width; ++j) CHECK(sec.values(i, j) == sec.values(7, j));
}
