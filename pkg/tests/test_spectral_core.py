import math

import numpy as np
import pytest
import scipy.sparse as sp

from grushin_lab.errors import (
    AccuracyError,
    ConfigurationError,
    DegenerateKernelError,
)
from grushin_lab.spectral_core import (
    BorderedSolver,
    Grid,
    OscillatorSpec,
    SpectralSolution,
    bordered_solve,
    build_matrix,
    critical_b1,
    eigenpairs,
    homogeneity_check,
    moment,
    projector_apply,
)


def test_grid_validation():
    with pytest.raises(ConfigurationError):
        Grid(5.0, 8)
    with pytest.raises(ConfigurationError):
        Grid(-1.0, 64)


def test_grid_points_mirror_exactly():
    for n in (17, 64, 101):
        t = Grid(3.7, n).points()
        assert np.all(t[::-1] == -t)
        assert len(t) == n
    assert 0.0 in Grid(2.0, 17).points()


def test_spec_validation():
    g = Grid(5.0, 32)
    with pytest.raises(ConfigurationError):
        OscillatorSpec(0, 1.0, 0.0, g)
    with pytest.raises(ConfigurationError):
        OscillatorSpec(2, -1.0, 0.0, g)
    with pytest.raises(ConfigurationError):
        eigenpairs(OscillatorSpec(1, 1.0, 0.0, g), 0)


def test_build_matrix_harmonic_structure():
    grid = Grid(6.0, 33)
    spec = OscillatorSpec(1, 1.0, 0.0, grid)
    m = build_matrix(spec).toarray()
    t = grid.points()
    assert np.allclose(np.diag(m), 2.0 / grid.delta ** 2 + t ** 2)
    assert np.allclose(m, m.T.conj())
    # tridiagonal
    assert np.count_nonzero(m - np.diag(np.diag(m))
                            - np.diag(np.diag(m, 1), 1)
                            - np.diag(np.diag(m, -1), -1)) == 0


def test_build_matrix_hermiticity_flag():
    grid = Grid(6.0, 33)
    spec = OscillatorSpec(1, 1.0, 1j, grid)
    assert not spec.self_adjoint
    m = build_matrix(spec).toarray()
    assert np.abs(m - m.T.conj()).max() > 0
    assert OscillatorSpec(1, 1.0, -3.0, grid).self_adjoint


def test_smallest_eigenvalue_critical_even_case():
    # c2 = a xi^2 = 4, c1 = -sqrt(a)(h+1)(2 j0+1) xi = -6 for a=1, xi=2, h=2:
    # the bottom eigenvalue vanishes; checked on two grid resolutions
    for n in (1024, 2049):
        spec = OscillatorSpec(2, 4.0, -6.0, Grid(6.0, n))
        sol = eigenpairs(spec, 2, extrapolate=False)
        assert abs(sol.spectrum[0]) < 1e-3 * abs(sol.spectrum[1] - sol.spectrum[0])


def test_harmonic_eigenvalues():
    spec = OscillatorSpec.auto(1, 1.0, 0.0, count=6)
    sol = eigenpairs(spec, 6)
    exact = np.arange(1, 12, 2)
    assert np.all(np.abs(sol.raw_coarse - exact) <= 1e-3 * exact)
    assert np.all(np.abs(sol.eigenvalues - exact) <= 1e-4 * exact)
    assert np.all(np.diff(sol.eigenvalues) > 0)


def test_eigenfunctions_normalized():
    spec = OscillatorSpec.auto(1, 2.0, -0.5, count=4)
    sol = eigenpairs(spec, 4)
    for v in sol.eigenfunctions:
        assert abs(sol.norm(v) - 1.0) <= 1e-10


def test_gaussian_ground_state(gaussian_kernel_solution):
    sol = gaussian_kernel_solution
    assert abs(sol.spectrum[sol.j0]) < 1e-6
    g = np.exp(-sol.t ** 2 / 2.0)
    g /= math.sqrt(sol.delta) * np.linalg.norm(g)
    assert sol.norm(sol.phi1 - g) <= 1e-4


@pytest.mark.parametrize("h", [1, 3])
def test_odd_h_kernel_profile(h):
    c1 = critical_b1(h, 0, 1.0, 1.0)[0]
    sol = eigenpairs(OscillatorSpec.auto(h, 1.0, c1), 1)
    g = np.exp(-sol.t ** (h + 1) / (h + 1))
    g /= math.sqrt(sol.delta) * np.linalg.norm(g)
    assert sol.norm(sol.phi1 - g) <= 1e-4


def test_critical_b1_values():
    assert critical_b1(2, 0, 1.0, 1.0) == [3.0, -3.0]
    assert critical_b1(3, 0, 1.0, 1.0) == [-3.0]
    assert critical_b1(1, 1, 1.0, 1.0) == [-3.0]
    # h=1 always reduces to -(2j+1) sqrt(a) xi
    for j in range(5):
        (v,) = critical_b1(1, j, 4.0, 0.5)
        assert v == -(2 * j + 1) * 2.0 * 0.5
    with pytest.raises(ConfigurationError):
        critical_b1(2, -1, 1.0, 1.0)


@pytest.mark.parametrize("h,j0", [(1, 0), (2, 0), (3, 1), (4, 2)])
def test_kernel_certificates(h, j0):
    for c1 in critical_b1(h, j0, 1.0, 1.0):
        spec = OscillatorSpec.auto(h, 1.0, c1, count=j0 + 3)
        sol = eigenpairs(spec, j0 + 2)
        assert sol.j0 == j0
        assert sol.kernel_ratio() <= 1e-3
        assert sol.has_kernel


def test_moments(gaussian_kernel_solution):
    sol = gaussian_kernel_solution
    assert abs(moment(sol, "phi1", 0) - 1.0) <= 1e-10
    assert abs(moment(sol, "phi1", 2) - 0.5) <= 1e-4
    # definite parity kills odd moments
    assert abs(moment(sol, "phi1", 3)) <= 1e-12
    with pytest.raises(ConfigurationError):
        moment(sol, "phi1", -1)
    with pytest.raises(ConfigurationError):
        moment(sol, "phi7", 2)


def test_parity_of_eigenfunctions(quartic_kernel_solution):
    sol = quartic_kernel_solution
    for v in sol.eigenfunctions:
        w = v[::-1]
        assert min(sol.norm(v - w), sol.norm(v + w)) <= 1e-6


def test_mu_matches_smallest_eigenvalue_squared():
    spec = OscillatorSpec.auto(2, 1.0, -1.0, count=4)
    sol = eigenpairs(spec, 4)
    lam_min = np.min(np.abs(sol.raw_coarse))
    assert abs(sol.mu1 - lam_min ** 2) <= 1e-8 * max(1.0, lam_min ** 2)
    assert sol.mu1 >= -1e-10 and sol.mu2 >= -1e-10


def test_nonselfadjoint_mu_oracle():
    # For c1 = -1 + i*gamma at h=1 the matrix is M0 + i*gamma with M0 the
    # self-adjoint critical matrix, so M*M = M0^2 + gamma^2 and
    # mu1 = min lambda^2 + gamma^2 ~= gamma^2.
    gamma = 0.3
    spec = OscillatorSpec.auto(1, 1.0, complex(-1.0, gamma))
    sol = eigenpairs(spec, 1)
    assert len(sol.eigenvalues) == 0
    assert abs(sol.mu1 - gamma ** 2) <= 1e-6
    assert abs(sol.mu2 - gamma ** 2) <= 1e-6
    g = np.exp(-sol.t ** 2 / 2.0)
    g /= math.sqrt(sol.delta) * np.linalg.norm(g)
    assert sol.norm(sol.phi1 - g) <= 1e-4
    assert sol.norm(sol.phi2 - g) <= 1e-4


def test_bordered_identities(gaussian_kernel_solution, rng):
    sol = gaussian_kernel_solution
    solver = BorderedSolver(sol)
    m = solver.matrix
    for _ in range(20):
        f = rng.standard_normal(len(sol.t)) + 1j * rng.standard_normal(len(sol.t))
        u, theta = solver.solve(f, 0.0)
        nrm = sol.norm(f)
        pi2f = sol.inner(f, sol.phi2) * sol.phi2
        assert sol.norm(m @ u + pi2f - f) <= 1e-8 * nrm
        assert abs(sol.inner(u, sol.phi1)) <= 1e-8 * nrm
        assert abs(theta - sol.inner(f, sol.phi2)) <= 1e-8 * nrm


def test_bordered_unit_scalar_gives_reduced_symbol(gaussian_kernel_solution):
    sol = gaussian_kernel_solution
    solver = BorderedSolver(sol)
    u, theta = solver.solve(np.zeros_like(sol.phi1), 1.0)
    ell = sol.inner(solver.matrix @ sol.phi1, sol.phi2)
    assert abs(theta + ell) <= 1e-8
    assert abs(ell) <= 1e-4  # kernel case: the reduced symbol nearly vanishes
    assert sol.norm(u - sol.phi1) <= 1e-6


def test_bordered_phi2_right_hand_side(gaussian_kernel_solution):
    sol = gaussian_kernel_solution
    u, _ = bordered_solve(sol, sol.phi2.astype(complex), 0.0)
    assert sol.norm(u) <= 1e-8


def test_bordered_from_spec():
    spec = OscillatorSpec.auto(1, 1.0, -1.0, n=511)
    f = np.ones(511, dtype=complex)
    u, theta = bordered_solve(spec, f, 0.0)
    assert u.shape == (511,)


def test_degenerate_kernel_raises():
    grid = Grid(4.0, 16)
    spec = OscillatorSpec(1, 1.0, 0.0, grid)
    t = grid.points()
    # two exactly-zero singular values
    m = sp.diags(np.concatenate([[0.0, 0.0], np.ones(14)])).tocsr()
    phi = np.zeros(16)
    phi[0] = 1.0 / math.sqrt(grid.delta)
    sol = SpectralSolution(
        spec=spec, t=t, eigenvalues=np.empty(0),
        eigenfunctions=np.empty((0, 16)), mu1=0.0, mu2=0.0,
        phi1=phi, phi2=phi.copy(), kernel_gap=0.0, j0=None,
        spectrum=np.empty(0))
    with pytest.raises(DegenerateKernelError):
        BorderedSolver(sol, matrix=m)


def test_projector(gaussian_kernel_solution, rng):
    sol = gaussian_kernel_solution
    assert sol.norm(projector_apply(sol, 2, sol.phi2) - sol.phi2) <= 1e-10
    # an odd function is orthogonal to the even ground state
    odd = sol.t * np.exp(-sol.t ** 2)
    assert sol.norm(projector_apply(sol, 2, odd)) <= 1e-10
    f = rng.standard_normal(len(sol.t))
    once = projector_apply(sol, 1, f)
    twice = projector_apply(sol, 1, once)
    assert sol.norm(twice - once) <= 1e-12
    with pytest.raises(ConfigurationError):
        projector_apply(sol, 3, f)


def test_homogeneity_harmonic_exact():
    spec = OscillatorSpec.auto(1, 1.0, 0.0, count=3)
    rep = homogeneity_check(spec, 4.0)
    assert rep.eig_expected == 4.0
    assert rep.eig_deviation <= 1e-8


def test_homogeneity_kernel_case_scale_invariant_zero(quartic_kernel_solution):
    rep = homogeneity_check(quartic_kernel_solution.spec, 2.0)
    assert rep.scaled_mu1 <= 1e-8
    assert rep.mu_ratio is None


def test_homogeneity_anharmonic():
    spec = OscillatorSpec.auto(3, 1.0, 1.0, count=3)
    rep = homogeneity_check(spec, 2.0)
    assert abs(rep.eig_expected - 2 ** 0.5) < 1e-12
    assert rep.eig_deviation <= 1e-3
    with pytest.raises(ConfigurationError):
        homogeneity_check(spec, 0.5)


@pytest.mark.parametrize("h", [1, 2, 3])
def test_scaling_identity_kernel_case(h):
    from dataclasses import replace

    def residual(spec):
        sol = eigenpairs(spec, 1)
        m2h = moment(sol, "phi1", 2 * spec.h).real
        mh1 = moment(sol, "phi1", spec.h - 1).real
        return m2h + complex(spec.c1).real / (2 * spec.c2) * mh1

    c1 = critical_b1(h, 0, 1.0, 1.0)[0]
    spec = OscillatorSpec.auto(h, 1.0, c1)
    r_c = residual(spec)
    r_f = residual(replace(spec, grid=spec.grid.refined()))
    assert abs((4 * r_f - r_c) / 3) <= 1e-5


def test_accuracy_error_carries_both_estimates():
    spec = OscillatorSpec(1, 1.0, 0.0, Grid(16.0, 17))
    with pytest.raises(AccuracyError) as err:
        eigenpairs(spec, 2, rtol=1e-8)
    assert err.value.coarse is not None and err.value.fine is not None


def test_spec_json_roundtrip():
    spec = OscillatorSpec(3, 2.0, complex(-1.5, 0.25), Grid(4.5, 127))
    doc = spec.to_json()
    assert doc == {"h": 3, "c2": 2.0, "c1": [-1.5, 0.25],
                   "grid": {"T": 4.5, "N": 127}}
    assert OscillatorSpec.from_json(doc) == spec


def test_solution_export(tmp_path, gaussian_kernel_solution):
    sol = gaussian_kernel_solution
    doc = sol.to_json(moment_orders=(0, 2))
    assert doc["j0"] == 0
    assert abs(doc["moments"]["phi1"]["2"][0] - 0.5) < 1e-4
    path = tmp_path / "phi.csv"
    with open(path, "w", newline="") as fh:
        sol.write_eigenfunction_csv(fh, "phi1")
    rows = path.read_text().splitlines()
    assert rows[0] == "t,re,im"
    assert len(rows) == len(sol.t) + 1
