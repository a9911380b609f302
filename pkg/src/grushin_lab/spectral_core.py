"""Spectral toolbox for the one-dimensional localized oscillator.

The model operator is ``D_t^2 + c2*t^(2h) + c1*t^(h-1)`` with ``D_t = -i d/dt``,
truncated to ``[-T, T]`` with Dirichlet ends and discretized by 3-point central
differences on a uniform grid.  The grid is mirror-symmetric (``t[N-1-k] ==
-t[k]`` exactly), so parity statements hold at machine precision.

Beyond eigenpairs this module provides the objects the reduction step needs:
the smallest singular pairs ``(mu_i, phi_i)`` of the operator, rank-one
projectors onto them, and the bordered partial inverse obtained by augmenting
the operator matrix with ``phi_2`` as an extra column and ``<., phi_1>`` as an
extra row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import beta as _beta_fn

from .errors import (
    AccuracyError,
    ConfigurationError,
    DegenerateKernelError,
)

# |lambda_j0| below this fraction of the local spectral gap counts as a kernel
KERNEL_RATIO = 1e-3

_MIN_POINTS = 16
DEFAULT_N = 2047


@dataclass(frozen=True)
class Grid:
    """Uniform grid of N interior points on [-T, T], Dirichlet boundary."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < _MIN_POINTS:
            raise ConfigurationError(f"grid too coarse: N={self.N} < {_MIN_POINTS}")
        if not self.T > 0:
            raise ConfigurationError("grid half-width T must be positive")

    @property
    def delta(self) -> float:
        return 2.0 * self.T / (self.N + 1)

    def points(self) -> np.ndarray:
        # Mirrored construction: t[N-1-k] == -t[k] bitwise, which makes parity
        # cancellations exact.  Odd N puts t = 0 on the grid.
        half = self.N // 2
        if self.N % 2:
            pos = np.arange(1, half + 1) * self.delta
            return np.concatenate([-pos[::-1], [0.0], pos])
        pos = (np.arange(half) + 0.5) * self.delta
        return np.concatenate([-pos[::-1], pos])

    def refined(self) -> "Grid":
        """Grid with halved spacing (N -> 2N+1), same half-width."""
        return Grid(self.T, 2 * self.N + 1)

    def to_json(self) -> dict:
        return {"T": self.T, "N": self.N}

    @classmethod
    def from_json(cls, d: dict) -> "Grid":
        return cls(T=float(d["T"]), N=int(d["N"]))


def _turning_point_estimate(h: int, c2: float, count: int) -> float:
    """Bohr-Sommerfeld estimate of the count-th eigenvalue of D^2 + c2 t^(2h)."""
    # action of the pure well: 4*sqrt(lam)*(lam/c2)^(1/2h) * I_h = 2*pi*(j+1/2)
    i_h = _beta_fn(1.0 / (2 * h), 1.5) / (2 * h)
    rhs = math.pi * (count + 0.5) * c2 ** (1.0 / (2 * h)) / (2.0 * i_h)
    return max(1.0, rhs ** (2.0 * h / (h + 1)))


@dataclass(frozen=True)
class OscillatorSpec:
    """Parameters (h, c2, c1) of D_t^2 + c2 t^(2h) + c1 t^(h-1) plus the grid."""

    h: int
    c2: float
    c1: complex
    grid: Grid

    def __post_init__(self):
        if int(self.h) != self.h or self.h < 1:
            raise ConfigurationError(f"h must be a positive integer, got {self.h}")
        if not self.c2 > 0:
            raise ConfigurationError(f"c2 must be positive, got {self.c2}")

    @property
    def self_adjoint(self) -> bool:
        return complex(self.c1).imag == 0.0

    def potential(self, t: np.ndarray) -> np.ndarray:
        return self.c2 * t ** (2 * self.h) + self.c1 * t ** (self.h - 1)

    def scaled(self, s: float) -> "OscillatorSpec":
        """Spec after the substitution |xi'| -> s|xi'| (c2 -> s^2 c2, c1 -> s c1).

        The grid is re-sized by the default policy because the eigenfunctions
        contract like s^(-1/(h+1)).
        """
        return OscillatorSpec.auto(self.h, s * s * self.c2, s * self.c1,
                                   n=self.grid.N)

    @classmethod
    def auto(cls, h: int, c2: float, c1: complex, *, count: int = 6,
             n: int = DEFAULT_N, margin: float = 20.0) -> "OscillatorSpec":
        """Default grid policy: the well dominates both potential terms and the
        target eigenvalue scale by ``margin`` at t = +-T, so eigenfunctions decay
        far below quadrature accuracy before the Dirichlet wall."""
        lam = _turning_point_estimate(h, c2, count) + abs(c1)
        t1 = (margin * abs(c1) / c2) ** (1.0 / (h + 1)) if c1 else 0.0
        t2 = (margin * lam / c2) ** (1.0 / (2 * h))
        T = max(t1, t2, 3.0)
        return cls(h, c2, complex(c1), Grid(T, n))

    def to_json(self) -> dict:
        c1 = complex(self.c1)
        return {"h": self.h, "c2": self.c2, "c1": [c1.real, c1.imag],
                "grid": self.grid.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "OscillatorSpec":
        re, im = d["c1"]
        return cls(h=int(d["h"]), c2=float(d["c2"]), c1=complex(re, im),
                   grid=Grid.from_json(d["grid"]))


def _diagonal(spec: OscillatorSpec, t: np.ndarray, inv2: float) -> np.ndarray:
    # summation order matches the monomial-by-monomial assembly of
    # operator_poly.to_matrix, so the two constructions agree bitwise
    return (2.0 * inv2 + complex(spec.c1) * t ** (spec.h - 1)) \
        + spec.c2 * t ** (2 * spec.h)


def build_matrix(spec: OscillatorSpec) -> sp.csr_matrix:
    """Finite-difference matrix of the localized operator (sparse, banded).

    Real symmetric tridiagonal when imag(c1) == 0, complex otherwise; in both
    cases D_t^2 is the 3-point stencil (-u_{k-1} + 2u_k - u_{k+1}) / delta^2 and
    the potential sits on the diagonal.
    """
    g = spec.grid
    t = g.points()
    inv2 = 1.0 / g.delta ** 2
    main = _diagonal(spec, t, inv2)
    if spec.self_adjoint:
        main = main.real
    off = np.full(g.N - 1, -inv2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def _tridiag_arrays(spec: OscillatorSpec) -> tuple[np.ndarray, np.ndarray]:
    g = spec.grid
    t = g.points()
    inv2 = 1.0 / g.delta ** 2
    diag = _diagonal(spec, t, inv2).real
    off = np.full(g.N - 1, -inv2)
    return diag, off


@dataclass
class SpectralSolution:
    """Eigendata of one localized operator at one parameter point.

    ``eigenvalues`` holds the first ``count`` Richardson-extrapolated
    eigenvalues (self-adjoint case; empty otherwise).  ``spectrum`` is a longer
    window used to locate the near-kernel index ``j0`` and its gap.  ``phi1``
    and ``phi2`` are the minimizing vectors of P*P and PP*, L2-normalized with
    trapezoid weights; ``mu1``/``mu2`` the corresponding smallest eigenvalues.
    """

    spec: OscillatorSpec
    t: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    mu1: float
    mu2: float
    phi1: np.ndarray
    phi2: np.ndarray
    kernel_gap: float
    j0: int | None
    spectrum: np.ndarray
    raw_coarse: np.ndarray | None = None
    raw_fine: np.ndarray | None = None

    @property
    def delta(self) -> float:
        return self.spec.grid.delta

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        """Trapezoid inner product <f, g> = delta * sum f conj(g)."""
        return self.delta * complex(np.vdot(g, f))

    def norm(self, f: np.ndarray) -> float:
        return math.sqrt(self.delta) * float(np.linalg.norm(f))

    def kernel_ratio(self) -> float:
        """|lambda_j0| over the gap to the adjacent eigenvalue (self-adjoint),
        or the singular-value ratio sqrt(mu1/mu2') in general."""
        if self.j0 is not None and len(self.spectrum) > 1:
            lam = self.spectrum
            j = self.j0
            gaps = []
            if j + 1 < len(lam):
                gaps.append(abs(lam[j + 1] - lam[j]))
            if j > 0:
                gaps.append(abs(lam[j] - lam[j - 1]))
            gap = min(gaps)
            return abs(lam[j]) / gap if gap > 0 else math.inf
        m = build_matrix(self.spec)
        mu2nd = _second_smallest_mu(m, self.phi1)
        return math.sqrt(max(self.mu1, 0.0) / mu2nd) if mu2nd > 0 else math.inf

    @property
    def has_kernel(self) -> bool:
        return self.kernel_ratio() <= KERNEL_RATIO

    def to_json(self, moment_orders: tuple[int, ...] = ()) -> dict:
        out = {
            "spec": self.spec.to_json(),
            "eigenvalues": [[complex(z).real, complex(z).imag]
                            for z in self.eigenvalues],
            "mu1": self.mu1,
            "mu2": self.mu2,
            "kernel_gap": self.kernel_gap,
            "j0": self.j0,
        }
        if moment_orders:
            out["moments"] = {
                "phi1": {str(k): _cpair(moment(self, "phi1", k))
                         for k in moment_orders}
            }
        return out

    def write_eigenfunction_csv(self, fh, which="phi1") -> None:
        """Rows (t, re, im) of a grid eigenfunction."""
        v = _select_vector(self, which)
        w = csv.writer(fh)
        w.writerow(["t", "re", "im"])
        for tk, vk in zip(self.t, v):
            z = complex(vk)
            w.writerow([repr(float(tk)), repr(z.real), repr(z.imag)])


def _cpair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _phase_fix(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    pivot = v[k]
    if pivot == 0:
        return v
    if np.iscomplexobj(v):
        return v * (abs(pivot) / pivot)
    return v if pivot > 0 else -v


def _symmetrize(v: np.ndarray, delta: float) -> np.ndarray:
    """Replace v by its dominant-parity part (exact on the mirrored grid)."""
    w = v[::-1]
    even = 0.5 * (v + w)
    odd = 0.5 * (v - w)
    pick = even if np.linalg.norm(even) >= np.linalg.norm(odd) else odd
    return pick / (math.sqrt(delta) * np.linalg.norm(pick))


def _normalize(v: np.ndarray, delta: float) -> np.ndarray:
    return v / (math.sqrt(delta) * np.linalg.norm(v))


def _sa_eigvals(spec: OscillatorSpec, grid: Grid, k: int) -> np.ndarray:
    d, e = _tridiag_arrays(replace(spec, grid=grid))
    k = min(k, grid.N)
    return sla.eigh_tridiagonal(d, e, eigvals_only=True, select="i",
                                select_range=(0, k - 1))


def _sa_eigvecs(spec: OscillatorSpec, k: int) -> tuple[np.ndarray, np.ndarray]:
    d, e = _tridiag_arrays(spec)
    k = min(k, spec.grid.N)
    w, v = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1))
    return w, v


def _deterministic_start(t: np.ndarray) -> np.ndarray:
    # asymmetric profile: nonzero overlap with either parity sector
    T = t[-1]
    return np.exp(-((t - 0.1 * T) / (0.5 * T)) ** 2)


def _smallest_eigpair(a: sp.spmatrix, t: np.ndarray, delta: float,
                      maxiter: int = 60) -> tuple[float, np.ndarray]:
    """Smallest eigenpair of a Hermitian PSD sparse matrix by inverse iteration."""
    scale = abs(a).sum(axis=1).max()
    eps = 1e-13 * scale
    lu = spla.splu((a + eps * sp.identity(a.shape[0], dtype=a.dtype,
                                          format="csc")).tocsc())
    v = _deterministic_start(t).astype(a.dtype)
    v /= np.linalg.norm(v)
    mu = float(np.real(np.vdot(v, a @ v)))
    for _ in range(maxiter):
        w = lu.solve(v)
        w /= np.linalg.norm(w)
        mu = float(np.real(np.vdot(w, a @ w)))
        res = np.linalg.norm(a @ w - mu * w)
        v = w
        if res <= 1e-13 * scale:
            break
    return mu, _normalize(v, delta)


def _second_smallest_mu(m: sp.spmatrix, phi1: np.ndarray, steps: int = 8) -> float:
    """Estimate of the second smallest eigenvalue of M*M (deflated iteration)."""
    a = (m.getH() @ m).tocsc()
    scale = abs(a).sum(axis=1).max()
    eps = 1e-13 * scale
    lu = spla.splu(a + eps * sp.identity(a.shape[0], dtype=a.dtype, format="csc"))
    u = phi1 / np.linalg.norm(phi1)
    rng = np.random.default_rng(20240528)
    v = rng.standard_normal(a.shape[0]).astype(a.dtype)
    v -= u * np.vdot(u, v)
    v /= np.linalg.norm(v)
    mu = float(np.real(np.vdot(v, a @ v)))
    for _ in range(steps):
        v = lu.solve(v)
        v -= u * np.vdot(u, v)
        nv = np.linalg.norm(v)
        if nv == 0:
            return math.inf
        v /= nv
        mu = float(np.real(np.vdot(v, a @ v)))
    return mu


def eigenpairs(spec: OscillatorSpec, count: int, *, extrapolate: bool = True,
               rtol: float = 1e-2) -> SpectralSolution:
    """Solve the localized operator for its first ``count`` eigenpairs.

    Self-adjoint path: symmetric tridiagonal solver on the grid and on the
    refined grid (delta/2), Richardson extrapolation of the eigenvalues, and
    an accuracy error if the two estimates disagree beyond ``rtol``.
    Non-self-adjoint path: smallest eigenpairs of M*M and MM* by shifted
    inverse iteration; the complex spectrum itself is not enumerated.
    """
    if count < 1:
        raise ConfigurationError("count must be >= 1")
    if spec.self_adjoint:
        return _eigenpairs_selfadjoint(spec, count, extrapolate, rtol)
    return _eigenpairs_general(spec, count)


def _eigenpairs_selfadjoint(spec, count, extrapolate, rtol):
    grid = spec.grid
    t = grid.points()
    k_int = max(count + 2, 8)
    lam_c = _sa_eigvals(spec, grid, k_int)
    if extrapolate:
        lam_f = _sa_eigvals(spec, grid.refined(), k_int)
        scale = np.maximum(1.0, np.abs(lam_f))
        if np.any(np.abs(lam_c - lam_f) > rtol * scale):
            raise AccuracyError(
                "eigenvalues did not converge between N and 2N+1 grids",
                coarse=lam_c, fine=lam_f)
        lam = (4.0 * lam_f - lam_c) / 3.0
    else:
        lam_f = None
        lam = lam_c
    j0 = int(np.argmin(np.abs(lam)))

    n_vec = max(count, j0 + 1)
    _, vecs = _sa_eigvecs(spec, n_vec)
    funcs = np.empty((count, grid.N))
    for j in range(count):
        v = _normalize(vecs[:, j], grid.delta)
        if spec.h % 2 == 1:
            v = _symmetrize(v, grid.delta)
        funcs[j] = _phase_fix(v)
    phi = _normalize(vecs[:, j0], grid.delta)
    if spec.h % 2 == 1:
        phi = _symmetrize(phi, grid.delta)
    phi = _phase_fix(phi)

    mu = float(lam_c[j0] ** 2)
    gaps = np.abs(np.diff(lam))
    kernel_gap = float(np.min(np.abs(lam)))
    return SpectralSolution(
        spec=spec, t=t, eigenvalues=lam[:count], eigenfunctions=funcs,
        mu1=mu, mu2=mu, phi1=phi, phi2=phi.copy(), kernel_gap=kernel_gap,
        j0=j0, spectrum=lam,
        raw_coarse=lam_c[:count], raw_fine=None if lam_f is None else lam_f[:count])


def _eigenpairs_general(spec, count):
    grid = spec.grid
    t = grid.points()
    m = build_matrix(spec).astype(np.complex128)
    a1 = (m.getH() @ m).tocsc()
    a2 = (m @ m.getH()).tocsc()
    mu1, phi1 = _smallest_eigpair(a1, t, grid.delta)
    mu2, phi2 = _smallest_eigpair(a2, t, grid.delta)
    if spec.h % 2 == 1:
        phi1 = _symmetrize(phi1, grid.delta)
        phi2 = _symmetrize(phi2, grid.delta)
    phi1 = _phase_fix(phi1)
    phi2 = _phase_fix(phi2)
    kernel_gap = math.sqrt(max(min(mu1, mu2), 0.0))
    return SpectralSolution(
        spec=spec, t=t, eigenvalues=np.empty(0),
        eigenfunctions=np.empty((0, grid.N)),
        mu1=max(mu1, 0.0) if mu1 > -1e-10 else mu1,
        mu2=max(mu2, 0.0) if mu2 > -1e-10 else mu2,
        phi1=phi1, phi2=phi2, kernel_gap=kernel_gap, j0=None,
        spectrum=np.empty(0))


def critical_b1(h: int, j0: int, a: float, xi_norm: float) -> list[complex]:
    """Values of b1 at which the j0-th eigenvalue of the localized operator
    vanishes: a symmetric pair for even h, a single negative value for odd h."""
    if j0 < 0:
        raise ConfigurationError("j0 must be >= 0")
    if int(h) != h or h < 1:
        raise ConfigurationError("h must be a positive integer")
    if not (a > 0 and xi_norm > 0):
        raise ConfigurationError("a and xi_norm must be positive")
    root_a = math.sqrt(a)
    if h % 2 == 0:
        v = root_a * (h + 1) * (2 * j0 + 1) * xi_norm
        return [complex(v), complex(-v)]
    theta = 1 if j0 % 2 == 0 else 0
    v = ((-1) ** j0 - (h + 1) * (j0 + theta)) * root_a * xi_norm
    return [complex(v)]


def _select_vector(solution: SpectralSolution, which) -> np.ndarray:
    if which == "phi1":
        return solution.phi1
    if which == "phi2":
        return solution.phi2
    if isinstance(which, (int, np.integer)):
        return solution.eigenfunctions[int(which)]
    raise ConfigurationError(f"unknown eigenfunction selector: {which!r}")


def moment(solution: SpectralSolution, which, k: int) -> complex:
    """Trapezoid value of <t^k phi, phi> for a stored grid function."""
    if k < 0:
        raise ConfigurationError("moment order must be >= 0")
    v = _select_vector(solution, which)
    return solution.delta * complex(np.sum(solution.t ** k * np.abs(v) ** 2))


def projector_apply(solution: SpectralSolution, side: int, f: np.ndarray) -> np.ndarray:
    """Rank-one orthogonal projection <f, phi_side> phi_side."""
    if side not in (1, 2):
        raise ConfigurationError("side must be 1 or 2")
    phi = solution.phi1 if side == 1 else solution.phi2
    return solution.inner(f, phi) * phi


class BorderedSolver:
    """LU factorization of the bordered matrix [[M, phi2], [<., phi1>, 0]].

    ``solve(f, s)`` returns (u, theta) with M u + theta phi2 = f and
    <u, phi1> = s.  With s = 0 this realizes the partial inverse E (u = E f,
    theta = <f, phi2>); with f = 0, s = 1 it returns u = phi1 and
    theta = -<P phi1, phi2>.
    """

    def __init__(self, solution: SpectralSolution, matrix: sp.spmatrix | None = None):
        self.solution = solution
        m = build_matrix(solution.spec) if matrix is None else matrix
        m = m.astype(np.complex128)
        self.matrix = m.tocsr()
        # the bordered system is singular exactly when the zero singular value
        # is not simple: both mu1 and the deflated second value near zero
        mu2nd = _second_smallest_mu(self.matrix, solution.phi1)
        scale = abs(self.matrix).sum(axis=1).max() ** 2
        if not math.isfinite(mu2nd) or mu2nd <= 1e-20 * scale:
            raise DegenerateKernelError(
                "smallest singular value is not simple "
                f"(mu1={max(solution.mu1, 0.0):.3e}, next={mu2nd:.3e})")
        n = m.shape[0]
        delta = solution.delta
        col = sp.csc_matrix(solution.phi2.reshape(n, 1).astype(np.complex128))
        row = sp.csc_matrix((delta * np.conj(solution.phi1)).reshape(1, n))
        corner = sp.coo_matrix(([0.0 + 0.0j], ([0], [0])), shape=(1, 1))
        bordered = sp.bmat([[m, col], [row, corner]], format="csc")
        try:
            self._lu = spla.splu(bordered)
        except RuntimeError as exc:
            raise DegenerateKernelError(
                f"bordered matrix is numerically singular: {exc}") from exc
        self._n = n

    def solve(self, rhs_function: np.ndarray, rhs_scalar: complex = 0.0
              ) -> tuple[np.ndarray, complex]:
        rhs = np.empty(self._n + 1, dtype=np.complex128)
        rhs[:self._n] = rhs_function
        rhs[self._n] = rhs_scalar
        x = self._lu.solve(rhs)
        return x[:self._n], complex(x[self._n])

    def partial_inverse(self, f: np.ndarray) -> np.ndarray:
        return self.solve(f, 0.0)[0]


def bordered_solve(spec_or_solution, rhs_function: np.ndarray,
                   rhs_scalar: complex = 0.0) -> tuple[np.ndarray, complex]:
    """One-shot bordered solve; accepts an OscillatorSpec or a SpectralSolution."""
    if isinstance(spec_or_solution, OscillatorSpec):
        solution = eigenpairs(spec_or_solution, count=1)
    else:
        solution = spec_or_solution
    return BorderedSolver(solution).solve(rhs_function, rhs_scalar)


@dataclass(frozen=True)
class HomogeneityReport:
    """Deviation of the spectral data from exact anisotropic scaling."""

    s: float
    mu_ratio: float | None
    mu_expected: float
    mu_deviation: float | None
    eig_ratios: np.ndarray
    eig_expected: float
    eig_deviation: float
    scaled_mu1: float

    def to_json(self) -> dict:
        return {
            "s": self.s,
            "mu_ratio": self.mu_ratio,
            "mu_expected": self.mu_expected,
            "mu_deviation": self.mu_deviation,
            "eig_expected": self.eig_expected,
            "eig_deviation": self.eig_deviation,
            "scaled_mu1": self.scaled_mu1,
        }


def homogeneity_check(spec: OscillatorSpec, s: float, *, count: int = 3
                      ) -> HomogeneityReport:
    """Compare mu1 and eigenvalue ratios under |xi'| -> s|xi'| with the exact
    powers s^(4/(h+1)) and s^(2/(h+1))."""
    if not s > 1:
        raise ConfigurationError("scaling factor s must exceed 1")
    base = eigenpairs(spec, count) if spec.self_adjoint else \
        _eigenpairs_general(spec, count)
    scaled = spec.scaled(s)
    other = eigenpairs(scaled, count) if scaled.self_adjoint else \
        _eigenpairs_general(scaled, count)
    h = spec.h
    mu_expected = s ** (4.0 / (h + 1))
    eig_expected = s ** (2.0 / (h + 1))
    if base.kernel_ratio() > KERNEL_RATIO:
        mu_ratio = other.mu1 / base.mu1
        mu_dev = abs(mu_ratio - mu_expected) / mu_expected
    else:
        mu_ratio = None
        mu_dev = None
    tiny = 1e-8 * max(1.0, float(np.max(np.abs(base.spectrum)))
                      if len(base.spectrum) else 1.0)
    if len(base.eigenvalues) and len(other.eigenvalues):
        mask = np.abs(base.eigenvalues) > tiny
        ratios = np.where(mask, other.eigenvalues / np.where(mask, base.eigenvalues, 1.0), np.nan)
        devs = np.abs(ratios[mask] - eig_expected) / eig_expected
        eig_dev = float(np.max(devs)) if devs.size else 0.0
    else:
        ratios = np.empty(0)
        eig_dev = math.nan
    return HomogeneityReport(
        s=s, mu_ratio=mu_ratio, mu_expected=mu_expected, mu_deviation=mu_dev,
        eig_ratios=ratios, eig_expected=eig_expected, eig_deviation=eig_dev,
        scaled_mu1=other.mu1)
