"""Scalar tests for anisotropic polyhomogeneous symbols.

A symbol field bundles a principal part ``a(y, eta)`` of homogeneity ``m'``
and one lower-order part at ``m' - r/(h+1)``, both as numeric handles over
``R^nu x (R^nu \\ 0)``.  The checks implemented here decide hypoellipticity
with minimal loss for the reduced operator:

* ``check_H2``: the nonnegative parabola ``q(z) = |a z + b|^2`` must stay
  bounded away from zero for z >= 0 uniformly on a neighborhood of the
  characteristic point (b is the lower-order part);
* ``check_h3``: same with ``|b|^2`` augmented by the bracket
  ``(1/i){conj a, a}`` (the h = 3 peculiarity);
* ``tangential_sign``: the sign of ``(1/i){a, conj a}`` at the base point;
* ``localization_probe``: quantizes the symbol by direct oscillatory
  summation and fits the growth exponent of ``||A u_t||^2`` on the
  concentrating family ``u_t(y) = e^{i t^2 y eta_0} v(t(y - y_0))``.

Handle convention: ``f(y, eta)`` receives coordinate-first arrays (shape
``(nu,)`` for scalar points, or broadcastable slabs for vectorized grids).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ConfigurationError, PreconditionError, SymbolDomainError

CHAR_TOL = 1e-10


# ---------------------------------------------------------------------------
# finite-difference derivatives and Poisson brackets

def _partial_fd(fn: Callable, y: np.ndarray, eta: np.ndarray, slot: str,
                j: int, step: float = 1e-5) -> tuple[complex, float]:
    """Central difference with one Richardson pass; returns (value, error)."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)

    def shifted(s):
        yy, ee = y.copy(), eta.copy()
        if slot == "y":
            yy[j] += s
        else:
            ee[j] += s
        return complex(np.asarray(fn(yy, ee)).reshape(()))

    def central(s):
        return (shifted(s) - shifted(-s)) / (2.0 * s)

    d1 = central(step)
    d2 = central(step / 2.0)
    value = (4.0 * d2 - d1) / 3.0
    return value, abs(d2 - d1) / 3.0 + 1e-13 * (1.0 + abs(value))


def poisson_bracket_fd(f: Callable, g: Callable, y, eta, *,
                       step: float = 1e-5) -> tuple[complex, float]:
    """{f, g} = sum_j (d_eta_j f d_y_j g - d_y_j f d_eta_j g) by central
    differences with Richardson; returns (value, error estimate)."""
    y = np.asarray(y, dtype=float)
    eta = np.asarray(eta, dtype=float)
    total = 0.0 + 0.0j
    err = 0.0
    for j in range(len(y)):
        fe, e1 = _partial_fd(f, y, eta, "eta", j, step)
        gy, e2 = _partial_fd(g, y, eta, "y", j, step)
        fy, e3 = _partial_fd(f, y, eta, "y", j, step)
        ge, e4 = _partial_fd(g, y, eta, "eta", j, step)
        total += fe * gy - fy * ge
        err += abs(fe) * e2 + abs(gy) * e1 + abs(fy) * e4 + abs(ge) * e3
    return total, err


def conjugate_bracket(a_fn: Callable, y, eta, *, step: float = 1e-5
                      ) -> tuple[float, float]:
    """(1/i){conj(a), a} = 2 {Re a, Im a}; real by construction."""
    def u(yy, ee):
        return np.real(a_fn(yy, ee))

    def v(yy, ee):
        return np.imag(a_fn(yy, ee))

    val, err = poisson_bracket_fd(u, v, y, eta, step=step)
    return 2.0 * float(np.real(val)), 2.0 * err


# ---------------------------------------------------------------------------
# symbol fields

@dataclass
class SymbolField:
    """Principal and one subprincipal handle plus base point and sample patch."""

    nu: int
    m_prime: Fraction
    r: int
    h: int
    principal: Callable
    subprincipal: Callable | None
    y0: np.ndarray
    eta0: np.ndarray
    neighborhood: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        self.y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        self.eta0 = np.atleast_1d(np.asarray(self.eta0, dtype=float))
        if len(self.y0) != self.nu or len(self.eta0) != self.nu:
            raise ConfigurationError("base point dimension mismatch")
        if not np.linalg.norm(self.eta0) > 0:
            raise ConfigurationError("eta0 must be nonzero")

    def principal_at(self, y, eta) -> complex:
        return complex(np.asarray(self.principal(np.asarray(y, dtype=float),
                                                 np.asarray(eta, dtype=float))
                                  ).reshape(()))

    def sub_at(self, y, eta) -> complex:
        if self.subprincipal is None:
            return 0.0 + 0.0j
        return complex(np.asarray(self.subprincipal(np.asarray(y, dtype=float),
                                                    np.asarray(eta, dtype=float))
                                  ).reshape(()))

    def validate(self, *, require_char: bool = True, samples: int = 10,
                 tol: float = 1e-8) -> None:
        """Characteristic-point and homogeneity spot checks."""
        if require_char and abs(self.principal_at(self.y0, self.eta0)) > CHAR_TOL:
            raise SymbolDomainError(
                "principal symbol does not vanish at the declared "
                f"characteristic point (|a| = "
                f"{abs(self.principal_at(self.y0, self.eta0)):.2e})")
        rng = np.random.default_rng(20240612)
        factor = 2.0 ** float(self.m_prime)
        for _ in range(samples):
            y = self.y0 + 0.2 * rng.standard_normal(self.nu)
            eta = self.eta0 * (1.0 + 0.2 * rng.random()) \
                + 0.1 * rng.standard_normal(self.nu)
            if np.linalg.norm(eta) < 0.3:
                continue
            v1 = self.principal_at(y, 2.0 * eta)
            v0 = self.principal_at(y, eta)
            if abs(v1 - factor * v0) > tol * max(1.0, abs(v0)):
                raise SymbolDomainError(
                    f"principal symbol is not {self.m_prime}-homogeneous "
                    f"(deviation {abs(v1 - factor * v0):.2e} at a spot check)")


def cosphere_patch(y0, eta0, *, radius: float = 0.1, count: int = 21
                   ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sample grid around (y0, eta0) with |eta| frozen on the unit sphere:
    a y-interval for nu = 1, a y-box times an eta-arc for nu = 2."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    eta0 = np.atleast_1d(np.asarray(eta0, dtype=float))
    nu = len(y0)
    eta_hat = eta0 / np.linalg.norm(eta0)
    if nu == 1:
        ys = np.linspace(y0[0] - radius, y0[0] + radius, count)
        return [(np.array([y]), eta_hat.copy()) for y in ys]
    if nu == 2:
        side = max(3, int(round(math.sqrt(count))))
        ys1 = np.linspace(y0[0] - radius, y0[0] + radius, side)
        ys2 = np.linspace(y0[1] - radius, y0[1] + radius, side)
        phi0 = math.atan2(eta_hat[1], eta_hat[0])
        angles = np.linspace(phi0 - radius, phi0 + radius, side)
        out = []
        for u in ys1:
            for w in ys2:
                for ang in angles:
                    out.append((np.array([u, w]),
                                np.array([math.cos(ang), math.sin(ang)])))
        return out
    raise ConfigurationError("cosphere_patch supports nu <= 2; pass explicit samples")


# ---------------------------------------------------------------------------
# parabola criteria

def _parabola_min(a: complex, b2_eff: float, re_ab: float) -> float:
    """min over z >= 0 of |a z + b|^2 (+ bracket shift), i.e. of
    |a|^2 z^2 + 2 Re(conj(a) b) z + |b|^2_eff with re_ab = Re(conj(a) b)."""
    a2 = abs(a) ** 2
    if re_ab >= 0 or a2 == 0.0:
        return b2_eff
    return b2_eff - re_ab ** 2 / a2


def h2_margin(principal, sub, c: float, bracket=None) -> float:
    """min over aligned sample arrays of (min_{z>=0} q(z)) - c, with the
    lower-order weight optionally augmented by per-sample bracket values."""
    principal = np.asarray(principal, dtype=complex)
    sub = np.asarray(sub, dtype=complex)
    if bracket is None:
        bracket = np.zeros(len(principal))
    worst = math.inf
    for a, b, bb in zip(principal, sub, np.asarray(bracket, dtype=float)):
        qmin = _parabola_min(complex(a), abs(b) ** 2 + float(bb),
                             float(np.real(np.conj(a) * b)))
        worst = min(worst, qmin - c)
    return worst


@dataclass(frozen=True)
class H2Report:
    passed: bool
    h1_ok: bool
    c: float
    min_margin: float
    first_violation: dict | None
    n_samples: int
    mode: str = "H2"

    def to_json(self) -> dict:
        return {
            "mode": self.mode, "passed": self.passed, "h1_ok": self.h1_ok,
            "c": self.c, "min_margin": self.min_margin,
            "first_violation": self.first_violation, "n_samples": self.n_samples,
        }


def _default_c(field: SymbolField) -> float:
    base = abs(field.sub_at(field.y0, field.eta0)) ** 2
    if base <= 0:
        raise SymbolDomainError(
            "cannot default the constant c: subprincipal vanishes at the base "
            "point; pass c explicitly")
    return 0.5 * base


def check_H2(field: SymbolField, c: float | None = None) -> H2Report:
    """Uniform lower bound of the parabola q(z) on the sample neighborhood,
    plus the base-point condition |a_sub(y0, eta0)|^2 >= c.

    Expects r = 1 for even h and r = 2 for odd h.
    """
    expected_r = 1 if field.h % 2 == 0 else 2
    if field.r != expected_r:
        raise PreconditionError(
            f"h = {field.h} pairs the principal with the order-(m' - "
            f"{expected_r}/(h+1)) term; field declares r = {field.r}")
    if c is None:
        c = _default_c(field)
    if not c > 0:
        raise SymbolDomainError("the constant c must be positive")
    field.validate(require_char=True)
    h1_ok = abs(field.sub_at(field.y0, field.eta0)) ** 2 >= c
    min_margin = math.inf
    violation = None
    samples = field.neighborhood or [(field.y0, field.eta0)]
    for idx, (y, eta) in enumerate(samples):
        a = field.principal_at(y, eta)
        b = field.sub_at(y, eta)
        qmin = _parabola_min(a, abs(b) ** 2, float(np.real(np.conj(a) * b)))
        margin = qmin - c
        if margin < min_margin:
            min_margin = margin
        if margin < 0 and violation is None:
            violation = {"index": idx, "y": list(map(float, np.atleast_1d(y))),
                         "eta": list(map(float, np.atleast_1d(eta))),
                         "qmin": qmin}
    return H2Report(passed=h1_ok and violation is None, h1_ok=h1_ok, c=c,
                    min_margin=min_margin, first_violation=violation,
                    n_samples=len(samples))


def check_h3(field: SymbolField, c: float | None = None,
             bracket: np.ndarray | None = None,
             bracket_base: float | None = None, *,
             step: float = 1e-5) -> H2Report:
    """Bracket-augmented parabola criterion, h = 3 only: the effective
    lower-order weight is |a_sub|^2 + (1/i){conj a, a}."""
    if field.h != 3:
        raise SymbolDomainError("the bracket-augmented criterion applies to h = 3")
    samples = field.neighborhood or [(field.y0, field.eta0)]
    if bracket is None:
        bracket = np.array([conjugate_bracket(field.principal, y, eta,
                                              step=step)[0]
                            for (y, eta) in samples])
    else:
        bracket = np.asarray(bracket, dtype=float)
        if len(bracket) != len(samples):
            raise ConfigurationError("bracket samples must align with the patch")
    if bracket_base is None:
        bracket_base = conjugate_bracket(field.principal, field.y0, field.eta0,
                                         step=step)[0]
    field.validate(require_char=True)
    base_weight = abs(field.sub_at(field.y0, field.eta0)) ** 2 + bracket_base
    if c is None:
        if base_weight <= 0:
            raise SymbolDomainError(
                "cannot default c: |a_sub|^2 + bracket is not positive at the "
                "base point")
        c = 0.5 * base_weight
    if not c > 0:
        raise SymbolDomainError("the constant c must be positive")
    h1_ok = base_weight > 0
    min_margin = math.inf
    violation = None
    for idx, (y, eta) in enumerate(samples):
        a = field.principal_at(y, eta)
        b = field.sub_at(y, eta)
        qmin = _parabola_min(a, abs(b) ** 2 + float(bracket[idx]),
                             float(np.real(np.conj(a) * b)))
        margin = qmin - c
        if margin < min_margin:
            min_margin = margin
        if margin < 0 and violation is None:
            violation = {"index": idx, "y": list(map(float, np.atleast_1d(y))),
                         "eta": list(map(float, np.atleast_1d(eta))),
                         "qmin": qmin}
    return H2Report(passed=h1_ok and violation is None, h1_ok=h1_ok, c=c,
                    min_margin=min_margin, first_violation=violation,
                    n_samples=len(samples), mode="h3")


MINIMAL, DENIED, UNDETERMINED = "minimal-loss-confirmed", "denied", "undetermined"


@dataclass(frozen=True)
class TangentialSignReport:
    value: float
    error: float
    verdict: str
    loss_reduced: Fraction
    loss_total: Fraction

    def to_json(self) -> dict:
        return {"value": self.value, "error": self.error,
                "verdict": self.verdict,
                "loss_reduced": [self.loss_reduced.numerator,
                                 self.loss_reduced.denominator],
                "loss_total": [self.loss_total.numerator,
                               self.loss_total.denominator]}


def tangential_sign(field: SymbolField, *, step: float = 1e-5,
                    tol_factor: float = 3.0) -> TangentialSignReport:
    """Sign of (1/i){a, conj a} at the base point; negative confirms the
    minimal extra loss 1/2 for the reduced operator (the caller asserts that
    all intermediate lower-order terms vanish identically)."""
    if field.subprincipal is not None and field.r <= field.h:
        raise PreconditionError(
            "tangential test requires the gap clause: lower-order terms up to "
            "r = h must vanish identically (drop the subprincipal handle or "
            "declare r > h)")
    if not callable(field.principal):
        raise ConfigurationError("principal handle is not callable")
    field.validate(require_char=True)
    minus, err = conjugate_bracket(field.principal, field.y0, field.eta0,
                                   step=step)
    value = -minus  # (1/i){a, conj a} = -(1/i){conj a, a}
    h = field.h
    loss_total = Fraction(2 * h, h + 1) + Fraction(1, 2)
    if value < -tol_factor * err:
        verdict = MINIMAL
    elif value > tol_factor * err:
        verdict = DENIED
    else:
        verdict = UNDETERMINED
    return TangentialSignReport(value=value, error=err, verdict=verdict,
                                loss_reduced=Fraction(1, 2),
                                loss_total=loss_total)


# ---------------------------------------------------------------------------
# localization probe

def bump(y: np.ndarray) -> np.ndarray:
    """Standard even C-infinity bump supported in [-1, 1]."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        out[inside] = np.exp(-1.0 / (1.0 - y[inside] ** 2))
    return out


def _smoothstep(s: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """C-infinity transition, 0 for s <= lo and 1 for s >= hi."""
    u = np.clip((np.asarray(s, dtype=float) - lo) / (hi - lo), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return a / (a + b)


@dataclass(frozen=True)
class ProbeConfig:
    """Scales and quadrature resolution for the localization probe."""

    t_values: tuple[float, ...] = (16.0, 22.627417, 32.0, 45.254834, 64.0,
                                   90.509668, 128.0, 181.019336, 256.0)
    z_half: float = 12.0
    eta_max: float = 80.0
    d_eta: float = 0.05
    bump_samples: int = 4001
    excision: tuple[float, float] = (1.0, 2.0)
    fit_residual_tol: float = 0.08

    def __post_init__(self):
        ts = np.asarray(self.t_values, dtype=float)
        if len(ts) < 4 or np.any(np.diff(ts) <= 0):
            raise ConfigurationError("t_values must be >= 4 increasing scales")

    @classmethod
    def for_range(cls, t_min: float, t_max: float, *,
                  points_per_octave: int = 2, **kw) -> "ProbeConfig":
        if not (t_min > 0 and t_max > t_min):
            raise ConfigurationError("need 0 < t_min < t_max")
        n_oct = math.log2(t_max / t_min)
        count = max(4, int(round(n_oct * points_per_octave)) + 1)
        ts = t_min * (t_max / t_min) ** (np.arange(count) / (count - 1))
        return cls(t_values=tuple(float(t) for t in ts), **kw)


class _ProbeQuadrature:
    """Cached bump transform and oscillatory-sum grids for one configuration."""

    def __init__(self, config: ProbeConfig):
        self.config = config
        ys = np.linspace(-1.0, 1.0, config.bump_samples)
        dy = ys[1] - ys[0]
        v = bump(ys)
        self.v_norm2 = float(dy * np.sum(v ** 2))
        n_eta = int(round(2 * config.eta_max / config.d_eta)) + 1
        self.etas = np.linspace(-config.eta_max, config.eta_max, n_eta)
        self.d_eta = self.etas[1] - self.etas[0]
        self.vhat = np.empty(n_eta, dtype=np.complex128)
        chunk = 256
        for k in range(0, n_eta, chunk):
            block = self.etas[k:k + chunk]
            self.vhat[k:k + chunk] = dy * np.exp(
                -1j * np.outer(block, ys)) @ v
        self.vhat_tail = float(np.max(np.abs(self.vhat[[0, -1]]))
                               / np.max(np.abs(self.vhat)))
        dz = math.pi / (config.eta_max * 1.05)
        n_z = 2 * int(math.ceil(config.z_half / dz)) + 1
        self.zs = np.linspace(-config.z_half, config.z_half, n_z)
        self.dz = self.zs[1] - self.zs[0]
        self.phase = np.exp(1j * np.outer(self.zs, self.etas))

    def norm2(self, field: SymbolField, t: float) -> float:
        cfg = self.config
        y_line = field.y0[0] + self.zs / t
        eta_line = t * self.etas + t * t * field.eta0[0]
        # points under the excision cutoff contribute nothing; clamp them away
        # from eta = 0 so homogeneous handles stay evaluable
        floor = 0.5 * cfg.excision[0]
        eta_safe = np.where(np.abs(eta_line) < floor,
                            np.where(eta_line < 0, -floor, floor), eta_line)
        y_slab = y_line.reshape(1, -1, 1)
        eta_slab = eta_safe.reshape(1, 1, -1)
        a = np.asarray(field.principal(y_slab, eta_slab), dtype=np.complex128)
        if field.subprincipal is not None:
            a = a + np.asarray(field.subprincipal(y_slab, eta_slab),
                               dtype=np.complex128)
        a = np.broadcast_to(a, (len(self.zs), len(self.etas)))
        chi = _smoothstep(np.abs(eta_line), *cfg.excision)
        weights = (self.d_eta / (2.0 * math.pi)) * (chi * self.vhat)
        phi = (self.phase * a) @ weights
        return float(self.dz * np.sum(np.abs(phi) ** 2) / t)


@dataclass(frozen=True)
class ProbeReport:
    t_values: tuple[float, ...]
    norms: tuple[float, ...]
    fitted_slope: float
    predicted_slope: float | None
    fitted_prefactor: float
    predicted_prefactor: float | None
    fit_residual: float
    conclusive: bool
    vhat_tail: float

    def to_json(self) -> dict:
        return {
            "t_values": list(self.t_values),
            "norms": list(self.norms),
            "fitted_slope": self.fitted_slope,
            "predicted_slope": self.predicted_slope,
            "fitted_prefactor": self.fitted_prefactor,
            "predicted_prefactor": self.predicted_prefactor,
            "fit_residual": self.fit_residual,
            "conclusive": self.conclusive,
        }


def localization_probe(field: SymbolField, config: ProbeConfig | None = None
                       ) -> ProbeReport:
    """Measure the log-log growth of ||A u_t||^2 against the homogeneity
    prediction: exponent 4m' - nu on elliptic rays, 4(m' - r/(h+1)) - nu when
    the principal part dies at the base point and the lower-order term does
    not.  The fit uses the upper half of the scale ladder; the lower scales
    sit outside the asymptotic regime."""
    if field.nu != 1:
        raise ConfigurationError("the localization probe is one-dimensional")
    config = config or ProbeConfig()
    field.validate(require_char=False)
    quad = _ProbeQuadrature(config)
    ts = np.asarray(config.t_values, dtype=float)
    norms = np.array([quad.norm2(field, t) for t in ts])
    if np.any(norms <= 0):
        raise SymbolDomainError("probe produced a nonpositive norm")
    upper = slice(len(ts) // 2, None)
    logt = np.log(ts[upper])
    logn = np.log(norms[upper])
    slope, intercept = np.polyfit(logt, logn, 1)
    residual = float(np.max(np.abs(logn - (slope * logt + intercept))))

    nu = 1
    m = float(field.m_prime)
    a0 = abs(field.principal_at(field.y0, field.eta0))
    if a0 > 1e-8:
        predicted = 4.0 * m - nu
        pref = a0 ** 2 * quad.v_norm2
    else:
        b0 = abs(field.sub_at(field.y0, field.eta0))
        if b0 > 1e-8:
            predicted = 4.0 * (m - field.r / (field.h + 1)) - nu
            pref = b0 ** 2 * quad.v_norm2
        else:
            predicted = None
            pref = None
    t_ratio = float(ts[upper][-1] / ts[upper][0])
    conclusive = bool(residual <= config.fit_residual_tol and t_ratio >= 4.0)
    return ProbeReport(
        t_values=tuple(map(float, ts)), norms=tuple(map(float, norms)),
        fitted_slope=float(slope), predicted_slope=predicted,
        fitted_prefactor=float(math.exp(intercept)), predicted_prefactor=pref,
        fit_residual=residual, conclusive=conclusive,
        vhat_tail=quad.vhat_tail)


def field_from_json(doc: dict) -> SymbolField:
    """Build a SymbolField from expression-grammar strings plus orders and
    base-point data."""
    from .expr_parser import compile_symbol

    nu = int(doc.get("nu", 1))
    principal = compile_symbol(doc["principal"], nu)
    sub = doc.get("subprincipal")
    subprincipal = compile_symbol(sub, nu) if sub else None
    m_prime = _parse_fraction(doc["m_prime"])
    y0 = np.asarray(doc["y0"], dtype=float)
    eta0 = np.asarray(doc["eta0"], dtype=float)
    nbhd = doc.get("neighborhood", {})
    samples = cosphere_patch(y0, eta0,
                             radius=float(nbhd.get("radius", 0.1)),
                             count=int(nbhd.get("count", 21)))
    return SymbolField(nu=nu, m_prime=m_prime, r=int(doc.get("r", 1)),
                       h=int(doc["h"]), principal=principal,
                       subprincipal=subprincipal, y0=y0, eta0=eta0,
                       neighborhood=samples)


def _parse_fraction(x) -> Fraction:
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (list, tuple)) and len(x) == 2:
        return Fraction(int(x[0]), int(x[1]))
    return Fraction(x)
