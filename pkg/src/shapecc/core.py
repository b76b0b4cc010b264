"""Shape complexity of finite mass configurations.

The complexity C of N point masses is the ratio of the root-mean-square
length to the mean harmonic length of the configuration.  It is invariant
under translations, rotations and uniform scalings, so it is a function on
shape space, and its critical points are the central configurations.

This module evaluates C, its gradient, Hessian-vector products, the
gauge-projected criticality residual, and the canonical gauge fixing
(center of mass at the origin, unit rms length).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

log = logging.getLogger(__name__)

MASS_TOL = 1e-12
GAUGE_TOL = 1e-12
# Relative collision guard: operations refuse separations below
# COLLISION_GUARD * l_rms instead of returning a near-singular value.
COLLISION_GUARD = 1e-10
# Finite-difference scale for Hessian-vector products.
HVP_STEP = 1e-5
# Pair sums up to this length go through exact (Shewchuk) summation;
# longer ones use compensated block summation, still in fixed order.
_EXACT_SUM_LIMIT = 4096
_SUM_BLOCK = 2048


class CollisionError(ValueError):
    """A pair separation fell below the collision guard."""


def compensated_sum(terms: np.ndarray) -> float:
    """Sum in fixed left-to-right order with error compensation.

    Exact for short arrays; for long ones, block partial sums are combined
    exactly, which keeps the result deterministic and nearly correctly
    rounded regardless of how callers are threaded.
    """
    terms = np.ascontiguousarray(terms, dtype=float)
    if terms.size <= _EXACT_SUM_LIMIT:
        return math.fsum(terms)
    blocks = np.add.reduceat(terms, np.arange(0, terms.size, _SUM_BLOCK))
    return math.fsum(blocks)


class MassConfiguration:
    """Point masses with d-dimensional positions (d = 2 or 3).

    Masses are rescaled to unit total on construction (the factor is
    logged); exactly coincident particles are rejected.  Arrays are frozen
    after validation so instances can be shared across threads.
    """

    __slots__ = ("n", "d", "masses", "positions")

    def __init__(self, masses, positions):
        x = np.array(positions, dtype=float)
        m = np.array(masses, dtype=float)
        if x.ndim != 2 or x.shape[1] not in (2, 3):
            raise ValueError("positions must be an (N, d) array with d in {2, 3}")
        n = x.shape[0]
        if n < 2:
            raise ValueError("need at least 2 particles")
        if m.shape != (n,):
            raise ValueError(f"expected {n} masses, got shape {m.shape}")
        if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
            raise ValueError("masses must be finite and positive")
        if not np.all(np.isfinite(x)):
            raise ValueError("positions must be finite")
        total = compensated_sum(m)
        if abs(total - 1.0) > MASS_TOL:
            log.debug("rescaling masses by %.17g to unit total", 1.0 / total)
            m = m / total
        if pdist(x).min() <= 0.0:
            raise ValueError("coincident particles are not allowed")
        m.setflags(write=False)
        x.setflags(write=False)
        self.n = n
        self.d = x.shape[1]
        self.masses = m
        self.positions = x

    def __repr__(self):
        return f"MassConfiguration(n={self.n}, d={self.d})"


@dataclass(frozen=True)
class ComplexityReport:
    """Lengths and their ratio for one configuration."""

    rms_length: float
    mhl_length: float
    c_value: float
    min_separation: float


@dataclass(frozen=True)
class GradientField:
    """Per-particle derivatives of the complexity, shape (N, d)."""

    vectors: np.ndarray

    def translation_sum(self) -> np.ndarray:
        return self.vectors.sum(axis=0)


@dataclass(frozen=True)
class ShapeRepresentative:
    """Gauge-fixed configuration: center of mass at 0, rms length 1."""

    config: MassConfiguration
    com_residual: float
    rms_deviation: float


def _pair_masses(m: np.ndarray) -> np.ndarray:
    i, j = np.triu_indices(m.size, k=1)
    return m[i] * m[j]


def _lengths_from_pairs(mm: np.ndarray, r: np.ndarray) -> tuple[float, float]:
    """(l_rms, V) from pair mass products and separations; V = 1/l_mhl."""
    lrms_sq = compensated_sum(mm * (r * r))
    v = compensated_sum(mm / r)
    return math.sqrt(lrms_sq), v


def _check_collisions(r: np.ndarray, lrms: float) -> None:
    if r.min() < COLLISION_GUARD * lrms:
        raise CollisionError(
            f"min separation {r.min():.3e} below collision guard "
            f"{COLLISION_GUARD * lrms:.3e}"
        )


def _complexity_arrays(m: np.ndarray, x: np.ndarray, mm: np.ndarray | None = None):
    """(l_rms, V, C, r_min) for raw arrays; raises CollisionError."""
    if mm is None:
        mm = _pair_masses(m)
    r = pdist(x)
    lrms, v = _lengths_from_pairs(mm, r)
    _check_collisions(r, lrms)
    return lrms, v, lrms * v, float(r.min())


def _gradient_arrays(m: np.ndarray, x: np.ndarray, mm: np.ndarray | None = None) -> np.ndarray:
    """Analytic gradient of C, shape (N, d).

    dC/dx_i = (V/l_rms) m_i (x_i - x_cm) - l_rms m_i sum_j m_j (x_i - x_j)/r_ij^3
    """
    if mm is None:
        mm = _pair_masses(m)
    r = pdist(x)
    lrms, v = _lengths_from_pairs(mm, r)
    _check_collisions(r, lrms)
    com = m @ x
    y = x - com
    dist = squareform(r)
    np.fill_diagonal(dist, np.inf)
    w = (m[:, None] * m[None, :]) / (dist * dist * dist)
    pull = w.sum(axis=1)[:, None] * x - w @ x
    return (v / lrms) * (m[:, None] * y) - lrms * pull


def _hvp_arrays(m: np.ndarray, x: np.ndarray, v: np.ndarray,
                mm: np.ndarray | None = None) -> np.ndarray:
    """Hessian-vector product via symmetric differencing of the gradient."""
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        return np.zeros_like(x)
    h = HVP_STEP * max(1.0, float(np.linalg.norm(x))) / vnorm
    gp = _gradient_arrays(m, x + h * v, mm)
    gm = _gradient_arrays(m, x - h * v, mm)
    return (gp - gm) / (2.0 * h)


def gauge_directions(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the gauge directions, shape (k, N*d).

    Row order: d translations, the d(d-1)/2 infinitesimal rotations, one
    dilation, orthonormalized by modified Gram-Schmidt.  Generators whose
    residual norm degenerates (rotations of collinear 3D configurations)
    are dropped.
    """
    n, d = x.shape
    com = m @ x
    y = x - com
    raw = []
    for a in range(d):
        t = np.zeros((n, d))
        t[:, a] = 1.0
        raw.append(t.ravel())
    if d == 2:
        raw.append(np.column_stack([-y[:, 1], y[:, 0]]).ravel())
    else:
        raw.append(np.column_stack([np.zeros(n), -y[:, 2], y[:, 1]]).ravel())
        raw.append(np.column_stack([y[:, 2], np.zeros(n), -y[:, 0]]).ravel())
        raw.append(np.column_stack([-y[:, 1], y[:, 0], np.zeros(n)]).ravel())
    raw.append(y.ravel())
    basis = []
    for vec in raw:
        w = vec.copy()
        for b in basis:
            w -= (b @ w) * b
        norm = np.linalg.norm(w)
        if norm < 1e-12 * max(1.0, np.linalg.norm(vec)):
            continue
        basis.append(w / norm)
    return np.array(basis)


def project_out_gauge(vec: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Remove the gauge components of a flat (N*d,) vector."""
    return vec - basis.T @ (basis @ vec)


def _residual_arrays(m: np.ndarray, x: np.ndarray, mm: np.ndarray | None = None,
                     grad: np.ndarray | None = None) -> float:
    if grad is None:
        grad = _gradient_arrays(m, x, mm)
    basis = gauge_directions(m, x)
    pg = project_out_gauge(grad.ravel(), basis)
    _, _, c, _ = _complexity_arrays(m, x, mm)
    return float(np.linalg.norm(pg)) / max(c, 1.0)


def _gauge_fix_arrays(m: np.ndarray, x: np.ndarray,
                      mm: np.ndarray | None = None) -> np.ndarray:
    y = x - m @ x
    lrms, _ = _lengths_from_pairs(mm if mm is not None else _pair_masses(m), pdist(y))
    return y / lrms


def rms_length(config: MassConfiguration) -> float:
    """Root-mean-square length, sqrt(sum_{i<j} m_i m_j r_ij^2)."""
    mm = _pair_masses(config.masses)
    r = pdist(config.positions)
    return math.sqrt(compensated_sum(mm * (r * r)))


def mhl_length(config: MassConfiguration) -> float:
    """Mean harmonic length, 1 / sum_{i<j} m_i m_j / r_ij."""
    mm = _pair_masses(config.masses)
    r = pdist(config.positions)
    lrms, v = _lengths_from_pairs(mm, r)
    _check_collisions(r, lrms)
    return 1.0 / v


def complexity(config: MassConfiguration) -> ComplexityReport:
    """Evaluate both lengths and the complexity C = l_rms / l_mhl."""
    lrms, v, c, rmin = _complexity_arrays(config.masses, config.positions)
    return ComplexityReport(rms_length=lrms, mhl_length=1.0 / v,
                            c_value=c, min_separation=rmin)


def complexity_gradient(config: MassConfiguration) -> GradientField:
    """Analytic per-particle gradient of C."""
    return GradientField(_gradient_arrays(config.masses, config.positions))


def hessian_vector_product(config: MassConfiguration, direction: np.ndarray) -> np.ndarray:
    """Apply the Hessian of C to an (N, d) direction.

    Uses a symmetric finite difference of the analytic gradient with step
    HVP_STEP * max(1, |x|) / |v|; linear in the direction to that accuracy.
    """
    v = np.asarray(direction, dtype=float)
    if v.shape != config.positions.shape:
        raise ValueError(f"direction must have shape {config.positions.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("direction must be finite")
    return _hvp_arrays(config.masses, config.positions, v)


def cc_residual(config: MassConfiguration) -> float:
    """Norm of the gauge-projected gradient, normalized by max(C, 1).

    Zero (up to tolerance) exactly at central configurations.
    """
    return _residual_arrays(config.masses, config.positions)


def gauge_fix(config: MassConfiguration) -> ShapeRepresentative:
    """Translate the center of mass to the origin and scale l_rms to 1."""
    m = config.masses
    fixed = _gauge_fix_arrays(m, config.positions)
    rep = MassConfiguration(m, fixed)
    com_norm = float(np.linalg.norm(m @ rep.positions))
    rms_dev = abs(rms_length(rep) - 1.0)
    if com_norm > GAUGE_TOL or rms_dev > GAUGE_TOL:
        raise AssertionError(
            f"gauge fixing failed: |com|={com_norm:.3e}, |l_rms-1|={rms_dev:.3e}"
        )
    return ShapeRepresentative(config=rep, com_residual=com_norm, rms_deviation=rms_dev)
