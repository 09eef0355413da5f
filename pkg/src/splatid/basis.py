"""Spatial spherical harmonics, temporal bases, and their 4D products.

The composite basis index is always (n, l, m) with n major, so a flattened
coefficient block of length ``count * (max_degree + 1)**2`` is laid out as
``[n=0: (0,0), (1,-1), (1,0), (1,1), ... ; n=1: ...]``.

Fourier indexing convention: index 0 is the constant function 1, odd index
``2k-1`` is ``cos(2*pi*k*t/T)``, even index ``2k`` is ``sin(2*pi*k*t/T)``.
Amplitude-1 (not orthonormalized) convention throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import (
    DegenerateBasisError,
    DegenerateGeometryError,
    DomainError,
    ShapeError,
    UnsupportedError,
)

# Real SH constants, hard-coded closed forms up to l = 2.
SH_C0 = 0.5 * math.sqrt(1.0 / math.pi)
SH_C1 = 0.5 * math.sqrt(3.0 / math.pi)
SH_C2A = 0.5 * math.sqrt(15.0 / math.pi)   # xy, yz, xz
SH_C2B = 0.25 * math.sqrt(5.0 / math.pi)   # 3z^2 - 1
SH_C2C = 0.25 * math.sqrt(15.0 / math.pi)  # x^2 - y^2


@dataclass(frozen=True)
class Direction:
    """Unit vector on S^2; the constructor normalizes its input."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        norm = math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)
        if norm < 1e-300:
            raise DegenerateGeometryError("cannot normalize a zero direction")
        object.__setattr__(self, "x", self.x / norm)
        object.__setattr__(self, "y", self.y / norm)
        object.__setattr__(self, "z", self.z / norm)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @staticmethod
    def from_array(v) -> "Direction":
        v = np.asarray(v, dtype=float)
        return Direction(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class ShConfig:
    """Spherical-harmonics configuration; (max_degree + 1)**2 terms."""

    max_degree: int

    def __post_init__(self):
        if self.max_degree < 0:
            raise DomainError("max_degree must be >= 0")

    @property
    def n_terms(self) -> int:
        return (self.max_degree + 1) ** 2


@dataclass(frozen=True)
class TemporalBasis:
    """Temporal basis on [0, horizon]: Fourier series or clamped B-splines."""

    kind: str
    count: int
    horizon: float
    order: int = 4

    def __post_init__(self):
        if self.kind not in ("fourier", "bspline"):
            raise DomainError(f"unknown temporal basis kind {self.kind!r}")
        if self.count < 1:
            raise DomainError("count must be >= 1")
        if self.horizon <= 0:
            raise DomainError("horizon must be > 0")
        if self.kind == "bspline":
            if self.order < 2:
                raise DomainError("bspline order must be >= 2")
            if self.count < self.order:
                raise DomainError("bspline count must be >= order")

    def _bspline(self) -> BSpline:
        degree = self.order - 1
        n_internal = self.count - self.order
        internal = (np.arange(1, n_internal + 1) / (n_internal + 1)) * self.horizon
        knots = np.concatenate(
            [np.zeros(self.order), internal, np.full(self.order, self.horizon)]
        )
        return BSpline(knots, np.eye(self.count), degree, extrapolate=False)


def sh_basis(max_degree: int, dirs: np.ndarray) -> np.ndarray:
    """All SH values up to ``max_degree`` at unit directions ``dirs`` (..., 3).

    Index order is (l, m) row-major: idx = l*l + (m + l).
    """
    if max_degree > 2:
        raise UnsupportedError("only closed forms up to degree 2 are provided")
    dirs = np.asarray(dirs, dtype=float)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    out = np.empty(dirs.shape[:-1] + ((max_degree + 1) ** 2,))
    out[..., 0] = SH_C0
    if max_degree >= 1:
        out[..., 1] = SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = SH_C1 * x
    if max_degree >= 2:
        out[..., 4] = SH_C2A * x * y
        out[..., 5] = SH_C2A * y * z
        out[..., 6] = SH_C2B * (3.0 * z * z - 1.0)
        out[..., 7] = SH_C2A * x * z
        out[..., 8] = SH_C2C * (x * x - y * y)
    return out


def eval_sh(cfg: ShConfig, l: int, m: int, d: Direction) -> float:
    """One real SH closed form at a unit direction."""
    if cfg.max_degree > 2:
        raise UnsupportedError("only closed forms up to degree 2 are provided")
    if not (0 <= l <= cfg.max_degree):
        raise DomainError(f"degree l={l} outside [0, {cfg.max_degree}]")
    if not (-l <= m <= l):
        raise DomainError(f"order m={m} outside [-{l}, {l}]")
    values = sh_basis(cfg.max_degree, d.as_array())
    return float(values[l * l + m + l])


def temporal_matrix(basis: TemporalBasis, ts: np.ndarray) -> np.ndarray:
    """Basis values at times ``ts``; shape (len(ts), count)."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts < 0.0) or np.any(ts > basis.horizon):
        raise DomainError("time outside [0, horizon]")
    if basis.kind == "fourier":
        out = np.empty((ts.size, basis.count))
        out[:, 0] = 1.0
        omega = 2.0 * math.pi / basis.horizon
        for n in range(1, basis.count):
            k = (n + 1) // 2
            phase = omega * k * ts
            out[:, n] = np.cos(phase) if n % 2 == 1 else np.sin(phase)
        return out
    spl = basis._bspline()
    out = spl(np.clip(ts, 0.0, basis.horizon))
    # clamped right endpoint: only the last basis function is nonzero
    at_end = ts >= basis.horizon
    if np.any(at_end):
        out[at_end] = 0.0
        out[at_end, -1] = 1.0
    return out


def temporal_deriv_matrix(basis: TemporalBasis, ts: np.ndarray) -> np.ndarray:
    """Time derivatives of the basis functions at ``ts``."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts < 0.0) or np.any(ts > basis.horizon):
        raise DomainError("time outside [0, horizon]")
    if basis.kind == "fourier":
        out = np.zeros((ts.size, basis.count))
        omega = 2.0 * math.pi / basis.horizon
        for n in range(1, basis.count):
            k = (n + 1) // 2
            phase = omega * k * ts
            if n % 2 == 1:
                out[:, n] = -omega * k * np.sin(phase)
            else:
                out[:, n] = omega * k * np.cos(phase)
        return out
    spl = basis._bspline().derivative()
    eps = 1e-12 * basis.horizon
    return spl(np.clip(ts, 0.0, basis.horizon - eps))


def eval_temporal(basis: TemporalBasis, n: int, t: float) -> float:
    """Value of the n-th temporal basis function at time t."""
    if not (0 <= n < basis.count):
        raise DomainError(f"basis index n={n} outside [0, {basis.count})")
    if not (0.0 <= t <= basis.horizon):
        raise DomainError(f"time t={t} outside [0, {basis.horizon}]")
    return float(temporal_matrix(basis, np.array([t]))[0, n])


def composite_basis(
    basis: TemporalBasis, cfg: ShConfig, ts: np.ndarray, dirs: np.ndarray
) -> np.ndarray:
    """Composite products phi_n(t) * Y_l^m(d); shape (n_samples, N * n_sh)."""
    phi = temporal_matrix(basis, ts)
    sh = sh_basis(cfg.max_degree, dirs)
    return (phi[:, :, None] * sh[:, None, :]).reshape(phi.shape[0], -1)


def eval_4dsh(
    coeffs: np.ndarray,
    basis: TemporalBasis,
    cfg: ShConfig,
    t: float,
    d: Direction,
) -> np.ndarray:
    """Color triple sum_{n,l,m} coeffs[c, n*S + sh] * phi_n(t) * Y_l^m(d)."""
    coeffs = np.asarray(coeffs, dtype=float)
    expected = basis.count * cfg.n_terms
    if coeffs.shape != (3, expected):
        raise ShapeError(
            f"coefficients must have shape (3, {expected}), got {coeffs.shape}"
        )
    z = composite_basis(basis, cfg, np.array([t]), d.as_array()[None, :])[0]
    return coeffs @ z


@dataclass(frozen=True)
class GramMatrix:
    """Empirical inner-product matrix of the composite basis over a design."""

    entries: np.ndarray
    sampling: str = "unknown"

    def __post_init__(self):
        g = np.asarray(self.entries, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ShapeError("Gram matrix must be square")
        object.__setattr__(self, "entries", g)


def gram(basis: TemporalBasis, cfg: ShConfig, design) -> GramMatrix:
    """Sample-count-normalized Gram matrix of the composite basis on a design.

    ``design`` is either an object exposing ``basis_samples() -> (ts, dirs)``
    (see :mod:`splatid.scene`) or a plain ``(ts, dirs)`` pair.
    """
    if hasattr(design, "basis_samples"):
        ts, dirs = design.basis_samples()
        sampling = getattr(design, "kind", "unknown")
    else:
        ts, dirs = design
        sampling = "arrays"
    ts = np.asarray(ts, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    if ts.size == 0:
        raise DomainError("design has no samples")
    z = composite_basis(basis, cfg, ts, dirs)
    g = (z.T @ z) / ts.size
    g = 0.5 * (g + g.T)
    return GramMatrix(entries=g, sampling=str(sampling))


def coherence(g: GramMatrix) -> float:
    """Maximum absolute off-diagonal entry of the normalized Gram matrix."""
    entries = g.entries
    diag = np.diag(entries)
    if np.any(diag <= 0.0):
        raise DegenerateBasisError("Gram matrix has a non-positive diagonal entry")
    scale = 1.0 / np.sqrt(diag)
    normed = entries * np.outer(scale, scale)
    off = normed - np.diag(np.diag(normed))
    return float(min(np.max(np.abs(off)), 1.0))


def fibonacci_sphere(n: int) -> np.ndarray:
    """Deterministic quasi-uniform unit directions; shape (n, 3)."""
    if n < 1:
        raise DomainError("need at least one direction")
    i = np.arange(n, dtype=float) + 0.5
    phi = math.pi * (3.0 - math.sqrt(5.0)) * i
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
