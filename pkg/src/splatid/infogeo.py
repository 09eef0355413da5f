"""Fisher information, Schur complements, Cramer-Rao bounds, and the
identifiability diagnostic pipeline.

All inversions go through an SVD pseudoinverse with relative singular-value
cutoff ``PINV_CUTOFF``; singular values below ``RANK_THRESHOLD`` times the
largest are counted as zero when deciding numerical rank, and the divergence
flag means exactly "numerical rank < dimension" (infinite variance along the
null directions).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .basis import coherence, gram
from .errors import DomainError, IllPosedError, ShapeError, UnsupportedError
from .jacobians import (
    Attribution,
    JacobianBlocks,
    attribution_matrix,
    jacobian_appearance,
)
from .render import render_design
from .scene import ObservationDesign, SceneGraph, layout_of

PINV_CUTOFF = 1e-10     # relative cutoff for pseudoinversion
RANK_THRESHOLD = 1e-8   # relative cutoff defining numerical rank / divergence
MAX_DIM = 2000          # dense eigen/SVD guardrail


def _check_dim(n: int):
    if n > MAX_DIM:
        raise UnsupportedError(
            f"dense matrix dimension {n} exceeds the supported cap {MAX_DIM}"
        )


def pinv_sym(mat: np.ndarray, cutoff: float = PINV_CUTOFF) -> np.ndarray:
    """Symmetric pseudoinverse via SVD with a relative cutoff."""
    _check_dim(mat.shape[0])
    u, s, vt = np.linalg.svd(0.5 * (mat + mat.T), hermitian=True)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(mat)
    keep = s > cutoff * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    out = (vt.T * inv) @ u.T
    return 0.5 * (out + out.T)


def numerical_rank(
    mat: np.ndarray, threshold: float = RANK_THRESHOLD, reference: float | None = None
) -> int:
    """Singular values below ``threshold`` times the reference scale count as
    zero; the reference defaults to the matrix's own largest singular value.

    Passing the parent matrix's scale as ``reference`` matters for Schur
    complements: a fully collapsed complement is numerical noise relative to
    the block it came from even though it is "full rank" internally.
    """
    _check_dim(min(mat.shape))
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    scale = s[0] if reference is None else reference
    if scale <= 0.0:
        return 0
    return int(np.sum(s > threshold * scale))


@dataclass(frozen=True)
class Fim:
    """F = J^T J / sigma^2 with the spatial/temporal partition recorded.

    Columns 0..split-1 are spatial; columns split.. are temporal.
    """

    matrix: np.ndarray
    sigma: float
    split: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError("FIM must be square")
        if not (0 <= self.split <= m.shape[0]):
            raise ShapeError("partition index out of range")
        object.__setattr__(self, "matrix", m)

    @property
    def f_ss(self) -> np.ndarray:
        return self.matrix[: self.split, : self.split]

    @property
    def f_st(self) -> np.ndarray:
        return self.matrix[: self.split, self.split :]

    @property
    def f_ts(self) -> np.ndarray:
        return self.matrix[self.split :, : self.split]

    @property
    def f_tt(self) -> np.ndarray:
        return self.matrix[self.split :, self.split :]


def fim_from_matrices(j_spatial: np.ndarray, j_temporal: np.ndarray, sigma: float) -> Fim:
    """FIM of the stacked [J_s, J_tau] under Gaussian noise of std sigma."""
    if sigma <= 0:
        raise DomainError("noise sigma must be > 0")
    if j_spatial.shape[0] != j_temporal.shape[0]:
        raise ShapeError("block row counts differ")
    j = np.hstack([j_spatial, j_temporal])
    _check_dim(j.shape[1])
    f = (j.T @ j) / sigma**2
    f = 0.5 * (f + f.T)
    return Fim(matrix=f, sigma=sigma, split=j_spatial.shape[1])


def fim(blocks: JacobianBlocks, sigma: float) -> Fim:
    return fim_from_matrices(blocks.j_spatial, blocks.j_temporal, sigma)


def schur_spatial(f: Fim) -> np.ndarray:
    """S_s = F_ss - F_st F_tt^+ F_ts (effective spatial information)."""
    s = f.f_ss - f.f_st @ pinv_sym(f.f_tt) @ f.f_ts
    return 0.5 * (s + s.T)


def schur_temporal(f: Fim) -> np.ndarray:
    """S_tau = F_tt - F_ts F_ss^+ F_st (effective temporal information)."""
    s = f.f_tt - f.f_ts @ pinv_sym(f.f_ss) @ f.f_st
    return 0.5 * (s + s.T)


@dataclass(frozen=True)
class CrbBound:
    """Pseudoinverse CRB with rank accounting.

    ``diverged`` is set when the numerical rank of the Schur complement is
    below its dimension: variance is infinite along the null directions.
    """

    matrix: np.ndarray
    rank: int
    null_dim: int

    @property
    def diverged(self) -> bool:
        return self.null_dim > 0


def _bound_of(schur: np.ndarray, reference: float | None = None) -> CrbBound:
    rank = numerical_rank(schur, reference=reference)
    return CrbBound(
        matrix=pinv_sym(schur), rank=rank, null_dim=schur.shape[0] - rank
    )


def _block_scale(block: np.ndarray) -> float:
    if block.size == 0:
        return 0.0
    return float(np.linalg.svd(block, compute_uv=False)[0])


def crb(f: Fim):
    """(spatial bound, temporal bound) from the two Schur complements.

    Rank (and hence the divergence flag) is judged against the scale of the
    corresponding diagonal FIM block.
    """
    return (
        _bound_of(schur_spatial(f), reference=_block_scale(f.f_ss)),
        _bound_of(schur_temporal(f), reference=_block_scale(f.f_tt)),
    )


@dataclass(frozen=True)
class SandwichReport:
    """Monte-Carlo check that the empirical estimator covariance dominates the CRB."""

    trials: int
    sigma: float
    crb_norm: float
    min_eig_difference: float
    passed: bool
    empirical_trace: float
    crb_trace: float


def crb_sandwich_check(
    scene: SceneGraph,
    design: ObservationDesign,
    sigma: float,
    trials: int = 500,
    seed: int = 0,
) -> SandwichReport:
    """Refit the exact least-squares estimator on fresh noise and compare.

    For this linear-Gaussian model the estimator is unbiased and achieves the
    bound, so the difference matrix should be near zero; the check refuses
    rank-deficient designs where the bound is infinite.
    """
    if trials < 100:
        raise DomainError("need at least 100 trials")
    if sigma < 0:
        raise DomainError("noise sigma must be >= 0")
    blocks = jacobian_appearance(scene, design)
    j = blocks.full()
    rank = numerical_rank(j)
    if rank < j.shape[1]:
        raise IllPosedError(
            f"design is rank-deficient ({rank}/{j.shape[1]}): CRB is infinite"
        )
    _, clean = render_design(scene, design)
    solver = np.linalg.pinv(j, rcond=PINV_CUTOFF)
    crb_mat = sigma**2 * pinv_sym(j.T @ j)
    theta_star = layout_of(scene).pack(scene.appearances())
    rng = np.random.default_rng(seed)
    estimates = np.empty((trials, j.shape[1]))
    for i in range(trials):
        y = clean + sigma * rng.standard_normal(clean.shape) if sigma > 0 else clean
        estimates[i] = solver @ y
    centered = estimates - theta_star
    emp = (centered.T @ centered) / trials
    diff = emp - crb_mat
    min_eig = float(np.linalg.eigvalsh(0.5 * (diff + diff.T))[0])
    crb_norm = float(np.linalg.norm(crb_mat))
    passed = min_eig > -0.1 * crb_norm if crb_norm > 0 else min_eig >= -1e-12
    return SandwichReport(
        trials=trials,
        sigma=sigma,
        crb_norm=crb_norm,
        min_eig_difference=min_eig,
        passed=passed,
        empirical_trace=float(np.trace(emp)),
        crb_trace=float(np.trace(crb_mat)),
    )


@dataclass(frozen=True)
class InfoReport:
    """One-design identifiability diagnostic.

    All spectra are sorted descending; the collapse ratio is
    max(lambda_min(S_s), 0) / lambda_max(F_ss), a dimensionless scalar that
    drops toward zero when spatial information collapses.
    """

    design_kind: str
    sigma: float
    fim_spectrum: np.ndarray
    schur_spatial_spectrum: np.ndarray
    schur_temporal_spectrum: np.ndarray
    spatial_bound: CrbBound
    temporal_bound: CrbBound
    coherence: float
    attribution_residual: float
    attribution_undefined: bool
    collapse_ratio: float
    cross_block_ratio: float
    condition_fim: float
    n_rows: int
    n_spatial: int
    n_temporal: int
    extras: dict = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.spatial_bound.diverged

    def to_dict(self) -> dict:
        return {
            "design_kind": self.design_kind,
            "sigma": self.sigma,
            "n_rows": self.n_rows,
            "n_spatial": self.n_spatial,
            "n_temporal": self.n_temporal,
            "coherence": self.coherence,
            "attribution_residual": self.attribution_residual,
            "attribution_undefined": self.attribution_undefined,
            "collapse_ratio": self.collapse_ratio,
            "cross_block_ratio": self.cross_block_ratio,
            "condition_fim": self.condition_fim,
            "spatial_rank": self.spatial_bound.rank,
            "spatial_null_dim": self.spatial_bound.null_dim,
            "spatial_diverged": self.spatial_bound.diverged,
            "temporal_rank": self.temporal_bound.rank,
            "temporal_null_dim": self.temporal_bound.null_dim,
            "temporal_diverged": self.temporal_bound.diverged,
            "fim_spectrum": self.fim_spectrum.tolist(),
            "schur_spatial_spectrum": self.schur_spatial_spectrum.tolist(),
            "schur_temporal_spectrum": self.schur_temporal_spectrum.tolist(),
            "extras": self.extras,
        }

    def save(self, json_path, spectra_csv_path=None):
        with open(json_path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        if spectra_csv_path is not None:
            with open(spectra_csv_path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["index", "spectrum", "eigenvalue"])
                for name, spec in (
                    ("fim", self.fim_spectrum),
                    ("schur_spatial", self.schur_spatial_spectrum),
                    ("schur_temporal", self.schur_temporal_spectrum),
                ):
                    for i, v in enumerate(spec):
                        writer.writerow([i, name, f"{v:.12e}"])


def _spectrum(mat: np.ndarray) -> np.ndarray:
    if mat.size == 0:
        return np.array([])
    return np.sort(np.linalg.eigvalsh(0.5 * (mat + mat.T)))[::-1]


def diagnose_blocks(
    blocks: JacobianBlocks, sigma: float, design_kind: str = "unknown",
    coherence_value: float = float("nan"), extras=None,
) -> InfoReport:
    """Diagnostic pipeline from precomputed Jacobian blocks."""
    f = fim(blocks, sigma)
    s_s = schur_spatial(f)
    s_t = schur_temporal(f)
    spatial_bound = _bound_of(s_s, reference=_block_scale(f.f_ss))
    temporal_bound = _bound_of(s_t, reference=_block_scale(f.f_tt))
    if blocks.j_temporal.shape[1] == 0:
        # no competing temporal subspace: nothing to attribute
        attribution = Attribution(
            matrix=np.zeros((0, blocks.j_spatial.shape[1])),
            residual=1.0,
            undefined=True,
        )
    else:
        attribution = attribution_matrix(blocks)
    fim_spec = _spectrum(f.matrix)
    ss_spec = _spectrum(s_s)
    st_spec = _spectrum(s_t)
    fss_spec = _spectrum(f.f_ss)
    lam_max = float(fss_spec[0]) if fss_spec.size else 0.0
    lam_min = max(float(ss_spec[-1]), 0.0) if ss_spec.size else 0.0
    collapse = lam_min / lam_max if lam_max > 0 else 0.0
    cross = float(np.linalg.norm(f.f_st))
    diag = float(np.linalg.norm(f.f_ss)) + float(np.linalg.norm(f.f_tt))
    cross_ratio = cross / diag if diag > 0 else 0.0
    cond = (
        float(fim_spec[0] / max(fim_spec[-1], 1e-300)) if fim_spec.size else 0.0
    )
    return InfoReport(
        design_kind=design_kind,
        sigma=sigma,
        fim_spectrum=fim_spec,
        schur_spatial_spectrum=ss_spec,
        schur_temporal_spectrum=st_spec,
        spatial_bound=spatial_bound,
        temporal_bound=temporal_bound,
        coherence=coherence_value,
        attribution_residual=attribution.residual,
        attribution_undefined=attribution.undefined,
        collapse_ratio=collapse,
        cross_block_ratio=cross_ratio,
        condition_fim=cond,
        n_rows=blocks.n_rows,
        n_spatial=blocks.j_spatial.shape[1],
        n_temporal=blocks.j_temporal.shape[1],
        extras=dict(extras or {}),
    )


def diagnose(scene: SceneGraph, design: ObservationDesign, sigma: float) -> InfoReport:
    """One-call pipeline: Jacobians -> FIM -> Schur -> CRB -> summary scalars."""
    blocks = jacobian_appearance(scene, design)
    rho = coherence(gram(scene.basis, scene.sh, design))
    return diagnose_blocks(
        blocks, sigma, design_kind=design.kind, coherence_value=rho
    )
