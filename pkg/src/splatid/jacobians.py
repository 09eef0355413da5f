"""Analytic Jacobian blocks of the observation vector w.r.t. appearance.

Because the blend weights are treated as parameter-independent and the color
model is linear in its coefficients, the rendered vector is exactly
``y = J theta`` for fixed geometry: entry (row, column) of J is
``omega_k(pixel) * phi_n(t) * Y_l^m(d_k)`` for the column's primitive k and
composite index (n, l, m), restricted to the matching color channel.

The spatial block J_s collects the static (n = 0) columns; the temporal block
J_tau collects the time-varying (n >= 1) columns.  Geometry parameters are
deliberately excluded: the analysis conditions on fixed geometry.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .basis import sh_basis, temporal_matrix
from .errors import DomainError, ShapeError
from .render import frame_weights, render_design
from .scene import (
    ObservationDesign,
    ParamLayout,
    SceneGraph,
    layout_of,
    resolve_world,
    viewing_direction,
)


@dataclass(frozen=True)
class JacobianBlocks:
    """Spatial and temporal Jacobian blocks plus their column bookkeeping.

    ``columns`` lists one (primitive, channel, kind, n, l, m) tuple per column
    of the full parameter vector, in layout order; ``spatial_cols`` and
    ``temporal_cols`` map block columns back to full-vector positions.
    """

    j_spatial: np.ndarray
    j_temporal: np.ndarray
    layout: ParamLayout
    columns: tuple

    def __post_init__(self):
        if self.j_spatial.shape[0] != self.j_temporal.shape[0]:
            raise ShapeError("block row counts differ")
        if not (
            np.all(np.isfinite(self.j_spatial))
            and np.all(np.isfinite(self.j_temporal))
        ):
            raise DomainError("Jacobian entries must be finite")

    @property
    def n_rows(self) -> int:
        return self.j_spatial.shape[0]

    @property
    def spatial_cols(self) -> np.ndarray:
        return self.layout.spatial_indices()

    @property
    def temporal_cols(self) -> np.ndarray:
        return self.layout.temporal_indices()

    def full(self) -> np.ndarray:
        """Reassembled J in the full parameter-vector column order."""
        j = np.empty((self.n_rows, self.layout.size))
        j[:, self.spatial_cols] = self.j_spatial
        j[:, self.temporal_cols] = self.j_temporal
        return j


def assemble_jacobian(scene: SceneGraph, design: ObservationDesign) -> np.ndarray:
    """Full dense J (rows = observation entries, cols = theta entries)."""
    layout = layout_of(scene)
    n_rows = 3 * design.n_contexts
    j = np.zeros((n_rows, layout.size))
    block = layout.block_size
    row0 = 0
    world_cache: dict = {}
    for frame in design.frames:
        if frame.t not in world_cache:
            world_cache[frame.t] = resolve_world(scene, frame.t)
        world = world_cache[frame.t]
        weights = frame_weights(world, frame)
        n_px = frame.pixels.shape[0]
        phi = temporal_matrix(scene.basis, np.array([frame.t]))[0]
        cam = frame.camera_center
        for prim in world:
            d = viewing_direction(prim.geometry.mean, cam)
            y = sh_basis(scene.sh.max_degree, d.as_array())
            z = np.outer(phi, y).ravel()
            contrib = weights[:, prim.index, None] * z[None, :]
            for c in range(3):
                rows = row0 + 3 * np.arange(n_px) + c
                start = (prim.index * 3 + c) * block
                j[rows, start : start + block] = contrib
        row0 += 3 * n_px
    return j


def jacobian_appearance(scene: SceneGraph, design: ObservationDesign) -> JacobianBlocks:
    """Analytic appearance Jacobian split into spatial/temporal blocks."""
    layout = layout_of(scene)
    j = assemble_jacobian(scene, design)
    return JacobianBlocks(
        j_spatial=j[:, layout.spatial_indices()],
        j_temporal=j[:, layout.temporal_indices()],
        layout=layout,
        columns=tuple(layout.describe_columns()),
    )


def jacobian_fd(
    scene: SceneGraph, design: ObservationDesign, step: float = 1e-5
) -> JacobianBlocks:
    """Central-finite-difference oracle over every appearance parameter."""
    if step <= 0:
        raise DomainError("finite-difference step must be > 0")
    layout = layout_of(scene)
    theta = layout.pack(scene.appearances())
    n_rows = 3 * design.n_contexts
    j = np.empty((n_rows, layout.size))
    for idx in range(layout.size):
        plus = theta.copy()
        plus[idx] += step
        minus = theta.copy()
        minus[idx] -= step
        _, y_plus = render_design(scene.with_appearances(layout.unpack(plus)), design)
        _, y_minus = render_design(scene.with_appearances(layout.unpack(minus)), design)
        j[:, idx] = (y_plus - y_minus) / (2.0 * step)
    return JacobianBlocks(
        j_spatial=j[:, layout.spatial_indices()],
        j_temporal=j[:, layout.temporal_indices()],
        layout=layout,
        columns=tuple(layout.describe_columns()),
    )


@dataclass(frozen=True)
class Attribution:
    """Least-squares witness A of the subspace inclusion range(J_s) in range(J_tau)."""

    matrix: np.ndarray
    residual: float
    undefined: bool = False


def attribution_matrix(blocks: JacobianBlocks) -> Attribution:
    """A = argmin ||J_tau A - J_s||_F and the relative residual.

    A residual near zero witnesses that every spatial column is explained by
    the temporal range; near one, the blocks are essentially orthogonal.
    """
    j_s, j_t = blocks.j_spatial, blocks.j_temporal
    if j_t.shape[1] < 1:
        raise DomainError("temporal block has no columns")
    norm_s = np.linalg.norm(j_s)
    if norm_s == 0.0:
        return Attribution(
            matrix=np.zeros((j_t.shape[1], j_s.shape[1])), residual=0.0, undefined=True
        )
    a, *_ = np.linalg.lstsq(j_t, j_s, rcond=None)
    residual = float(np.linalg.norm(j_t @ a - j_s) / norm_s)
    return Attribution(matrix=a, residual=residual)


def jacobian_to_csv(path, blocks: JacobianBlocks):
    """Full Jacobian with one header column per parameter."""
    j = blocks.full()
    headers = [
        f"p{p}_{c}_{kind}_n{n}_l{l}m{m}" for (p, c, kind, n, l, m) in blocks.columns
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row"] + headers)
        for r in range(j.shape[0]):
            writer.writerow([r] + [f"{v:.12e}" for v in j[r]])
