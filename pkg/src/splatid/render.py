"""Toy forward renderer: EWA projection, per-pixel weights, alpha blending.

Brute force over all primitives per pixel (no tiling, no culling) — this is a
correctness-first reference implementation for desk-scale scenes.  Colors are
never clamped during rendering or differentiation; clamping to [0, 1] happens
only at image export, so rendering stays exactly linear in the appearance
coefficients for fixed geometry.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .basis import ShConfig, TemporalBasis, sh_basis, temporal_matrix
from .errors import NumericError
from .scene import (
    Frame,
    ObservationDesign,
    QueryContext,
    SceneGraph,
    WorldPrimitive,
    resolve_world,
    viewing_direction,
)

# Diagonal inflation of the projected covariance, in squared pixels.
COV_INFLATION = 0.3


@dataclass(frozen=True)
class Splat2D:
    """One primitive projected into a camera."""

    mean2d: np.ndarray   # (2,) pixels
    cov2d: np.ndarray    # (2, 2) pixels^2, inflated
    depth: float         # camera-frame depth, > 0
    index: int           # primitive index in enumeration order


@dataclass(frozen=True)
class PixelRender:
    """Blended color plus the per-contributor weights, front to back."""

    color: np.ndarray    # (3,) unclamped
    weights: np.ndarray  # (k,) blend weights omega, depth order
    order: np.ndarray    # (k,) primitive indices, depth order


def project(geom, extrinsic, intrinsic, index: int = -1) -> Splat2D | None:
    """EWA projection of one world-frame primitive; None if behind the camera.

    The camera looks down its own -z axis, so depth is the negated camera-frame
    z coordinate.  The projected covariance is J W Sigma W^T J^T with J the
    local affine Jacobian of the pinhole map, upper-left 2x2 block, plus a
    small diagonal inflation.
    """
    from .scene import covariance_of  # deferred to avoid cycle at import time

    mean_cam = extrinsic.apply(geom.mean)
    x, y, z = mean_cam
    depth = -z
    if depth <= 1e-9:
        return None
    k = np.asarray(intrinsic, dtype=float)
    fx, fy = k[0, 0], k[1, 1]
    cx, cy = k[0, 2], k[1, 2]
    mean2d = np.array([fx * x / depth + cx, fy * y / depth + cy])
    j = np.array(
        [
            [fx / depth, 0.0, fx * x / depth**2],
            [0.0, fy / depth, fy * y / depth**2],
        ]
    )
    w = extrinsic.rotation
    cov_cam = w @ covariance_of(geom) @ w.T
    cov2d = j @ cov_cam @ j.T
    cov2d = 0.5 * (cov2d + cov2d.T) + COV_INFLATION * np.eye(2)
    return Splat2D(mean2d=mean2d, cov2d=cov2d, depth=float(depth), index=index)


def gaussian_weight(splat: Splat2D, pixel) -> float:
    """exp(-1/2 * Mahalanobis^2) of the pixel under the 2D Gaussian."""
    diff = np.asarray(pixel, dtype=float) - splat.mean2d
    cov = splat.cov2d
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    if det <= 1e-12:
        raise NumericError("projected covariance is numerically singular")
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
    m2 = diff @ inv @ diff
    return float(np.exp(-0.5 * m2))


def _project_all(world_prims, extrinsic, intrinsic):
    """Depth-sorted visible splats (ties broken by primitive index)."""
    splats = []
    for prim in world_prims:
        s = project(prim.geometry, extrinsic, intrinsic, index=prim.index)
        if s is not None:
            splats.append(s)
    splats.sort(key=lambda s: (s.depth, s.index))
    return splats


def frame_weights(world_prims, frame: Frame) -> np.ndarray:
    """Blend weights omega for every (pixel, primitive) pair of one frame.

    Returns shape (n_pixels, n_primitives) indexed by the primitives'
    enumeration order; invisible primitives get zero columns.  This is the
    quantity the appearance Jacobian reuses.
    """
    n_prims = len(world_prims)
    pixels = frame.pixels.astype(float)
    n_px = pixels.shape[0]
    weights = np.zeros((n_px, n_prims))
    splats = _project_all(world_prims, frame.extrinsic, frame.intrinsic)
    opacity = {p.index: p.geometry.opacity for p in world_prims}
    transmittance = np.ones(n_px)
    for s in splats:
        diff = pixels - s.mean2d
        cov = s.cov2d
        det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
        if det <= 1e-12:
            raise NumericError("projected covariance is numerically singular")
        inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
        m2 = np.einsum("ni,ij,nj->n", diff, inv, diff)
        p = np.exp(-0.5 * m2)
        alpha = opacity[s.index]
        weights[:, s.index] = p * alpha * transmittance
        transmittance = transmittance * (1.0 - p * alpha)
    return weights


def primitive_colors(world_prims, t: float, cam_center, basis, cfg) -> np.ndarray:
    """Unclamped RGB of every primitive at time t seen from one camera center.

    Viewing direction is per primitive (center toward camera) and shared by
    all pixels of a frame.
    """
    colors = np.zeros((len(world_prims), 3))
    phi = temporal_matrix(basis, np.array([t]))[0]
    for i, prim in enumerate(world_prims):
        d = viewing_direction(prim.geometry.mean, cam_center)
        y = sh_basis(cfg.max_degree, d.as_array())
        z = np.outer(phi, y).ravel()
        colors[i] = prim.appearance.flat() @ z
    return colors


def render_frame(scene: SceneGraph, frame: Frame) -> np.ndarray:
    """Unclamped colors for every pixel of a frame; shape (n_pixels, 3)."""
    world = resolve_world(scene, frame.t)
    weights = frame_weights(world, frame)
    colors = primitive_colors(world, frame.t, frame.camera_center, scene.basis, scene.sh)
    return weights @ colors


def render_pixel(world_prims, ctx: QueryContext, basis: TemporalBasis, cfg: ShConfig) -> PixelRender:
    """Blend one pixel front to back, returning weights for Jacobian reuse."""
    splats = _project_all(world_prims, ctx.extrinsic, ctx.intrinsic)
    opacity = {p.index: p.geometry.opacity for p in world_prims}
    by_index = {p.index: p for p in world_prims}
    cam = -ctx.extrinsic.rotation.T @ ctx.extrinsic.translation
    phi = temporal_matrix(basis, np.array([ctx.t]))[0]
    color = np.zeros(3)
    weights = []
    order = []
    transmittance = 1.0
    pixel = (ctx.u, ctx.v)
    for s in splats:
        p = gaussian_weight(s, pixel)
        omega = p * opacity[s.index] * transmittance
        prim = by_index[s.index]
        d = viewing_direction(prim.geometry.mean, cam)
        y = sh_basis(cfg.max_degree, d.as_array())
        z = np.outer(phi, y).ravel()
        color = color + omega * (prim.appearance.flat() @ z)
        weights.append(omega)
        order.append(s.index)
        transmittance *= 1.0 - p * opacity[s.index]
    return PixelRender(
        color=color, weights=np.array(weights), order=np.array(order, dtype=int)
    )


def render_design(
    scene: SceneGraph,
    design: ObservationDesign,
    sigma: float = 0.0,
    seed: int = 0,
):
    """Stacked observation vector over a design; returns (noisy, clean).

    Row order: contexts in design order, RGB channels adjacent, so entry
    ``3 * ctx_index + channel``.  Gaussian noise of std ``sigma`` is added
    when sigma > 0, drawn from a generator seeded with ``seed``.
    """
    if sigma < 0:
        raise NumericError("noise sigma must be >= 0")
    chunks = []
    world_cache: dict = {}
    for frame in design.frames:
        if frame.t not in world_cache:
            world_cache[frame.t] = resolve_world(scene, frame.t)
        world = world_cache[frame.t]
        weights = frame_weights(world, frame)
        colors = primitive_colors(
            world, frame.t, frame.camera_center, scene.basis, scene.sh
        )
        chunks.append((weights @ colors).ravel())
    clean = np.concatenate(chunks)
    if sigma > 0:
        rng = np.random.default_rng(seed)
        noisy = clean + sigma * rng.standard_normal(clean.shape)
    else:
        noisy = clean.copy()
    return noisy, clean


def render_image(scene: SceneGraph, t: float, extrinsic, intrinsic, shape) -> np.ndarray:
    """Full-image render; shape (height, width, 3), unclamped."""
    h, w = shape
    vs, us = np.mgrid[0:h, 0:w]
    pixels = np.stack([us.ravel(), vs.ravel()], axis=-1)
    frame = Frame(t, extrinsic, intrinsic, pixels)
    flat = render_frame(scene, frame)
    return flat.reshape(h, w, 3)


def write_ppm(path, image: np.ndarray):
    """Binary 8-bit RGB PPM (P6); clamps to [0, 1] at export only."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 3 or image.shape[2] != 3:
        raise NumericError("image must have shape (h, w, 3)")
    h, w, _ = image.shape
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def observations_to_csv(path, clean: np.ndarray, noisy: np.ndarray):
    """CSV export: context index, channel, clean, noisy."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["context", "channel", "clean", "noisy"])
        for row in range(clean.size):
            writer.writerow(
                [row // 3, "rgb"[row % 3], f"{clean[row]:.12e}", f"{noisy[row]:.12e}"]
            )
