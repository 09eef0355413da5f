"""Scene graph, cameras, observation designs, and synthetic ground truth.

Conventions (fixed once, used everywhere):

* world frame is right-handed, z-up;
* the camera looks down its own -z axis, +x right, +y up;
* quaternions are stored scalar-last (x, y, z, w), matching scipy;
* the appearance parameter vector is laid out per primitive, per channel
  (R, G, B): first the static coefficients in (l, m) row-major order, then
  the time-varying coefficients for n = 1, 2, ... each again in (l, m)
  row-major order.  See :class:`ParamLayout`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .basis import Direction, ShConfig, TemporalBasis, fibonacci_sphere, temporal_matrix
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DomainError,
    ShapeError,
)


# ---------------------------------------------------------------------------
# rigid transforms and cameras
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    """x_out = R @ x_in + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ShapeError("rigid transform needs a 3x3 rotation and 3-vector")
        if np.linalg.norm(r @ r.T - np.eye(3)) > 1e-10:
            raise DomainError("rotation matrix is not orthonormal")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: x -> self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)


def camera_center(extrinsic: RigidTransform) -> np.ndarray:
    """Optical center in world coordinates of a world->camera extrinsic."""
    return -extrinsic.rotation.T @ extrinsic.translation


def look_at(position: np.ndarray, target: np.ndarray, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """World->camera extrinsic for a camera at ``position`` facing ``target``."""
    position = np.asarray(position, dtype=float)
    target = np.asarray(target, dtype=float)
    forward = target - position
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise DegenerateGeometryError("camera position coincides with target")
    forward = forward / norm
    up = np.asarray(up, dtype=float)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    right = right / np.linalg.norm(right)
    cam_up = np.cross(right, forward)
    # camera axes in world coordinates: x = right, y = up, z = -forward
    r = np.stack([right, cam_up, -forward], axis=0)
    return RigidTransform(r, -r @ position)


def pinhole_intrinsics(width: int, height: int, focal: float) -> np.ndarray:
    k = np.array(
        [
            [focal, 0.0, 0.5 * (width - 1)],
            [0.0, focal, 0.5 * (height - 1)],
            [0.0, 0.0, 1.0],
        ]
    )
    return k


def _check_intrinsics(k: np.ndarray):
    k = np.asarray(k, dtype=float)
    if k.shape != (3, 3):
        raise ShapeError("intrinsic matrix must be 3x3")
    if abs(k[1, 0]) > 0 or abs(k[2, 0]) > 0 or abs(k[2, 1]) > 0:
        raise DomainError("intrinsic matrix must be upper triangular")
    if k[0, 0] <= 0 or k[1, 1] <= 0:
        raise DomainError("focal lengths must be positive")
    return k


# ---------------------------------------------------------------------------
# primitives and appearance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianGeometry:
    """Mean, unit quaternion (x, y, z, w), positive scales, opacity in [0, 1]."""

    mean: np.ndarray
    quat: np.ndarray
    scale: np.ndarray
    opacity: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        quat = np.asarray(self.quat, dtype=float)
        scale = np.asarray(self.scale, dtype=float)
        if mean.shape != (3,) or quat.shape != (4,) or scale.shape != (3,):
            raise ShapeError("geometry fields have wrong shapes")
        if abs(np.linalg.norm(quat) - 1.0) > 1e-10:
            raise DomainError("quaternion must be unit norm")
        if np.any(scale <= 0.0):
            raise DomainError("scales must be positive")
        if not (0.0 <= self.opacity <= 1.0):
            raise DomainError("opacity must lie in [0, 1]")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "quat", quat)
        object.__setattr__(self, "scale", scale)

    def rotation_matrix(self) -> np.ndarray:
        return Rotation.from_quat(self.quat).as_matrix()


def covariance_of(geom: GaussianGeometry) -> np.ndarray:
    """Sigma = R S S^T R^T; symmetric PSD with eigenvalues scale**2."""
    r = geom.rotation_matrix()
    s = np.diag(geom.scale)
    cov = r @ s @ s.T @ r.T
    return 0.5 * (cov + cov.T)


def viewing_direction(mean_world: np.ndarray, camera_center_world: np.ndarray) -> Direction:
    """Unit vector from the primitive center toward the camera center."""
    diff = np.asarray(camera_center_world, dtype=float) - np.asarray(mean_world, dtype=float)
    if np.linalg.norm(diff) < 1e-12:
        raise DegenerateGeometryError("camera center coincides with primitive mean")
    return Direction.from_array(diff)


@dataclass(frozen=True)
class Appearance:
    """Per-channel 4D appearance coefficients, shape (3, N, n_sh).

    ``coeffs[c, 0, :]`` is the static (spatial, view-dependent) block;
    ``coeffs[c, 1:, :]`` are the time-varying (temporal) blocks.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[0] != 3:
            raise ShapeError("appearance coefficients must have shape (3, N, n_sh)")
        if not np.all(np.isfinite(c)):
            raise DomainError("appearance coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @property
    def n_temporal(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n_sh(self) -> int:
        return self.coeffs.shape[2]

    @property
    def spatial(self) -> np.ndarray:
        return self.coeffs[:, 0, :]

    @property
    def temporal(self) -> np.ndarray:
        return self.coeffs[:, 1:, :]

    def flat(self) -> np.ndarray:
        """Per-channel flattened coefficient rows, shape (3, N * n_sh)."""
        return self.coeffs.reshape(3, -1)


# ---------------------------------------------------------------------------
# scene graph
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PoseTrack:
    """Keyframed rigid motion with slerp rotation interpolation."""

    times: np.ndarray
    rotations: np.ndarray   # (K, 4) quaternions, scalar-last
    translations: np.ndarray  # (K, 3)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        rotations = np.asarray(self.rotations, dtype=float)
        translations = np.asarray(self.translations, dtype=float)
        if times.ndim != 1 or times.size < 1:
            raise ShapeError("pose track needs at least one keyframe")
        if rotations.shape != (times.size, 4) or translations.shape != (times.size, 3):
            raise ShapeError("pose track keyframe arrays are inconsistent")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise DomainError("keyframe times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "rotations", rotations)
        object.__setattr__(self, "translations", translations)

    @staticmethod
    def identity(horizon: float) -> "PoseTrack":
        return PoseTrack(
            np.array([0.0, horizon]),
            np.array([[0.0, 0.0, 0.0, 1.0]] * 2),
            np.zeros((2, 3)),
        )

    def at(self, t: float) -> RigidTransform:
        times = self.times
        if not (times[0] - 1e-9 <= t <= times[-1] + 1e-9):
            raise DomainError(f"time {t} outside pose-track domain")
        t = min(max(t, times[0]), times[-1])
        if times.size == 1:
            rot = Rotation.from_quat(self.rotations[0])
            trans = self.translations[0]
        else:
            rot = Slerp(times, Rotation.from_quat(self.rotations))(t)
            trans = np.array(
                [np.interp(t, times, self.translations[:, i]) for i in range(3)]
            )
        return RigidTransform(rot.as_matrix(), trans)


@dataclass(frozen=True)
class DynamicAgent:
    track: PoseTrack
    primitives: tuple  # of (GaussianGeometry, Appearance) in agent-local frame


@dataclass(frozen=True)
class SceneGraph:
    """Static primitives plus rigid dynamic agents on a shared time axis."""

    statics: tuple  # of (GaussianGeometry, Appearance)
    agents: tuple   # of DynamicAgent
    horizon: float
    basis: TemporalBasis
    sh: ShConfig

    @property
    def n_primitives(self) -> int:
        return len(self.statics) + sum(len(a.primitives) for a in self.agents)

    def primitives_local(self):
        """All (geometry, appearance) pairs in enumeration order."""
        out = list(self.statics)
        for agent in self.agents:
            out.extend(agent.primitives)
        return out

    def appearances(self):
        return [app for _, app in self.primitives_local()]

    def with_appearances(self, appearances) -> "SceneGraph":
        """Same geometry, new appearance coefficients (enumeration order)."""
        appearances = list(appearances)
        if len(appearances) != self.n_primitives:
            raise ShapeError("appearance count mismatch")
        it = iter(appearances)
        statics = tuple((geom, next(it)) for geom, _ in self.statics)
        agents = []
        for agent in self.agents:
            prims = tuple((geom, next(it)) for geom, _ in agent.primitives)
            agents.append(DynamicAgent(agent.track, prims))
        return SceneGraph(statics, tuple(agents), self.horizon, self.basis, self.sh)


@dataclass(frozen=True)
class WorldPrimitive:
    geometry: GaussianGeometry
    appearance: Appearance
    index: int


def resolve_world(scene: SceneGraph, t: float):
    """World-frame primitives at time t; dynamic agents rigidly transformed."""
    if not (0.0 <= t <= scene.horizon):
        raise DomainError(f"time {t} outside [0, {scene.horizon}]")
    out = []
    idx = 0
    for geom, app in scene.statics:
        out.append(WorldPrimitive(geom, app, idx))
        idx += 1
    for agent in scene.agents:
        pose = agent.track.at(t)
        pose_rot = Rotation.from_matrix(pose.rotation)
        for geom, app in agent.primitives:
            mean = pose.apply(geom.mean)
            quat = (pose_rot * Rotation.from_quat(geom.quat)).as_quat()
            quat = quat / np.linalg.norm(quat)
            moved = GaussianGeometry(mean, quat, geom.scale, geom.opacity)
            out.append(WorldPrimitive(moved, app, idx))
            idx += 1
    return out


# ---------------------------------------------------------------------------
# observation designs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueryContext:
    """One pixel query: (u, v, t, extrinsic, intrinsic)."""

    u: int
    v: int
    t: float
    extrinsic: RigidTransform
    intrinsic: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "intrinsic", _check_intrinsics(self.intrinsic))


@dataclass(frozen=True)
class Frame:
    """All pixels sharing one (time, pose) pair."""

    t: float
    extrinsic: RigidTransform
    intrinsic: np.ndarray
    pixels: np.ndarray  # (n, 2) integer (u, v)

    def __post_init__(self):
        object.__setattr__(self, "intrinsic", _check_intrinsics(self.intrinsic))
        px = np.asarray(self.pixels, dtype=int)
        if px.ndim != 2 or px.shape[1] != 2:
            raise ShapeError("pixels must have shape (n, 2)")
        object.__setattr__(self, "pixels", px)

    @property
    def camera_center(self) -> np.ndarray:
        return camera_center(self.extrinsic)


@dataclass(frozen=True)
class ObservationDesign:
    """Ordered frames plus the sampling-regime descriptor.

    ``kind`` is "full" for independent (t, viewpoint) product sampling and
    "trajectory" for single-observer (SOF) sampling where the pose set at
    each time is a deterministic function of time.
    """

    kind: str
    frames: tuple
    target: np.ndarray = field(default_factory=lambda: np.zeros(3))
    image_shape: tuple = (0, 0)  # (height, width) when frames cover full images

    def __post_init__(self):
        if self.kind not in ("full", "trajectory"):
            raise DomainError(f"unknown design kind {self.kind!r}")
        if len(self.frames) == 0:
            raise DomainError("design needs at least one frame")
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float))

    @property
    def n_contexts(self) -> int:
        return sum(f.pixels.shape[0] for f in self.frames)

    def contexts(self):
        for f in self.frames:
            for u, v in f.pixels:
                yield QueryContext(int(u), int(v), f.t, f.extrinsic, f.intrinsic)

    def basis_samples(self):
        """(times, directions) used for Gram/coherence diagnostics.

        One sample per frame: the viewing direction from the design target
        toward the frame's camera center.
        """
        ts = np.array([f.t for f in self.frames])
        dirs = np.stack(
            [
                viewing_direction(self.target, f.camera_center).as_array()
                for f in self.frames
            ]
        )
        return ts, dirs

    def times(self) -> np.ndarray:
        return np.array(sorted({f.t for f in self.frames}))

    def is_sof(self) -> bool:
        """True when the pose set at every time is a function of time."""
        seen = {}
        for f in self.frames:
            key = f.t
            pose = (tuple(np.round(f.camera_center, 9)),)
            seen.setdefault(key, set()).add(pose)
        counts = {len(v) for v in seen.values()}
        return len(counts) == 1


def _pixel_grid(height: int, width: int, stride: int = 1) -> np.ndarray:
    vs, us = np.mgrid[0:height:stride, 0:width:stride]
    return np.stack([us.ravel(), vs.ravel()], axis=-1)


def make_trajectory_design(
    horizon: float,
    camera_count: int,
    timestep_count: int,
    path: str = "circular",
    radius: float = 6.0,
    height: float = 1.5,
    target=(0.0, 0.0, 0.0),
    image_size: tuple = (8, 8),
    focal: float = 12.0,
    pixel_stride: int = 1,
    lateral_offset: float = 0.0,
    heading_offset_deg: float = 0.0,
    height_wobble: float = 0.0,
) -> ObservationDesign:
    """Single-observer (SOF) design: camera pose is a function of time.

    ``height_wobble`` adds a sinusoidal vertical modulation along the path
    (the pose is still a deterministic function of time, so the SOF structure
    is preserved) which diversifies per-primitive viewing directions.
    ``lateral_offset``/``heading_offset_deg`` displace every pose off the
    nominal path; used to build novel-view evaluation designs that share the
    trajectory's timestamps but provably leave it.
    """
    if timestep_count < 2:
        raise DomainError("need at least 2 timesteps")
    if path not in ("circular", "linear", "fixed"):
        raise DomainError(f"unknown path {path!r}")
    target = np.asarray(target, dtype=float)
    h, w = image_size
    k = pinhole_intrinsics(w, h, focal)
    pixels = _pixel_grid(h, w, pixel_stride)
    frames = []
    for j in range(timestep_count):
        t = horizon * j / timestep_count
        for cam in range(camera_count):
            if path == "circular":
                ang = 2.0 * math.pi * j / timestep_count + cam * (2.0 * math.pi / 36.0)
                z = height + height_wobble * math.sin(3.0 * ang)
                pos = target + np.array(
                    [radius * math.cos(ang), radius * math.sin(ang), z]
                )
                outward = np.array([math.cos(ang), math.sin(ang), 0.0])
            elif path == "linear":
                frac = j / (timestep_count - 1)
                pos = target + np.array(
                    [-radius + 2.0 * radius * frac, radius, height]
                ) + cam * np.array([0.0, 0.25, 0.0])
                outward = np.array([0.0, 1.0, 0.0])
            else:  # fixed: viewpoints do not move at all
                ang = cam * (2.0 * math.pi / max(camera_count, 1))
                pos = target + np.array(
                    [radius * math.cos(ang), radius * math.sin(ang), height]
                )
                outward = np.array([math.cos(ang), math.sin(ang), 0.0])
            if lateral_offset != 0.0:
                pos = pos + lateral_offset * outward
            aim = target
            if heading_offset_deg != 0.0:
                rot = Rotation.from_euler("z", heading_offset_deg, degrees=True)
                aim = pos + rot.apply(target - pos)
            frames.append(Frame(t, look_at(pos, aim), k, pixels))
    return ObservationDesign(
        kind="trajectory", frames=tuple(frames), target=target, image_shape=(h, w)
    )


def make_full_design(
    timestep_count: int,
    directions_per_timestep: int,
    horizon: float = 1.0,
    radius: float = 6.0,
    target=(0.0, 0.0, 0.0),
    image_size: tuple = (8, 8),
    focal: float = 12.0,
    pixel_stride: int = 1,
) -> ObservationDesign:
    """Independent product sampling: every timestamp sees many viewpoints."""
    if timestep_count < 1 or directions_per_timestep < 1:
        raise DomainError("both counts must be >= 1")
    target = np.asarray(target, dtype=float)
    h, w = image_size
    k = pinhole_intrinsics(w, h, focal)
    pixels = _pixel_grid(h, w, pixel_stride)
    dirs = fibonacci_sphere(directions_per_timestep)
    frames = []
    for j in range(timestep_count):
        t = horizon * j / timestep_count
        for d in dirs:
            pos = target + radius * d
            frames.append(Frame(t, look_at(pos, target), k, pixels))
    kind = "full" if directions_per_timestep > 1 else "trajectory"
    return ObservationDesign(
        kind=kind, frames=tuple(frames), target=target, image_shape=(h, w)
    )


# ---------------------------------------------------------------------------
# parameter layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParamLayout:
    """Bijection between appearance coefficients and the flat vector theta.

    Per primitive, per channel: n_sh static entries in (l, m) row-major
    order, then (n_temporal - 1) * n_sh time-varying entries ascending n.
    """

    n_primitives: int
    n_temporal: int
    n_sh: int

    @property
    def block_size(self) -> int:
        return self.n_temporal * self.n_sh

    @property
    def size(self) -> int:
        return self.n_primitives * 3 * self.block_size

    def spatial_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        block = np.zeros(self.block_size, dtype=bool)
        block[: self.n_sh] = True
        mask[:] = np.tile(block, self.n_primitives * 3)
        return mask

    def spatial_indices(self) -> np.ndarray:
        return np.flatnonzero(self.spatial_mask())

    def temporal_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.spatial_mask())

    def pack(self, appearances) -> np.ndarray:
        theta = np.empty(self.size)
        for p, app in enumerate(appearances):
            if app.n_temporal != self.n_temporal or app.n_sh != self.n_sh:
                raise ShapeError("appearance dimensions do not match layout")
            for c in range(3):
                start = (p * 3 + c) * self.block_size
                theta[start : start + self.block_size] = app.coeffs[c].ravel()
        return theta

    def unpack(self, theta: np.ndarray):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.size,):
            raise ShapeError(f"theta must have length {self.size}")
        out = []
        for p in range(self.n_primitives):
            coeffs = np.empty((3, self.n_temporal, self.n_sh))
            for c in range(3):
                start = (p * 3 + c) * self.block_size
                coeffs[c] = theta[start : start + self.block_size].reshape(
                    self.n_temporal, self.n_sh
                )
            out.append(Appearance(coeffs))
        return out

    def describe_columns(self):
        """(primitive, channel, kind, n, l, m) per theta entry."""
        out = []
        shcoords = [
            (l, m)
            for l in range(int(math.isqrt(self.n_sh)))
            for m in range(-l, l + 1)
        ]
        for p in range(self.n_primitives):
            for c in range(3):
                for n in range(self.n_temporal):
                    kind = "spatial" if n == 0 else "temporal"
                    for l, m in shcoords:
                        out.append((p, "rgb"[c], kind, n, l, m))
        return out


def layout_of(scene: SceneGraph) -> ParamLayout:
    return ParamLayout(
        n_primitives=scene.n_primitives,
        n_temporal=scene.basis.count,
        n_sh=scene.sh.n_terms,
    )


# ---------------------------------------------------------------------------
# synthetic scenes
# ---------------------------------------------------------------------------

DEFAULT_RECIPE = {
    "horizon": 1.0,
    "sh_degree": 1,
    "temporal": {"kind": "fourier", "count": 16},
    "n_static": 5,
    "box": 1.2,
    "base_color": [0.35, 0.85],
    "view_dep_scale": 0.35,
    "scale_range": [0.25, 0.5],
    "opacity_range": [0.6, 0.95],
    "events": [],       # e.g. [{"primitive": 0, "channels": [0], "amplitude": 0.5,
    #                            "onset": 0.5, "width": 0.08}]
    "agents": [],       # e.g. [{"velocity": [1.0, 0, 0], "n_primitives": 1}]
}


def _smooth_step_coeffs(basis: TemporalBasis, onset: float, width: float) -> np.ndarray:
    """Temporal-basis coefficients of a smoothed 0->1 step at ``onset``.

    The profile is projected onto the basis by least squares on a fine grid,
    so the planted ground truth is exactly representable by the model.
    """
    ts = np.linspace(0.0, basis.horizon, 1024, endpoint=False)
    profile = 0.5 * (1.0 + np.tanh((ts - onset) / max(width, 1e-6)))
    phi = temporal_matrix(basis, ts)
    coeffs, *_ = np.linalg.lstsq(phi, profile, rcond=None)
    return coeffs


def _build_recipe(recipe) -> dict:
    merged = dict(DEFAULT_RECIPE)
    merged.update(recipe or {})
    if merged["horizon"] <= 0:
        raise ConfigError("recipe horizon must be > 0")
    if merged["n_static"] < 0:
        raise ConfigError("recipe n_static must be >= 0")
    if merged["sh_degree"] not in (0, 1, 2):
        raise ConfigError("recipe sh_degree must be 0, 1, or 2")
    return merged


def _random_geometry(rng, box, scale_range, opacity_range) -> GaussianGeometry:
    mean = rng.uniform(-box, box, size=3)
    quat = rng.normal(size=4)
    quat = quat / np.linalg.norm(quat)
    scale = rng.uniform(scale_range[0], scale_range[1], size=3)
    opacity = float(rng.uniform(opacity_range[0], opacity_range[1]))
    return GaussianGeometry(mean, quat, scale, opacity)


def synth_scene(recipe=None, seed: int = 0):
    """Reproducible synthetic scene plus its ground-truth parameter vector.

    Returns ``(SceneGraph, theta_star)`` where ``theta_star`` follows the
    :class:`ParamLayout` ordering.
    """
    recipe = _build_recipe(recipe)
    rng = np.random.default_rng(seed)
    horizon = float(recipe["horizon"])
    sh = ShConfig(int(recipe["sh_degree"]))
    tspec = recipe["temporal"]
    basis = TemporalBasis(
        kind=tspec.get("kind", "fourier"),
        count=int(tspec.get("count", 16)),
        horizon=horizon,
        order=int(tspec.get("order", 4)),
    )
    n_sh = sh.n_terms
    n_t = basis.count
    from .basis import SH_C0  # local import keeps module top uncluttered

    def random_appearance() -> np.ndarray:
        coeffs = np.zeros((3, n_t, n_sh))
        base = rng.uniform(recipe["base_color"][0], recipe["base_color"][1], size=3)
        coeffs[:, 0, 0] = base / SH_C0
        if n_sh > 1:
            amp = recipe["view_dep_scale"]
            coeffs[:, 0, 1:] = rng.uniform(-amp, amp, size=(3, n_sh - 1)) / SH_C0
        return coeffs

    statics = []
    for _ in range(int(recipe["n_static"])):
        geom = _random_geometry(
            rng, recipe["box"], recipe["scale_range"], recipe["opacity_range"]
        )
        statics.append([geom, random_appearance()])

    agents = []
    agent_apps = []
    for aspec in recipe["agents"]:
        vel = np.asarray(aspec.get("velocity", [1.0, 0.0, 0.0]), dtype=float)
        track = PoseTrack(
            np.array([0.0, horizon]),
            np.array([[0.0, 0.0, 0.0, 1.0]] * 2),
            np.array([[0.0, 0.0, 0.0], vel * horizon]),
        )
        prims = []
        for _ in range(int(aspec.get("n_primitives", 1))):
            geom = _random_geometry(
                rng, recipe["box"] * 0.3, recipe["scale_range"], recipe["opacity_range"]
            )
            prims.append([geom, random_appearance()])
        agents.append((track, prims))
        agent_apps.extend(prims)

    all_prims = statics + agent_apps
    if not all_prims:
        raise ConfigError("recipe produces an empty scene")

    for event in recipe["events"]:
        p = int(event["primitive"])
        if not (0 <= p < len(all_prims)):
            raise ConfigError(f"event primitive index {p} out of range")
        step = _smooth_step_coeffs(
            basis, float(event.get("onset", 0.5 * horizon)),
            float(event.get("width", 0.08 * horizon)),
        )
        amp = float(event.get("amplitude", 0.5))
        coeffs = all_prims[p][1]
        for c in event.get("channels", [0]):
            # plant the event in the isotropic (l=0) coefficient trajectory;
            # the profile's constant part lands in the static block
            coeffs[c, :, 0] += (amp / SH_C0) * step

    statics_t = tuple((geom, Appearance(c)) for geom, c in statics)
    agents_t = tuple(
        DynamicAgent(track, tuple((g, Appearance(c)) for g, c in prims))
        for track, prims in agents
    )
    scene = SceneGraph(statics_t, agents_t, horizon, basis, sh)
    theta_star = layout_of(scene).pack(scene.appearances())
    return scene, theta_star


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def scene_to_dict(scene: SceneGraph, theta_star=None, recipe=None, seed=None) -> dict:
    def prim_dict(geom, app):
        return {
            "mean": geom.mean.tolist(),
            "quat": geom.quat.tolist(),
            "scale": geom.scale.tolist(),
            "opacity": geom.opacity,
            "coeffs": app.coeffs.tolist(),
        }

    doc = {
        "horizon": scene.horizon,
        "sh_degree": scene.sh.max_degree,
        "temporal": {
            "kind": scene.basis.kind,
            "count": scene.basis.count,
            "order": scene.basis.order,
        },
        "statics": [prim_dict(g, a) for g, a in scene.statics],
        "agents": [
            {
                "track": {
                    "times": agent.track.times.tolist(),
                    "rotations": agent.track.rotations.tolist(),
                    "translations": agent.track.translations.tolist(),
                },
                "primitives": [prim_dict(g, a) for g, a in agent.primitives],
            }
            for agent in scene.agents
        ],
        "theta_layout": (
            "per primitive, per channel (R,G,B): static coefficients in (l,m) "
            "row-major order, then temporal coefficients ascending n, each "
            "block in (l,m) row-major order"
        ),
    }
    if theta_star is not None:
        doc["theta_star"] = np.asarray(theta_star).tolist()
    if recipe is not None:
        doc["recipe"] = recipe
    if seed is not None:
        doc["seed"] = seed
    return doc


def scene_from_dict(doc: dict) -> SceneGraph:
    def prim(d):
        return (
            GaussianGeometry(
                np.array(d["mean"]), np.array(d["quat"]),
                np.array(d["scale"]), float(d["opacity"]),
            ),
            Appearance(np.array(d["coeffs"])),
        )

    horizon = float(doc["horizon"])
    sh = ShConfig(int(doc["sh_degree"]))
    t = doc["temporal"]
    basis = TemporalBasis(t["kind"], int(t["count"]), horizon, int(t.get("order", 4)))
    statics = tuple(prim(d) for d in doc["statics"])
    agents = tuple(
        DynamicAgent(
            PoseTrack(
                np.array(a["track"]["times"]),
                np.array(a["track"]["rotations"]),
                np.array(a["track"]["translations"]),
            ),
            tuple(prim(d) for d in a["primitives"]),
        )
        for a in doc.get("agents", [])
    )
    return SceneGraph(statics, agents, horizon, basis, sh)


def save_scene(path, scene: SceneGraph, theta_star=None, recipe=None, seed=None):
    doc = scene_to_dict(scene, theta_star=theta_star, recipe=recipe, seed=seed)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_scene(path) -> SceneGraph:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))
