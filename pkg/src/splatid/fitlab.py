"""Experiment orchestration: canonical scenarios, metrics, and sweeps.

A scenario bundles a synthetic scene recipe, a single-observer training
trajectory, two evaluation designs (an interpolation holdout on the same
trajectory — 3:1 split by timestep — and a true off-trajectory novel-view
set), a noise level, and a set of fitting arms.  Every arm consumes the same
noisy observation realization, so metric differences are attributable to the
method alone.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .infogeo import diagnose_blocks, _bound_of
from .jacobians import jacobian_appearance
from .opg import (
    FitResult,
    StageSchedule,
    fit_naive,
    fit_stage1,
    fit_stage2,
    fit_static,
    null_projector,
    purify,
    reconditioned_fim,
)
from .regtv import TvConfig, temporal_energy
from .render import render_design, render_image, write_ppm
from .scene import (
    ObservationDesign,
    SceneGraph,
    layout_of,
    make_full_design,
    make_trajectory_design,
    synth_scene,
)

ARMS = ("naive", "opg", "opg+tv", "static")


# ---------------------------------------------------------------------------
# scenario definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DesignConfig:
    """Geometry of the training design and its evaluation companions.

    ``kind`` "trajectory" is the single-observer (SOF) regime; "full" is the
    well-posed product-sampling regime (``dirs_per_timestep`` viewpoints at
    every timestep).
    """

    kind: str = "trajectory"
    camera_count: int = 1
    timestep_count: int = 64
    dirs_per_timestep: int = 12
    path: str = "circular"
    radius: float = 6.0
    height: float = 1.5
    image_size: tuple = (8, 8)
    focal: float = 12.0
    pixel_stride: int = 1
    height_wobble: float = 2.0
    holdout_every: int = 4           # every k-th timestep goes to interpolation
    novel_lateral: float = 1.2       # 2 * radius * 0.1
    novel_heading_deg: float = 15.0


@dataclass(frozen=True)
class Scenario:
    name: str
    recipe: dict
    sigma: float = 0.01
    schedule: StageSchedule = field(
        default_factory=lambda: StageSchedule(tv=TvConfig(weight=0.005))
    )
    arms: tuple = ARMS
    design: DesignConfig = field(default_factory=DesignConfig)

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("scenario sigma must be >= 0")
        bad = [a for a in self.arms if a not in ARMS]
        if bad:
            raise ConfigError(f"unknown arms {bad}; valid arms: {list(ARMS)}")
        if self.design.holdout_every < 2:
            raise ConfigError("holdout_every must be >= 2")


def _base_recipe(**overrides) -> dict:
    recipe = {
        "horizon": 1.0,
        "sh_degree": 1,
        "temporal": {"kind": "fourier", "count": 16},
        "n_static": 5,
        "box": 1.2,
        "view_dep_scale": 0.35,
    }
    recipe.update(overrides)
    return recipe


def scenario_catalog() -> dict:
    """The canonical scenarios shipped with the package."""
    taillight = Scenario(
        name="taillight-sof",
        recipe=_base_recipe(
            events=[
                {
                    "primitive": 0,
                    "channels": [0],
                    "amplitude": 0.25,
                    "onset": 0.55,
                    "width": 0.06,
                }
            ],
        ),
    )
    return {
        "static": Scenario(
            name="static",
            recipe=_base_recipe(),
            design=DesignConfig(
                kind="full", timestep_count=24, dirs_per_timestep=12,
                pixel_stride=2,
            ),
        ),
        "taillight-sof": taillight,
        "occlusion-gap": Scenario(
            name="occlusion-gap",
            recipe=_base_recipe(
                n_static=6,
                events=[
                    {
                        "primitive": 0,
                        "channels": [0, 1],
                        "amplitude": 0.2,
                        "onset": 0.4,
                        "width": 0.08,
                    }
                ],
                opacity_range=[0.85, 0.98],
            ),
            arms=("naive", "opg", "opg+tv"),
        ),
        "relative-statics": Scenario(
            name="relative-statics",
            recipe=_base_recipe(n_static=4),
            design=DesignConfig(path="fixed", camera_count=3, timestep_count=24),
            arms=("naive", "opg"),
        ),
    }


def get_scenario(name: str) -> Scenario:
    catalog = scenario_catalog()
    if name not in catalog:
        raise ConfigError(
            f"unknown scenario {name!r}; available: {sorted(catalog)}"
        )
    return catalog[name]


# ---------------------------------------------------------------------------
# design construction and hygiene
# ---------------------------------------------------------------------------

def _trajectory(cfg: DesignConfig, horizon: float, lateral=0.0, heading=0.0):
    return make_trajectory_design(
        horizon=horizon,
        camera_count=cfg.camera_count,
        timestep_count=cfg.timestep_count,
        path=cfg.path,
        radius=cfg.radius,
        height=cfg.height,
        image_size=cfg.image_size,
        focal=cfg.focal,
        pixel_stride=cfg.pixel_stride,
        lateral_offset=lateral,
        heading_offset_deg=heading,
        height_wobble=cfg.height_wobble,
    )


@dataclass(frozen=True)
class DesignTriple:
    training: ObservationDesign
    interpolation: ObservationDesign
    novel: ObservationDesign
    min_novel_pose_distance: float


def build_designs(cfg: DesignConfig, horizon: float) -> DesignTriple:
    """Training/interpolation split (3:1 by timestep) plus the novel-view set."""
    if cfg.kind == "full":
        full = make_full_design(
            timestep_count=cfg.timestep_count,
            directions_per_timestep=cfg.dirs_per_timestep,
            horizon=horizon,
            radius=cfg.radius,
            image_size=cfg.image_size,
            focal=cfg.focal,
            pixel_stride=cfg.pixel_stride,
        )
        per_t = cfg.dirs_per_timestep
        # a different direction count yields a disjoint quasi-uniform pose set
        novel = make_full_design(
            timestep_count=cfg.timestep_count,
            directions_per_timestep=cfg.dirs_per_timestep + 3,
            horizon=horizon,
            radius=cfg.radius * 1.15,
            image_size=cfg.image_size,
            focal=cfg.focal,
            pixel_stride=cfg.pixel_stride,
        )
    else:
        full = _trajectory(cfg, horizon)
        per_t = cfg.camera_count
        novel = _trajectory(
            cfg, horizon, lateral=cfg.novel_lateral, heading=cfg.novel_heading_deg
        )
    train_frames, interp_frames = [], []
    for i, frame in enumerate(full.frames):
        j = i // per_t
        (interp_frames if j % cfg.holdout_every == cfg.holdout_every - 1
         else train_frames).append(frame)
    training = ObservationDesign(
        full.kind, tuple(train_frames), full.target, full.image_shape
    )
    interpolation = ObservationDesign(
        full.kind, tuple(interp_frames), full.target, full.image_shape
    )
    train_centers = np.stack([f.camera_center for f in training.frames])
    novel_centers = np.stack([f.camera_center for f in novel.frames])
    dists = np.linalg.norm(
        train_centers[:, None, :] - novel_centers[None, :, :], axis=-1
    )
    min_dist = float(dists.min())
    _assert_hygiene(training, interpolation, novel, min_dist)
    return DesignTriple(training, interpolation, novel, min_dist)


def _assert_hygiene(training, interpolation, novel, min_novel_dist):
    """Evaluation contexts must be disjoint from training contexts."""
    train_keys = {
        (round(f.t, 12), tuple(np.round(f.camera_center, 9)))
        for f in training.frames
    }
    for f in interpolation.frames:
        if (round(f.t, 12), tuple(np.round(f.camera_center, 9))) in train_keys:
            raise ConfigError("interpolation frames overlap the training set")
    if min_novel_dist <= 1e-6:
        raise ConfigError("novel-view poses coincide with the training trajectory")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def psnr(rendered: np.ndarray, reference: np.ndarray) -> float:
    """10 log10(1 / MSE) over colors clamped to [0, 1]; inf when MSE = 0."""
    a = np.clip(np.asarray(rendered, dtype=float), 0.0, 1.0)
    b = np.clip(np.asarray(reference, dtype=float), 0.0, 1.0)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * math.log10(1.0 / mse)


def recovery_errors(theta_hat, theta_star, layout):
    """Relative spatial and temporal parameter recovery errors."""
    sp = layout.spatial_indices()
    tp = layout.temporal_indices()
    s_star, t_star = theta_star[sp], theta_star[tp]
    s_err = np.linalg.norm(theta_hat[sp] - s_star)
    t_err = np.linalg.norm(theta_hat[tp] - t_star)
    s_rel = s_err / np.linalg.norm(s_star) if np.linalg.norm(s_star) > 0 else s_err
    t_rel = t_err / np.linalg.norm(t_star) if np.linalg.norm(t_star) > 0 else t_err
    return float(s_rel), float(t_rel)


def design_psnr(fitted: SceneGraph, design, reference: np.ndarray) -> float:
    _, rendered = render_design(fitted, design)
    return psnr(rendered, reference)


# Sub-stream offsets added to the master seed: training noise uses the master
# seed itself; the interpolation holdout's capture noise uses an independent
# stream.
INTERP_SEED_OFFSET = 1000003


def fitted_temporal_energy(theta_hat, scene: SceneGraph) -> float:
    layout = layout_of(scene)
    coeffs = np.stack(
        [a.coeffs for a in layout.unpack(theta_hat)]
    )  # (P, 3, N, S) -> profiles along N
    profiles = np.moveaxis(coeffs, 2, -1)
    return temporal_energy(profiles, scene.basis)


@dataclass
class MetricsTable:
    scenario: str
    seed: int
    rows: list  # dicts keyed by COLUMNS

    COLUMNS = (
        "arm",
        "status",
        "spatial_error",
        "temporal_error",
        "interp_psnr",
        "novel_psnr",
        "collapse_ratio",
        "diverged",
        "tv_energy",
    )

    def row(self, arm: str) -> dict:
        for r in self.rows:
            if r["arm"] == arm:
                return r
        raise KeyError(arm)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for r in self.rows:
            writer.writerow([_format_cell(r.get(c)) for c in self.COLUMNS])
        return buf.getvalue()


def _format_cell(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf"
        if math.isnan(v):
            return "nan"
        return f"{v:.10e}"
    return str(v)


# ---------------------------------------------------------------------------
# atomic artifact writing
# ---------------------------------------------------------------------------

def atomic_write_text(path, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# arm execution
# ---------------------------------------------------------------------------

def _arm_schedule(arm: str, schedule: StageSchedule) -> StageSchedule:
    if arm == "opg":
        return replace(schedule, tv=replace(schedule.tv, weight=0.0))
    return schedule


def _arm_diagnostics(arm, scene, design, sigma):
    """Identifiability numbers for the metrics row.

    Naive/static arms are judged on the joint FIM; OPG arms on the
    reconditioned (purified) FIM that their update rule actually follows.
    """
    blocks = jacobian_appearance(scene, design)
    if arm in ("naive", "static"):
        report = diagnose_blocks(blocks, sigma, design_kind=design.kind)
        return report.collapse_ratio, report.diverged
    proj = null_projector(blocks.j_spatial)
    j_t_pure = purify(blocks.j_temporal, proj)
    f = reconditioned_fim(blocks.j_spatial, j_t_pure, sigma)
    spatial_bound = _bound_of(f.f_ss)
    spec = np.linalg.eigvalsh(f.f_ss)  # ascending
    ratio = max(float(spec[0]), 0.0) / float(spec[-1]) if spec[-1] > 0 else 0.0
    return ratio, spatial_bound.diverged


def run_arm(
    arm: str,
    scene: SceneGraph,
    observations: np.ndarray,
    design: ObservationDesign,
    schedule: StageSchedule,
) -> FitResult:
    schedule = _arm_schedule(arm, schedule)
    if arm == "naive":
        return fit_naive(scene, observations, design, schedule)
    if arm == "static":
        return fit_static(scene, observations, design, schedule)
    stage1 = fit_stage1(scene, observations, design, schedule)
    return fit_stage2(stage1, observations, scene, schedule)


def run_scenario(scenario: Scenario, seed: int = 0, out_dir=None):
    """Execute every arm on shared data; returns (MetricsTable, artifacts).

    Artifacts hold the fitted results and reports in memory; when ``out_dir``
    is given they are also written to disk (atomically) with a manifest.
    """
    scene, theta_star = synth_scene(scenario.recipe, seed=seed)
    layout = layout_of(scene)
    designs = build_designs(scenario.design, scene.horizon)
    noisy, clean = render_design(
        scene, designs.training, sigma=scenario.sigma, seed=seed
    )
    # Interpolation is judged against held-out noisy captures (the realistic
    # protocol: on-trajectory test views are observations, not ground truth);
    # novel views have no observation and are judged against the clean render.
    interp_ref, _ = render_design(
        scene, designs.interpolation, sigma=scenario.sigma,
        seed=seed + INTERP_SEED_OFFSET,
    )
    _, novel_ref = render_design(scene, designs.novel)
    rows = []
    artifacts = {
        "scene": scene,
        "theta_star": theta_star,
        "designs": designs,
        "observations": (noisy, clean),
        "fits": {},
    }
    for arm in scenario.arms:
        try:
            fit = run_arm(arm, scene, noisy, designs.training, scenario.schedule)
            fitted_scene = scene.with_appearances(layout.unpack(fit.theta))
            s_err, t_err = recovery_errors(fit.theta, theta_star, layout)
            collapse, diverged = _arm_diagnostics(
                arm, scene, designs.training, max(scenario.sigma, 1e-6)
            )
            row = {
                "arm": arm,
                "status": "ok",
                "spatial_error": s_err,
                "temporal_error": t_err,
                "interp_psnr": design_psnr(fitted_scene, designs.interpolation, interp_ref),
                "novel_psnr": design_psnr(fitted_scene, designs.novel, novel_ref),
                "collapse_ratio": collapse,
                "diverged": diverged,
                "tv_energy": fitted_temporal_energy(fit.theta, scene),
            }
            artifacts["fits"][arm] = fit
        except Exception as exc:  # per-arm failures must not abort the others
            row = {
                "arm": arm,
                "status": f"error:{type(exc).__name__}",
                "spatial_error": float("nan"),
                "temporal_error": float("nan"),
                "interp_psnr": float("nan"),
                "novel_psnr": float("nan"),
                "collapse_ratio": float("nan"),
                "diverged": False,
                "tv_energy": float("nan"),
            }
        rows.append(row)
    table = MetricsTable(scenario=scenario.name, seed=seed, rows=rows)
    if out_dir is not None:
        _write_scenario_artifacts(out_dir, scenario, seed, scene, table, artifacts)
    return table, artifacts


def _write_scenario_artifacts(out_dir, scenario, seed, scene, table, artifacts):
    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    atomic_write_text(metrics_path, table.to_csv_text())
    layout = layout_of(scene)
    written = [metrics_path]
    for arm, fit in artifacts["fits"].items():
        safe = arm.replace("+", "_")
        trace_path = os.path.join(out_dir, f"fit_{safe}_trace.csv")
        fit.trace_to_csv(trace_path)
        written.append(trace_path)
        fitted = scene.with_appearances(layout.unpack(fit.theta))
        frame = artifacts["designs"].novel.frames[0]
        img = render_image(
            fitted, frame.t, frame.extrinsic, frame.intrinsic,
            artifacts["designs"].novel.image_shape,
        )
        ppm_path = os.path.join(out_dir, f"novel_{safe}.ppm")
        write_ppm(ppm_path, img)
        written.append(ppm_path)
    manifest = {
        "scenario": scenario.name,
        "seed": seed,
        "sigma": scenario.sigma,
        "arms": list(scenario.arms),
        "artifacts": {
            os.path.basename(p): file_sha256(p) for p in sorted(written)
        },
    }
    atomic_write_text(
        os.path.join(out_dir, "manifest.json"),
        json.dumps(manifest, indent=1, sort_keys=True) + "\n",
    )


# ---------------------------------------------------------------------------
# suites and sweeps
# ---------------------------------------------------------------------------

def ablation_suite(seed: int = 0, out_dir=None) -> MetricsTable:
    """Reference scenario across {full, w/o OPG, w/o TV, B-spline basis}."""
    base = get_scenario("taillight-sof")
    variants = {
        "full": replace(base, arms=("opg+tv",)),
        "wo_opg": replace(base, arms=("naive",)),
        "wo_tv": replace(base, arms=("opg",)),
        "bspline": replace(
            base,
            arms=("opg+tv",),
            recipe={**base.recipe, "temporal": {"kind": "bspline", "count": 16}},
        ),
    }
    rows = []
    for name, variant in variants.items():
        table, _ = run_scenario(variant, seed=seed)
        row = dict(table.rows[0])
        row["arm"] = name
        rows.append(row)
    out = MetricsTable(scenario="ablation", seed=seed, rows=rows)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        atomic_write_text(os.path.join(out_dir, "ablation.csv"), out.to_csv_text())
    return out


def lambda_sweep(scenario: Scenario, lambdas, seed: int = 0, out_dir=None):
    """TV-weight trade-off curve on one scenario; reuses stage 1 across points."""
    lambdas = list(lambdas)
    if len(lambdas) < 2:
        raise ConfigError("lambda sweep needs at least 2 values")
    scene, theta_star = synth_scene(scenario.recipe, seed=seed)
    layout = layout_of(scene)
    designs = build_designs(scenario.design, scene.horizon)
    noisy, _ = render_design(scene, designs.training, sigma=scenario.sigma, seed=seed)
    _, novel_ref = render_design(scene, designs.novel)
    stage1 = fit_stage1(scene, noisy, designs.training, scenario.schedule)
    points = []
    for lam in lambdas:
        schedule = replace(
            scenario.schedule, tv=replace(scenario.schedule.tv, weight=float(lam))
        )
        fit = fit_stage2(stage1, noisy, scene, schedule)
        fitted = scene.with_appearances(layout.unpack(fit.theta))
        s_err, _ = recovery_errors(fit.theta, theta_star, layout)
        points.append(
            {
                "lambda": float(lam),
                "novel_psnr": design_psnr(fitted, designs.novel, novel_ref),
                "train_psnr": design_psnr(fitted, designs.training, noisy),
                # unclamped training data loss from the optimizer trace; the
                # unpenalized-optimum ordering holds for this quantity (PSNR
                # clamps colors to [0, 1] and need not be monotone)
                "train_data_loss": float(fit.loss_trace[-1][1]),
                "temporal_energy": fitted_temporal_energy(fit.theta, scene),
                "spatial_error": s_err,
            }
        )
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = ["lambda", "novel_psnr", "train_psnr", "train_data_loss",
                "temporal_energy", "spatial_error"]
        writer.writerow(cols)
        for p in points:
            writer.writerow([_format_cell(p[c]) for c in cols])
        atomic_write_text(os.path.join(out_dir, "lambda_sweep.csv"), buf.getvalue())
    return points
