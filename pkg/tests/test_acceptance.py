"""Acceptance gate: the ten headline criteria, one test each.

Every test prints one ``criterion N ... : PASS`` line on success (run with
``pytest -v`` to see one line per criterion regardless) and enforces its
stated runtime budget.
"""
from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from splatid.basis import (
    ShConfig,
    TemporalBasis,
    coherence,
    fibonacci_sphere,
    gram,
    sh_basis,
    temporal_matrix,
)
from splatid.fitlab import get_scenario, lambda_sweep, run_scenario
from splatid.infogeo import (
    Fim,
    crb,
    crb_sandwich_check,
    fim,
    fim_from_matrices,
    numerical_rank,
    schur_spatial,
    schur_temporal,
)
from splatid.jacobians import attribution_matrix, jacobian_appearance, jacobian_fd
from splatid.opg import null_projector, purify, reconditioned_fim
from splatid.regtv import TvConfig, tv_gradient, tv_penalty
from splatid.render import frame_weights, render_design
from splatid.scene import (
    layout_of,
    make_full_design,
    make_trajectory_design,
    resolve_world,
    synth_scene,
)

from conftest import SMALL_RECIPE


class _Budget:
    def __init__(self, seconds: float):
        self.seconds = seconds
        self.start = time.monotonic()

    def check(self):
        elapsed = time.monotonic() - self.start
        assert elapsed < self.seconds, f"runtime {elapsed:.1f}s over budget"
        return elapsed


def _report(n: int, name: str, budget: _Budget):
    print(f"criterion {n} ({name}): PASS in {budget.check():.1f}s")


# ---------------------------------------------------------------------------
# 1. basis correctness
# ---------------------------------------------------------------------------

def test_criterion_01_basis_correctness():
    budget = _Budget(10.0)
    rng = np.random.default_rng(0)

    # addition theorem: sum_m Y_l^m(d)^2 = (2l+1)/(4 pi)
    dirs = rng.standard_normal((1000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    y = sh_basis(2, dirs)
    for l in (0, 1, 2):
        sums = np.sum(y[:, l * l:(l + 1) ** 2] ** 2, axis=1)
        assert np.max(np.abs(sums - (2 * l + 1) / (4 * math.pi))) < 1e-10

    # Monte-Carlo orthonormality over the sphere
    n = 120_000
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    y = sh_basis(2, dirs)
    g = 4.0 * math.pi * (y.T @ y) / n
    assert np.max(np.abs(g - np.eye(9))) < 3.0 / math.sqrt(n)

    # Fourier orthogonality and Gram diagonal, 1e-8 relative
    basis = TemporalBasis("fourier", 16, horizon=1.0)
    nodes = 4096
    ts = (np.arange(nodes) + 0.5) / nodes
    phi = temporal_matrix(basis, ts)
    g = phi.T @ phi / nodes
    diag = np.diag(g)
    expected = np.full(16, 0.5)
    expected[0] = 1.0
    assert np.max(np.abs(diag - expected) / expected) < 1e-8
    off = g - np.diag(diag)
    assert np.max(np.abs(off)) / np.min(diag) < 1e-8

    # B-spline partition of unity at 1e-12
    bsp = TemporalBasis("bspline", 16, horizon=1.0, order=4)
    ts = np.concatenate([rng.uniform(0, 1, 200), [0.0, 1.0]])
    assert np.max(np.abs(temporal_matrix(bsp, ts).sum(axis=1) - 1.0)) < 1e-12

    _report(1, "basis correctness", budget)


# ---------------------------------------------------------------------------
# 2. renderer contracts
# ---------------------------------------------------------------------------

def test_criterion_02_renderer_contracts(small_scene, small_full_design):
    budget = _Budget(10.0)
    scene, _ = small_scene

    # weight bounds and total opacity
    for frame in small_full_design.frames[:24]:
        w = frame_weights(resolve_world(scene, frame.t), frame)
        assert np.all(w >= 0.0) and np.all(w <= 1.0 + 1e-9)
        assert np.all(w.sum(axis=1) <= 1.0 + 1e-9)

    # exact linearity in appearance at 1e-12
    layout = layout_of(scene)
    rng = np.random.default_rng(1)
    t1, t2 = rng.standard_normal((2, layout.size))
    def render(theta):
        s = scene.with_appearances(layout.unpack(theta))
        return render_design(s, small_full_design)[1]
    lhs = render(0.6 * t1 - 1.7 * t2)
    rhs = 0.6 * render(t1) - 1.7 * render(t2)
    assert np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(rhs))) < 1e-12

    # occlusion: an opaque full-coverage occluder zeroes the rear weight
    from test_render import (
        _camera_at_z, _const_appearance, _ctx_at_mean, _geom, _tiny_scene,
    )
    from splatid.render import render_pixel
    e, k = _camera_at_z(10.0, size=9)
    front = _geom(mean=(0, 0, 2.0), scale=(50.0,) * 3, opacity=1.0)
    rear = _geom(mean=(0, 0, -2.0), scale=(50.0,) * 3, opacity=1.0)
    basis, cfg, prims = _tiny_scene(
        [(front, _const_appearance([1, 0, 0])), (rear, _const_appearance([0, 1, 0]))]
    )
    out = render_pixel(prims, _ctx_at_mean(e, k), basis, cfg)
    by_index = dict(zip(out.order.tolist(), out.weights.tolist()))
    assert by_index[0] == pytest.approx(1.0, abs=1e-6)
    assert by_index[1] == pytest.approx(0.0, abs=1e-6)

    _report(2, "renderer contracts", budget)


# ---------------------------------------------------------------------------
# 3. Jacobian oracle
# ---------------------------------------------------------------------------

def test_criterion_03_jacobian_oracle():
    budget = _Budget(60.0)
    worst = 0.0
    for pair in range(20):
        recipe = dict(SMALL_RECIPE)
        recipe["n_static"] = 2 + pair % 2
        scene, _ = synth_scene(recipe, seed=100 + pair)
        if pair % 2 == 0:
            design = make_full_design(3, 4, horizon=1.0, image_size=(3, 3))
        else:
            design = make_trajectory_design(
                horizon=1.0, camera_count=1, timestep_count=8,
                path=("circular", "linear")[pair % 4 == 1],
                image_size=(3, 3),
            )
        analytic = jacobian_appearance(scene, design).full()
        fd = jacobian_fd(scene, design).full()
        norms = np.linalg.norm(analytic - fd, axis=0)
        ref = np.maximum(np.linalg.norm(analytic, axis=0),
                         1e-12 * np.linalg.norm(analytic))
        worst = max(worst, float(np.max(norms / ref)))
    assert worst < 1e-6
    _report(3, "jacobian oracle", budget)


# ---------------------------------------------------------------------------
# 4. orthogonality collapse reproduction
# ---------------------------------------------------------------------------

def test_criterion_04_collapse_reproduction(
    small_scene, small_full_design, sof_scene, sof_design
):
    budget = _Budget(60.0)

    # full-manifold sampling: cross-block information vanishes
    scene, _ = small_scene
    f = fim(jacobian_appearance(scene, small_full_design), 0.01)
    off = np.linalg.norm(f.f_st)
    diag = min(np.linalg.norm(f.f_ss), np.linalg.norm(f.f_tt))
    assert off / diag < 1e-6

    # single-observer circular trajectory, 16 Fourier modes: the temporal
    # range explains the spatial columns and the sampled bases correlate
    scene, _ = sof_scene
    blocks = jacobian_appearance(scene, sof_design)
    att = attribution_matrix(blocks)
    assert att.residual < 0.05
    rho = coherence(gram(scene.basis, scene.sh, sof_design))
    assert rho > 0.1

    _report(4, "orthogonality collapse", budget)


# ---------------------------------------------------------------------------
# 5. Schur-complement collapse identities
# ---------------------------------------------------------------------------

def test_criterion_05_schur_identities():
    budget = _Budget(10.0)
    rng = np.random.default_rng(2)
    for trial in range(5):
        j_t = rng.standard_normal((50 + 10 * trial, 8))
        a = rng.standard_normal((8, 3))
        j_s = j_t @ a
        f = fim_from_matrices(j_s, j_t, sigma=0.3)
        s_s = schur_spatial(f)
        assert np.linalg.norm(s_s) <= 1e-8 * np.linalg.norm(f.f_ss)
        s_t = schur_temporal(f)
        rank = numerical_rank(s_t, reference=np.linalg.norm(f.f_tt))
        assert rank == numerical_rank(j_t) - numerical_rank(j_s)

    # 2x2 hand case with 1x1 blocks
    f = Fim(matrix=np.array([[2.0, 1.0], [1.0, 1.0]]), sigma=1.0, split=1)
    assert schur_spatial(f) == pytest.approx(np.array([[1.0]]))
    assert schur_temporal(f) == pytest.approx(np.array([[0.5]]))

    _report(5, "schur collapse identities", budget)


# ---------------------------------------------------------------------------
# 6. CRB sandwich
# ---------------------------------------------------------------------------

def test_criterion_06_crb_sandwich(small_scene, small_full_design):
    budget = _Budget(300.0)
    scene, _ = small_scene
    rep = crb_sandwich_check(
        scene, small_full_design, sigma=0.01, trials=2000, seed=1
    )
    assert rep.trials >= 500
    assert rep.min_eig_difference > -0.1 * rep.crb_norm
    assert rep.passed
    _report(6, "crb sandwich", budget)


# ---------------------------------------------------------------------------
# 7. projected-gradient contracts
# ---------------------------------------------------------------------------

def test_criterion_07_opg_contracts(sof_scene, sof_design):
    budget = _Budget(120.0)
    scene, _ = sof_scene
    blocks = jacobian_appearance(scene, sof_design)

    proj = null_projector(blocks.j_spatial)
    p = proj.dense()
    assert np.linalg.norm(p @ p - p) <= 1e-8 * np.linalg.norm(p)
    assert np.max(np.abs(p - p.T)) < 1e-10

    j_t_pure = purify(blocks.j_temporal, proj)
    cross = np.linalg.norm(blocks.j_spatial.T @ j_t_pure)
    scale = np.linalg.norm(blocks.j_spatial) * np.linalg.norm(blocks.j_temporal)
    assert cross <= 1e-10 * scale

    f_opg = reconditioned_fim(blocks.j_spatial, j_t_pure, 0.01)
    assert np.linalg.norm(f_opg.f_st) == 0.0
    assert np.linalg.norm(f_opg.f_ts) == 0.0

    naive_spatial, _ = crb(fim(blocks, 0.01))
    assert naive_spatial.diverged
    opg_spatial, _ = crb(f_opg)
    assert not opg_spatial.diverged

    _report(7, "projected-gradient contracts", budget)


# ---------------------------------------------------------------------------
# 8. headline identifiability experiment
# ---------------------------------------------------------------------------

def test_criterion_08_headline_experiment():
    budget = _Budget(600.0)
    scenario = replace(get_scenario("taillight-sof"), arms=("naive", "opg+tv"))
    table, _ = run_scenario(scenario, seed=0)
    naive = table.row("naive")
    opg = table.row("opg+tv")
    assert naive["status"] == "ok" and opg["status"] == "ok"
    # spatial recovery: at least 10x better with the projected-gradient arm
    assert naive["spatial_error"] >= 10.0 * opg["spatial_error"]
    # novel-view quality: at least 6 dB better
    assert opg["novel_psnr"] - naive["novel_psnr"] >= 6.0
    # overfitting signature: on-trajectory interpolation looks equally good
    assert abs(opg["interp_psnr"] - naive["interp_psnr"]) <= 1.0
    # and the naive arm is the one whose information matrix collapsed
    assert naive["diverged"] and not opg["diverged"]
    _report(8, "headline identifiability experiment", budget)


# ---------------------------------------------------------------------------
# 9. temporal total-variation behavior
# ---------------------------------------------------------------------------

def test_criterion_09_tv_behavior():
    budget = _Budget(600.0)

    # penalty gradient vs finite differences at 1e-6
    basis = TemporalBasis("fourier", 16, horizon=1.0)
    cfg = TvConfig(weight=1.0, nodes=256, eps=1e-6)
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal(16)
    grad = tv_gradient(coeffs, basis, cfg)
    h = 1e-6
    fd = np.array([
        (tv_penalty(coeffs + h * e, basis, cfg) - tv_penalty(coeffs - h * e, basis, cfg))
        / (2 * h)
        for e in np.eye(16)
    ])
    assert np.max(np.abs(grad - fd)) / max(np.max(np.abs(fd)), 1e-12) < 1e-6

    # cosine closed form: total variation of a cos(2 pi t / T) is 4a
    sharp = TvConfig(weight=1.0, nodes=4096, eps=1e-9)
    c = np.zeros(16)
    c[1] = 0.8
    assert tv_penalty(c, basis, sharp) == pytest.approx(3.2, rel=0.01)

    # geometric weight sweep: temporal-derivative energy non-increasing,
    # largest weight leaves the fit constant in time
    lambdas = [0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0]
    points = lambda_sweep(get_scenario("taillight-sof"), lambdas, seed=0)
    energies = [p["temporal_energy"] for p in points]
    for a, b in zip(energies, energies[1:]):
        assert b <= a * (1 + 1e-9) + 1e-12
    # relative time-varying amplitude at the largest weight, measured through
    # the quadratic derivative-energy, is far below 1e-3
    assert math.sqrt(energies[-1] / max(energies[0], 1e-300)) < 1e-3
    # the unpenalized optimum has the smallest training data loss
    losses = [p["train_data_loss"] for p in points]
    assert losses[0] == min(losses)

    _report(9, "temporal TV behavior", budget)


# ---------------------------------------------------------------------------
# 10. determinism
# ---------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    budget = _Budget(600.0)
    from click.testing import CliRunner
    from splatid.cli import main as cli_main

    runner = CliRunner()
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        result = runner.invoke(cli_main, [
            "fit", "--scenario", "taillight-sof", "--arm", "opg+tv",
            "--seed", "7", "--out", str(out),
        ])
        assert result.exit_code == 0, result.output
        outputs.append(out)
    first, second = outputs
    for name in ("metrics.csv", "novel_opg_tv.ppm", "fit_opg_tv_trace.csv",
                 "fit_trace.png"):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
    _report(10, "determinism", budget)
