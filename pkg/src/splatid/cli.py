"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.
Every command honors ``--seed`` and writes a run manifest into its output
directory; metrics CSVs and images are byte-identical across re-runs with the
same seed.
"""
from __future__ import annotations

import datetime
import functools
import json
import os
import sys

import click
import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, IllPosedError, NumericError
from .fitlab import (
    ARMS,
    ablation_suite,
    atomic_write_text,
    file_sha256,
    get_scenario,
    lambda_sweep,
    run_scenario,
    scenario_catalog,
)
from .figures import (
    plot_eigenspectra,
    plot_lambda_sweep,
    plot_loss_trace,
    plot_metrics_bars,
)
from .infogeo import diagnose
from .scene import (
    load_scene,
    look_at,
    make_full_design,
    make_trajectory_design,
    pinhole_intrinsics,
    save_scene,
    synth_scene,
)
from .render import render_image, write_ppm

EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _coded_exits(func):
    """Map package exceptions onto the documented exit codes."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ConfigError, DomainError) as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (NumericError, IllPosedError, np.linalg.LinAlgError) as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)

    return wrapper


class Manifest:
    """Run manifest written before the run and finalized after it."""

    def __init__(self, out_dir, command, config, seed):
        self.path = os.path.join(out_dir, "run_manifest.json")
        self.doc = {
            "tool_version": __version__,
            "command": command,
            "config": config,
            "seed": seed,
            "started": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "finished": None,
            "artifacts": {},
        }
        os.makedirs(out_dir, exist_ok=True)
        self._write()

    def _write(self):
        atomic_write_text(
            self.path, json.dumps(self.doc, indent=1, sort_keys=True) + "\n"
        )

    def finalize(self, artifact_paths):
        self.doc["finished"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        self.doc["artifacts"] = {
            os.path.basename(p): file_sha256(p) for p in sorted(artifact_paths)
        }
        self._write()


def _require_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"scene file not found: {path}")


def _build_design(kind, horizon):
    if kind == "full":
        # enough timesteps to resolve every temporal mode of the catalog
        # recipes (16 Fourier modes need > 16 distinct times)
        return make_full_design(timestep_count=24, directions_per_timestep=12,
                                horizon=horizon, pixel_stride=2)
    return make_trajectory_design(
        horizon=horizon, camera_count=1, timestep_count=48, path=kind,
        pixel_stride=2,
    )


@click.group()
@click.version_option(__version__)
def main():
    """Identifiability diagnostics and projected-gradient fitting for
    4D Gaussian-splat appearance models."""


@main.command()
@click.option("--recipe", "recipe_name", default="taillight-sof",
              help="Scenario name whose recipe to instantiate.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@_coded_exits
def synth(recipe_name, seed, out_path):
    """Generate a synthetic ground-truth scene file."""
    scenario = get_scenario(recipe_name)
    scene, theta_star = synth_scene(scenario.recipe, seed=seed)
    save_scene(out_path, scene, theta_star=theta_star,
               recipe=scenario.recipe, seed=seed)
    click.echo(f"wrote {out_path}")


@main.command("diagnose")
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--design", "design_kind",
              type=click.Choice(["full", "circular", "linear"]), default="circular",
              show_default=True)
@click.option("--sigma", default=0.01, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_coded_exits
def diagnose_cmd(scene_path, design_kind, sigma, seed, out_dir):
    """Identifiability diagnostics (FIM, Schur, CRB) for one design."""
    if sigma <= 0:
        raise ConfigError("--sigma must be > 0")
    _require_file(scene_path)
    manifest = Manifest(out_dir, "diagnose",
                        {"scene": scene_path, "design": design_kind,
                         "sigma": sigma}, seed)
    scene = load_scene(scene_path)
    design = _build_design(design_kind, scene.horizon)
    report = diagnose(scene, design, sigma)
    report_path = os.path.join(out_dir, "info_report.json")
    spectra_path = os.path.join(out_dir, "eigenspectra.csv")
    report.save(report_path, spectra_path)
    figure_path = os.path.join(out_dir, "eigenspectra.png")
    plot_eigenspectra(report, figure_path)
    manifest.finalize([report_path, spectra_path, figure_path])
    flag = "set" if report.diverged else "not set"
    click.echo(
        f"collapse ratio {report.collapse_ratio:.3e}; divergence flag {flag}"
    )


@main.command()
@click.option("--scenario", "scenario_name", default="taillight-sof",
              show_default=True)
@click.option("--arm", required=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_coded_exits
def fit(scenario_name, arm, seed, out_dir):
    """Run one fitting arm of a scenario and write metrics and images."""
    if arm not in ARMS:
        raise ConfigError(f"unknown arm {arm!r}; valid arms: {', '.join(ARMS)}")
    scenario = get_scenario(scenario_name)
    from dataclasses import replace
    scenario = replace(scenario, arms=(arm,))
    manifest = Manifest(out_dir, "fit",
                        {"scenario": scenario_name, "arm": arm}, seed)
    table, artifacts = run_scenario(scenario, seed=seed, out_dir=out_dir)
    written = [os.path.join(out_dir, "metrics.csv")]
    if arm in artifacts["fits"]:
        trace_png = os.path.join(out_dir, "fit_trace.png")
        plot_loss_trace(artifacts["fits"][arm], trace_png)
        written.append(trace_png)
    manifest.finalize(written)
    row = table.rows[0]
    click.echo(
        f"{arm}: status={row['status']} spatial_error={row['spatial_error']:.3e} "
        f"novel_psnr={row['novel_psnr']:.2f}dB"
    )


@main.command()
@click.option("--all", "run_all", is_flag=True, help="Run every scenario.")
@click.option("--ablation", is_flag=True)
@click.option("--lambda-sweep", "sweep", is_flag=True)
@click.option("--lambdas", default="0,0.001,0.005,0.01,0.1,1,10",
              show_default=True, help="Comma-separated TV weights for the sweep.")
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@_coded_exits
def suite(run_all, ablation, sweep, lambdas, seed, out_dir):
    """Experiment suites: full catalog, ablation table, or TV-weight sweep."""
    if not (run_all or ablation or sweep):
        raise ConfigError("choose one of --all, --ablation, --lambda-sweep")
    manifest = Manifest(out_dir, "suite",
                        {"all": run_all, "ablation": ablation,
                         "lambda_sweep": sweep, "lambdas": lambdas}, seed)
    written = []
    if run_all:
        for name in sorted(scenario_catalog()):
            sub = os.path.join(out_dir, name)
            table, _ = run_scenario(get_scenario(name), seed=seed, out_dir=sub)
            bars = os.path.join(sub, "metrics.png")
            plot_metrics_bars(table, bars)
            written += [os.path.join(sub, "metrics.csv"), bars]
            click.echo(f"{name}: done")
    if ablation:
        table = ablation_suite(seed=seed, out_dir=out_dir)
        bars = os.path.join(out_dir, "ablation.png")
        plot_metrics_bars(table, bars)
        written += [os.path.join(out_dir, "ablation.csv"), bars]
        click.echo("ablation: done")
    if sweep:
        values = [float(v) for v in lambdas.split(",") if v.strip() != ""]
        if len(values) < 2:
            raise ConfigError("--lambda-sweep needs at least 2 values in --lambdas")
        points = lambda_sweep(get_scenario("taillight-sof"), values,
                              seed=seed, out_dir=out_dir)
        curve = os.path.join(out_dir, "lambda_sweep.png")
        plot_lambda_sweep(points, curve)
        written += [os.path.join(out_dir, "lambda_sweep.csv"), curve]
        click.echo("lambda sweep: done")
    manifest.finalize(written)


@main.command()
@click.option("--scene", "scene_path", required=True, type=click.Path())
@click.option("--pose", default="6,0,1.5", show_default=True,
              help="Camera position x,y,z looking at the origin.")
@click.option("--time", "t", default=0.0, type=float, show_default=True)
@click.option("--size", default=32, type=int, show_default=True)
@click.option("--focal", default=48.0, type=float, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@_coded_exits
def render(scene_path, pose, t, size, focal, seed, out_path):
    """Render one image from an explicit pose and time."""
    _require_file(scene_path)
    try:
        position = np.array([float(v) for v in pose.split(",")])
        if position.shape != (3,):
            raise ValueError
    except ValueError:
        raise ConfigError(f"--pose must be 'x,y,z', got {pose!r}") from None
    scene = load_scene(scene_path)
    if not (0.0 <= t <= scene.horizon):
        raise ConfigError(f"--time must lie in [0, {scene.horizon}]")
    extrinsic = look_at(position, np.zeros(3))
    intrinsic = pinhole_intrinsics(size, size, focal)
    image = render_image(scene, t, extrinsic, intrinsic, (size, size))
    write_ppm(out_path, image)
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
