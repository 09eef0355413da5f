"""Matplotlib figure rendering for reports (eigenspectra, traces, sweeps).

All figures are written to files with the Agg backend and without embedded
timestamps, so identical inputs produce byte-identical PNGs.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Date": None}}


def _finite_positive(values):
    v = np.asarray(values, dtype=float)
    return np.clip(v, 1e-300, None)


def plot_eigenspectra(report, path):
    """Descending eigenspectra of the FIM and both Schur complements."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, spec in (
        ("FIM", report.fim_spectrum),
        ("Schur spatial", report.schur_spatial_spectrum),
        ("Schur temporal", report.schur_temporal_spectrum),
    ):
        if len(spec):
            ax.semilogy(_finite_positive(spec), label=label)
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.set_title(f"eigenspectra ({report.design_kind} design)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_loss_trace(fit, path):
    """Per-iteration data loss, TV penalty, and total objective."""
    trace = np.array([row[1:] for row in fit.loss_trace], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    if trace.size:
        ax.semilogy(_finite_positive(trace[:, 0]), label="data loss")
        if np.any(trace[:, 1] > 0):
            ax.semilogy(_finite_positive(trace[:, 1]), label="TV penalty")
        ax.semilogy(_finite_positive(trace[:, 2]), label="total")
    ax.set_xlabel("recorded step")
    ax.set_ylabel("objective")
    ax.set_title(f"fit trace ({fit.method})")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_lambda_sweep(points, path):
    """Novel-view PSNR and temporal energy against the TV weight."""
    lams = [p["lambda"] for p in points]
    x = np.arange(len(lams))
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(x, [p["novel_psnr"] for p in points], "o-", color="tab:blue")
    ax1.set_xticks(x)
    ax1.set_xticklabels([f"{l:g}" for l in lams], rotation=45)
    ax1.set_xlabel("TV weight")
    ax1.set_ylabel("novel-view PSNR (dB)", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.semilogy(
        x, _finite_positive([p["temporal_energy"] for p in points]),
        "s--", color="tab:red",
    )
    ax2.set_ylabel("temporal-derivative energy", color="tab:red")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_metrics_bars(table, path):
    """Per-arm spatial error and novel-view PSNR side by side."""
    arms = [r["arm"] for r in table.rows if r["status"] == "ok"]
    s_err = [r["spatial_error"] for r in table.rows if r["status"] == "ok"]
    nv = [r["novel_psnr"] for r in table.rows if r["status"] == "ok"]
    x = np.arange(len(arms))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 4))
    ax1.bar(x, _finite_positive(s_err), color="tab:orange")
    ax1.set_yscale("log")
    ax1.set_xticks(x)
    ax1.set_xticklabels(arms)
    ax1.set_title("spatial recovery error")
    nv_clip = [min(v, 99.0) for v in nv]
    ax2.bar(x, nv_clip, color="tab:green")
    ax2.set_xticks(x)
    ax2.set_xticklabels(arms)
    ax2.set_title("novel-view PSNR (dB)")
    fig.suptitle(f"scenario: {table.scenario}")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
