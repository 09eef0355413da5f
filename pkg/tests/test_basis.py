"""Oracles for spherical harmonics, temporal bases, Gram matrices, coherence."""
from __future__ import annotations

import math

import numpy as np
import pytest

from splatid.basis import (
    Direction,
    GramMatrix,
    ShConfig,
    TemporalBasis,
    coherence,
    composite_basis,
    eval_4dsh,
    eval_sh,
    eval_temporal,
    fibonacci_sphere,
    gram,
    sh_basis,
    temporal_deriv_matrix,
    temporal_matrix,
)
from splatid.errors import (
    DegenerateBasisError,
    DegenerateGeometryError,
    DomainError,
    ShapeError,
    UnsupportedError,
)


# ---------------------------------------------------------------------------
# Direction
# ---------------------------------------------------------------------------

def test_direction_normalizes():
    d = Direction(3.0, 0.0, 4.0)
    assert d.x == pytest.approx(0.6)
    assert d.z == pytest.approx(0.8)
    assert d.x**2 + d.y**2 + d.z**2 == pytest.approx(1.0, abs=1e-12)


def test_zero_direction_rejected():
    with pytest.raises(DegenerateGeometryError):
        Direction(0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# spherical harmonics closed forms
# ---------------------------------------------------------------------------

def test_eval_sh_constant_term():
    # Y_0^0 = (1/2) sqrt(1/pi), independent of direction
    cfg = ShConfig(max_degree=2)
    for d in (Direction(0, 0, 1), Direction(1, 2, 3)):
        assert eval_sh(cfg, 0, 0, d) == pytest.approx(0.28209479, abs=1e-8)


def test_eval_sh_degree_one_pole():
    # Y_1^0 at the north pole: (1/2) sqrt(3/pi)
    cfg = ShConfig(max_degree=1)
    val = eval_sh(cfg, 1, 0, Direction(0, 0, 1))
    assert val == pytest.approx(0.48860251, abs=1e-8)


def test_eval_sh_degree_two_equator():
    # Y_2^0 at the equator: (1/4) sqrt(5/pi) * (3*0 - 1)
    cfg = ShConfig(max_degree=2)
    val = eval_sh(cfg, 2, 0, Direction(1, 0, 0))
    assert val == pytest.approx(-0.31539157, abs=1e-8)


def test_eval_sh_domain_errors():
    cfg = ShConfig(max_degree=1)
    with pytest.raises(DomainError):
        eval_sh(cfg, 2, 0, Direction(0, 0, 1))
    with pytest.raises(DomainError):
        eval_sh(cfg, 1, 2, Direction(0, 0, 1))
    with pytest.raises(UnsupportedError):
        eval_sh(ShConfig(max_degree=3), 3, 0, Direction(0, 0, 1))
    with pytest.raises(DomainError):
        ShConfig(max_degree=-1)


def test_sh_addition_theorem():
    # sum_m Y_l^m(d)^2 = (2l+1)/(4 pi) for every unit direction
    rng = np.random.default_rng(0)
    dirs = rng.standard_normal((1000, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    y = sh_basis(2, dirs)
    for l in (0, 1, 2):
        block = y[:, l * l:(l + 1) ** 2]
        sums = np.sum(block**2, axis=1)
        expected = (2 * l + 1) / (4.0 * math.pi)
        assert np.max(np.abs(sums - expected)) < 1e-10


def test_sh_orthonormality_monte_carlo():
    # E[Y_i Y_j] over the uniform sphere = delta_ij / (4 pi); scaling by the
    # sphere area 4 pi gives the identity within the Monte-Carlo tolerance
    n = 200_000
    rng = np.random.default_rng(1)
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    y = sh_basis(2, dirs)
    g = 4.0 * math.pi * (y.T @ y) / n
    tol = 3.0 / math.sqrt(n)
    assert np.max(np.abs(g - np.eye(9))) < tol


def test_fourier_orthogonality_quadrature():
    # trapezoid integral of phi_n phi_n' over [0, T] vanishes for n != n'
    basis = TemporalBasis("fourier", 16, horizon=1.0)
    nodes = 1024
    ts = np.linspace(0.0, 1.0, nodes + 1)
    w = np.full(ts.size, 1.0 / nodes)
    w[0] = w[-1] = 0.5 / nodes
    phi = temporal_matrix(basis, ts)
    g = (phi * w[:, None]).T @ phi
    scale = np.sqrt(np.outer(np.diag(g), np.diag(g)))
    off = (g - np.diag(np.diag(g))) / scale
    assert np.max(np.abs(off)) < 1e-8


def test_fourier_gram_diagonal():
    # diagonal entries are the mean squares: 1 for the constant, 1/2 for each
    # oscillating mode at amplitude 1
    basis = TemporalBasis("fourier", 16, horizon=1.0)
    nodes = 4096
    ts = (np.arange(nodes) + 0.5) / nodes
    phi = temporal_matrix(basis, ts)
    diag = np.mean(phi**2, axis=0)
    expected = np.full(16, 0.5)
    expected[0] = 1.0
    assert np.max(np.abs(diag - expected) / expected) < 1e-8


# ---------------------------------------------------------------------------
# temporal bases
# ---------------------------------------------------------------------------

def test_eval_temporal_fourier_values():
    basis = TemporalBasis("fourier", 3, horizon=1.0)
    assert eval_temporal(basis, 0, 0.37) == 1.0
    assert eval_temporal(basis, 1, 0.0) == pytest.approx(1.0)   # cos(0)
    assert eval_temporal(basis, 2, 0.0) == pytest.approx(0.0)   # sin(0)
    assert eval_temporal(basis, 1, 0.25) == pytest.approx(math.cos(math.pi / 2), abs=1e-12)


def test_eval_temporal_domain_errors():
    basis = TemporalBasis("fourier", 3, horizon=1.0)
    with pytest.raises(DomainError):
        eval_temporal(basis, 3, 0.5)
    with pytest.raises(DomainError):
        eval_temporal(basis, 0, 1.5)
    with pytest.raises(DomainError):
        TemporalBasis("wavelet", 3, horizon=1.0)
    with pytest.raises(DomainError):
        TemporalBasis("bspline", 3, horizon=1.0, order=4)  # count < order
    with pytest.raises(DomainError):
        TemporalBasis("fourier", 3, horizon=-1.0)


def test_bspline_partition_of_unity():
    basis = TemporalBasis("bspline", 16, horizon=1.0, order=4)
    rng = np.random.default_rng(2)
    ts = np.concatenate([rng.uniform(0.0, 1.0, 100), [0.0, 1.0]])
    phi = temporal_matrix(basis, ts)
    sums = phi.sum(axis=1)
    assert np.max(np.abs(sums - 1.0)) < 1e-12


def test_fourier_derivative_closed_form():
    basis = TemporalBasis("fourier", 3, horizon=2.0)
    ts = np.array([0.3, 1.1])
    d = temporal_deriv_matrix(basis, ts)
    omega = 2.0 * math.pi / 2.0
    assert d[:, 0] == pytest.approx([0.0, 0.0])
    assert d[0, 1] == pytest.approx(-omega * math.sin(omega * 0.3))
    assert d[0, 2] == pytest.approx(omega * math.cos(omega * 0.3))


# ---------------------------------------------------------------------------
# 4D composite evaluation
# ---------------------------------------------------------------------------

def test_eval_4dsh_constant_coefficient():
    basis = TemporalBasis("fourier", 3, horizon=1.0)
    cfg = ShConfig(max_degree=1)
    coeffs = np.zeros((3, 12))
    coeffs[:, 0] = 1.0  # alpha_{n=0, l=0, m=0} per channel
    for t, d in ((0.0, Direction(0, 0, 1)), (0.7, Direction(1, -1, 2))):
        color = eval_4dsh(coeffs, basis, cfg, t, d)
        assert color == pytest.approx([0.28209479] * 3, abs=1e-8)


def test_eval_4dsh_zero_and_linearity():
    basis = TemporalBasis("fourier", 3, horizon=1.0)
    cfg = ShConfig(max_degree=1)
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal((3, 12))
    d = Direction(0.3, -0.5, 0.9)
    assert eval_4dsh(np.zeros((3, 12)), basis, cfg, 0.4, d) == pytest.approx([0, 0, 0])
    one = eval_4dsh(coeffs, basis, cfg, 0.4, d)
    two = eval_4dsh(2.0 * coeffs, basis, cfg, 0.4, d)
    assert two == pytest.approx(2.0 * one, rel=1e-12)


def test_eval_4dsh_shape_error():
    basis = TemporalBasis("fourier", 3, horizon=1.0)
    cfg = ShConfig(max_degree=1)
    with pytest.raises(ShapeError):
        eval_4dsh(np.zeros((3, 5)), basis, cfg, 0.0, Direction(0, 0, 1))


# ---------------------------------------------------------------------------
# Gram and coherence
# ---------------------------------------------------------------------------

def test_gram_full_sampling_near_diagonal():
    basis = TemporalBasis("fourier", 4, horizon=1.0)
    cfg = ShConfig(max_degree=1)
    nt, nd = 64, 64
    ts = np.repeat((np.arange(nt) + 0.5) / nt, nd)
    dirs = np.tile(fibonacci_sphere(nd), (nt, 1))
    g = gram(basis, cfg, (ts, dirs))
    assert coherence(g) < 0.05


def test_gram_single_sample_rank_one():
    basis = TemporalBasis("fourier", 2, horizon=1.0)
    cfg = ShConfig(max_degree=1)
    g = gram(basis, cfg, (np.array([0.3]), np.array([[0.6, 0.48, 0.64]])))
    assert np.linalg.matrix_rank(g.entries, tol=1e-10) == 1
    assert coherence(g) == pytest.approx(1.0)


def test_gram_trajectory_coherence_exceeds_threshold(sof_design):
    basis = TemporalBasis("fourier", 16, horizon=1.0)
    cfg = ShConfig(max_degree=1)
    g = gram(basis, cfg, sof_design)
    assert g.sampling == "trajectory"
    rho = coherence(g)
    assert 0.1 < rho <= 1.0


def test_gram_symmetric_psd(sof_design):
    basis = TemporalBasis("fourier", 8, horizon=1.0)
    cfg = ShConfig(max_degree=2)
    g = gram(basis, cfg, sof_design).entries
    assert np.max(np.abs(g - g.T)) < 1e-10
    eig = np.linalg.eigvalsh(g)
    assert eig[0] >= -1e-8 * eig[-1]


def test_gram_empty_design_rejected():
    basis = TemporalBasis("fourier", 2, horizon=1.0)
    with pytest.raises(DomainError):
        gram(basis, ShConfig(max_degree=0), (np.array([]), np.zeros((0, 3))))


def test_coherence_identity_and_degenerate():
    assert coherence(GramMatrix(np.eye(4))) == 0.0
    with pytest.raises(DegenerateBasisError):
        coherence(GramMatrix(np.diag([1.0, 0.0])))


def test_composite_basis_shape():
    basis = TemporalBasis("fourier", 3, horizon=1.0)
    cfg = ShConfig(max_degree=2)
    ts = np.array([0.1, 0.9])
    dirs = fibonacci_sphere(2)
    z = composite_basis(basis, cfg, ts, dirs)
    assert z.shape == (2, 27)


def test_fibonacci_sphere_unit_norm():
    pts = fibonacci_sphere(100)
    assert np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)) < 1e-12
    with pytest.raises(DomainError):
        fibonacci_sphere(0)
