import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmsfem_wave import build_hierarchy, build_oversample_map
from gmsfem_wave.errors import ConfigurationError
from gmsfem_wave.fem_core import assemble_local
from gmsfem_wave.media import constant_field, synth_periodic_inclusions
from gmsfem_wave.msbasis import (BoundarySnapshotSet, block_stiffness, boundary_spectral,
                                 build_bank, check_bank, compute_block_spectra, compute_spectra,
                                 harmonic_extensions, interior_spectral, load_bank, save_bank,
                                 select_by_energy)


def _jacobi_eigvals(S, sweeps=50):
    """Cyclic Jacobi rotations for a small symmetric matrix."""
    A = np.array(S, dtype=float)
    n = len(A)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off < 1e-15 * np.abs(A).max():
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                tau = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(tau) / (abs(tau) + np.sqrt(1 + tau * tau)) if tau != 0 else 1.0
                c = 1 / np.sqrt(1 + t * t)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
    return np.sort(np.diag(A))


def _cholesky(B):
    n = len(B)
    L = np.zeros_like(B)
    for j in range(n):
        L[j, j] = np.sqrt(B[j, j] - L[j, :j] @ L[j, :j])
        for i in range(j + 1, n):
            L[i, j] = (B[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return L


def _pencil_oracle():
    """8x8 boundary pencil of a 2x2-cell unit block with a = 1.

    Nodes 0..8 row-major, centre node 4.  Element matrices come from
    3-point Gauss quadrature; the trace mass from 1D quadrature of hats.
    """
    h = 0.5
    t, w = np.polynomial.legendre.leggauss(3)
    t, w = 0.5 * (t + 1), 0.5 * w
    K = np.zeros((9, 9))
    for cj in range(2):
        for ci in range(2):
            nodes = [3 * cj + ci, 3 * cj + ci + 1, 3 * cj + ci + 4, 3 * cj + ci + 3]
            for x, wx in zip(t, w):
                for y, wy in zip(t, w):
                    G = np.array([[-(1 - y), -(1 - x)], [1 - y, -x], [y, x], [-y, 1 - x]]) / h
                    K[np.ix_(nodes, nodes)] += wx * wy * h * h * G @ G.T
    ring = [0, 1, 2, 5, 8, 7, 6, 3]
    W = np.zeros((9, 8))
    W[ring, np.arange(8)] = 1.0
    W[4] = -K[4, ring] / K[4, 4]
    A = W.T @ K @ W
    B = np.zeros((8, 8))
    for e in range(8):  # sub-edge from ring[e] to ring[e+1]
        i, j = e, (e + 1) % 8
        for x, wx in zip(t, w):
            phi = np.zeros(8)
            phi[i], phi[j] = 1 - x, x
            B += wx * h * np.outer(phi, phi)
    L = _cholesky(B)
    Li = np.linalg.inv(L)
    return _jacobi_eigvals(Li @ A @ Li.T)


def test_boundary_pencil_dense_oracle():
    fine, coarse = build_hierarchy(2, 2, 1, 1)
    field = constant_field(fine)
    s = compute_block_spectra(coarse, 0, field, 1)
    ref = _pencil_oracle() * coarse.H
    ref[0] = 0.0
    assert np.allclose(s.mu, ref, rtol=1e-10, atol=1e-12)


def test_default_block_sizes():
    fine, coarse = build_hierarchy(64, 64, 2, 2)
    snaps = harmonic_extensions(coarse, 0, constant_field(fine))
    assert len(snaps) == 128
    assert len(coarse.local.interior) == 961


def test_constant_extension_and_partition_of_unity(small):
    fine, coarse, field = small
    for k in range(coarse.n_blocks):
        snaps = harmonic_extensions(coarse, k, field)
        assert np.allclose(snaps.values.sum(axis=1), 1.0, atol=1e-12)
        assert snaps.harmonic_residual <= 1e-10


def test_maximum_principle():
    fine, coarse = build_hierarchy(16, 16, 1, 1)
    field = synth_periodic_inclusions(fine, 1.0, 1000.0, 4)
    W = harmonic_extensions(coarse, 0, field).values
    assert W.min() >= -1e-13 and W.max() <= 1 + 1e-13


def test_harmonicity_residual(small):
    _, coarse, field = small
    W = harmonic_extensions(coarse, 1, field).values
    A = block_stiffness(coarse, 1, field).tocsr()
    I = coarse.local.interior
    res = np.abs(A[I] @ W).max()
    assert res <= 1e-10 * abs(A).max() * np.abs(W).max()


def test_mu_spectrum_properties(small):
    _, coarse, field = small
    for s in compute_spectra(coarse, field, 2):
        assert s.mu[0] == 0.0
        assert np.all(np.diff(s.mu) >= -1e-12 * s.mu[-1])
        assert s.mu[1] > 0
        assert s.boundary_residual <= 1e-9 and s.interior_residual <= 1e-9
        c = s.boundary_modes[:, 0]
        assert np.std(c) <= 1e-10 * abs(c.mean())
        assert s.lam[0] > 0 and np.all(np.diff(s.lam) >= 0)


def test_interior_q1_closed_form():
    # 1D Q1 pencil eigenvalue: (6/h^2)(1 - cos t)/(2 + cos t), t = pi h / H
    fine, coarse = build_hierarchy(16, 16, 1, 1)
    s = compute_block_spectra(coarse, 0, constant_field(fine), 2)
    t = np.pi / 16
    lam1 = 16**2 * 2 * 6 * (1 - np.cos(t)) / (2 + np.cos(t))
    assert s.lam[0] == pytest.approx(lam1, rel=1e-10)
    assert s.lam[1] == pytest.approx(s.lam[2], rel=1e-10)  # (1,2)/(2,1) degeneracy
    assert abs(s.lam[0] - 2 * np.pi**2) / (2 * np.pi**2) < 0.01


def test_interior_count_error():
    fine, coarse = build_hierarchy(4, 4, 2, 2)
    A = block_stiffness(coarse, 0, constant_field(fine))
    _, M = assemble_local(coarse.local, np.ones(4), fine.h)
    with pytest.raises(ConfigurationError):
        interior_spectral(A, M, coarse.local.interior, coarse.H, 2)
    with pytest.raises(ConfigurationError):
        build_bank(coarse, constant_field(fine), 0.5, 2)


def test_select_examples():
    mu = [0.0, 1.0, 2.0, 4.0]
    assert select_by_energy(mu, 0.8) == 3
    assert select_by_energy(mu, 1.0) == 4
    assert select_by_energy(mu, 1e-9) == 2
    assert select_by_energy([0.0], 0.5) == 1
    for bad in (0.0, -0.1, 1.5):
        with pytest.raises(ConfigurationError):
            select_by_energy(mu, bad)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=20),
       st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_select_monotone(rest, t1, t2):
    mu = np.concatenate([[0.0], np.sort(rest)])
    lo, hi = sorted((t1, t2))
    p_lo, p_hi = select_by_energy(mu, lo), select_by_energy(mu, hi)
    assert 2 <= p_lo <= p_hi <= len(mu)
    cum = np.sum(1 / mu[1:p_hi])
    assert cum >= hi * np.sum(1 / mu[1:]) * (1 - 1e-12)


def test_bank_capture_monotone(small):
    _, coarse, field = small
    spec = compute_spectra(coarse, field, 1)
    from gmsfem_wave.msbasis import bank_from_spectra
    b75 = bank_from_spectra(spec, 0.75, 1)
    b80 = bank_from_spectra(spec, 0.80, 1)
    for x, y in zip(b75.blocks, b80.blocks):
        assert y.p >= x.p and y.captured >= x.captured
        assert x.captured >= 0.75


def test_theta_one_m_zero_spans_snapshots(small):
    _, coarse, field = small
    bank = build_bank(coarse, field, 1.0, 0)
    for b in bank.blocks:
        assert b.p == coarse.n_boundary and b.m == 0
        W = harmonic_extensions(coarse, b.block, field).values
        # the modes and the snapshots span the same space
        coef, *_ = np.linalg.lstsq(W, b.modes, rcond=None)
        assert np.abs(W @ coef - b.modes).max() < 1e-10


def test_snapshot_permutation_invariance(small, rng):
    _, coarse, field = small
    snaps = harmonic_extensions(coarse, 2, field)
    A = block_stiffness(coarse, 2, field).tocsr()
    mu, _, _ = boundary_spectral(snaps, A, coarse.H, coarse.fine.h)
    perm = rng.permutation(len(snaps))
    shuffled = BoundarySnapshotSet(2, snaps.values[:, perm], snaps.boundary, False)
    mu2, _, _ = boundary_spectral(shuffled, A, coarse.H, coarse.fine.h)
    assert np.allclose(mu, mu2, rtol=1e-10, atol=1e-10 * mu[-1])


def test_oversample_zero_is_baseline(small):
    _, coarse, field = small
    base = build_bank(coarse, field, 0.75, 1)
    ov = build_bank(coarse, field, 0.75, 1, oversample=build_oversample_map(coarse, 0))
    for x, y in zip(base.blocks, ov.blocks):
        assert x.p == y.p
        assert np.allclose(x.modes, y.modes, atol=1e-12)


def test_oversample_spans_same_space(small):
    # restricted K+ harmonic snapshots span the K-harmonic space
    _, coarse, field = small
    om = build_oversample_map(coarse, 2)
    base = compute_spectra(coarse, field, 1)
    ov = compute_spectra(coarse, field, 1, oversample=om)
    for x, y in zip(base, ov):
        assert y.n_snapshots > x.n_snapshots
        assert np.allclose(x.mu, y.mu, rtol=1e-8, atol=1e-8 * x.mu[-1])


def test_workers_deterministic(small):
    _, coarse, field = small
    a = build_bank(coarse, field, 0.75, 2, workers=1)
    b = build_bank(coarse, field, 0.75, 2, workers=3)
    for x, y in zip(a.blocks, b.blocks):
        assert x.modes.tobytes() == y.modes.tobytes()


def test_bank_orthogonality(small):
    _, coarse, field = small
    rep = check_bank(build_bank(coarse, field, 0.75, 3), coarse, field)
    assert rep.passed(1e-9), rep


def test_check_bank_detects_tampering(small):
    _, coarse, field = small
    bank = build_bank(coarse, field, 0.75, 1)
    bank.blocks[1].modes[:, 1] *= 1.01
    assert not check_bank(bank, coarse, field).passed(1e-9)
    assert check_bank(bank, coarse, field).worst_block == 1


def test_bank_round_trip(small, tmp_path):
    _, coarse, field = small
    bank = build_bank(coarse, field, 0.8, 2)
    save_bank(bank, tmp_path / "b.zip")
    back = load_bank(tmp_path / "b.zip")
    assert (back.theta, back.m, back.n_dofs) == (bank.theta, bank.m, bank.n_dofs)
    assert back.t_off == bank.t_off
    for x, y in zip(bank.blocks, back.blocks):
        assert (x.block, x.p, x.m) == (y.block, y.p, y.m)
        for u, v in ((x.mu, y.mu), (x.lam, y.lam), (x.modes, y.modes)):
            assert u.tobytes() == v.tobytes()


def test_strong_dirichlet_bank(small):
    fine, coarse, field = small
    bank = build_bank(coarse, field, 1.0, 1, dirichlet="strong")
    on_dom = np.zeros(fine.n_nodes, dtype=bool)
    on_dom[fine.boundary_nodes] = True
    for b in bank.blocks:
        mask = on_dom[coarse.blocks[b.block].nodes]
        assert np.abs(b.modes[mask]).max(initial=0) == 0.0
        # corner block of a 2x2 grid keeps the 2r - 1 free trace nodes
        assert b.p == 2 * coarse.r - 1
    assert check_bank(bank, coarse, field).passed(1e-9)
    with pytest.raises(ConfigurationError):
        build_bank(coarse, field, 1.0, 1, dirichlet="hard")


def test_degenerate_interior_modes_do_not_depend_on_count():
    # symmetric block: lambda_2 = lambda_3, so a cut at m=2 splits a pair
    fine, coarse = build_hierarchy(16, 16, 1, 1)
    field = synth_periodic_inclusions(fine, 1.0, 10.0, 4)
    A = block_stiffness(coarse, 0, field)
    _, M = assemble_local(coarse.local, np.ones(coarse.local.n_cells), fine.h)
    I = coarse.local.interior
    lam6, Z6, _ = interior_spectral(A, M, I, coarse.H, 6)
    assert lam6[1] == pytest.approx(lam6[2], rel=1e-9)
    for count in (2, 3, 4):
        lam, Z, res = interior_spectral(A, M, I, coarse.H, count)
        assert np.allclose(Z, Z6[:, :count], atol=1e-10)
        assert res <= 1e-9
