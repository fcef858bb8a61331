import math

import numpy as np
import pytest

from gmsfem_wave import build_hierarchy
from gmsfem_wave.errors import ConfigurationError, InstabilityError
from gmsfem_wave.ipdg import assemble_adg
from gmsfem_wave.media import constant_field, synth_periodic_inclusions
from gmsfem_wave.msbasis import build_bank
from gmsfem_wave.propagate import (CoarseSystem, DiagonalMass, FineSystem, SourceSpec, TimeGrid,
                                   WaveSystem, init_states, leapfrog_energy, leapfrog_run,
                                   max_eigenvalue, analytic_beta, ricker_eval, stability_guard)

NONE = SourceSpec("none")


def _scalar():
    return WaveSystem(np.array([[1.0]]), DiagonalMass([1.0]), np.array([[0.5, 0.5]]))


@pytest.fixture(scope="module")
def coarse_system():
    fine, coarse = build_hierarchy(16, 16, 2, 2)
    field = synth_periodic_inclusions(fine, 1.0, 10.0, 4)
    bank = build_bank(coarse, field, 0.75, 2)
    return CoarseSystem(assemble_adg(bank, coarse, field), bank, coarse)


def test_ricker_examples():
    f0 = 20.0
    assert ricker_eval(0.5, 0.5, 2 / f0) == pytest.approx(100.0)
    t = 2 / f0 + 1 / (math.sqrt(2) * math.pi * f0)
    assert abs(ricker_eval(0.5, 0.5, t)) < 1e-12
    d = 0.137
    assert ricker_eval(0.5 + d, 0.5, 0.03) == ricker_eval(0.5 - d, 0.5, 0.03)
    with pytest.raises(ConfigurationError):
        SourceSpec("ricker", f0=0.0)
    with pytest.raises(ConfigurationError):
        SourceSpec("gabor")


def test_time_grid():
    g = TimeGrid.from_dt(0.2, (1 / 256) / 80)
    assert g.N * g.dt == pytest.approx(0.2, rel=1e-14)
    assert g.N == 4096
    with pytest.raises(ConfigurationError):
        TimeGrid(0.0, 3)
    with pytest.raises(ConfigurationError):
        TimeGrid.from_dt(1.0, -0.1)


def test_scalar_surrogate_recurrence():
    sys = _scalar()
    grid = TimeGrid(0.2, 2)
    u0, u1 = init_states(sys, SourceSpec("manufactured"), grid)
    assert u0[0] == pytest.approx(1.0)
    assert u1[0] == pytest.approx(0.995, abs=1e-15)
    res = leapfrog_run(sys, u0, u1, NONE, grid)
    assert res.u[0] == pytest.approx(0.98005, abs=1e-14)
    assert res.u_prev[0] == pytest.approx(0.995, abs=1e-15)


def test_scalar_spectral_bound():
    rep = stability_guard(_scalar(), TimeGrid(1.0, 1))
    assert rep.dt_spectral == pytest.approx(2.0)
    assert rep.verdict == "accept"
    assert stability_guard(_scalar(), TimeGrid(2.0, 1)).verdict == "reject"


def test_analytic_beta_example():
    h = 1 / 512
    beta = analytic_beta(h, 1.0, 2.0, 4.0)
    assert h * h / beta == pytest.approx(24 + 32 * math.sqrt(12) + 32)
    assert h * h / beta == pytest.approx(166.85, abs=0.01)
    assert 2 * math.sqrt(beta) == pytest.approx(2 * h / 12.917, rel=1e-4)
    # the experimental step sits inside the analytical bound
    assert h / 80 < 2 * math.sqrt(beta)


def test_null_evolution(coarse_system):
    n = coarse_system.n_dofs
    u0, u1 = init_states(coarse_system, NONE, TimeGrid(0.1, 10))
    assert not u0.any() and not u1.any()
    res = leapfrog_run(coarse_system, np.zeros(n), np.zeros(n), NONE, TimeGrid(0.1, 50))
    assert not res.u.any() and not res.u_prev.any()


def test_initial_state_projection_fine():
    fine, _ = build_hierarchy(16, 16, 1, 1)
    sys = FineSystem(fine, constant_field(fine))
    u0, _ = init_states(sys, SourceSpec("manufactured"), TimeGrid(0.1, 10))
    x, y = fine.node_xy[sys.free].T
    assert np.allclose(u0, np.sin(np.pi * x) * np.sin(np.pi * y), atol=1e-12)


def test_energy_conservation(coarse_system, rng):
    lam = max_eigenvalue(coarse_system)
    dt = 0.9 * 2 / math.sqrt(lam)
    u0 = rng.standard_normal(coarse_system.n_dofs)
    u1 = u0 + dt * rng.standard_normal(coarse_system.n_dofs)
    E0 = leapfrog_energy(coarse_system, u0, u1, dt)
    res = leapfrog_run(coarse_system, u0, u1, NONE, TimeGrid(1001 * dt, 1001))
    E1 = leapfrog_energy(coarse_system, res.u_prev, res.u, dt)
    assert abs(E1 - E0) <= 1e-10 * abs(E0)


def test_time_reversal(coarse_system, rng):
    lam = max_eigenvalue(coarse_system)
    dt = 0.5 * 2 / math.sqrt(lam)
    N = 400
    u0 = rng.standard_normal(coarse_system.n_dofs)
    u1 = u0 + 0.1 * dt * rng.standard_normal(coarse_system.n_dofs)
    fwd = leapfrog_run(coarse_system, u0, u1, NONE, TimeGrid(N * dt, N))
    back = leapfrog_run(coarse_system, fwd.u, fwd.u_prev, NONE, TimeGrid(N * dt, N))
    assert np.linalg.norm(back.u - u0) <= 1e-8 * np.linalg.norm(u0)
    assert np.linalg.norm(back.u_prev - u1) <= 1e-8 * np.linalg.norm(u0)


def test_instability_growth(coarse_system, rng):
    lam = max_eigenvalue(coarse_system)
    dt = 1.2 * 2 / math.sqrt(lam)
    grid = TimeGrid(500 * dt, 500)
    assert stability_guard(coarse_system, grid).verdict == "reject"
    u0 = rng.standard_normal(coarse_system.n_dofs)
    res = leapfrog_run(coarse_system, u0, u0.copy(), NONE, grid)
    assert np.linalg.norm(res.u) > 1e3 * np.linalg.norm(u0)


def test_instability_error(coarse_system, rng):
    lam = max_eigenvalue(coarse_system)
    dt = 5 * 2 / math.sqrt(lam)
    u0 = rng.standard_normal(coarse_system.n_dofs)
    with np.errstate(all="ignore"):
        with pytest.raises(InstabilityError) as info:
            leapfrog_run(coarse_system, u0, u0.copy(), NONE, TimeGrid(4000 * dt, 4000))
    assert 1 < info.value.step <= 4000


def test_max_eigenvalue_routes():
    fine, _ = build_hierarchy(32, 32, 1, 1)  # 961 dofs: Lanczos path
    sys = FineSystem(fine, constant_field(fine), lump=True)
    lam = max_eigenvalue(sys)
    K = sys.stiffness.toarray()
    ref = np.linalg.eigvalsh(K / np.sqrt(np.outer(sys.mass.diag, sys.mass.diag)))[-1]
    assert lam == pytest.approx(ref, rel=1e-8)


def test_probes_and_steps(coarse_system, rng):
    u0 = rng.standard_normal(coarse_system.n_dofs) * 1e-3
    grid = TimeGrid(0.01, 100)
    res = leapfrog_run(coarse_system, u0, u0, NONE, grid, probes=(10, 0.005, 100))
    assert sorted(res.probes) == [10, 50, 100]
    assert np.array_equal(res.probes[100], res.u)
    assert res.steps == 99 and res.seconds_per_step > 0


def test_fine_manufactured_second_order():
    errs = []
    for nx in (16, 32):
        fine, _ = build_hierarchy(nx, nx, 1, 1)
        sys = FineSystem(fine, constant_field(fine))
        src = SourceSpec("manufactured")
        grid = TimeGrid.from_dt(0.25, fine.h / 80)
        u0, u1 = init_states(sys, src, grid)
        res = leapfrog_run(sys, u0, u1, src, grid)
        x, y = fine.node_xy.T
        d = sys.to_nodal(res.u) - src.exact(x, y, 0.25)
        errs.append(math.sqrt(d @ (sys.M_full @ d)))
    assert 3.0 < errs[0] / errs[1] < 5.5


def test_same_driver_for_both_systems(coarse_system):
    src = SourceSpec("ricker")
    grid = TimeGrid(0.02, 40)
    fine = coarse_system.coarse.fine
    fs = FineSystem(fine, constant_field(fine))
    for sys in (coarse_system, fs):
        u0, u1 = init_states(sys, src, grid)
        res = leapfrog_run(sys, u0, u1, src, grid)
        assert np.all(np.isfinite(res.u)) and np.abs(res.u).max() > 0
