"""Explicit central-difference time stepping for fine and coarse systems.

Both systems are driven through :class:`WaveSystem`: a symmetric stiffness
``S``, a mass operator, and maps from fine nodal functions to the system's
degrees of freedom (pairing, L2 projection, energy pairing).
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import ConfigurationError, InstabilityError
from .fem_core import assemble_local
from .ipdg import BlockDiagonalMass, _broken, l2_project

__all__ = [
    "TimeGrid",
    "SourceSpec",
    "ricker_eval",
    "FactorizedMass",
    "DiagonalMass",
    "WaveSystem",
    "FineSystem",
    "CoarseSystem",
    "RunResult",
    "StabilityReport",
    "init_states",
    "leapfrog_run",
    "leapfrog_energy",
    "max_eigenvalue",
    "analytic_beta",
    "stability_guard",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.T <= 0 or self.N < 1:
            raise ConfigurationError(f"need T > 0 and N >= 1, got T={self.T}, N={self.N}")

    @classmethod
    def from_dt(cls, T, dt):
        if dt <= 0:
            raise ConfigurationError(f"time step must be positive, got {dt}")
        return cls(float(T), max(1, int(round(T / dt))))

    @property
    def dt(self):
        return self.T / self.N

    def time(self, n):
        return n * self.dt


@dataclass(frozen=True)
class SourceSpec:
    """Source term and initial data.

    ``ricker``: separable Gaussian-in-space Ricker wavelet, zero initial data.
    ``manufactured``: no source, ``g0 = sin(pi x) sin(pi y)``, ``g1 = 0``; the
    exact solution for ``a = 1`` on the unit square is ``g0 cos(sqrt(2) pi t)``.
    ``none``: everything zero.
    """

    kind: str = "ricker"
    f0: float = 20.0
    center: tuple = (0.5, 0.5)
    sharpness: float = 100.0
    amplitude: float = 100.0

    def __post_init__(self):
        if self.kind not in ("ricker", "manufactured", "none"):
            raise ConfigurationError(f"unknown source kind {self.kind!r}")
        if self.kind == "ricker" and self.f0 <= 0:
            raise ConfigurationError("Ricker frequency must be positive")

    @property
    def has_load(self):
        return self.kind == "ricker"

    @property
    def has_initial_data(self):
        return self.kind == "manufactured"

    def spatial(self, x, y):
        if self.kind != "ricker":
            return np.zeros_like(np.asarray(x, dtype=float))
        r2 = (x - self.center[0]) ** 2 + (y - self.center[1]) ** 2
        return self.amplitude * np.exp(-self.sharpness * r2)

    def time_factor(self, t):
        if self.kind != "ricker":
            return np.zeros_like(np.asarray(t, dtype=float))
        s = (np.pi * self.f0 * (np.asarray(t, dtype=float) - 2.0 / self.f0)) ** 2
        return (1.0 - 2.0 * s) * np.exp(-s)

    def __call__(self, x, y, t):
        return self.spatial(x, y) * self.time_factor(t)

    def g0(self, x, y):
        if self.kind == "manufactured":
            return np.sin(np.pi * x) * np.sin(np.pi * y)
        return np.zeros_like(np.asarray(x, dtype=float))

    def g1(self, x, y):
        return np.zeros_like(np.asarray(x, dtype=float))

    def exact(self, x, y, t):
        if self.kind != "manufactured":
            raise ConfigurationError("exact solution only known for the manufactured source")
        return self.g0(x, y) * np.cos(np.sqrt(2.0) * np.pi * t)


def ricker_eval(x, y, t, spec=None):
    return (spec or SourceSpec())(x, y, t)


class FactorizedMass:
    """Sparse SPD mass with one sparse LU factorisation reused for every solve."""

    def __init__(self, M):
        self.matrix = sp.csc_matrix(M)
        self._lu = spla.splu(self.matrix, permc_spec="MMD_AT_PLUS_A")

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, x):
        return self.matrix @ x

    def solve(self, x):
        return self._lu.solve(np.asarray(x, dtype=float))


class DiagonalMass:
    """Lumped (row-sum) mass."""

    def __init__(self, diag):
        self.diag = np.asarray(diag, dtype=float)

    @property
    def shape(self):
        return (len(self.diag),) * 2

    def apply(self, x):
        return self.diag * x

    def solve(self, x):
        return x / self.diag


class WaveSystem:
    """``M u'' + S u = l(t)`` on some discrete space.

    The base class treats dofs as nodal values at ``points`` (used for
    small test systems); subclasses override the pairing maps.
    """

    def __init__(self, stiffness, mass, points=None):
        self.stiffness = sp.csr_matrix(stiffness)
        self.mass = mass
        self.points = points

    @property
    def n_dofs(self):
        return self.stiffness.shape[0]

    def sample(self, func):
        return func(self.points[:, 0], self.points[:, 1])

    def pair(self, f_nodal):
        return self.mass.apply(np.asarray(f_nodal, dtype=float))

    def project(self, g_nodal):
        return np.asarray(g_nodal, dtype=float).copy()

    def energy_against(self, g_nodal):
        return self.stiffness @ np.asarray(g_nodal, dtype=float)

    @cached_property
    def kernel_operands(self):
        """Block-sparse ``M^-1 S`` for the compiled loop, or ``None`` if the
        mass is not (block) diagonal."""
        if isinstance(self.mass, DiagonalMass):
            blk_ptr = np.arange(self.n_dofs + 1, dtype=np.int64)
            A = sp.diags(1.0 / self.mass.diag) @ self.stiffness
        elif isinstance(self.mass, BlockDiagonalMass):
            blk_ptr = np.asarray(self.mass.offsets, dtype=np.int64)
            A = sp.block_diag(self.mass.inverse_blocks, format="csr") @ self.stiffness
        else:
            return None
        return block_sparse(sp.csr_matrix(A), blk_ptr)


def block_sparse(A, blk_ptr):
    """Split ``A`` into dense column-major blocks on the partition ``blk_ptr``.

    Returns the operand dict of :func:`kernels.leapfrog_blocks`; only block
    pairs with a stored entry are kept.
    """
    A = A.tocoo()
    blk_ptr = np.asarray(blk_ptr, dtype=np.int64)
    nb = len(blk_ptr) - 1
    sizes = np.diff(blk_ptr)
    rb = np.searchsorted(blk_ptr, A.row, side="right") - 1
    cb = np.searchsorted(blk_ptr, A.col, side="right") - 1
    pair = rb.astype(np.int64) * nb + cb
    keys, inv = np.unique(pair, return_inverse=True)
    kr, kc = keys // nb, keys % nb
    boff = np.concatenate([[0], np.cumsum(sizes[kr] * sizes[kc])]).astype(np.int64)
    data = np.zeros(boff[-1])
    i_loc = A.row - blk_ptr[rb]
    j_loc = A.col - blk_ptr[cb]
    np.add.at(data, boff[inv] + j_loc * sizes[rb] + i_loc, A.data)
    brow_ptr = np.searchsorted(kr, np.arange(nb + 1)).astype(np.int64)
    return dict(blk_ptr=blk_ptr, brow_ptr=brow_ptr, bcol=kc.astype(np.int64),
                boff=boff[:-1].copy(), data=data)


class FineSystem(WaveSystem):
    """Conforming Q1 system with homogeneous Dirichlet rows eliminated."""

    def __init__(self, fine, field, lump=False):
        field.check(fine)
        K, M = assemble_local(fine.grid, field.values, fine.h)
        self.fine = fine
        self.free = fine.free_nodes
        self.K_full, self.M_full = K.tocsr(), M.tocsr()
        Kf = self.K_full[self.free][:, self.free]
        Mf = self.M_full[self.free][:, self.free]
        if lump:
            mass = DiagonalMass(np.asarray(self.M_full.sum(axis=1)).ravel()[self.free])
        else:
            mass = FactorizedMass(Mf)
        super().__init__(Kf, mass, fine.node_xy)
        self.lumped = lump

    def pair(self, f_nodal):
        return (self.M_full @ np.asarray(f_nodal, dtype=float))[self.free]

    def project(self, g_nodal):
        return self.mass.solve(self.pair(g_nodal))

    def energy_against(self, g_nodal):
        return (self.K_full @ np.asarray(g_nodal, dtype=float))[self.free]

    def to_nodal(self, u):
        out = np.zeros(self.fine.n_nodes)
        out[self.free] = u
        return out


class CoarseSystem(WaveSystem):
    """IPDG system on the span of a basis bank."""

    def __init__(self, dg, bank, coarse):
        super().__init__(dg.stiffness, dg.mass, coarse.fine.node_xy)
        self.dg, self.bank, self.coarse = dg, bank, coarse
        self.assembler = dg.meta["assembler"]

    def pair(self, f_nodal):
        fb = _broken(self.coarse, f_nodal)
        M = self.assembler.local_mass
        return np.concatenate([b.modes.T @ (M @ f) for b, f in zip(self.bank.blocks, fb)])

    def project(self, g_nodal):
        return l2_project(g_nodal, self.dg, self.bank, self.coarse)

    def energy_against(self, g_nodal):
        U = [b.modes for b in self.bank.blocks]
        return self.assembler.apply(U, _broken(self.coarse, g_nodal))


def init_states(system, source, grid):
    """First two states: ``u0 = P g0`` and
    ``u1 = u0 + dt P g1 + dt^2/2 v`` with ``(v, w) = (f(0), w) - a(g0, w)``."""
    dt = grid.dt
    n = system.n_dofs
    if not source.has_initial_data and not source.has_load:
        return np.zeros(n), np.zeros(n)
    if source.has_initial_data:
        g0 = system.sample(source.g0)
        g1 = system.sample(source.g1)
        u0 = system.project(g0)
        v1 = system.project(g1)
        rhs = -system.energy_against(g0)
    else:
        u0, v1, rhs = np.zeros(n), np.zeros(n), np.zeros(n)
    if source.has_load:
        rhs = rhs + system.pair(system.sample(lambda x, y: source(x, y, 0.0)))
    vt = system.mass.solve(rhs)
    return u0, u0 + dt * v1 + 0.5 * dt * dt * vt


@dataclass
class RunResult:
    u_prev: np.ndarray
    u: np.ndarray
    grid: TimeGrid
    probes: dict = field(default_factory=dict)
    t_on: float = 0.0
    steps: int = 0
    backend: str = ""

    @property
    def seconds_per_step(self):
        return self.t_on / max(self.steps, 1)


def leapfrog_run(system, u0, u1, source, grid, probes=(), chunk=200, backend=None,
                 keep_pairs=False):
    """Advance from ``(u0, u1)`` at ``t0, t1`` to ``t_N``.

    ``probes`` lists step indices (ints) or times (floats) whose states are
    recorded; with ``keep_pairs`` the pair ``(u^{n-1}, u^n)`` is stored.
    """
    dt, N = grid.dt, grid.N
    want = set()
    for p in probes:
        n = p if isinstance(p, (int, np.integer)) else int(round(p / dt))
        if 1 <= n <= N:
            want.add(int(n))
    stops = sorted(want | {N} | set(range(1, N, max(int(chunk), 1))))
    u_prev = np.array(u0, dtype=float, copy=True)
    u = np.array(u1, dtype=float, copy=True)
    load = system.pair(system.sample(source.spatial)) if source.has_load else np.zeros(0)
    ops = system.kernel_operands
    g = system.mass.solve(load) if (ops is not None and load.size) else np.zeros(0)
    mod = kernels.backends()[backend] if backend else kernels
    name = backend or kernels.BACKEND
    dt2 = dt * dt
    out = {}
    if 1 in want:
        out[1] = (u_prev.copy(), u.copy()) if keep_pairs else u.copy()
    t_start = time.perf_counter()
    n = 1
    for stop in stops:
        if stop <= n:
            continue
        tf = np.ascontiguousarray(source.time_factor(np.arange(n, stop) * dt), dtype=float)
        if ops is not None:
            mod.leapfrog_blocks(ops["blk_ptr"], ops["brow_ptr"], ops["bcol"], ops["boff"],
                                ops["data"], u_prev, u, g, tf, dt2)
        else:
            name = "scipy"
            S, mass = system.stiffness, system.mass
            for t_fac in tf:
                r = S @ u
                if load.size:
                    r -= t_fac * load
                un = 2.0 * u - u_prev - dt2 * mass.solve(r)
                u_prev, u = u, un
        n = stop
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(u_prev))):
            raise InstabilityError(n, f"non-finite state by step {n} (t={n * dt:.6g})")
        if n in want:
            out[n] = (u_prev.copy(), u.copy()) if keep_pairs else u.copy()
    t_on = time.perf_counter() - t_start
    return RunResult(u_prev, u, grid, out, t_on, N - 1, name)


def leapfrog_energy(system, u_prev, u, dt):
    """Discrete energy conserved by the source-free recurrence."""
    d = (u - u_prev) / dt
    return 0.5 * float(d @ system.mass.apply(d)) + 0.5 * float(u @ (system.stiffness @ u_prev))


def _dense_mass(mass):
    if isinstance(mass, BlockDiagonalMass):
        return mass.tosparse().toarray()
    if isinstance(mass, FactorizedMass):
        return mass.matrix.toarray()
    if isinstance(mass, DiagonalMass):
        return np.diag(mass.diag)
    return np.atleast_2d(np.asarray(mass.apply(np.eye(mass.shape[0]))))


def max_eigenvalue(system, tol=1e-10, maxiter=None):
    """Largest eigenvalue of ``M^-1 S`` (dense for small systems, Lanczos
    otherwise, plain power iteration as a last resort)."""
    n = system.n_dofs
    S = system.stiffness
    if n <= 400:
        return float(sla.eigh(S.toarray(), _dense_mass(system.mass), eigvals_only=True)[-1])
    Mop = spla.LinearOperator((n, n), matvec=system.mass.apply, dtype=float)
    Minv = spla.LinearOperator((n, n), matvec=system.mass.solve, dtype=float)
    try:
        vals = spla.eigsh(S, k=1, M=Mop, Minv=Minv, which="LA", tol=tol, maxiter=maxiter,
                          v0=np.ones(n))
        return float(vals[0][0])
    except spla.ArpackNoConvergence:
        log.warning("Lanczos did not converge; falling back to power iteration")
    x = np.random.default_rng(0).standard_normal(n)
    q_old = 0.0
    for _ in range(maxiter or 20000):
        y = system.mass.solve(S @ x)
        q = float(y @ (S @ y)) / float(y @ system.mass.apply(y))
        x = y / np.linalg.norm(y)
        if abs(q - q_old) <= tol * abs(q):
            return q
        q_old = q
    return None


def analytic_beta(h, a1, gamma, Lambda):
    """``beta(h) = h^2 / (a1 (24 + 32 sqrt(3 Lambda) + 16 gamma))``."""
    return h * h / (a1 * (24.0 + 32.0 * math.sqrt(3.0 * Lambda) + 16.0 * gamma))


@dataclass
class StabilityReport:
    dt: float
    dt_spectral: float | None
    dt_analytic: float | None
    lam_max: float | None
    beta: float | None
    Lambda: float | None
    safety: float

    @property
    def accepted(self):
        if self.dt_spectral is not None:
            return self.dt <= self.safety * self.dt_spectral
        return self.dt_analytic is not None and self.dt * self.dt < self.dt_analytic**2

    @property
    def verdict(self):
        return "accept" if self.accepted else "reject"


def stability_guard(system, grid, params=None, h=None, field=None, Lambda=None, safety=0.95):
    """Compare the requested step with the spectral bound ``2/sqrt(lam_max)``
    and, when enough data is given, with the ``2 sqrt(beta(h))`` bound."""
    lam = max_eigenvalue(system)
    dt_spec = 2.0 / math.sqrt(lam) if lam and lam > 0 else None
    if dt_spec is None:
        warnings.warn("spectral bound unavailable; using the analytical bound only",
                      RuntimeWarning, stacklevel=2)
    beta = dt_analytic = None
    if params is not None and h is not None and field is not None and Lambda is not None:
        beta = analytic_beta(h, field.a1, params.gamma, Lambda)
        dt_analytic = 2.0 * math.sqrt(beta)
    return StabilityReport(grid.dt, dt_spec, dt_analytic, lam, beta, Lambda, safety)
