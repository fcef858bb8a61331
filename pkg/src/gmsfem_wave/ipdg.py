"""Symmetric interior penalty coupling of the block-local multiscale bases.

Edge integrals are evaluated exactly with two Gauss points per fine
sub-edge: traces of Q1 functions and their normal fluxes are linear along
each sub-edge, so every integrand is at most quadratic.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, InternalError
from .fem_core import assemble_local
from .mesh import _edge_local
from .msbasis import block_stiffness

__all__ = [
    "DGParams",
    "EdgeQuadrature",
    "EdgeTraces",
    "BlockDiagonalMass",
    "DGSystem",
    "IPDGAssembler",
    "edge_quadratures",
    "trace_terms",
    "assemble_adg",
    "assemble_mass_and_load",
    "l2_project",
    "verify_coercivity_continuity",
    "estimate_trace_constant",
    "CoercivityReport",
]

log = logging.getLogger(__name__)

_G = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@dataclass
class DGParams:
    gamma: float = 2.0
    Lambda: float | None = None
    penalty_scale: str = "h"

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigurationError(f"penalty gamma must be positive, got {self.gamma}")
        if self.penalty_scale not in ("h", "H"):
            raise ConfigurationError(f"penalty scale must be 'h' or 'H', not {self.penalty_scale!r}")
        if self.Lambda is not None and self.Lambda <= 0:
            raise ConfigurationError("trace constant must be positive")


def _side_operators(local, h, nodes, cells, normal, a_cells):
    """Trace and normal-flux evaluation at the 2r Gauss points of one side."""
    r = len(cells)
    n_pts = 2 * r
    cn = local.cell_nodes[cells]  # (r, 4) corners v0..v3
    g = np.tile(_G, r)
    s = np.repeat(np.arange(r), 2)
    rows = np.arange(n_pts)
    tr = sp.csr_matrix(
        (np.concatenate([1.0 - g, g]),
         (np.concatenate([rows, rows]), np.concatenate([nodes[s], nodes[s + 1]]))),
        shape=(n_pts, local.n_nodes))
    v = cn[s]
    coef = np.repeat(a_cells[cells], 2) / h
    if normal[0] != 0.0:
        # d/dx = ((v1 - v0)(1 - eta) + (v2 - v3) eta) / h
        c = coef * normal[0]
        cols = [v[:, 1], v[:, 0], v[:, 2], v[:, 3]]
        vals = [c * (1 - g), -c * (1 - g), c * g, -c * g]
    else:
        # d/dy = ((v3 - v0)(1 - xi) + (v2 - v1) xi) / h
        c = coef * normal[1]
        cols = [v[:, 3], v[:, 0], v[:, 2], v[:, 1]]
        vals = [c * (1 - g), -c * (1 - g), c * g, -c * g]
    fl = sp.csr_matrix((np.concatenate(vals), (np.tile(rows, 4), np.concatenate(cols))),
                       shape=(n_pts, local.n_nodes))
    return tr, fl


@dataclass(eq=False)
class EdgeQuadrature:
    edge: object
    weights: np.ndarray
    points: np.ndarray
    trace_plus: sp.csr_matrix
    flux_plus: sp.csr_matrix
    a_pen: np.ndarray
    trace_minus: sp.csr_matrix | None = None
    flux_minus: sp.csr_matrix | None = None


def edge_quadratures(coarse, field):
    """Quadrature operators for every coarse edge."""
    h, local, r = coarse.fine.h, coarse.local, coarse.r
    out = []
    for e in coarse.edges:
        t = (np.repeat(np.arange(r), 2) + np.tile(_G, r)) * h
        if e.vertical:
            pts = np.stack([np.full(2 * r, e.origin[0]), e.origin[1] + t], axis=1)
        else:
            pts = np.stack([e.origin[0] + t, np.full(2 * r, e.origin[1])], axis=1)
        ap = field.values[coarse.blocks[e.plus].cells]
        trp, flp = _side_operators(local, h, e.plus_nodes, e.plus_cells, e.normal, ap)
        a_plus = np.repeat(ap[e.plus_cells], 2)
        w = np.full(2 * r, 0.5 * h)
        if e.on_boundary:
            out.append(EdgeQuadrature(e, w, pts, trp, flp, a_plus))
            continue
        am = field.values[coarse.blocks[e.minus].cells]
        trm, flm = _side_operators(local, h, e.minus_nodes, e.minus_cells, e.normal, am)
        a_minus = np.repeat(am[e.minus_cells], 2)
        a_pen = 2.0 * a_plus * a_minus / (a_plus + a_minus)
        out.append(EdgeQuadrature(e, w, pts, trp, flp, a_pen, trm, flm))
    return out


@dataclass
class EdgeTraces:
    weights: np.ndarray
    jump: np.ndarray
    average: np.ndarray
    flux_average: np.ndarray


def trace_terms(eq, u_plus, u_minus=None):
    """Jump, average and flux average of a broken function on one edge.

    ``u_plus``/``u_minus`` are block-local nodal vectors (or matrices of
    columns) of the two adjacent blocks.  On a boundary edge the one-sided
    convention ``{u} = u``, ``[u] = u`` applies.
    """
    tp, fp = eq.trace_plus @ u_plus, eq.flux_plus @ u_plus
    if eq.edge.on_boundary:
        return EdgeTraces(eq.weights, tp, tp, fp)
    if eq.trace_minus is None or u_minus is None:
        raise InternalError(f"edge {eq.edge.index}: missing data for the minus side")
    tm, fm = eq.trace_minus @ u_minus, eq.flux_minus @ u_minus
    return EdgeTraces(eq.weights, tp - tm, 0.5 * (tp + tm), 0.5 * (fp + fm))


class BlockDiagonalMass:
    """Block-diagonal SPD matrix stored as dense blocks with Cholesky factors."""

    def __init__(self, blocks):
        self.blocks = [np.asarray(b, dtype=float) for b in blocks]
        self.offsets = np.concatenate([[0], np.cumsum([len(b) for b in self.blocks])]).astype(np.int64)
        self.factors = []
        for k, b in enumerate(self.blocks):
            try:
                self.factors.append(sla.cho_factor(b, lower=True))
            except np.linalg.LinAlgError as exc:
                raise InternalError(f"mass block {k} is not SPD") from exc

    @property
    def shape(self):
        n = int(self.offsets[-1])
        return (n, n)

    def _slices(self):
        o = self.offsets
        return [slice(o[k], o[k + 1]) for k in range(len(self.blocks))]

    def apply(self, x):
        y = np.empty_like(x, dtype=float)
        for b, s in zip(self.blocks, self._slices()):
            y[s] = b @ x[s]
        return y

    def solve(self, x):
        y = np.empty_like(x, dtype=float)
        for f, s in zip(self.factors, self._slices()):
            y[s] = sla.cho_solve(f, x[s])
        return y

    @cached_property
    def inverse_blocks(self):
        out = []
        for f, b in zip(self.factors, self.blocks):
            inv = sla.cho_solve(f, np.eye(len(b)))
            out.append(0.5 * (inv + inv.T))
        return out

    def tosparse(self):
        return sp.block_diag(self.blocks, format="csr") if self.blocks else sp.csr_matrix((0, 0))


@dataclass(eq=False)
class DGSystem:
    """Coarse IPDG operators on the span of a basis bank.

    ``stiffness = volume + consistency + (gamma / length) * penalty``, where
    ``penalty`` is the a-weighted jump form and ``length`` is h (default) or H.
    """

    volume: sp.csr_matrix
    consistency: sp.csr_matrix
    penalty: sp.csr_matrix
    jump_mass: sp.csr_matrix
    mass: BlockDiagonalMass
    params: DGParams
    length: float
    offsets: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def penalty_factor(self):
        return self.params.gamma / self.length

    @cached_property
    def stiffness(self):
        S = (self.volume + self.consistency + self.penalty_factor * self.penalty).tocsr()
        S.sort_indices()
        return S

    @cached_property
    def norm_matrix(self):
        """Matrix of the broken energy norm: volume plus scaled penalty."""
        return (self.volume + self.penalty_factor * self.penalty).tocsr()

    @property
    def n_dofs(self):
        return int(self.offsets[-1])

    def block_of(self, i):
        return int(np.searchsorted(self.offsets, i, side="right") - 1)


class IPDGAssembler:
    """Holds the per-block and per-edge operators needed to evaluate the
    IPDG forms for arbitrary broken functions."""

    def __init__(self, coarse, field, params=None):
        self.coarse = coarse
        self.field = field.check(coarse.fine)
        self.params = params or DGParams()
        h = coarse.fine.h
        self.length = h if self.params.penalty_scale == "h" else coarse.H
        self.edges = edge_quadratures(coarse, field)
        self.local_mass = assemble_local(coarse.local, np.ones(coarse.local.n_cells), h)[1].tocsr()
        self._stiff = {}

    def stiffness_of(self, k):
        if k not in self._stiff:
            self._stiff[k] = block_stiffness(self.coarse, k, self.field).tocsr()
        return self._stiff[k]

    def forms(self, U):
        """Sparse volume, consistency, weighted-jump and plain-jump matrices for
        the broken basis given blockwise by ``U[k]`` (local nodes x d_k)."""
        sizes = [u.shape[1] for u in U]
        off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        n = int(off[-1])
        parts = {name: ([], [], []) for name in ("vol", "cons", "pen", "jump")}

        def put(name, dofs_r, dofs_c, mat):
            rr, cc, vv = parts[name]
            rr.append(np.repeat(dofs_r, len(dofs_c)))
            cc.append(np.tile(dofs_c, len(dofs_r)))
            vv.append(mat.ravel())

        dofs = [np.arange(off[k], off[k + 1]) for k in range(len(U))]
        for k, u in enumerate(U):
            Au = self.stiffness_of(k) @ u
            put("vol", dofs[k], dofs[k], u.T @ Au)
        for eq in self.edges:
            e = eq.edge
            tp, fp = eq.trace_plus @ U[e.plus], eq.flux_plus @ U[e.plus]
            if e.on_boundary:
                J, Av, d = tp, fp, dofs[e.plus]
            else:
                tm, fm = eq.trace_minus @ U[e.minus], eq.flux_minus @ U[e.minus]
                J = np.hstack([tp, -tm])
                Av = 0.5 * np.hstack([fp, fm])
                d = np.concatenate([dofs[e.plus], dofs[e.minus]])
            w = eq.weights[:, None]
            C = -(Av.T @ (w * J))
            put("cons", d, d, C + C.T)
            put("pen", d, d, J.T @ ((w * eq.a_pen[:, None]) * J))
            put("jump", d, d, J.T @ (w * J))

        out = {}
        for name, (rr, cc, vv) in parts.items():
            if rr:
                M = sp.csr_matrix((np.concatenate(vv), (np.concatenate(rr), np.concatenate(cc))),
                                  shape=(n, n))
            else:
                M = sp.csr_matrix((n, n))
            M.sum_duplicates()
            out[name] = M
        return out, off

    def apply(self, U, g):
        """``a_DG(g, phi_j)`` for every basis column, ``g`` given blockwise."""
        off = np.concatenate([[0], np.cumsum([u.shape[1] for u in U])]).astype(np.int64)
        out = np.zeros(off[-1])
        pf = self.params.gamma / self.length
        for k, u in enumerate(U):
            out[off[k]:off[k + 1]] += u.T @ (self.stiffness_of(k) @ g[k])
        for eq in self.edges:
            e = eq.edge
            tg = trace_terms(eq, g[e.plus], None if e.on_boundary else g[e.minus])
            sides = [(e.plus, eq.trace_plus, eq.flux_plus, 1.0)]
            if not e.on_boundary:
                sides.append((e.minus, eq.trace_minus, eq.flux_minus, -1.0))
            w = eq.weights
            for k, tr, fl, sign in sides:
                u = U[k]
                jv = sign * (tr @ u)  # contribution of this side to [v]
                fv = (0.5 if not e.on_boundary else 1.0) * (fl @ u)
                val = (-(w * tg.flux_average) @ jv - (w * tg.jump) @ fv
                       + pf * (w * eq.a_pen * tg.jump) @ jv)
                out[off[k]:off[k + 1]] += val
        return out

    def mass_blocks(self, U):
        return [u.T @ (self.local_mass @ u) for u in U]


def _bank_columns(bank):
    return [b.modes for b in bank.blocks]


def assemble_adg(bank, coarse, field, params=None, assembler=None):
    """Assemble the coarse IPDG system for a basis bank."""
    asm = assembler or IPDGAssembler(coarse, field, params)
    U = _bank_columns(bank)
    forms, off = asm.forms(U)
    blocks = asm.mass_blocks(U)
    for k, b in enumerate(blocks):
        blocks[k] = 0.5 * (b + b.T)
    mass = BlockDiagonalMass(blocks)
    system = DGSystem(forms["vol"], forms["cons"], forms["pen"], forms["jump"], mass,
                      asm.params, asm.length, off)
    system.meta["assembler"] = asm
    return system


def _broken(coarse, g):
    """Split a global fine nodal vector into block-local vectors."""
    if isinstance(g, (list, tuple)):
        return list(g)
    g = np.asarray(g, dtype=float)
    return [g[b.nodes] for b in coarse.blocks]


def assemble_mass_and_load(bank, coarse, source_nodal, assembler=None):
    """Per-block mass matrices and the load vector ``(f, phi_j)`` of a nodal
    source (global fine nodal values or blockwise values)."""
    asm = assembler
    if asm is None:
        _, M = assemble_local(coarse.local, np.ones(coarse.local.n_cells), coarse.fine.h)
        local_mass = M.tocsr()
    else:
        local_mass = asm.local_mass
    U = _bank_columns(bank)
    blocks = [u.T @ (local_mass @ u) for u in U]
    f = _broken(coarse, source_nodal)
    load = np.concatenate([u.T @ (local_mass @ fk) for u, fk in zip(U, f)])
    return blocks, load


def l2_project(g, system, bank, coarse):
    """L2 projection of a fine function onto the span of the bank."""
    asm = system.meta["assembler"]
    gb = _broken(coarse, g)
    rhs = np.concatenate([b.modes.T @ (asm.local_mass @ gk) for b, gk in zip(bank.blocks, gb)])
    return system.mass.solve(rhs)


@dataclass
class CoercivityReport:
    gamma: float
    threshold: float | None
    min_coercivity: float
    max_continuity: float
    samples: int
    extremal: bool

    @property
    def passed(self):
        return self.min_coercivity >= 0.5 - 1e-12 and self.max_continuity <= 2.0 + 1e-12

    @property
    def below_threshold(self):
        return self.threshold is not None and self.gamma < self.threshold


def verify_coercivity_continuity(system, samples=100, seed=0, threshold=None, extremal=False):
    """Sample the ratios ``a_DG(v,v)/|v|_a^2`` and ``|a_DG(u,v)|/(|u|_a |v|_a)``.

    With ``extremal`` the exact extreme ratios of the pencil are included as
    additional samples (dense solve; only for small systems).
    """
    S, N = system.stiffness, system.norm_matrix
    rng = np.random.default_rng(seed)
    n = system.n_dofs
    V = rng.standard_normal((n, samples))
    U = rng.standard_normal((n, samples))
    SV, NV, NU = S @ V, N @ V, N @ U
    nv = np.sqrt(np.einsum("ij,ij->j", V, NV))
    nu = np.sqrt(np.einsum("ij,ij->j", U, NU))
    coer = np.einsum("ij,ij->j", V, SV) / nv**2
    cont = np.abs(np.einsum("ij,ij->j", U, SV)) / (nu * nv)
    cmin, cmax = float(coer.min()), float(max(cont.max(), np.abs(coer).max()))
    if extremal:
        ev = sla.eigh(S.toarray(), N.toarray(), eigvals_only=True)
        cmin = min(cmin, float(ev[0]))
        cmax = max(cmax, float(np.abs(ev).max()))
    gamma = system.params.gamma
    if threshold is not None and gamma < threshold:
        warnings.warn(f"gamma={gamma} is below the provable threshold {threshold:.3g}",
                      RuntimeWarning, stacklevel=2)
    return CoercivityReport(gamma, threshold, cmin, cmax, samples, extremal)


def _block_flux_form(coarse, k, field):
    """``2h * sum over the four sides of int (a grad v . n)^2`` as a matrix."""
    h, local = coarse.fine.h, coarse.local
    a = field.values[coarse.blocks[k].cells]
    F = sp.csr_matrix((local.n_nodes, local.n_nodes))
    normals = {"left": (-1.0, 0.0), "right": (1.0, 0.0), "bottom": (0.0, -1.0), "top": (0.0, 1.0)}
    for side, nrm in normals.items():
        nodes, cells = _edge_local(local, side)
        _, fl = _side_operators(local, h, nodes, cells, nrm, a)
        F = F + fl.T @ sp.diags(np.full(fl.shape[0], 0.5 * h)) @ fl
    return (2.0 * h * F).tocsr()


def trace_pencil(coarse, k, field):
    """Grounded (flux form, a1 * energy form) pencil of block ``k``."""
    F = _block_flux_form(coarse, k, field)
    E = field.a1 * block_stiffness(coarse, k, field).tocsr()
    keep = np.arange(1, F.shape[0])
    return F[keep][:, keep].tocsc(), E[keep][:, keep].tocsc()


def estimate_trace_constant(coarse, field, blocks=None, safety=1.1, tol=1e-8, maxiter=5000,
                            seed=0):
    """Estimate the discrete trace constant by power iteration on each
    sampled block's (flux, energy) pencil; returns ``safety`` times the
    largest Rayleigh quotient found."""
    if blocks is None:
        blocks = range(coarse.n_blocks)
    blocks = list(blocks)
    if not blocks:
        raise ConfigurationError("need at least one block to estimate the trace constant")
    rng = np.random.default_rng(seed)
    best = 0.0
    converged_all = True
    for k in blocks:
        F, E = trace_pencil(coarse, k, field)
        lu = spla.splu(E)
        x = rng.standard_normal(F.shape[0])
        q_old = 0.0
        converged = False
        for _ in range(maxiter):
            y = lu.solve(F @ x)
            q = float(y @ (F @ y)) / float(y @ (E @ y))
            x = y / np.sqrt(y @ (E @ y))
            if abs(q - q_old) <= tol * q:
                converged = True
                break
            q_old = q
        converged_all &= converged
        best = max(best, q)
    if not converged_all:
        warnings.warn("trace-constant power iteration did not converge; "
                      "returning a conservative estimate", RuntimeWarning, stacklevel=2)
        best *= 1.5
    return safety * best
