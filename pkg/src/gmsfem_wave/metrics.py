"""Error measures between a broken coarse solution and the fine reference."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem_core import assemble_local
from .ipdg import edge_quadratures, trace_terms
from .media import constant_field

__all__ = ["ErrorReport", "expand", "compute_errors", "cell_values", "unit_block_operators"]


def expand(state, bank):
    """Blockwise nodal values of a coarse state (double-valued on coarse edges)."""
    off = bank.offsets
    return [b.modes @ state[off[k]:off[k + 1]] for k, b in enumerate(bank.blocks)]


def unit_block_operators(coarse):
    """Block-local mass and unit-coefficient stiffness (identical for every block)."""
    K, M = assemble_local(coarse.local, np.ones(coarse.local.n_cells), coarse.fine.h)
    return M.tocsr(), K.tocsr()


def cell_values(coarse, blocks):
    """Average of the four corner values in every fine cell, as an (ny, nx) array."""
    fine = coarse.fine
    out = np.empty(fine.n_cells)
    cn = coarse.local.cell_nodes
    for b, u in zip(coarse.blocks, blocks):
        out[b.cells] = u[cn].mean(axis=1)
    return out.reshape(fine.ny, fine.nx)


@dataclass
class ErrorReport:
    e2: float
    e2_bar: float
    eH1: float
    eJump: float
    norm_l2: float
    norm_h1: float
    degenerate: bool = False
    t_off: float = float("nan")
    t_on: float = float("nan")
    meta: dict = field(default_factory=dict)

    FIELDS = ("e2", "e2_bar", "eH1", "eJump", "t_off", "t_on")

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.FIELDS}
        d["norm_l2"], d["norm_h1"], d["degenerate"] = self.norm_l2, self.norm_h1, self.degenerate
        d.update(self.meta)
        return d

    def to_text(self):
        return "".join(f"{k} = {v}\n" for k, v in self.as_dict().items())

    def write(self, path):
        Path(path).write_text(self.to_text())

    def append_csv(self, path):
        """Append one row; the header is written when the file is new."""
        path = Path(path)
        row = self.as_dict()
        new = not path.exists() or path.stat().st_size == 0
        with path.open("a", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(row))
            if new:
                w.writeheader()
            w.writerow(row)


def compute_errors(uH, u, coarse, edges=None, operators=None):
    """Relative L2, block-average and gradient errors plus the jump error.

    ``uH`` is a list of block-local nodal vectors, ``u`` the global fine
    nodal vector (boundary entries included).
    """
    M, K1 = operators or unit_block_operators(coarse)
    ones = np.ones(coarse.local.n_nodes)
    w_avg = M @ ones
    num2 = den2 = numb = denb = numh = denh = 0.0
    for b, uh in zip(coarse.blocks, uH):
        uk = u[b.nodes]
        d = uh - uk
        num2 += d @ (M @ d)
        den2 += uk @ (M @ uk)
        numb += (w_avg @ d) ** 2
        denb += (w_avg @ uk) ** 2
        numh += d @ (K1 @ d)
        denh += uk @ (K1 @ uk)
    if edges is None:
        edges = edge_quadratures(coarse, constant_field(coarse.fine))
    jump = 0.0
    for eq in edges:
        e = eq.edge
        tt = trace_terms(eq, uH[e.plus], None if e.on_boundary else uH[e.minus])
        jump += float(eq.weights @ tt.jump**2)
    degenerate = den2 == 0.0

    def rel(n, dn):
        if dn == 0.0:
            return math.sqrt(max(n, 0.0))
        return math.sqrt(max(n, 0.0) / dn)

    return ErrorReport(rel(num2, den2), rel(numb, denb), rel(numh, denh), jump,
                       math.sqrt(den2), math.sqrt(denh), degenerate)
