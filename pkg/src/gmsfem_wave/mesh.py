"""Two-level rectangular grids: a uniform fine mesh of square cells and a
coarse partition into square blocks made of whole fine cells.

Node numbering on the fine mesh is lexicographic, ``node = j * (nx + 1) + i``;
cells are ``cell = cj * nx + ci``.  Every cell lists its corners
counterclockwise starting at the lower-left one.  The same conventions are
used for block-local grids.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigurationError

__all__ = [
    "LocalGrid",
    "FineMesh",
    "Block",
    "CoarseEdge",
    "CoarseMesh",
    "OversampleMap",
    "build_hierarchy",
    "build_oversample_map",
]


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LocalGrid:
    """Topology of an ``rx`` by ``ry`` patch of fine cells."""

    rx: int
    ry: int

    @property
    def n_nodes(self):
        return (self.rx + 1) * (self.ry + 1)

    @property
    def n_cells(self):
        return self.rx * self.ry

    def node(self, i, j):
        return np.asarray(j) * (self.rx + 1) + np.asarray(i)

    @cached_property
    def cell_nodes(self):
        ci, cj = np.meshgrid(np.arange(self.rx), np.arange(self.ry))
        ci, cj = ci.ravel(), cj.ravel()
        n0 = self.node(ci, cj)
        return _frozen(np.stack([n0, n0 + 1, n0 + self.rx + 2, n0 + self.rx + 1], axis=1))

    @cached_property
    def boundary(self):
        """Boundary nodes, counterclockwise from the lower-left corner."""
        rx, ry = self.rx, self.ry
        bottom = self.node(np.arange(0, rx), 0)
        right = self.node(rx, np.arange(0, ry))
        top = self.node(np.arange(rx, 0, -1), ry)
        left = self.node(0, np.arange(ry, 0, -1))
        return _frozen(np.concatenate([bottom, right, top, left]))

    @cached_property
    def interior(self):
        i, j = np.meshgrid(np.arange(1, self.rx), np.arange(1, self.ry))
        return _frozen(np.sort(self.node(i.ravel(), j.ravel())))


@dataclass(frozen=True, eq=False)
class FineMesh:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    @property
    def h(self):
        return self.lx / self.nx

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_cells(self):
        return self.nx * self.ny

    @cached_property
    def grid(self):
        return LocalGrid(self.nx, self.ny)

    @property
    def cell_nodes(self):
        return self.grid.cell_nodes

    @cached_property
    def node_xy(self):
        x = np.arange(self.nx + 1) * self.h
        y = np.arange(self.ny + 1) * self.h
        X, Y = np.meshgrid(x, y)
        return _frozen(np.stack([X.ravel(), Y.ravel()], axis=1))

    @cached_property
    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.h
        y = (np.arange(self.ny) + 0.5) * self.h
        X, Y = np.meshgrid(x, y)
        return _frozen(np.stack([X.ravel(), Y.ravel()], axis=1))

    @cached_property
    def boundary_nodes(self):
        return _frozen(np.sort(self.grid.boundary))

    @cached_property
    def free_nodes(self):
        return _frozen(self.grid.interior)


@dataclass(frozen=True, eq=False)
class Block:
    index: int
    bi: int
    bj: int
    cells: np.ndarray  # global cell ids, block-local lexicographic order
    nodes: np.ndarray  # global node ids, block-local lexicographic order
    origin: tuple


@dataclass(frozen=True, eq=False)
class CoarseEdge:
    """A coarse edge made of ``r`` fine sub-edges.

    The unit normal points from the ``plus`` block to the ``minus`` block; on
    the domain boundary ``minus`` is ``-1`` and the normal points outward.
    Node and cell lists are block-local indices ordered by increasing
    coordinate along the edge.
    """

    index: int
    vertical: bool
    plus: int
    minus: int
    normal: tuple
    origin: tuple
    plus_nodes: np.ndarray
    plus_cells: np.ndarray
    minus_nodes: np.ndarray | None = None
    minus_cells: np.ndarray | None = None

    @property
    def on_boundary(self):
        return self.minus < 0

    @property
    def blocks(self):
        return (self.plus,) if self.on_boundary else (self.plus, self.minus)


@dataclass(frozen=True, eq=False)
class CoarseMesh:
    fine: FineMesh
    NX: int
    NY: int
    blocks: tuple
    edges: tuple
    local: LocalGrid = field(repr=False)

    @property
    def r(self):
        """Fine cells per block side (H/h)."""
        return self.local.rx

    @property
    def H(self):
        return self.r * self.fine.h

    @property
    def n_blocks(self):
        return self.NX * self.NY

    @property
    def n_boundary(self):
        return 4 * self.r

    @property
    def n_interior(self):
        return (self.r - 1) ** 2

    def block_at(self, bi, bj):
        return self.blocks[bj * self.NX + bi]

    @cached_property
    def block_edges(self):
        out = [[] for _ in range(self.n_blocks)]
        for e in self.edges:
            for b in e.blocks:
                out[b].append(e.index)
        return tuple(tuple(x) for x in out)

    @cached_property
    def cell_block(self):
        """Owning block id for every fine cell."""
        owner = np.empty(self.fine.n_cells, dtype=np.int64)
        for b in self.blocks:
            owner[b.cells] = b.index
        return _frozen(owner)

    def adjacent(self, a, b):
        return any(b in self.edges[k].blocks for k in self.block_edges[a])


def _edge_local(local, side):
    """Local node and cell indices along one side of a block."""
    r = local.rx
    t = np.arange(r + 1)
    c = np.arange(r)
    if side == "left":
        return local.node(0, t), c * r
    if side == "right":
        return local.node(r, t), c * r + (r - 1)
    if side == "bottom":
        return local.node(t, 0), c
    if side == "top":
        return local.node(t, r), (r - 1) * r + c
    raise KeyError(side)


def build_hierarchy(nx, ny, blocks_x, blocks_y, extent=1.0):
    """Build the fine mesh and its coarse block partition."""
    if np.isscalar(extent):
        lx = ly = float(extent)
    else:
        lx, ly = map(float, extent)
    if lx <= 0 or ly <= 0:
        raise ConfigurationError(f"extent must be positive, got {(lx, ly)}")
    if min(nx, ny, blocks_x, blocks_y) < 1:
        raise ConfigurationError("cell and block counts must be positive")
    if nx % blocks_x:
        raise ConfigurationError(f"nx={nx} is not divisible by blocks_x={blocks_x}")
    if ny % blocks_y:
        raise ConfigurationError(f"ny={ny} is not divisible by blocks_y={blocks_y}")
    if not np.isclose(lx / nx, ly / ny, rtol=1e-12):
        raise ConfigurationError(f"fine cells must be square: {lx}/{nx} != {ly}/{ny}")
    r, ry = nx // blocks_x, ny // blocks_y
    if r != ry:
        raise ConfigurationError(f"coarse blocks must be square: {r}x{ry} fine cells")

    fine = FineMesh(nx, ny, lx, ly)
    local = LocalGrid(r, r)
    h = fine.h
    li, lj = np.meshgrid(np.arange(r + 1), np.arange(r + 1))
    li, lj = li.ravel(), lj.ravel()
    ci, cj = np.meshgrid(np.arange(r), np.arange(r))
    ci, cj = ci.ravel(), cj.ravel()

    blocks = []
    for bj in range(blocks_y):
        for bi in range(blocks_x):
            nodes = (bj * r + lj) * (nx + 1) + bi * r + li
            cells = (bj * r + cj) * nx + bi * r + ci
            blocks.append(Block(len(blocks), bi, bj, _frozen(cells), _frozen(nodes),
                                (bi * r * h, bj * r * h)))

    edges = []

    def add(vertical, plus, minus, normal, origin, pside, mside):
        pn, pc = _edge_local(local, pside)
        kw = {}
        if mside is not None:
            mn, mc = _edge_local(local, mside)
            kw = dict(minus_nodes=_frozen(mn), minus_cells=_frozen(mc))
        edges.append(CoarseEdge(len(edges), vertical, plus, minus, normal, origin,
                                _frozen(pn), _frozen(pc), **kw))

    H = r * h
    for bj in range(blocks_y):
        for bi in range(blocks_x + 1):
            org = (bi * H, bj * H)
            if bi == 0:
                add(True, bj * blocks_x, -1, (-1.0, 0.0), org, "left", None)
            elif bi == blocks_x:
                add(True, bj * blocks_x + bi - 1, -1, (1.0, 0.0), org, "right", None)
            else:
                add(True, bj * blocks_x + bi - 1, bj * blocks_x + bi, (1.0, 0.0), org,
                    "right", "left")
    for bj in range(blocks_y + 1):
        for bi in range(blocks_x):
            org = (bi * H, bj * H)
            if bj == 0:
                add(False, bi, -1, (0.0, -1.0), org, "bottom", None)
            elif bj == blocks_y:
                add(False, (bj - 1) * blocks_x + bi, -1, (0.0, 1.0), org, "top", None)
            else:
                add(False, (bj - 1) * blocks_x + bi, bj * blocks_x + bi, (0.0, 1.0), org,
                    "top", "bottom")

    coarse = CoarseMesh(fine, blocks_x, blocks_y, tuple(blocks), tuple(edges), local)
    return fine, coarse


@dataclass(frozen=True, eq=False)
class OversampleMap:
    """Enlarged patches K+ around every block, clipped to the domain.

    ``patches[k]`` is ``(ci0, cj0, rx, ry)`` in global fine cells and
    ``restrict[k]`` maps the block's local nodes to patch-local nodes.
    """

    coarse: CoarseMesh
    ext_cells: int
    patches: tuple
    restrict: tuple

    def grid(self, k):
        _, _, rx, ry = self.patches[k]
        return LocalGrid(rx, ry)

    def patch_cells(self, k):
        ci0, cj0, rx, ry = self.patches[k]
        ci, cj = np.meshgrid(np.arange(rx), np.arange(ry))
        return (cj0 + cj.ravel()) * self.coarse.fine.nx + ci0 + ci.ravel()

    def is_identity(self, k):
        _, _, rx, ry = self.patches[k]
        return rx == self.coarse.r and ry == self.coarse.r


def build_oversample_map(coarse, ext_cells):
    if ext_cells < 0:
        raise ConfigurationError(f"ext_cells must be >= 0, got {ext_cells}")
    fine, r = coarse.fine, coarse.r
    patches, restrict = [], []
    li, lj = np.meshgrid(np.arange(r + 1), np.arange(r + 1))
    li, lj = li.ravel(), lj.ravel()
    for b in coarse.blocks:
        ci0 = max(b.bi * r - ext_cells, 0)
        cj0 = max(b.bj * r - ext_cells, 0)
        ci1 = min((b.bi + 1) * r + ext_cells, fine.nx)
        cj1 = min((b.bj + 1) * r + ext_cells, fine.ny)
        rx, ry = ci1 - ci0, cj1 - cj0
        oi, oj = b.bi * r - ci0, b.bj * r - cj0
        patches.append((ci0, cj0, rx, ry))
        restrict.append(_frozen((lj + oj) * (rx + 1) + li + oi))
    return OversampleMap(coarse, int(ext_cells), tuple(patches), tuple(restrict))
