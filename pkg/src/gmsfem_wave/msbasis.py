"""Offline stage: snapshot spaces, local spectral problems and mode selection.

Every coarse block K gets two families of basis functions:

* boundary modes, eigenfunctions of ``a(w, v) = mu/H * (w, v)_{dK}`` on the
  span of the a-harmonic extensions of the boundary hat functions;
* interior modes, the lowest eigenfunctions of ``a(z, v) = lam/H^2 (z, v)_K``
  among fine functions vanishing on dK.

Both are stored as nodal vectors over the block-local fine grid.
"""
from __future__ import annotations

import io
import time
import zipfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, DataError, InternalError
from .fem_core import assemble_local

__all__ = [
    "BoundarySnapshotSet",
    "BlockSpectra",
    "BlockBasis",
    "impose_dirichlet",
    "BankCheck",
    "check_bank",
    "LocalBasisBank",
    "block_stiffness",
    "boundary_mass",
    "harmonic_extensions",
    "boundary_spectral",
    "interior_spectral",
    "select_by_energy",
    "compute_block_spectra",
    "compute_spectra",
    "bank_from_spectra",
    "build_bank",
    "save_bank",
    "load_bank",
]

RANK_TOL = 1e-12
ZERO_MU_TOL = 1e-8


def block_stiffness(coarse, k, field):
    b = coarse.blocks[k]
    return assemble_local(coarse.local, field.values[b.cells], coarse.fine.h, mass=False)


def boundary_mass(n, h):
    """L2(dK) mass of the hat traces on a closed loop of ``n`` sub-edges."""
    B = np.zeros((n, n))
    idx = np.arange(n)
    B[idx, idx] = 4.0 * h / 6.0
    B[idx, (idx + 1) % n] += h / 6.0
    B[(idx + 1) % n, idx] += h / 6.0
    return B


def _fix_signs(vectors, reference):
    """Flip columns so the largest-magnitude entry of ``reference`` is positive."""
    pos = np.argmax(np.abs(reference), axis=0)
    s = np.sign(reference[pos, np.arange(reference.shape[1])])
    s[s == 0] = 1.0
    return vectors * s, reference * s


@dataclass(eq=False)
class BoundarySnapshotSet:
    """Snapshots ``values[:, i]`` over the block-local nodes.

    ``canonical`` marks the plain set: one extension per boundary node of K,
    so the boundary trace of snapshot i is the i-th unit vector.
    """

    block: int
    values: np.ndarray
    boundary: np.ndarray
    canonical: bool
    harmonic_residual: float = 0.0

    @property
    def traces(self):
        return self.values[self.boundary]

    def __len__(self):
        return self.values.shape[1]


def _extend(grid, a_cells, h):
    A = assemble_local(grid, a_cells, h, mass=False).tocsr()
    B, I = grid.boundary, grid.interior
    W = np.zeros((grid.n_nodes, len(B)))
    W[B, np.arange(len(B))] = 1.0
    if len(I):
        A_II = A[I][:, I].tocsc()
        A_IB = A[I][:, B].toarray()
        W[I] = -spla.splu(A_II).solve(A_IB)
        res = np.abs(A[I] @ W).max()
        scale = spla.norm(A, np.inf) * max(np.abs(W).max(), 1.0)
        rel = res / scale
    else:
        rel = 0.0
    return W, rel


def harmonic_extensions(coarse, k, field, oversample=None):
    """a-harmonic extensions of the boundary hats of block ``k``.

    With an :class:`OversampleMap` the extensions are computed on the enlarged
    patch K+ from hats on dK+ and then restricted to K.
    """
    h = coarse.fine.h
    if oversample is None or oversample.is_identity(k):
        b = coarse.blocks[k]
        W, rel = _extend(coarse.local, field.values[b.cells], h)
        canonical = True
    else:
        W, rel = _extend(oversample.grid(k), field.values[oversample.patch_cells(k)], h)
        W = W[oversample.restrict[k]]
        canonical = False
    if rel > 1e-10:
        raise InternalError(f"block {k}: harmonic extension residual {rel:.3e}")
    return BoundarySnapshotSet(k, W, coarse.local.boundary, canonical, rel)


def boundary_spectral(snapshots, stiffness, H, h):
    """Solve ``A c = (mu/H) B c`` on the snapshot span.

    Returns ``(mu, coeffs, residual)`` with ``mu`` ascending and ``coeffs`` in
    snapshot coordinates, normalised to unit L2(dK) norm.  Dependent
    snapshots (oversampling) are removed by filtering the boundary Gram
    matrix at relative level ``RANK_TOL``.
    """
    if len(snapshots) == 0:
        raise InternalError(f"block {snapshots.block}: empty snapshot set")
    S, T = snapshots.values, snapshots.traces
    A = S.T @ (stiffness @ S)
    A = 0.5 * (A + A.T)
    Mb = boundary_mass(T.shape[0], h)
    if snapshots.canonical:
        Bs = Mb
        try:
            nu, C = sla.eigh(A, Bs)
        except np.linalg.LinAlgError as exc:
            raise InternalError(f"block {snapshots.block}: boundary mass not SPD") from exc
    else:
        Bs = T.T @ Mb @ T
        Bs = 0.5 * (Bs + Bs.T)
        sig, V = sla.eigh(Bs)
        keep = sig > RANK_TOL * sig[-1]
        Q = V[:, keep] / np.sqrt(sig[keep])
        Ar = Q.T @ A @ Q
        nu, Y = sla.eigh(0.5 * (Ar + Ar.T))
        C = Q @ Y
    C, _ = _fix_signs(C, T @ C)
    R = A @ C - (Bs @ C) * nu
    residual = float(np.max(np.linalg.norm(R, axis=0)
                            / (np.linalg.norm(A, 2) * np.linalg.norm(C, axis=0))))
    mu = H * nu
    if len(mu) > 1 and abs(mu[0]) <= ZERO_MU_TOL * mu[1]:
        mu[0] = 0.0
    return mu, C, residual


CLUSTER_TOL = 1e-9


def _same_cluster(a, b):
    return abs(b - a) <= CLUSTER_TOL * max(abs(a), abs(b))


def _canonical_clusters(nu, Z, M):
    """Rotate each group of numerically equal eigenvalues to a fixed basis.

    Inside a cluster the modes are chosen to diagonalise a generic nodal
    weight in the M inner product; this does not depend on what the
    eigensolver happened to return.
    """
    w = 1.0 + 0.5 * np.sin(1.3 * np.arange(Z.shape[0]) + 0.7)
    Z = Z.copy()
    i = 0
    while i < len(nu):
        j = i + 1
        while j < len(nu) and _same_cluster(nu[i], nu[j]):
            j += 1
        if j - i > 1:
            Zc = Z[:, i:j]
            G = Zc.T @ (M @ (w[:, None] * Zc))
            _, R = sla.eigh(0.5 * (G + G.T))
            Z[:, i:j] = Zc @ R
        i = j
    return Z


def interior_spectral(stiffness, mass, interior, H, count):
    """Lowest ``count`` eigenpairs of ``A z = (lam/H^2) M z`` on V_h^0(K).

    Returns ``(lam, Z, residual)``; ``Z`` holds interior nodal values,
    L2(K)-orthonormal.
    """
    n0 = len(interior)
    if count > n0:
        raise ConfigurationError(f"requested {count} interior modes, only {n0} available")
    if count <= 0:
        return np.zeros(0), np.zeros((n0, 0)), 0.0
    A = stiffness[interior][:, interior].toarray()
    M = mass[interior][:, interior].toarray()
    # solve past the cut until the last cluster is complete, so a degenerate
    # pair split by the cut gets the same canonical basis for every count
    top = min(count + 4, n0)
    while True:
        nu, Z = sla.eigh(A, M, subset_by_index=[0, top - 1])
        if top == n0 or not _same_cluster(nu[count - 1], nu[-1]):
            break
        top = min(2 * top, n0)
    Z = _canonical_clusters(nu, Z, M)
    nu, Z = nu[:count], Z[:, :count]
    Z, _ = _fix_signs(Z, Z)
    R = A @ Z - (M @ Z) * nu
    residual = float(np.max(np.linalg.norm(R, axis=0)
                            / (np.linalg.norm(A, 1) * np.linalg.norm(Z, axis=0))))
    return H * H * nu, Z, residual


def select_by_energy(mu, theta):
    """Smallest ``p`` whose reciprocal eigenvalue sum reaches ``theta * E_K``.

    ``E_K`` sums ``1/mu_i`` for ``i >= 2``; the first (zero) mode is always kept.
    """
    if not 0 < theta <= 1:
        raise ConfigurationError(f"energy fraction must lie in (0, 1], got {theta}")
    mu = np.asarray(mu, dtype=float)
    if mu.size <= 1:
        return int(mu.size)
    cum = np.cumsum(1.0 / mu[1:])
    total = cum[-1]
    if total == 0:
        return 1
    return int(np.searchsorted(cum, theta * total, side="left")) + 2


@dataclass(eq=False)
class BlockSpectra:
    """All spectral data of one block, independent of the selection rule."""

    block: int
    mu: np.ndarray
    boundary_modes: np.ndarray  # (n_local, len(mu))
    lam: np.ndarray
    interior_modes: np.ndarray  # (n_local, len(lam))
    boundary_residual: float
    interior_residual: float
    harmonic_residual: float
    n_snapshots: int
    seconds: float = 0.0


def compute_block_spectra(coarse, k, field, m_max, oversample=None, mass=None):
    t0 = time.perf_counter()
    local = coarse.local
    A = block_stiffness(coarse, k, field).tocsr()
    if mass is None:
        _, mass = assemble_local(local, np.ones(local.n_cells), coarse.fine.h)
    snaps = harmonic_extensions(coarse, k, field, oversample)
    mu, C, bres = boundary_spectral(snaps, A, coarse.H, coarse.fine.h)
    bmodes = snaps.values @ C
    count = min(m_max + 1, coarse.n_interior)
    lam, Z, ires = interior_spectral(A, mass, local.interior, coarse.H, count)
    zmodes = np.zeros((local.n_nodes, Z.shape[1]))
    zmodes[local.interior] = Z
    return BlockSpectra(k, mu, bmodes, lam, zmodes, bres, ires, snaps.harmonic_residual,
                        len(snaps), time.perf_counter() - t0)


def compute_spectra(coarse, field, m_max, oversample=None, workers=1):
    """Per-block spectra for every block; deterministic for any ``workers``."""
    field.check(coarse.fine)
    if m_max > coarse.n_interior:
        raise ConfigurationError(
            f"requested {m_max} interior modes, blocks have only {coarse.n_interior}")
    _, mass = assemble_local(coarse.local, np.ones(coarse.local.n_cells), coarse.fine.h)

    def one(k):
        try:
            return compute_block_spectra(coarse, k, field, m_max, oversample, mass)
        except Exception as exc:  # annotate and re-raise with the block id
            raise type(exc)(f"block {k}: {exc}") from exc

    ks = range(coarse.n_blocks)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, ks))
    return [one(k) for k in ks]


@dataclass(eq=False)
class BlockBasis:
    block: int
    p: int
    m: int
    mu: np.ndarray
    lam: np.ndarray
    modes: np.ndarray  # (n_local, p + m): boundary modes first

    @property
    def size(self):
        return self.p + self.m

    @property
    def energy(self):
        mu = self.mu[1:]
        return float(np.sum(1.0 / mu)) if mu.size else 0.0

    @property
    def captured(self):
        e = self.energy
        return float(np.sum(1.0 / self.mu[1:self.p])) / e if e > 0 else 1.0

    @property
    def boundary_modes(self):
        return self.modes[:, :self.p]

    @property
    def interior_modes(self):
        return self.modes[:, self.p:]


@dataclass(eq=False)
class LocalBasisBank:
    blocks: list
    theta: float
    m: int
    ext_cells: int = 0
    r: int = 0
    h: float = 0.0
    t_off: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def sizes(self):
        return np.array([b.size for b in self.blocks], dtype=np.int64)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def n_dofs(self):
        return int(self.sizes.sum())

    @property
    def p_range(self):
        ps = [b.p for b in self.blocks]
        return min(ps), max(ps)

    @property
    def mu_min(self):
        """Smallest first-excluded boundary eigenvalue over blocks."""
        vals = [b.mu[b.p] for b in self.blocks if b.p < len(b.mu)]
        return float(min(vals)) if vals else float("nan")

    @property
    def lam_min(self):
        """Smallest first-excluded interior eigenvalue over blocks."""
        vals = [b.lam[b.m] for b in self.blocks if b.m < len(b.lam)]
        return float(min(vals)) if vals else float("nan")


def bank_from_spectra(spectra, theta, m, ext_cells=0, r=0, h=0.0):
    blocks = []
    for s in spectra:
        p = select_by_energy(s.mu, theta)
        if m > s.interior_modes.shape[1]:
            raise ConfigurationError(f"block {s.block}: only {s.interior_modes.shape[1]} "
                                     f"interior modes were computed, {m} requested")
        modes = np.hstack([s.boundary_modes[:, :p], s.interior_modes[:, :m]])
        blocks.append(BlockBasis(s.block, p, m, s.mu.copy(), s.lam.copy(), modes))
    return LocalBasisBank(blocks, float(theta), int(m), int(ext_cells), int(r), float(h))


def build_bank(coarse, field, theta, m, oversample=None, workers=1, dirichlet="weak"):
    """Compute spectra for every block and select modes; records ``t_off``.

    ``dirichlet="strong"`` applies :func:`impose_dirichlet` to the result.
    """
    if dirichlet not in ("weak", "strong"):
        raise ConfigurationError(f"dirichlet must be 'weak' or 'strong', got {dirichlet!r}")
    if not 0 < theta <= 1:
        raise ConfigurationError(f"energy fraction must lie in (0, 1], got {theta}")
    t0 = time.perf_counter()
    spectra = compute_spectra(coarse, field, m, oversample, workers)
    bank = bank_from_spectra(spectra, theta, m,
                             oversample.ext_cells if oversample is not None else 0,
                             coarse.r, coarse.fine.h)
    if dirichlet == "strong":
        bank = impose_dirichlet(bank, coarse, field)
    bank.t_off = time.perf_counter() - t0
    return bank


def impose_dirichlet(bank, coarse, field):
    """Restrict a bank to functions vanishing on the domain boundary.

    Boundary-mode traces on dOmega are zeroed, re-extended a-harmonically
    and re-orthonormalised in the boundary mass; dependent combinations are
    dropped, so ``p`` may shrink on blocks touching dOmega.  Interior modes
    already vanish on dK and are kept.  The default treatment leaves the
    boundary condition to the penalty on boundary edges instead.
    """
    local, h = coarse.local, coarse.fine.h
    on_dom = np.zeros(coarse.fine.n_nodes, dtype=bool)
    on_dom[coarse.fine.boundary_nodes] = True
    L = sla.cholesky(boundary_mass(coarse.n_boundary, h), lower=True)
    B = local.boundary
    blocks = []
    for b in bank.blocks:
        mask = on_dom[coarse.blocks[b.block].nodes][B]
        if not mask.any() or b.p == 0:
            blocks.append(b)
            continue
        W, _ = _extend(local, field.values[coarse.blocks[b.block].cells], h)
        T = b.boundary_modes[B].copy()
        T[mask] = 0.0
        # SVD of the Mb-weighted traces avoids squaring the conditioning
        _, sig, Vt = sla.svd(L.T @ T, full_matrices=False)
        keep = sig**2 > RANK_TOL * max(sig[0] ** 2, 1e-300)
        C = T @ (Vt[keep].T / sig[keep])
        # rotate so the surviving modes stay energy-orthogonal
        A = block_stiffness(coarse, b.block, field)
        WC = W @ C
        _, Y = sla.eigh(WC.T @ (A @ WC))
        C = C @ Y
        modes = np.hstack([W @ C, b.interior_modes])
        blocks.append(BlockBasis(b.block, int(keep.sum()), b.m, b.mu, b.lam, modes))
    meta = dict(bank.meta, dirichlet="strong")
    return LocalBasisBank(blocks, bank.theta, bank.m, bank.ext_cells, bank.r, bank.h,
                          bank.t_off, meta)


@dataclass
class BankCheck:
    """Worst-case orthogonality defects of a bank.

    ``trace_orthonormality`` is ``max|C^T Mb C - I|`` over boundary modes,
    ``mass_orthonormality`` the same for interior modes in L2(K), and
    ``a_orthogonality`` the largest normalised off-diagonal energy product
    over all mode pairs of a block.
    """
    trace_orthonormality: float
    mass_orthonormality: float
    a_orthogonality: float
    worst_block: int = -1

    def passed(self, tol=1e-9):
        return max(self.trace_orthonormality, self.mass_orthonormality,
                   self.a_orthogonality) <= tol


def check_bank(bank, coarse, field):
    local, h = coarse.local, coarse.fine.h
    B = local.boundary
    Mb = boundary_mass(coarse.n_boundary, h)
    _, mass = assemble_local(local, np.ones(local.n_cells), h)
    tr = ms = ao = 0.0
    worst, worst_val = -1, -1.0
    for b in bank.blocks:
        A = block_stiffness(coarse, b.block, field)
        W, Z = b.boundary_modes, b.interior_modes
        t = np.abs(W[B].T @ Mb @ W[B] - np.eye(b.p)).max() if b.p else 0.0
        z = np.abs(Z.T @ (mass @ Z) - np.eye(b.m)).max() if b.m else 0.0
        G = b.modes.T @ (A @ b.modes)
        e = np.abs(np.diag(G))
        d = np.sqrt(e)
        # zero-energy modes (constants) have no energy direction to compare
        d[e <= 1e-12 * max(e.max(initial=0.0), 1e-300)] = np.inf
        Gn = np.abs(G) / np.outer(d, d)
        np.fill_diagonal(Gn, 0.0)
        o = Gn.max() if Gn.size else 0.0
        tr, ms, ao = max(tr, t), max(ms, z), max(ao, o)
        if max(t, z, o) > worst_val:
            worst, worst_val = b.block, max(t, z, o)
    return BankCheck(float(tr), float(ms), float(ao), worst)


_FORMAT = "gmsfem-bank-1"


def _npy_bytes(a):
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(a), allow_pickle=False)
    return buf.getvalue()


def save_bank(bank, path):
    """Write a bank as a zip container: ``manifest.txt`` plus one ``.npy``
    section per block array."""
    lines = [f"format = {_FORMAT}", f"n_blocks = {len(bank.blocks)}",
             f"theta = {bank.theta!r}", f"m = {bank.m}", f"ext_cells = {bank.ext_cells}",
             f"r = {bank.r}", f"h = {bank.h!r}", f"t_off = {bank.t_off!r}"]
    lines += [f"meta.{k} = {v}" for k, v in sorted(bank.meta.items())]
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as zf:
        for b in bank.blocks:
            lines.append(f"block {b.block} p={b.p} m={b.m} n_mu={len(b.mu)} n_lam={len(b.lam)}")
            stem = f"blocks/{b.block:05d}"
            zf.writestr(f"{stem}/mu.npy", _npy_bytes(b.mu))
            zf.writestr(f"{stem}/lam.npy", _npy_bytes(b.lam))
            zf.writestr(f"{stem}/modes.npy", _npy_bytes(b.modes))
        zf.writestr("manifest.txt", "\n".join(lines) + "\n")


def load_bank(path):
    with zipfile.ZipFile(path) as zf:
        manifest = zf.read("manifest.txt").decode().splitlines()
        head, recs, meta = {}, [], {}
        for line in manifest:
            if line.startswith("block "):
                parts = line.split()
                kv = dict(x.split("=") for x in parts[2:])
                recs.append((int(parts[1]), int(kv["p"]), int(kv["m"])))
            elif line.startswith("meta."):
                k, v = line[5:].split(" = ", 1)
                meta[k] = v
            elif " = " in line:
                k, v = line.split(" = ", 1)
                head[k] = v
        if head.get("format") != _FORMAT:
            raise DataError(f"{path}: not a basis bank file")

        def arr(name):
            return np.load(io.BytesIO(zf.read(name)), allow_pickle=False)

        blocks = []
        for k, p, m in recs:
            stem = f"blocks/{k:05d}"
            blocks.append(BlockBasis(k, p, m, arr(f"{stem}/mu.npy"), arr(f"{stem}/lam.npy"),
                                     arr(f"{stem}/modes.npy")))
    return LocalBasisBank(blocks, float(head["theta"]), int(head["m"]),
                          int(head["ext_cells"]), int(head["r"]), float(head["h"]),
                          float(head["t_off"]), meta)
