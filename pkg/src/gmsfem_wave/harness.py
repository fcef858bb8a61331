"""Experiment orchestration: configs, the fine/offline/online/compare
pipeline, verifier aggregation and parameter sweeps."""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, GmsfemError, InstabilityError
from .fem_core import dump_matrix
from .ipdg import DGParams, assemble_adg, estimate_trace_constant, verify_coercivity_continuity
from .media import media_from_spec, save_raster
from .mesh import build_hierarchy, build_oversample_map
from .metrics import ErrorReport, cell_values, compute_errors, expand, unit_block_operators
from .msbasis import bank_from_spectra, check_bank, compute_spectra, impose_dirichlet, load_bank
from .propagate import (CoarseSystem, FineSystem, SourceSpec, TimeGrid, init_states,
                        leapfrog_energy, leapfrog_run, max_eigenvalue, stability_guard)

__all__ = [
    "RunConfig",
    "StageError",
    "Experiment",
    "Check",
    "VerifyReport",
    "run_compare",
    "run_verifiers",
    "run_sweep",
    "format_table",
]

log = logging.getLogger(__name__)


class StageError(GmsfemError):
    """Failure inside one pipeline stage; ``stage`` names it."""

    def __init__(self, stage, exc):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ConfigurationError(f"not a boolean: {v!r}")


def _floats(v):
    if isinstance(v, (tuple, list)):
        return tuple(float(x) for x in v)
    s = str(v).replace(",", " ").split()
    return tuple(float(x) for x in s)


@dataclass(frozen=True)
class RunConfig:
    """Flat experiment configuration.

    ``dt`` is either a number or ``h/<k>``; ``dirichlet`` selects how the
    coarse method treats u = 0 on the outer boundary ("weak": penalised
    boundary edges, "strong": boundary traces removed from the bank).
    """

    nx: int = 256
    blocks: int = 8
    extent: float = 1.0
    media: str = "synth:periodic:1:100:8"
    theta: float = 0.75
    m: int = 1
    gamma: float = 2.0
    penalty_scale: str = "h"
    oversample: int = 0
    dirichlet: str = "weak"
    source: str = "ricker"
    f0: float = 20.0
    T: float = 0.2
    dt: str = "h/80"
    dt_auto: bool = False
    force: bool = False
    lump_fine_mass: bool = False
    probes: tuple = ()
    out: str = "runs/default"
    seed: int = 0
    workers: int = 1
    dump_every: int = 0
    dump_matrix: str = ""

    _converters = {"probes": _floats}

    @classmethod
    def keys(cls):
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_mapping(cls, mapping, base=None):
        base = base or cls()
        known = {f.name: f for f in dataclasses.fields(cls)}
        kw = {}
        for k, v in mapping.items():
            k = k.strip().replace("-", "_")
            if k not in known:
                raise ConfigurationError(f"unknown config key {k!r}")
            if v is None:
                continue
            default = getattr(cls(), k)
            try:
                if k in cls._converters:
                    v = cls._converters[k](v)
                elif isinstance(default, bool):
                    v = _bool(v)
                elif isinstance(default, int):
                    v = int(v)
                elif isinstance(default, float):
                    v = float(v)
                else:
                    v = str(v).strip()
            except ValueError as exc:
                raise ConfigurationError(f"bad value for {k}: {v!r}") from exc
            kw[k] = v
        return dataclasses.replace(base, **kw).validated()

    @classmethod
    def from_file(cls, path, overrides=None):
        """Read ``key = value`` lines (``#`` starts a comment)."""
        items = {}
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{n}: expected 'key = value'")
            k, v = line.split("=", 1)
            items[k.strip()] = v.strip()
        cfg = cls.from_mapping(items)
        return cfg.with_overrides(overrides or {})

    def with_overrides(self, overrides):
        return type(self).from_mapping({k: v for k, v in overrides.items() if v is not None},
                                       base=self)

    def validated(self):
        if self.nx < 2 or self.blocks < 1:
            raise ConfigurationError("nx must be >= 2 and blocks >= 1")
        if self.nx % self.blocks:
            raise ConfigurationError(f"nx={self.nx} is not divisible by blocks={self.blocks}")
        if not 0 < self.theta <= 1:
            raise ConfigurationError(f"theta must lie in (0, 1], got {self.theta}")
        if self.m < 0 or self.oversample < 0 or self.workers < 1 or self.dump_every < 0:
            raise ConfigurationError("m, oversample and dump_every must be >= 0, workers >= 1")
        if self.T <= 0 or self.extent <= 0:
            raise ConfigurationError("T and extent must be positive")
        if self.dirichlet not in ("weak", "strong"):
            raise ConfigurationError(f"dirichlet must be 'weak' or 'strong', got {self.dirichlet!r}")
        if self.penalty_scale not in ("h", "H"):
            raise ConfigurationError("penalty_scale must be 'h' or 'H'")
        if not (self.media.startswith(("synth:", "const:")) or Path(self.media).exists()):
            raise ConfigurationError(f"media file {self.media!r} does not exist")
        self.step_for(self.extent / self.nx)
        return self

    def step_for(self, h):
        s = str(self.dt).replace(" ", "")
        try:
            if s.startswith("h/"):
                val = h / float(s[2:])
            elif s.startswith("h*"):
                val = h * float(s[2:])
            else:
                val = float(s)
        except ValueError as exc:
            raise ConfigurationError(f"cannot read time step {self.dt!r}") from exc
        if not val > 0:
            raise ConfigurationError(f"time step must be positive, got {self.dt!r}")
        return val

    def to_text(self):
        out = []
        for k in self.keys():
            v = getattr(self, k)
            if isinstance(v, tuple):
                v = " ".join(repr(x) for x in v)
            out.append(f"{k} = {v}")
        return "\n".join(out) + "\n"

    @property
    def dg_params(self):
        return DGParams(self.gamma, None, self.penalty_scale)


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except (GmsfemError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
                raise StageError(name, exc) from exc
        inner.__name__, inner.__doc__ = fn.__name__, fn.__doc__
        return inner
    return wrap


def _fine_cells(fine, u_nodal):
    return u_nodal[fine.grid.cell_nodes].mean(axis=1).reshape(fine.ny, fine.nx)


@dataclass
class OnlineRun:
    system: CoarseSystem
    result: object
    guard: object


@dataclass
class Offline:
    bank: object
    dg: object
    t_off: float


class Experiment:
    """Caches the expensive, configuration-shared pieces (meshes, medium,
    fine reference, local spectra) so sweeps pay for them once."""

    def __init__(self, cfg):
        self.cfg = cfg
        self._spectra = {}
        self._fine_bound = None
        self.fine_seconds = float("nan")

    @cached_property
    def meshes(self):
        c = self.cfg
        return build_hierarchy(c.nx, c.nx, c.blocks, c.blocks, c.extent)

    @property
    def fine(self):
        return self.meshes[0]

    @property
    def coarse(self):
        return self.meshes[1]

    @cached_property
    def field(self):
        return media_from_spec(self.cfg.media, self.fine)

    @cached_property
    def source(self):
        return SourceSpec(self.cfg.source, f0=self.cfg.f0)

    @cached_property
    def fine_system(self):
        return FineSystem(self.fine, self.field, lump=self.cfg.lump_fine_mass)

    def fine_bound(self):
        if self._fine_bound is None:
            lam = max_eigenvalue(self.fine_system, tol=1e-6)
            self._fine_bound = 2.0 / math.sqrt(lam) if lam else None
        return self._fine_bound

    @cached_property
    def grid(self):
        """Common time grid; with ``dt_auto`` 0.9 times the smaller spectral bound."""
        c = self.cfg
        if c.dt_auto:
            lam = max_eigenvalue(self.coarse_probe_system(), tol=1e-6)
            bounds = [2.0 / math.sqrt(lam)]
            fb = self.fine_bound()
            if fb is not None:
                bounds.append(fb)
            return TimeGrid.from_dt(c.T, 0.9 * min(bounds))
        return TimeGrid.from_dt(c.T, c.step_for(self.fine.h))

    def coarse_probe_system(self):
        off = self.offline()
        return CoarseSystem(off.dg, off.bank, self.coarse)

    def _probe_steps(self, grid):
        steps = [int(round(t / grid.dt)) for t in self.cfg.probes]
        if self.cfg.dump_every:
            steps += list(range(self.cfg.dump_every, grid.N + 1, self.cfg.dump_every))
        return sorted(set(s for s in steps if 1 <= s <= grid.N))

    def _guard(self, system, stage):
        rep = stability_guard(system, self.grid, safety=0.95)
        if not rep.accepted and not self.cfg.force:
            raise StageError(stage, ConfigurationError(
                f"dt={rep.dt:.4g} exceeds 0.95 x spectral bound {rep.dt_spectral:.4g}; "
                "use dt_auto or force"))
        return rep

    @cached_property
    def fine_run(self):
        return self._run_fine()

    @_stage("fine")
    def _run_fine(self):
        fs = self.fine_system
        if self.cfg.dt_auto:
            self.grid  # noqa: B018 - resolve the grid before timing
        elif not self.cfg.force:
            fb = self.fine_bound()
            if fb is not None and self.grid.dt > 0.95 * fb:
                raise ConfigurationError(f"dt={self.grid.dt:.4g} exceeds 0.95 x fine bound {fb:.4g}")
        t0 = time.perf_counter()
        u0, u1 = init_states(fs, self.source, self.grid)
        res = leapfrog_run(fs, u0, u1, self.source, self.grid, probes=self._probe_steps(self.grid))
        self.fine_seconds = time.perf_counter() - t0
        return res

    def fine_nodal(self, state=None):
        return self.fine_system.to_nodal(self.fine_run.u if state is None else state)

    def spectra(self, m_max, ext=None):
        ext = self.cfg.oversample if ext is None else ext
        key = ext
        have = self._spectra.get(key)
        need = min(m_max, self.coarse.n_interior)
        if have is None or have[0] < need:
            osm = build_oversample_map(self.coarse, ext) if ext else None
            t0 = time.perf_counter()
            sp_ = compute_spectra(self.coarse, self.field, need, osm, self.cfg.workers)
            self._spectra[key] = (need, sp_, time.perf_counter() - t0)
        return self._spectra[key]

    @_stage("offline")
    def offline(self, theta=None, m=None, ext=None, dirichlet=None, gamma=None):
        """Bank plus DG system; ``t_off`` covers spectra, selection and assembly."""
        c = self.cfg
        theta = c.theta if theta is None else theta
        m = c.m if m is None else m
        ext = c.oversample if ext is None else ext
        dirichlet = c.dirichlet if dirichlet is None else dirichlet
        params = DGParams(c.gamma if gamma is None else gamma, None, c.penalty_scale)
        _, spectra, t_spec = self.spectra(m, ext)
        t0 = time.perf_counter()
        bank = bank_from_spectra(spectra, theta, m, ext, self.coarse.r, self.fine.h)
        if dirichlet == "strong":
            bank = impose_dirichlet(bank, self.coarse, self.field)
        dg = assemble_adg(bank, self.coarse, self.field, params)
        t_off = t_spec + time.perf_counter() - t0
        bank.t_off = t_off
        return Offline(bank, dg, t_off)

    @_stage("offline")
    def offline_from_bank(self, path):
        t0 = time.perf_counter()
        bank = load_bank(path)
        if bank.r != self.coarse.r or len(bank.blocks) != self.coarse.n_blocks:
            raise ConfigurationError(f"bank {path} does not match the configured meshes")
        dg = assemble_adg(bank, self.coarse, self.field, self.cfg.dg_params)
        return Offline(bank, dg, bank.t_off + time.perf_counter() - t0)

    @_stage("online")
    def online(self, off):
        cs = CoarseSystem(off.dg, off.bank, self.coarse)
        guard = self._guard(cs, "online")
        u0, u1 = init_states(cs, self.source, self.grid)
        res = leapfrog_run(cs, u0, u1, self.source, self.grid, probes=self._probe_steps(self.grid))
        return OnlineRun(cs, res, guard)

    @_stage("metrics")
    def compare(self, off, on):
        uH = expand(on.result.u, off.bank)
        rep = compute_errors(uH, self.fine_nodal(), self.coarse, operators=self._unit_ops)
        rep.t_off, rep.t_on = off.t_off, on.result.t_on
        rep.meta.update(self.run_meta(off, on))
        return rep

    @cached_property
    def _unit_ops(self):
        return unit_block_operators(self.coarse)

    def run_meta(self, off, on):
        c, bank = self.cfg, off.bank
        p_lo, p_hi = bank.p_range
        meta = {
            "theta": bank.theta, "m": bank.m, "gamma": off.dg.params.gamma,
            "nx": c.nx, "blocks": c.blocks, "H_over_h": self.coarse.r,
            "oversample": bank.ext_cells, "dirichlet": bank.meta.get("dirichlet", "weak"),
            "p_min": p_lo, "p_max": p_hi, "n_dofs": bank.n_dofs,
            "mu_min": bank.mu_min, "lam_min": bank.lam_min,
            "dt": self.grid.dt, "steps": self.grid.N,
            "seconds_per_step": on.result.seconds_per_step, "backend": on.result.backend,
            "dt_spectral": on.guard.dt_spectral,
        }
        meta.update({f"config.{k}": v for k, v in _config_items(c)})
        return meta

    def dump_fields(self, off, on, out):
        out = Path(out)
        fine = self.fine
        dims = (fine.nx, fine.ny, (fine.lx, fine.ly))
        save_raster(out / "u_fine.bin", _fine_cells(fine, self.fine_nodal()), *dims)
        save_raster(out / "u_gmsfem.bin", cell_values(self.coarse, expand(on.result.u, off.bank)), *dims)
        for n, state in sorted(on.result.probes.items()):
            save_raster(out / f"u_gmsfem_{n:06d}.bin",
                        cell_values(self.coarse, expand(state, off.bank)), *dims)
        for n, state in sorted(self.fine_run.probes.items()):
            save_raster(out / f"u_fine_{n:06d}.bin", _fine_cells(fine, self.fine_nodal(state)), *dims)


def _config_items(cfg):
    for k in cfg.keys():
        v = getattr(cfg, k)
        yield k, (" ".join(map(repr, v)) if isinstance(v, tuple) else v)


def run_compare(cfg, out=None, bank_path=None, experiment=None):
    """Fine reference, offline stage, online stage and metrics for one
    configuration; writes ``report.txt``, appends ``results.csv`` and dumps
    the final fields as rasters."""
    exp = experiment or Experiment(cfg)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    exp.fine_run  # noqa: B018
    off = exp.offline_from_bank(bank_path) if bank_path else exp.offline()
    if cfg.dump_matrix:
        dump_matrix(cfg.dump_matrix, off.dg.stiffness, comment="IPDG stiffness")
    on = exp.online(off)
    rep = exp.compare(off, on)
    rep.meta["fine_seconds"] = exp.fine_seconds
    rep.write(out / "report.txt")
    rep.append_csv(out / "results.csv")
    exp.dump_fields(off, on, out)
    return rep


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: str
    detail: str = ""

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<28} {self.value:<12.4g} {self.limit}  {self.detail}"


@dataclass
class VerifyReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def __getitem__(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_text(self):
        return "\n".join(c.line() for c in self.checks) + "\n"


def cfl_probe(system, factor, steps, seed=0):
    """Source-free run from a random state at ``factor`` times the spectral
    bound.  Returns (growth of the state norm, relative energy drift)."""
    lam = max_eigenvalue(system)
    dt = factor * 2.0 / math.sqrt(lam)
    grid = TimeGrid(dt * steps, steps)
    rng = np.random.default_rng(seed)
    u0 = rng.standard_normal(system.n_dofs)
    u1 = u0.copy()
    none = SourceSpec("none")
    e0 = leapfrog_energy(system, u0, u1, grid.dt)
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            res = leapfrog_run(system, u0, u1, none, grid)
        except InstabilityError:
            return math.inf, math.inf
        growth = float(np.linalg.norm(res.u) / np.linalg.norm(u0))
        e1 = leapfrog_energy(system, res.u_prev, res.u, grid.dt)
    return growth, abs(e1 - e0) / abs(e0)


def run_verifiers(cfg, experiment=None, bank=None, trace_blocks=None):
    """Run the property suites on the configured offline stage.

    ``bank`` replaces the freshly built bank (for fault injection);
    ``trace_blocks`` limits the trace-constant estimate to some blocks.
    """
    exp = experiment or Experiment(cfg)
    rep = VerifyReport()
    add = rep.checks.append
    coarse, field_ = exp.coarse, exp.field
    _, spectra, _ = exp.spectra(cfg.m)

    bres = max(s.boundary_residual for s in spectra)
    ires = max(s.interior_residual for s in spectra)
    hres = max(s.harmonic_residual for s in spectra)
    add(Check("eigen_residual", max(bres, ires) <= 1e-9, max(bres, ires), "<= 1e-9"))
    add(Check("harmonic_residual", hres <= 1e-10, hres, "<= 1e-10"))
    ratio = max(abs(s.mu[0]) / s.mu[1] for s in spectra)
    add(Check("mu1_zero", ratio <= 1e-8, ratio, "<= 1e-8", "mu_1 / mu_2"))
    flat = 0.0
    B = coarse.local.boundary
    for s in spectra:
        t = s.boundary_modes[B, 0]
        flat = max(flat, float(np.std(t) / abs(np.mean(t))))
    add(Check("mu1_constant_mode", flat <= 1e-6, flat, "<= 1e-6", "std/mean of first trace"))

    off = exp.offline() if bank is None else None
    bank = off.bank if off is not None else bank
    bc = check_bank(bank, coarse, field_)
    add(Check("orthonormality", max(bc.trace_orthonormality, bc.mass_orthonormality) <= 1e-9,
              max(bc.trace_orthonormality, bc.mass_orthonormality), "<= 1e-9",
              f"worst block {bc.worst_block}"))
    add(Check("a_orthogonality", bc.a_orthogonality <= 1e-9, bc.a_orthogonality, "<= 1e-9"))
    if off is None:
        try:
            off = Offline(bank, assemble_adg(bank, coarse, field_, cfg.dg_params), 0.0)
        except GmsfemError as exc:
            # a broken bank can make the mass singular; report and stop
            add(Check("assembly", False, math.nan, "SPD mass", str(exc)))
            return rep

    S = off.dg.stiffness
    asym = float(abs(S - S.T).max() / abs(S).max())
    add(Check("ipdg_symmetry", asym <= 1e-12, asym, "<= 1e-12"))
    Mfull = off.dg.mass.tosparse().tocoo()
    owner = np.searchsorted(off.dg.offsets, np.arange(off.dg.n_dofs), side="right") - 1
    cross = float(np.abs(Mfull.data[owner[Mfull.row] != owner[Mfull.col]]).max(initial=0.0))
    add(Check("mass_block_diagonal", cross == 0.0, cross, "== 0"))

    Lam = estimate_trace_constant(coarse, field_, blocks=trace_blocks)
    thr = Lam * field_.a1 / field_.a0
    cc = verify_coercivity_continuity(off.dg, samples=100, seed=cfg.seed, threshold=thr)
    note = f"gamma={cc.gamma:g}, provable threshold {thr:.3g}"
    add(Check("coercivity", cc.min_coercivity >= 0.5, cc.min_coercivity, ">= 0.5", note))
    add(Check("continuity", cc.max_continuity <= 2.0, cc.max_continuity, "<= 2", note))

    cs = CoarseSystem(off.dg, off.bank, coarse)
    g_ok, drift = cfl_probe(cs, 0.9, 1000, cfg.seed)
    add(Check("cfl_stable_drift", drift <= 1e-8 and g_ok < 1e3, drift, "<= 1e-8",
              f"norm ratio {g_ok:.3g}"))
    g_bad, _ = cfl_probe(cs, 1.2, 500, cfg.seed)
    add(Check("cfl_unstable_growth", g_bad > 1e3, g_bad, "> 1e3"))
    return rep


M_TABLE = ("m", "e2", "e2_bar", "eH1", "eJump", "lam_min")
THETA_TABLE = ("theta", "basis", "e2", "e2_bar", "eH1", "eJump", "mu_min")
TIME_TABLE = ("key", "t_off", "t_on")


def _cell(row, col):
    if col == "basis":
        return f"{row.meta['p_min']}-{row.meta['p_max']}"
    if col == "theta":
        return f"{100 * row.meta['theta']:.0f}%"
    if col == "m":
        return str(row.meta["m"])
    v = row.meta.get(col, getattr(row, col, None))
    if col == "eJump" or col == "lam_min":
        return f"{v:.4e}"
    return f"{v:.4f}"


def format_table(rows, cols, extra=None):
    """Plain-text table with one line per run; ``extra`` maps a header to
    a per-row formatter."""
    extra = extra or {}
    head = list(cols) + list(extra)
    body = [[_cell(r, c) for c in cols] + [f(r) for f in extra.values()] for r in rows]
    w = [max(len(h), *(len(b[i]) for b in body)) for i, h in enumerate(head)]
    fmt = " | ".join("{:>%d}" % x for x in w)
    lines = [fmt.format(*head), "-+-".join("-" * x for x in w)]
    lines += [fmt.format(*b) for b in body]
    return "\n".join(lines) + "\n"


def run_sweep(cfg, kind, values, out=None, experiment=None):
    """Sweep ``m`` (interior modes), ``theta`` (energy) or ``oversample``
    (interior-mode sweep with an oversampled bank next to the baseline).

    The fine reference and local spectra are computed once.  Returns
    ``(reports, table_text)``.
    """
    exp = experiment or Experiment(cfg)
    out = Path(out or cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    exp.fine_run  # noqa: B018
    rows, base = [], []
    if kind == "m":
        ms = [_mode_count(v) for v in values]
        exp.spectra(max(ms))
        for m in ms:
            rows.append(_one(exp, out, m=m))
        table = format_table(rows, M_TABLE)
        times = format_table(rows, ("m",), {"t_off": lambda r: f"{r.t_off:.2f}",
                                            "t_on": lambda r: f"{r.t_on:.2f}"})
    elif kind == "theta":
        for th in values:
            rows.append(_one(exp, out, theta=float(th)))
        table = format_table(rows, THETA_TABLE)
        times = format_table(rows, ("theta",), {"t_off": lambda r: f"{r.t_off:.2f}",
                                                "t_on": lambda r: f"{r.t_on:.2f}"})
    elif kind == "oversample":
        ext = cfg.oversample or 2
        ms = [_mode_count(v) for v in values]
        exp.spectra(max(ms), 0)
        exp.spectra(max(ms), ext)
        for m in ms:
            base.append(_one(exp, out, m=m, ext=0))
            rows.append(_one(exp, out, m=m, ext=ext))
        e2b = {r.meta["m"]: r.e2 for r in base}
        table = format_table(rows, M_TABLE, {"e2 (no oversampling)":
                                             lambda r: f"{e2b[r.meta['m']]:.4f}"})
        times = format_table(rows, ("m",), {"t_off": lambda r: f"{r.t_off:.2f}",
                                            "t_on": lambda r: f"{r.t_on:.2f}"})
    else:
        raise ConfigurationError(f"unknown sweep {kind!r}; use m, theta or oversample")
    text = table + "\n" + times
    (out / f"sweep_{kind}.txt").write_text(text)
    return rows + base, text


def _mode_count(v):
    # the CLI hands sweep values over as floats
    if float(v) != int(v) or int(v) < 0:
        raise ConfigurationError(f"interior mode count must be a nonnegative integer, got {v}")
    return int(v)


def _one(exp, out, **kw):
    off = exp.offline(**kw)
    on = exp.online(off)
    rep = exp.compare(off, on)
    rep.append_csv(Path(out) / "results.csv")
    return rep

