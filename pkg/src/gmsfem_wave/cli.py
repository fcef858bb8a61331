"""Command line entry point ``gmsfem-wave``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from .errors import GmsfemError
from .fem_core import dump_matrix
from .harness import Experiment, RunConfig, run_compare, run_sweep, run_verifiers
from .media import save_raster
from .metrics import cell_values, expand
from .msbasis import save_bank

# CLI flag -> RunConfig key
_FLAGS = {
    "nx": "nx", "blocks": "blocks", "extent": "extent", "media": "media",
    "energy": "theta", "interior": "m", "gamma": "gamma", "penalty_scale": "penalty_scale",
    "oversample": "oversample", "dirichlet": "dirichlet", "source": "source", "f0": "f0",
    "T": "T", "dt": "dt", "dt_auto": "dt_auto", "force": "force",
    "lump_fine_mass": "lump_fine_mass", "probes": "probes", "out": "out", "seed": "seed",
    "workers": "workers", "dump_every": "dump_every", "dump_matrix": "dump_matrix",
}


def _common(p):
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="flat 'key = value' config file")
    g.add_argument("--nx", type=int, help="fine cells per side")
    g.add_argument("--blocks", type=int, help="coarse blocks per side")
    g.add_argument("--extent", type=float)
    g.add_argument("--media", help="raster path, synth:periodic:<bg>:<contrast>:<period> or const:<a>")
    g.add_argument("--energy", type=float, help="energy fraction theta for boundary modes")
    g.add_argument("--interior", type=int, help="interior modes m per block")
    g.add_argument("--oversample", type=int, help="oversampling layers (fine cells)")
    g.add_argument("--gamma", type=float)
    g.add_argument("--penalty-scale", choices=("h", "H"))
    g.add_argument("--dirichlet", choices=("weak", "strong"))
    g.add_argument("--source", choices=("ricker", "manufactured", "none"))
    g.add_argument("--f0", type=float)
    g.add_argument("--T", type=float, help="final time")
    g.add_argument("--dt", help="time step, a number or h/<k>")
    g.add_argument("--dt-auto", action="store_const", const=True,
                   help="use 0.9 x the spectral stability bound")
    g.add_argument("--force", action="store_const", const=True,
                   help="run even when dt fails the stability guard")
    g.add_argument("--lump-fine-mass", action="store_const", const=True)
    g.add_argument("--probes", help="probe times, comma separated")
    g.add_argument("--dump-every", type=int, help="dump fields every k steps")
    g.add_argument("--dump-matrix", help="write the coarse stiffness in MatrixMarket format")
    g.add_argument("--out", help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--workers", type=int)


def _config(args):
    over = {key: getattr(args, flag, None) for flag, key in _FLAGS.items()}
    if args.config:
        return RunConfig.from_file(args.config, over)
    return RunConfig().with_overrides(over)


def _outdir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.to_text())
    return out


def cmd_run_fine(args):
    cfg = _config(args)
    out = _outdir(cfg)
    exp = Experiment(cfg)
    res = exp.fine_run
    fine = exp.fine
    u = exp.fine_nodal()
    save_raster(out / "u_fine.bin", u[fine.grid.cell_nodes].mean(axis=1), fine.nx, fine.ny,
                (fine.lx, fine.ly))
    for n, s in sorted(res.probes.items()):
        v = exp.fine_nodal(s)
        save_raster(out / f"u_fine_{n:06d}.bin", v[fine.grid.cell_nodes].mean(axis=1),
                    fine.nx, fine.ny, (fine.lx, fine.ly))
    if cfg.dump_matrix:
        dump_matrix(cfg.dump_matrix, exp.fine_system.stiffness, comment="fine stiffness")
    lines = [f"steps = {exp.grid.N}", f"dt = {exp.grid.dt!r}", f"seconds = {exp.fine_seconds}",
             f"backend = {res.backend}"]
    (out / "fine_report.txt").write_text("\n".join(lines) + "\n" + cfg.to_text())
    print("\n".join(lines))
    return 0


def cmd_basis_build(args):
    cfg = _config(args)
    exp = Experiment(cfg)
    off = exp.offline()
    path = Path(args.output)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_bank(off.bank, path)
    lo, hi = off.bank.p_range
    print(f"bank {path}: {len(off.bank.blocks)} blocks, p {lo}-{hi}, m {off.bank.m}, "
          f"{off.bank.n_dofs} dofs, t_off {off.t_off:.2f} s")
    return 0


def cmd_run_gmsfem(args):
    cfg = _config(args)
    out = _outdir(cfg)
    exp = Experiment(cfg)
    off = exp.offline_from_bank(args.bank) if args.bank else exp.offline()
    if cfg.dump_matrix:
        dump_matrix(cfg.dump_matrix, off.dg.stiffness, comment="IPDG stiffness")
    on = exp.online(off)
    fine = exp.fine
    dims = (fine.nx, fine.ny, (fine.lx, fine.ly))
    save_raster(out / "u_gmsfem.bin", cell_values(exp.coarse, expand(on.result.u, off.bank)), *dims)
    for n, s in sorted(on.result.probes.items()):
        save_raster(out / f"u_gmsfem_{n:06d}.bin", cell_values(exp.coarse, expand(s, off.bank)),
                    *dims)
    lines = [f"n_dofs = {off.bank.n_dofs}", f"t_off = {off.t_off}", f"t_on = {on.result.t_on}",
             f"steps = {exp.grid.N}", f"dt = {exp.grid.dt!r}",
             f"dt_spectral = {on.guard.dt_spectral}", f"backend = {on.result.backend}"]
    (out / "gmsfem_report.txt").write_text("\n".join(lines) + "\n" + cfg.to_text())
    print("\n".join(lines))
    return 0


def cmd_compare(args):
    cfg = _config(args)
    _outdir(cfg)
    rep = run_compare(cfg, bank_path=args.bank)
    print(rep.to_text(), end="")
    return 0


def cmd_verify(args):
    cfg = _config(args)
    out = _outdir(cfg)
    rep = run_verifiers(cfg)
    text = rep.to_text()
    (out / "verify.txt").write_text(text)
    print(text, end="")
    return 0 if rep.passed else 1


def cmd_sweep(args):
    cfg = _config(args)
    _outdir(cfg)
    vals = [float(v) for v in args.values.replace(",", " ").split()]
    _, text = run_sweep(cfg, args.kind, vals)
    print(text, end="")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="gmsfem-wave",
                                description="Multiscale IPDG simulation of the acoustic wave equation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run-fine", help="fine-grid reference solve")
    _common(s)
    s.set_defaults(func=cmd_run_fine)

    b = sub.add_parser("basis", help="offline basis operations")
    bsub = b.add_subparsers(dest="basis_command", required=True)
    bb = bsub.add_parser("build", help="compute and store a basis bank")
    _common(bb)
    bb.add_argument("-o", "--output", default="bank.zip")
    bb.set_defaults(func=cmd_basis_build)

    g = sub.add_parser("run-gmsfem", help="coarse online solve")
    _common(g)
    g.add_argument("--bank", help="reuse a stored bank and skip the offline stage")
    g.set_defaults(func=cmd_run_gmsfem)

    c = sub.add_parser("compare", help="fine + coarse solves and error report")
    _common(c)
    c.add_argument("--bank")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify", help="run the property verifiers")
    _common(v)
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="parameter sweeps in table layout")
    _common(w)
    w.add_argument("--kind", choices=("m", "theta", "oversample"), required=True)
    w.add_argument("--values", required=True, help="comma separated values")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        code = args.func(args)
    except GmsfemError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    logging.getLogger(__name__).info("done in %.2f s", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
