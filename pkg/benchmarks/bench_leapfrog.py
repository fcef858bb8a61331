"""Compare the compiled and pure-Python coarse leapfrog kernels.

    python3 benchmarks/bench_leapfrog.py [--nx 128] [--blocks 8] [--interior 3] [--steps 2000]

Both backends advance the same coarse IPDG system from the same state; the
script reports seconds per step, the speedup and the largest difference
between the final states.
"""
import argparse
import time

import numpy as np

from gmsfem_wave import DGParams, assemble_adg, build_bank, build_hierarchy, kernels
from gmsfem_wave.media import media_from_spec
from gmsfem_wave.propagate import CoarseSystem, max_eigenvalue


def setup(nx, blocks, m, theta):
    fine, coarse = build_hierarchy(nx, nx, blocks, blocks)
    field = media_from_spec("synth:periodic:1:100:8", fine)
    bank = build_bank(coarse, field, theta, m)
    dg = assemble_adg(bank, coarse, field, DGParams())
    return CoarseSystem(dg, bank, coarse)


def time_backend(mod, ops, u0, load, tf, dt2, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        u_prev, u = u0.copy(), u0.copy()
        t0 = time.perf_counter()
        mod.leapfrog_blocks(ops["blk_ptr"], ops["brow_ptr"], ops["bcol"], ops["boff"], ops["data"],
                             u_prev, u, load, tf, dt2)
        best = min(best, time.perf_counter() - t0)
        out = u
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=128)
    ap.add_argument("--blocks", type=int, default=8)
    ap.add_argument("--interior", type=int, default=3)
    ap.add_argument("--energy", type=float, default=0.75)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    cs = setup(args.nx, args.blocks, args.interior, args.energy)
    ops = cs.kernel_operands
    n = cs.n_dofs
    dt = 0.5 * 2.0 / np.sqrt(max_eigenvalue(cs))
    rng = np.random.default_rng(0)
    u0 = rng.standard_normal(n)
    load = rng.standard_normal(n)
    tf = np.cos(np.arange(args.steps) * dt)
    avail = kernels.backends()
    print(f"coarse dofs {n}, nnz {cs.stiffness.nnz}, steps {args.steps}")
    res = {}
    for name in ("python", "cython"):
        if name not in avail:
            print(f"{name:>8}: not built")
            continue
        t, u = time_backend(avail[name], ops, u0, load, tf, dt * dt, args.repeat)
        res[name] = (t, u)
        print(f"{name:>8}: {t / args.steps * 1e6:9.2f} us/step")
    if len(res) == 2:
        (tp, up), (tc, uc) = res["python"], res["cython"]
        diff = np.abs(up - uc).max() / np.abs(up).max()
        print(f" speedup: {tp / tc:.2f}x, relative max difference {diff:.2e}")


if __name__ == "__main__":
    main()
