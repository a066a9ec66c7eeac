"""Compare the numba and numpy backends of the two hot kernels.

Times Q1 assembly and Jacobi-preconditioned CG on square lattices of
increasing size.  The first numba call (JIT compilation) is excluded.

    python3 benchmarks/bench_kernels.py --sizes 33 65 129 --repeat 3
"""
import argparse
import os
import time

import numpy as np
import scipy.sparse as sp

from transferlab import _accel
from transferlab.lattice import MetricSpec, build_lattice, sample_metric


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench(n: int, repeat: int, backend: str) -> dict:
    os.environ["TRANSFERLAB_NUMBA"] = "1" if backend == "numba" else "0"
    lat = build_lattice([n, n], [16.0 / (n - 1)] * 2)
    md = sample_metric(MetricSpec("curve-induced", {"slope": 1.0}), lat)
    coef = md.sqrt_det[:, None, None] * md.inverse
    mass = md.sqrt_det.copy()

    def assemble():
        return _accel.assemble_triplets(coef, mass, lat.spacing, lat.shape)

    assemble()  # warm-up / compile
    t_asm, (r, c, v) = _best(assemble, repeat)
    K = sp.coo_matrix((v, (r, c)), shape=(lat.count,) * 2).tocsr()
    K.sum_duplicates()
    b = np.random.default_rng(0).standard_normal(lat.count)
    inv_w = np.ones(lat.count)

    def cg():
        return _accel.pcg(K, b, inv_w, 1e-10, 20 * lat.count)

    cg()
    t_cg, (x, its, res) = _best(cg, repeat)
    return {"backend": backend, "n": n, "sites": lat.count, "assemble_s": t_asm, "cg_s": t_cg, "cg_its": its, "x": x}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[33, 65, 129])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'sites':>7} {'asm numpy':>10} {'asm numba':>10} {'cg numpy':>10} {'cg numba':>10} {'its':>5} {'max|dx|':>9}")
    for n in args.sizes:
        a = bench(n, args.repeat, "numpy")
        b = bench(n, args.repeat, "numba")
        dx = float(np.max(np.abs(a["x"] - b["x"])))
        print(
            f"{a['sites']:>7} {a['assemble_s']:>10.4f} {b['assemble_s']:>10.4f} "
            f"{a['cg_s']:>10.4f} {b['cg_s']:>10.4f} {b['cg_its']:>5} {dx:>9.1e}"
        )


if __name__ == "__main__":
    main()
