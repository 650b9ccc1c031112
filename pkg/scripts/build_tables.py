"""Build and ship the packaged AR(1) coefficient tables.

Fits the m=3 table over the full Hurst grid, then the m=4 table seeded
by embedding the m=3 solutions, and writes both under the package's
tables/ directory.  Fails loudly if m=4 does not beat m=3 at every grid
point or if the m=4 coefficients drift from the published reference
values at H=0.829.
"""
import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from fgnmix.ar1fit import build_table  # noqa: E402

TABLE_DIR = pathlib.Path(__file__).resolve().parents[1] / "src" / "fgnmix" / "tables"

# m=4 coefficients near H=0.83 reported for this construction elsewhere;
# reproduced here as a regression anchor (tolerance 0.02).
REF_H = 0.829
REF_PHI = np.array([0.999, 0.982, 0.847, 0.291])
REF_W = np.array([0.099, 0.129, 0.232, 0.540])


def main() -> int:
    TABLE_DIR.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    print("building m=3 table (101 grid points, k_max=1000) ...", flush=True)
    t3 = build_table(m=3, k_max=1000, grid_size=101, n_restarts=5, seed=0)
    print(f"  done in {time.time() - t0:.1f} s; "
          f"objective range [{t3.objective.min():.3e}, {t3.objective.max():.3e}]",
          flush=True)
    t3.save(TABLE_DIR / "ar1-m3-k1000.txt")

    t1 = time.time()
    print("building m=4 table (seeded from m=3) ...", flush=True)
    t4 = build_table(m=4, k_max=1000, grid_size=101, n_restarts=5, seed=1,
                     embed_from=t3)
    print(f"  done in {time.time() - t1:.1f} s; "
          f"objective range [{t4.objective.min():.3e}, {t4.objective.max():.3e}]",
          flush=True)
    t4.save(TABLE_DIR / "ar1-m4-k1000.txt")

    ok = True
    worse = np.where(t4.objective >= t3.objective)[0]
    if worse.size:
        ok = False
        for i in worse:
            print(f"VIOLATION: m=4 objective {t4.objective[i]:.6e} >= "
                  f"m=3 {t3.objective[i]:.6e} at grid index {i}")
    else:
        ratio = t4.objective / t3.objective
        print(f"m=4 beats m=3 at all grid points "
              f"(objective ratio {ratio.min():.3f} .. {ratio.max():.3f})")

    mix = t4.lookup(REF_H)
    dphi = np.abs(mix.phi - REF_PHI).max()
    dw = np.abs(mix.w - REF_W).max()
    print(f"H={REF_H}: phi={np.array2string(mix.phi, precision=4)} "
          f"w={np.array2string(mix.w, precision=4)}")
    print(f"  max|dphi|={dphi:.4f} max|dw|={dw:.4f} (tolerance 0.02)")
    if dphi > 0.02 or dw > 0.02:
        ok = False
        print("VIOLATION: reference coefficients not reproduced")

    print(f"total {time.time() - t0:.1f} s; tables in {TABLE_DIR}")
    return 0 if ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
