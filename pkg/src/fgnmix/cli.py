"""Command-line front end.

Subcommands cover table generation, simulation, estimation, the three
study harnesses, source decomposition and a benchmark.  Outputs are
plain CSV with a header row (plot data only; no plotting here), numbers
formatted with repr-faithful %.17g so reruns under the same seed are
byte-identical.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .ar1fit import CoeffTable, build_table, load_packaged_table
from .errors import (
    BreakdownError,
    DataFormatError,
    DegenerateDataError,
    DomainError,
    FitError,
    NotPositiveDefiniteError,
)
from .exact import HurstParams, dl_profile_pieces, simulate_exact
from .gmrf import KAPPA_DEFAULT, assemble_precision, cholesky_banded, sample
from .inference import (
    decompose,
    kld,
    loglik_approx,
    mle,
    prediction_error_study,
    replication_study,
)
from .observation import ObservationModel

_USAGE_ERRORS = (
    DomainError,
    DegenerateDataError,
    DataFormatError,
    FitError,
    NotPositiveDefiniteError,
    BreakdownError,
    FileNotFoundError,
)


def _fmt(x) -> str:
    if isinstance(x, (str, np.str_)):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _write_csv(path: str, header: list[str], columns: list) -> None:
    cols = [np.atleast_1d(c) for c in columns]
    rows = len(cols[0])
    lines = [",".join(header)]
    for i in range(rows):
        lines.append(",".join(_fmt(c[i]) for c in cols))
    text = "\n".join(lines) + "\n"
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(text)


def read_series(path: str, na_string: str = "NA"):
    """Parse a data file: one value per line, optional header line,
    optional second column of per-point noise precisions.

    Returns (y, d): missing entries (the NA sentinel) become y=NaN with
    d=0; plain values get d=+inf unless a precision column overrides it.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()
    ys: list[float] = []
    ds: list[float] = []
    started = False
    for lineno, line in enumerate(raw, start=1):
        text = line.strip()
        if not text:
            continue
        parts = [p.strip() for p in
                 (text.split(",") if "," in text else text.split())]
        if len(parts) > 2:
            raise DataFormatError(lineno, f"expected 1 or 2 columns, got {len(parts)}")
        first = parts[0]
        if first != na_string:
            try:
                float(first)
            except ValueError:
                if started:
                    raise DataFormatError(lineno, f"unparseable value {first!r}")
                continue  # optional header line
        started = True
        if first == na_string:
            y = np.nan
            d = 0.0
        else:
            y = float(first)
            d = np.inf
        if len(parts) == 2:
            if parts[1] == na_string:
                d = 0.0
            else:
                try:
                    d = float(parts[1])
                except ValueError:
                    raise DataFormatError(
                        lineno, f"unparseable precision {parts[1]!r}") from None
                if np.isnan(d) or d < 0:
                    raise DataFormatError(lineno, f"precision must be >= 0, got {d}")
        ys.append(y)
        ds.append(d)
    if not ys:
        raise DataFormatError(0, "no data rows found")
    return np.array(ys), np.array(ds)


def _parse_m_list(text: str) -> list[int]:
    try:
        ms = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise DomainError(f"cannot parse component counts from {text!r}") from None
    if not ms:
        raise DomainError("at least one m value required")
    return ms


def _get_table(args, m: int | None = None) -> CoeffTable:
    if getattr(args, "table", None):
        return CoeffTable.load(args.table)
    if m is None:
        m = int(args.m)
    return load_packaged_table(m)


def _complete_series(y: np.ndarray, d: np.ndarray, what: str) -> np.ndarray:
    if np.any(d <= 0) or np.any(~np.isfinite(y)):
        raise DomainError(f"{what} requires a complete series without "
                          "missing values")
    return y


def cmd_build_table(args) -> int:
    embed = CoeffTable.load(args.embed_from) if args.embed_from else None
    table = build_table(m=args.m, k_max=args.kmax, grid_size=args.grid,
                        n_restarts=args.restarts, seed=args.seed,
                        embed_from=embed)
    table.save(args.output)
    H_grid = [0.5 + 0.5 / (1.0 + np.exp(-h)) for h in table.h]
    for H, obj in zip(H_grid, table.objective):
        print(f"H={H:.4f}  objective={obj:.6e}")
    print(f"table m={args.m} kmax={args.kmax}: {len(table.h)} grid points, "
          f"objective range [{table.objective.min():.3e}, "
          f"{table.objective.max():.3e}] -> {args.output}")
    if args.curves:
        phis = np.empty((len(H_grid), args.m))
        ws = np.empty((len(H_grid), args.m))
        for i, H in enumerate(H_grid):
            mix = table.lookup(H)
            phis[i] = mix.phi
            ws[i] = mix.w
        header = (["H"] + [f"phi_{j+1}" for j in range(args.m)]
                  + [f"w_{j+1}" for j in range(args.m)])
        _write_csv(args.curves, header,
                   [np.array(H_grid)] + list(phis.T) + list(ws.T))
        print(f"coefficient curves -> {args.curves}")
    return 0


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name, None) is None:
            raise DomainError(f"--{name} is required for this command")


def cmd_simulate(args) -> int:
    _require(args, "H", "n")
    if args.model == "exact":
        x = simulate_exact(HurstParams(H=args.H, sigma=args.sigma),
                           args.n, seed=args.seed)
    else:
        table = _get_table(args)
        mix = table.lookup(args.H)
        Q = assemble_precision(mix, args.sigma, args.n, args.kappa)
        v = sample(cholesky_banded(Q), seed=args.seed)
        x = v[Q.x_indices]
    _write_csv(args.output, ["x"], [x])
    return 0


def cmd_estimate(args) -> int:
    y, d = read_series(args.input, args.na_string)
    x = _complete_series(y, d, "estimation")
    models = ["exact", "approx"] if args.model == "both" else [args.model]
    rows = []
    for model in models:
        if model == "exact":
            r = mle(x, model="exact")
        else:
            r = mle(x, model="approx", table=_get_table(args),
                    kappa=args.kappa)
        rows.append(r)
        tag = model if r.m is None else f"{model} (m={r.m})"
        print(f"{tag}: H_hat={r.H_hat:.6f} sd_H={r.sd_H:.6f} "
              f"sigma_hat={r.sigma_hat:.6f} loglik={r.loglik:.6f} "
              f"mean={r.mean:.6f}"
              + ("  [boundary]" if r.boundary else ""))
    if args.output:
        _write_csv(args.output,
                   ["model", "m", "H_hat", "sd_H", "sigma_hat", "loglik",
                    "mean", "iterations", "boundary"],
                   [np.array([r.model for r in rows]),
                    np.array([0 if r.m is None else r.m for r in rows]),
                    np.array([r.H_hat for r in rows]),
                    np.array([r.sd_H for r in rows]),
                    np.array([r.sigma_hat for r in rows]),
                    np.array([r.loglik for r in rows]),
                    np.array([r.mean for r in rows]),
                    np.array([r.iterations for r in rows]),
                    np.array([int(r.boundary) for r in rows])])
    return 0


def cmd_replicate(args) -> int:
    _require(args, "H", "n")
    ms = _parse_m_list(args.m)
    tables = [_get_table(args, m) for m in ms]
    study = replication_study(args.H, args.n, args.N, tables,
                              seed=args.seed, sigma=args.sigma,
                              kappa=args.kappa, n_workers=args.workers)
    _write_csv(args.output,
               ["m", "H_true", "n", "N", "mean_exact", "mean_approx",
                "rmse", "mae", "n_failures"],
               [np.array(ms),
                np.full(len(ms), study.H_true),
                np.full(len(ms), study.n, dtype=int),
                np.full(len(ms), study.N, dtype=int),
                np.full(len(ms), study.mean_exact),
                np.array([study.mean_approx(m) for m in ms]),
                np.array([study.rmse(m) for m in ms]),
                np.array([study.mae(m) for m in ms]),
                np.full(len(ms), len(study.failures), dtype=int)])
    for i, msg in study.failures:
        print(f"replication {i} failed: {msg}", file=sys.stderr)
    if study.failures and not args.allow_partial:
        print(f"{len(study.failures)} of {args.N} replications failed",
              file=sys.stderr)
        return 1
    return 0


def cmd_predict_study(args) -> int:
    _require(args, "H", "n")
    table = _get_table(args)
    rep = prediction_error_study(args.H, args.n, args.p, args.N,
                                 table=table, seed=args.seed,
                                 sigma=args.sigma, kappa=args.kappa)
    _write_csv(args.output, ["horizon", "err_mu", "err_sigma"],
               [rep.horizons, rep.err_mu, rep.err_sigma])
    return 0


def cmd_kld(args) -> int:
    _require(args, "n")
    ms = _parse_m_list(args.m)
    tables = [_get_table(args, m) for m in ms]
    H_grid = np.linspace(args.H_min, args.H_max, args.grid)
    cols = [H_grid]
    header = ["H"]
    for m, table in zip(ms, tables):
        vals = np.array([kld(H, args.n, table, kappa=args.kappa)
                         for H in H_grid])
        cols.extend([vals, np.sqrt(vals)])
        header.extend([f"kld_m{m}", f"sqrt_kld_m{m}"])
    _write_csv(args.output, header, cols)
    return 0


def cmd_decompose(args) -> int:
    y, d = read_series(args.input, args.na_string)
    table = _get_table(args)
    obs = ObservationModel(y=y, d=d, p=args.p)
    if args.H is not None:
        if args.sigma is None:
            raise DomainError("--sigma is required when --H is given")
        from .inference import MleResult

        fit = MleResult(H_hat=args.H, sigma_hat=args.sigma, loglik=np.nan,
                        sd_H=np.nan, mean=float(np.nanmean(y[d > 0])),
                        iterations=0, model="approx", m=table.m,
                        boundary=False)
    else:
        x = _complete_series(y, d, "estimation (pass --H to skip it)")
        fit = mle(x, model="approx", table=table, kappa=args.kappa)
    dec = decompose(obs, fit, table, kappa=args.kappa)
    m = dec.m
    print(f"H_hat={dec.H_hat:.6f} sigma_hat={dec.sigma_hat:.6f} "
          f"mean={dec.mean_offset:.6f}")
    print("phi:", " ".join(f"{p:.6f}" for p in dec.mixture.phi))
    print("w:  ", " ".join(f"{w:.6f}" for w in dec.mixture.w))
    header = ["t", "x_mean", "x_sd"]
    cols = [np.arange(1, obs.n_total + 1), dec.x_mean, dec.x_sd]
    for j in range(m):
        header += [f"comp{j+1}_mean", f"comp{j+1}_sd"]
        cols += [dec.component_means[j], dec.component_sds[j]]
    header.append("noise_mean")
    cols.append(dec.noise_mean)
    _write_csv(args.output, header, cols)
    if args.check:
        resid = np.max(np.abs(dec.component_means.sum(axis=0)
                              + dec.noise_mean - dec.x_mean))
        print(f"max reconstruction residual: {resid:.3e}")
        if not resid < 1e-8:
            print("reconstruction check FAILED", file=sys.stderr)
            return 1
    return 0


def _loglog_slope(ns, ts) -> float:
    return float(np.polyfit(np.log(ns), np.log(ts), 1)[0])


def _best_time(fn, reps: int = 3) -> float:
    best = np.inf
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cmd_bench(args) -> int:
    table = _get_table(args)
    m = table.m
    ns = [int(p) for p in args.n.split(",")]
    rows_model, rows_n, rows_t, rows_flops, rows_expected = [], [], [], [], []
    print(f"approximate model (m={m}, H={args.H}):")
    ts = []
    for n in ns:
        mix = table.lookup(args.H)
        Q = assemble_precision(mix, 1.0, n, args.kappa)
        chol = cholesky_banded(Q)
        expected = n * (m + 1) ** 3
        x = simulate_exact(HurstParams(H=args.H), min(n, 4096), seed=args.seed)
        x = np.resize(x, n)  # timing only needs the right length
        loglik_approx(x, args.H, 1.0, table, kappa=args.kappa)  # warm jit
        t = _best_time(lambda: loglik_approx(x, args.H, 1.0, table,
                                             kappa=args.kappa))
        ts.append(t)
        match = "OK" if chol.flops == expected else "MISMATCH"
        print(f"  n={n:>8d}  loglik {t:9.4f} s  factor flops {chol.flops} "
              f"vs n(m+1)^3={expected} [{match}]")
        rows_model.append("approx")
        rows_n.append(n)
        rows_t.append(t)
        rows_flops.append(chol.flops)
        rows_expected.append(expected)
    if len(ns) > 1:
        print(f"  log-log slope: {_loglog_slope(ns, ts):.3f} (1 = linear)")
    ns_exact = [int(p) for p in args.exact_n.split(",")] if args.exact_n else []
    if ns_exact:
        print("exact model:")
        ts = []
        for n in ns_exact:
            x = simulate_exact(HurstParams(H=args.H), n, seed=args.seed)
            dl_profile_pieces(x, args.H)  # warm jit
            t = _best_time(lambda: dl_profile_pieces(x, args.H))
            ts.append(t)
            print(f"  n={n:>8d}  loglik {t:9.4f} s")
            rows_model.append("exact")
            rows_n.append(n)
            rows_t.append(t)
            rows_flops.append(0)
            rows_expected.append(0)
        if len(ns_exact) > 1:
            print(f"  log-log slope: {_loglog_slope(ns_exact, ts):.3f} "
                  "(2 = quadratic)")
    if args.output:
        _write_csv(args.output,
                   ["model", "n", "seconds", "factor_flops", "expected_flops"],
                   [np.array(rows_model), np.array(rows_n), np.array(rows_t),
                    np.array(rows_flops), np.array(rows_expected)])
    return 0


def _add_common(p, *names):
    if "model" in names:
        p.add_argument("--model", default="exact",
                       choices=["exact", "approx", "both"])
    if "m" in names:
        p.add_argument("--m", default="4")
    if "H" in names:
        p.add_argument("--H", type=float)
    if "sigma" in names:
        p.add_argument("--sigma", type=float, default=1.0)
    if "n" in names:
        p.add_argument("--n", type=int)
    if "N" in names:
        p.add_argument("--N", type=int, default=100)
    if "p" in names:
        p.add_argument("--p", type=int, default=1)
    if "kmax" in names:
        p.add_argument("--kmax", type=int, default=1000)
    if "kappa" in names:
        p.add_argument("--kappa", type=float, default=KAPPA_DEFAULT)
    if "seed" in names:
        p.add_argument("--seed", type=int, default=0)
    if "table" in names:
        p.add_argument("--table", help="coefficient-table file "
                       "(otherwise the packaged table for --m is used)")
    if "input" in names:
        p.add_argument("--input", required=True)
    if "output" in names:
        p.add_argument("--output", default="-",
                       help="CSV destination, - for stdout")
    if "na" in names:
        p.add_argument("--na-string", dest="na_string", default="NA")
    if "partial" in names:
        p.add_argument("--allow-partial", dest="allow_partial",
                       action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fgnmix",
        description="Long-memory Gaussian series: exact Toeplitz tools and "
                    "a linear-cost AR(1)-mixture approximation.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-table", help="fit mixture coefficients over "
                       "an H grid and write the table file")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--restarts", type=int, default=5)
    p.add_argument("--embed-from", dest="embed_from",
                   help="smaller table whose solutions seed this build")
    p.add_argument("--curves", help="also write phi/w-vs-H curves as CSV")
    _add_common(p, "kmax", "seed")
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_build_table)

    p = sub.add_parser("simulate", help="draw one series and write it as CSV")
    _add_common(p, "model", "m", "H", "sigma", "n", "kappa", "seed", "table",
                "output")
    p.set_defaults(fn=cmd_simulate)
    p = sub.add_parser("estimate", help="maximum-likelihood H and sigma "
                       "from a data file")
    _add_common(p, "model", "m", "kappa", "table", "input", "na")
    p.add_argument("--output", help="optionally also write results as CSV")
    p.set_defaults(fn=cmd_estimate, model="both")

    p = sub.add_parser("replicate", help="simulate-and-estimate study "
                       "comparing exact and approximate estimators")
    _add_common(p, "H", "sigma", "n", "N", "kappa", "seed", "table",
                "output", "partial")
    p.add_argument("--m", default="3,4", help="comma-separated list")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=cmd_replicate)

    p = sub.add_parser("predict-study", help="forecast error of the "
                       "approximate predictor against the exact one")
    _add_common(p, "m", "H", "sigma", "n", "N", "p", "kappa", "seed",
                "table", "output")
    p.set_defaults(fn=cmd_predict_study)

    p = sub.add_parser("kld", help="divergence from exact fGn across an "
                       "H grid")
    _add_common(p, "n", "kappa", "table", "output")
    p.add_argument("--m", default="3,4", help="comma-separated list")
    p.add_argument("--H-min", dest="H_min", type=float, default=0.55)
    p.add_argument("--H-max", dest="H_max", type=float, default=0.95)
    p.add_argument("--grid", type=int, default=11)
    p.set_defaults(fn=cmd_kld)

    p = sub.add_parser("decompose", help="posterior AR(1) source "
                       "separation of a data file")
    _add_common(p, "m", "H", "sigma", "p", "kappa", "table", "input",
                "output", "na")
    p.set_defaults(sigma=None, p=0)
    p.add_argument("--check", action="store_true",
                   help="verify component means sum to the conditional mean")
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("bench", help="timing and flop-count report")
    _add_common(p, "m", "H", "kappa", "seed", "table")
    p.add_argument("--n", default="1000,10000,100000,1000000",
                   help="comma-separated sizes for the approximate model")
    p.add_argument("--exact-n", dest="exact_n", default="500,1000,2000",
                   help="comma-separated sizes for the exact model "
                   "(empty string to skip)")
    p.add_argument("--output", help="optionally write timings as CSV")
    p.set_defaults(fn=cmd_bench, H=0.8)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
