"""Command-line entry points: solve, verify, expsum, bench.

Exit codes: 0 success (for ``solve``: converged), 2 ``solve`` stopped at the
iteration cap, 1 any error.  Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import RunConfig, load_config, with_overrides
from .greens import ExpSumError, build_expsum, length_cap
from .oracle import MAX_ENTRIES, OracleSizeError, exact_ground
from .space import ConfigError, build_grid_model
from .solver.iterate import PositiveMuError, greens_iterate
from .wave import norm_A, write_wavefunction

EXIT_OK, EXIT_ERROR, EXIT_CAP = 0, 1, 2


def _err(msg: str) -> None:
    print(f"detsum: {msg}", file=sys.stderr)


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    cfg = with_overrides(cfg, seed=args.seed, fast_path=True if args.fast_path else None)
    if getattr(args, "output", None):
        cfg = replace(cfg, output=args.output)
    return cfg


def summary_text(cfg: RunConfig, result, seconds: float, sp) -> str:
    last = result.trace.rows[-1] if result.trace.rows else None
    lines = [
        f"converged = {result.converged}",
        f"iterations = {len(result.trace.rows)}",
        f"mu = {result.mu:.17g}",
        f"rayleigh = {last.rayleigh if last else float('nan'):.17g}",
        f"norm_A = {norm_A(sp, result.psi):.17g}",
        f"r = {result.psi.r}",
        f"N = {result.psi.N}",
        f"Mtot = {sp.Mtot}",
        f"fast_path = {cfg.solve.fast_path}",
        f"seed = {cfg.solve.seed}",
        f"seconds = {seconds:.3f}",
    ]
    if cfg.reference_energy is not None:
        lines.append(f"reference_energy = {cfg.reference_energy:.17g}")
        lines.append(f"error = {result.mu - cfg.reference_energy:.3e}")
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    cfg = _load(args)
    model = build_grid_model(cfg.model)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        result = greens_iterate(model, cfg.solve)
    except PositiveMuError as exc:
        if exc.trace is not None:
            (out / "trace.csv").write_text(exc.trace.to_csv())
            sys.stderr.write(exc.trace.to_csv())
        raise
    seconds = time.perf_counter() - start
    (out / "trace.csv").write_text(result.trace.to_csv())
    write_wavefunction(out / "wavefunction.wf", result.psi)
    text = summary_text(cfg, result, seconds, model.space)
    (out / "summary").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if result.converged else EXIT_CAP


def cmd_verify(args) -> int:
    from .suite import run_suite

    cfg = _load(args)
    N, model = cfg.solve.N, build_grid_model(cfg.model)
    mtot = model.space.Mtot
    if N > 3 or mtot**N > MAX_ENTRIES:
        raise OracleSizeError(f"model has Mtot^N = {mtot}^{N}; the dense oracle is limited to "
                              f"N <= 3 and Mtot^N <= {MAX_ENTRIES}")
    report = run_suite(cfg.solve.seed, tol_scale=args.tolerance_scale, quick=args.quick)
    for line in report.lines():
        print(line)
    ok = report.ok
    energy, _ = exact_ground(model, N)
    print(f"exact_ground N={N} Mtot={mtot}: {energy:.17g}")
    if cfg.reference_energy is not None:
        dev = abs(energy - cfg.reference_energy)
        good = dev <= 1e-9 * args.tolerance_scale
        ok = ok and good
        print(f"{'PASS' if good else 'FAIL'} reference_energy: recorded {cfg.reference_energy:.17g}, deviation {dev:.3e}")
    print("ALL PASS" if ok else "FAILURES PRESENT")
    return EXIT_OK if ok else EXIT_ERROR


def cmd_expsum(args) -> int:
    es = build_expsum(args.eps, args.R)
    lines = ["p,w,tau"] + [f"{p},{w:.17g},{t:.17g}" for p, (w, t) in enumerate(zip(es.w, es.tau))]
    sys.stdout.write("\n".join(lines) + "\n")
    passed = es.certificate <= args.eps
    print(f"certificate: max |1 - t S(t)| on [1, {args.R:g}] = {es.certificate:.3e} (eps {args.eps:g}), "
          f"L = {es.L}, cap = {length_cap(args.eps)}", file=sys.stderr)
    print("PASS" if passed else "FAIL", file=sys.stderr)
    return EXIT_OK if passed else EXIT_ERROR


def cmd_bench(args) -> int:
    """Wall time of one Green iteration per (r, fast path) cell."""
    cfg = _load(args)
    model = build_grid_model(cfg.model)
    ranks = sorted({1, 2, cfg.solve.r} if cfg.solve.r >= 2 else {1})
    print("r,N,Mtot,L,S,fast_path,seconds")
    for r in ranks:
        for fast in (False, True):
            solve = replace(cfg.solve, r=r, I=1, fast_path=fast, mu_tol=0.0)
            start = time.perf_counter()
            L = []
            greens_iterate(model, solve, on_iteration=None,
                           cache_factory=_counting_factory(L, fast))
            secs = time.perf_counter() - start
            print(f"{r},{solve.N},{model.space.Mtot},{L[0] if L else 0},{solve.S},{int(fast)},{secs:.4f}")
    return EXIT_OK


def _counting_factory(store: list, fast: bool):
    from .solver.fastpath import ReuseCache

    def make(model, rep, cfg):
        store.append(rep.L)
        return ReuseCache(model, rep, cfg.eta_rel) if fast else None
    return make


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detsum", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1,
                        help="BLAS threads (set before numpy loads; default 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--seed", type=int, default=None, help="override solve.seed")
        p.add_argument("--fast-path", action="store_true", help="reuse D/E updates between directions")

    p = sub.add_parser("solve", help="run the Green's-function iteration")
    common(p)
    p.add_argument("--output", default=None, help="override run.output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="randomized oracle suites plus the exact ground state")
    common(p)
    p.add_argument("--quick", action="store_true", help="fewer cases per family")
    p.add_argument("--tolerance-scale", type=float, default=1.0,
                   help="multiply every tolerance (test hook; values << 1 force failures)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("expsum", help="print the exponential-sum table as CSV")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--R", type=float, default=1e8)
    p.set_defaults(func=cmd_expsum)

    p = sub.add_parser("bench", help="time one iteration per grid cell")
    common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(f"config error: {exc}")
    except OracleSizeError as exc:
        _err(f"refusing: {exc}")
    except PositiveMuError as exc:
        _err(f"{exc} (trace above)")
    except (ExpSumError, ValueError) as exc:
        _err(str(exc))
    return EXIT_ERROR
