"""Ground-state energies for a chain of separation ranks against the exact answer.

    python3 scripts/rank_chain.py --config configs/ground_n2.cfg --ranks 1 2 4
"""
import argparse
import time
from dataclasses import replace

from detsum import oracle
from detsum.config import load_config
from detsum.space import build_grid_model
from detsum.solver.iterate import greens_iterate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/ground_n2.cfg")
    ap.add_argument("--ranks", type=int, nargs="+", default=[1, 2, 4])
    args = ap.parse_args()

    cfg = load_config(args.config)
    model = build_grid_model(cfg.model)
    exact = oracle.exact_ground(model, cfg.solve.N)[0]
    print(f"# exact {exact:.12f}")
    print("r,mu,error,iterations,converged,seconds")
    for r in args.ranks:
        t0 = time.perf_counter()
        res = greens_iterate(model, replace(cfg.solve, r=r))
        print(f"{r},{res.mu:.12f},{res.mu - exact:.3e},{len(res.trace.rows)},{res.converged},"
              f"{time.perf_counter() - t0:.1f}")


if __name__ == "__main__":
    main()
