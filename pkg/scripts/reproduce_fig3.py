"""Run the ten-agent, five-constraint scenario and write curves and a report.

    python scripts/reproduce_fig3.py --out runs/fig3 [--trials 10000] [--workers 4]
"""
import argparse
import os
import time

from qpdnum.sim import curves_csv, fig3_config, monte_carlo, report_text


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs/fig3")
    p.add_argument("--seed", type=int, default=2016)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    t0 = time.perf_counter()
    res = monte_carlo(fig3_config(seed=args.seed, trials=args.trials, steps=args.steps), workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "curves.csv"), "w") as fh:
        fh.write(curves_csv(res))
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write(report_text(res))
    print(report_text(res))
    print(f"elapsed {time.perf_counter() - t0:.1f}s, wrote {args.out}/")
    return 0 if res.ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
