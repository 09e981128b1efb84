"""Sweep the bits of a static uniform codec on the two-agent instance and
print which side of the combined bound's min(ln beta_T, R_Q) is active."""
import argparse
import math

from qpdnum.bounds import InitialDistribution
from qpdnum.pd import StepSchedule
from qpdnum.problem import NumProblem, validate
from qpdnum.quantize import StaticUniformScheme
from qpdnum.sim import ExperimentConfig, lattice_count, monte_carlo


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--max-bits", type=int, default=6)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--steps", type=int, default=200)
    args = p.parse_args()

    vp = validate(NumProblem.quadratic([1.0, 1.0], [0.0, 0.0], [[1.0, 1.0]], [2.0]))
    _, beta, exact = lattice_count(vp, args.mu)
    print(f"beta_T = {beta} ({'exact' if exact else 'upper'}), ln beta_T = {math.log(beta):.4f}")
    print("bits  R_Q[nats]  dde_combined  dde_zoomin  branch    dde_tail")
    for bits in range(1, args.max_bits + 1):
        cfg = ExperimentConfig(vp, StaticUniformScheme(2.5, bits), StepSchedule.constant(args.mu),
                               InitialDistribution.uniform_box(5, 0.5), args.steps, args.trials, 0)
        res = monte_carlo(cfg)
        rep = res.report
        branch = "rate" if res.rates.r_q < math.log(beta) else "lattice"
        print(f"{bits:4d}  {res.rates.r_q:9.4f}  {rep.dde_combined:12.4f}  {rep.dde_zoomin:10.4f}  {branch:8s}  {res.dde_tail:8.4f}")


if __name__ == "__main__":
    main()
