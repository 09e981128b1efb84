"""Command-line front end: ``qpdnum {solve,bounds,simulate,rate,reproduce}``.

Settings are read from the config file's ``[experiment]`` section, then
``--set key=value`` overrides, then explicit flags.  Exit status is 0 on
success, 1 if a bound was violated or trials failed, 2 on usage or input
errors.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import bounds as bnd
from .config import ConfigFile, build_problem, experiment_settings, parse_overrides, read_config
from .errors import QpdError
from .pd import StepSchedule, build_t_matrix, contraction_constant
from .problem import kkt_residuals, solve_optimum, validate
from .quantize import LN2, PassthroughScheme, QaScheme, RateSummary, StaticUniformScheme, rate_summary
from .sim import SCENARIOS, ExperimentConfig, curves_csv, lattice_count, monte_carlo, report_text, run_trial

FLAG_KEYS = (
    "seed", "trials", "steps", "scheme", "bits", "range", "alpha", "L", "mu", "out",
    "count_offset_bits", "workers", "rate_x", "rate_lambda",
)


def _g(v) -> str:
    return format(float(v), ".17g")


def _add_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--scheme", choices=("qa", "passthrough", "static_uniform"))
    p.add_argument("--bits", type=int, help="bits per symbol of the static uniform codec")
    p.add_argument("--range", type=float, help="range of the static uniform codec")
    p.add_argument("--alpha", type=float, help="zoom-in contraction constant; also sets the init box")
    p.add_argument("--L", type=int, help="initial box half-width in units of alpha")
    p.add_argument("--mu", type=float, help="constant step size")
    p.add_argument("--out", help="output directory")
    p.add_argument("--count-offset-bits", dest="count_offset_bits", action="store_true", default=None)
    p.add_argument("--workers", type=int)
    p.add_argument("--rate-x", dest="rate_x", type=float, help="primal rate, bits/step")
    p.add_argument("--rate-lambda", dest="rate_lambda", type=float, help="dual rate, bits/step")
    p.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE", default=[])


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpdnum", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("solve", "print the exact optimum and its KKT residuals"),
        ("bounds", "evaluate the DDE bounds for given rates"),
        ("simulate", "Monte Carlo run with bound checks"),
        ("rate", "bit-rate summary of a scheme on the instance"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        _add_flags(p)
    p = sub.add_parser("reproduce", help="run a built-in scenario")
    p.add_argument("scenario")
    _add_flags(p)
    return parser


def _settings(args, file_cfg=None) -> dict:
    s = experiment_settings(file_cfg or ConfigFile(), parse_overrides(args.overrides))
    for key in FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            s[key] = v
    return s


def _emit(out_dir, files: dict[str, str], stdout_name: str) -> None:
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for name, text in files.items():
            with open(os.path.join(out_dir, name), "w", newline="") as fh:
                fh.write(text)
    sys.stdout.write(files[stdout_name])


def _scheme(s: dict, vp):
    name = s.get("scheme", "qa")
    mu = s["mu"]
    alpha = s.get("alpha")
    if alpha is None:
        alpha = contraction_constant(build_t_matrix(vp, mu)).value
    L = s.get("L", 5)
    if name == "qa":
        scheme = QaScheme(alpha, L)
    elif name == "passthrough":
        scheme = PassthroughScheme()
    elif name == "static_uniform":
        scheme = StaticUniformScheme(s.get("range", L * alpha), s.get("bits", 3))
    else:
        raise QpdError(f"unknown scheme {name!r}")
    return scheme, bnd.InitialDistribution.uniform_box(L, alpha)


def _experiment(args):
    file_cfg = read_config(args.config)
    s = _settings(args, file_cfg)
    vp = validate(build_problem(file_cfg))
    if "mu" not in s:
        raise QpdError("no step size given: set mu in [experiment] or pass --mu")
    scheme, init = _scheme(s, vp)
    cfg = ExperimentConfig(
        problem=vp,
        scheme=scheme,
        schedule=StepSchedule.constant(s["mu"]),
        init=init,
        steps=s.get("steps", 500),
        trials=s.get("trials", 1000),
        seed=s.get("seed", 0),
        count_offset_bits=bool(s.get("count_offset_bits", False)),
    )
    return cfg, s


def cmd_solve(args) -> int:
    vp = validate(build_problem(read_config(args.config)))
    opt = solve_optimum(vp)
    stat, feas = kkt_residuals(vp, opt.x_star, opt.lambda_star)
    lines = [
        "x_star = " + " ".join(_g(v) for v in opt.x_star),
        "lambda_star = " + " ".join(_g(v) for v in opt.lambda_star),
        f"stationarity_residual = {stat:.3e}",
        f"feasibility_residual = {feas:.3e}",
    ]
    print("\n".join(lines))
    return 0


def cmd_bounds(args) -> int:
    file_cfg = read_config(args.config)
    s = _settings(args, file_cfg)
    missing = [k for k in ("rate_x", "rate_lambda", "mu") if k not in s]
    if missing:
        raise QpdError("missing rate inputs: " + ", ".join(missing) + " (bits/step for rates)")
    vp = validate(build_problem(file_cfg))
    opt = solve_optimum(vp)
    rates = RateSummary(0, s["rate_x"] * LN2, s["rate_lambda"] * LN2)
    t = beta = exact = None
    if vp.is_quadratic:
        t, beta, exact = lattice_count(vp, s["mu"])
    report = bnd.bound_report(vp, opt, s["mu"], rates, t, beta, exact)
    _emit(s.get("out"), {"bounds.txt": report.to_text(), "bounds.csv": report.csv_header() + report.to_csv_row()}, "bounds.txt")
    return 0


def _finish(result, out) -> int:
    _emit(out, {"curves.csv": curves_csv(result), "report.txt": report_text(result)}, "report.txt")
    return 0 if result.ok else 1


def cmd_simulate(args) -> int:
    cfg, s = _experiment(args)
    return _finish(monte_carlo(cfg, workers=s.get("workers", 1)), s.get("out"))


def cmd_rate(args) -> int:
    cfg, s = _experiment(args)
    trial = run_trial(cfg, 0)
    r = rate_summary(trial.ledger, cfg.steps)
    lines = [f"horizon = {r.horizon}"]
    for name in ("r_x", "r_lambda", "r_q"):
        lines.append(f"{name}_nats = {_g(getattr(r, name))}")
        lines.append(f"{name}_bits = {_g(getattr(r, name + '_bits'))}")
    print("\n".join(lines))
    return 0


def cmd_reproduce(args) -> int:
    if args.scenario not in SCENARIOS:
        raise QpdError(f"unknown scenario {args.scenario!r}; known: {', '.join(sorted(SCENARIOS))}")
    s = _settings(args)
    kw = {k: s[k] for k in ("seed", "trials", "steps", "mu", "alpha", "L") if k in s}
    if s.get("count_offset_bits"):
        kw["count_offset_bits"] = True
    cfg = SCENARIOS[args.scenario](**kw)
    return _finish(monte_carlo(cfg, workers=s.get("workers", 1)), s.get("out"))


COMMANDS = {
    "solve": cmd_solve,
    "bounds": cmd_bounds,
    "simulate": cmd_simulate,
    "rate": cmd_rate,
    "reproduce": cmd_reproduce,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (QpdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
