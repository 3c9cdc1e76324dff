"""Command-line entry point (``pbsi-aoi``)."""

from __future__ import annotations

import argparse
import csv
import sys

from .bound import AdmissibilityError, BoundInputs, lambda0, theta_branch_high, theta_branch_low, theta_lower_bound
from .cn import CnContext, policy_map
from .config import SpecError, load_spec
from .core import EnergyModel, ParameterError, SensorParams
from .ebsi import solve_ebsi_policy
from .experiment import run_spec
from .mdp import ConvergenceError
from .noiseless import NoiselessParams, solve_no_policy
from .post_update import solve_post_update_values
from .scheduling import oft_search
from .simulator import format_float, write_metrics_csv


def _add_sensor_args(p: argparse.ArgumentParser, xi_default=0.7):
    p.add_argument("--lam", type=float, default=0.12, help="nominal energy parameter (bernoulli p or poisson mean)")
    p.add_argument("--energy", choices=("bernoulli", "poisson"), default="bernoulli")
    p.add_argument("--eta", type=float, default=0.7, help="request probability")
    p.add_argument("--xi", type=float, default=xi_default, help="transmission success probability")
    p.add_argument("--capacity", type=int, default=15, help="battery capacity")
    p.add_argument("--max-aocsi", type=int, default=48)
    p.add_argument("--out", default=None, help="output CSV path (stdout if omitted)")


def _sensor(args) -> SensorParams:
    return SensorParams(
        battery_capacity=args.capacity,
        max_aocsi=args.max_aocsi,
        request_prob=args.eta,
        channel_success=args.xi,
        energy=EnergyModel(args.energy, args.lam),
    )


def _open_out(path):
    return open(path, "w", newline="") if path else sys.stdout


def _emit(path, header, rows):
    fh = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_bound(args) -> int:
    inp = BoundInputs(args.lam, args.eta, args.xi, args.max_aocsi)
    l0 = lambda0(args.eta, args.xi, args.max_aocsi)
    print(f"theta   {format_float(theta_lower_bound(inp))}")
    print(f"lambda0 {format_float(l0)}")
    print(f"branch  {'high' if args.lam >= l0 else 'low'}")
    print(f"high    {format_float(theta_branch_high(args.lam, args.eta, args.xi))}")
    print(f"low     {format_float(theta_branch_low(args.lam, args.eta, args.xi, args.max_aocsi))}")
    return 0


def cmd_policy_map(args) -> int:
    ctx = CnContext.from_params(_sensor(args))
    grid = policy_map(ctx, args.max_delta)
    rows = ((b, dl + 1, int(grid[b, dl])) for b in range(grid.shape[0]) for dl in range(grid.shape[1]))
    _emit(args.out, ("b_hat", "delta", "action"), rows)
    return 0


def cmd_post_update(args) -> int:
    tab = solve_post_update_values(_sensor(args), args.block_length, args.tol)
    print(
        f"# gain_estimate={format_float(tab.gain_estimate)} block_length={tab.block_length} "
        f"iterations={tab.iterations} states={tab.num_states} ops_per_iteration={tab.ops_per_iteration}",
        file=sys.stderr,
    )
    _emit(args.out, ("b_hat", "h_tilde"), ((b, float(v)) for b, v in enumerate(tab.values)))
    return 0


def _emit_table(args, table):
    print(f"# gain={format_float(table.gain)} iterations={table.iterations}", file=sys.stderr)
    fh = _open_out(args.out)
    try:
        table.to_csv(fh)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_solve_noiseless(args) -> int:
    params = NoiselessParams.from_sensor(_sensor(args), args.max_aofbl)
    _emit_table(args, solve_no_policy(params, args.tol))
    return 0


def cmd_solve_ebsi(args) -> int:
    _emit_table(args, solve_ebsi_policy(_sensor(args), args.tol))
    return 0


def cmd_oft_search(args) -> int:
    res = oft_search(_sensor(args), args.budget, args.seed)
    thr = res.thresholds
    fmt = lambda v: "never" if v is None else str(v)  # noqa: E731
    print(f"with_request {fmt(thr.with_request)}")
    print(f"without_request {fmt(thr.without_request)}")
    print(f"cost {format_float(float(res.costs.min()))}")
    return 0


def cmd_run(args) -> int:
    spec = load_spec(args.spec)
    out = args.out or spec.output
    rows = run_spec(spec, args.episodes, args.horizon, args.seed, args.workers)
    if out:
        write_metrics_csv(out, rows)
    else:
        write_metrics_csv(sys.stdout, rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbsi-aoi", description="On-demand AoCSI control with partial battery information.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="universal lower bound and branch diagnostics")
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--xi", type=float, required=True)
    p.add_argument("--max-aocsi", type=int, default=48)
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("policy-map", help="CN actions over (b_hat, delta) as CSV")
    _add_sensor_args(p)
    p.add_argument("--max-delta", type=int, default=None)
    p.set_defaults(func=cmd_policy_map)

    p = sub.add_parser("post-update", help="post-update value table")
    _add_sensor_args(p)
    p.add_argument("--block-length", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_post_update)

    p = sub.add_parser("solve-noiseless", help="optimal policy for the noiseless inferred-pBSI MDP")
    _add_sensor_args(p, xi_default=1.0)
    p.add_argument("--max-aofbl", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_solve_noiseless)

    p = sub.add_parser("solve-ebsi", help="optimal policy with exact battery information")
    _add_sensor_args(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_solve_ebsi)

    p = sub.add_parser("oft-search", help="exhaustive search for the best fixed AoCSI thresholds")
    _add_sensor_args(p)
    p.add_argument("--budget", type=int, default=200_000, help="simulated slots per threshold pair")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oft_search)

    p = sub.add_parser("run", help="run an experiment spec file")
    p.add_argument("spec")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SpecError, ParameterError, AdmissibilityError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"error: {exc} (span {exc.last_span:.3g} after {exc.iterations} iterations)", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
