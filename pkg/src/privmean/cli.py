"""Command-line entry point: estimate, bench, audit, calibrate, depth."""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import rng as rngmod
from .errors import PrivMeanError
from .primitives import PrivacyBudget


def _emit(payload: dict, out):
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=False, default=_jsonable) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _clean(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            v = repr(v)
        out[k] = v
    return out


def cmd_estimate(args):
    from .io import read_dataset
    from .rescaled import discrete_rescaled_pipeline, rescaled_gaussian_mechanism
    from .tukey import discrete_tukey_pipeline

    x = read_dataset(args.data)
    budget = PrivacyBudget(args.eps, args.delta)
    rng = rngmod.make_rng(args.seed)
    if args.mechanism == "tukey":
        out = discrete_tukey_pipeline(x, budget, args.alpha, args.beta, rng, distance_mode=args.mode or "certificate")
    elif args.pipeline == "discrete":
        out = discrete_rescaled_pipeline(x, budget, args.alpha, args.beta, 1.0, rng, args.mode or "greedy")
    else:
        out = rescaled_gaussian_mechanism(x, budget, args.beta, rng, args.mode or "greedy")
    eps_total, delta_total = out.ledger.total
    _emit({
        "mechanism": args.mechanism,
        "seed": args.seed,
        "outcome": "FAIL" if out.failed else "OK",
        "reason": out.reason,
        "estimate": None if out.failed else out.estimate.tolist(),
        "diagnostics": _clean(out.diagnostics),
        "ledger": {"epsilon": eps_total, "delta": delta_total},
    }, args.out)


def cmd_bench(args):
    from .bench import records_to_csv, run_experiment, summarize

    csv_path = args.csv
    if csv_path is None and args.out:
        csv_path = args.out.rsplit(".", 1)[0] + ".csv"
    records = run_experiment(args.config, args.out, timing=args.timing, csv_path=csv_path)
    if args.out is None:
        sys.stdout.write(records_to_csv(records))
    for s in summarize(records, args.alpha):
        med = "nan" if s.median_error is None else f"{s.median_error:.4f}"
        sys.stderr.write(
            f"{s.key}: trials={s.trials} fails={s.fails} fail_rate_ci=({s.fail_rate_ci[0]:.3f}, "
            f"{s.fail_rate_ci[1]:.3f}) median_error={med}\n"
        )


def cmd_audit(args):
    from .audit import adjacent_pair_generator, exact_ptr_audit, interval_binner, mc_hockey_stick
    from .rescaled import rescaled_gaussian_mechanism
    from .tukey import GridSpec, tukey_ptr

    budget = PrivacyBudget(args.eps, args.delta)
    rng = rngmod.make_rng(args.seed)
    if args.mechanism == "tukey":
        grid = GridSpec(5.0, 1.0, 1)
        n = min(args.n, 6)
        x = rng.integers(-1, 2, size=(n, 1)).astype(float)
        if args.mode == "exact":
            res = exact_ptr_audit(x, grid, budget, 2 * args.eps)
            payload = {
                "kind": "exact",
                "data": x[:, 0].tolist(),
                "distance": res.distance,
                "neighbors": res.neighbors,
                "delta_hat": res.delta_hat,
                "delta_bound": math.exp(args.eps) * args.delta,
            }
        else:
            pair = adjacent_pair_generator(x, args.strategy, rng, sampler=lambda r: r.integers(-5, 6, size=1))
            rep = mc_hockey_stick(lambda data, r: tukey_ptr(data, grid, budget, rng=r), pair, 2 * args.eps,
                                  args.trials, rng)
            payload = _mc_payload(rep, pair, math.exp(args.eps) * args.delta)
    else:
        x = rngmod.standard_normal(rng, (3 * args.n, args.d))
        pair = adjacent_pair_generator(x, args.strategy, rng)
        edges = np.linspace(-1.0, 1.0, 21)
        rep = mc_hockey_stick(
            lambda data, r: rescaled_gaussian_mechanism(data, budget, args.beta, r, args.mode or "greedy"),
            pair, 3 * args.eps, args.trials, rng, interval_binner(edges),
        )
        e = math.exp(args.eps)
        payload = _mc_payload(rep, pair, e * (1 + e) * args.delta)
    payload.update(mechanism=args.mechanism, eps=args.eps, delta=args.delta, seed=args.seed)
    _emit(payload, args.out)


def _mc_payload(rep, pair, bound):
    return {
        "kind": "monte_carlo",
        "strategy": pair.strategy,
        "changed_index": pair.changed_index,
        "epsilon_tested": rep.epsilon_tested,
        "delta_hat": rep.delta_hat,
        "confidence_interval": list(rep.confidence_interval),
        "plug_in": rep.plug_in,
        "trials": rep.trials,
        "delta_bound": bound,
    }


def cmd_calibrate(args):
    from .calibration import histogram_sweep, lambda_sweep, smallest_passing

    if args.what == "lambda":
        consts = np.round(np.arange(0.25, 4.01, 0.25), 2)
        pts = lambda_sweep(consts, args.n, args.d, args.beta, args.trials, args.seed)
    else:
        consts = [5, 10, 20, 30, 40, 60, 80]
        pts = histogram_sweep(consts, PrivacyBudget(args.eps, args.delta), args.beta, args.trials, args.seed)
    _emit({
        "what": args.what,
        "seed": args.seed,
        "target": 1 - args.beta,
        "sweep": [{"constant": p.constant, "rate": p.rate, "trials": p.trials} for p in pts],
        "smallest_passing": smallest_passing(pts, 1 - args.beta),
    }, args.out)


def cmd_depth(args):
    from .io import read_dataset
    from .tukey import depth_counts

    x = read_dataset(args.data)
    pts = np.array([[float(v) for v in p.split(",")] for p in args.point])
    counts = depth_counts(x, pts)
    _emit({
        "n": int(x.shape[0]),
        "points": pts.tolist(),
        "depth_counts": [int(c) for c in counts],
        "depth": [float(c) / x.shape[0] for c in counts],
    }, args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="privmean", description="Private mean estimation under unknown covariance.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, mechanism=True):
        if mechanism:
            sp.add_argument("--mechanism", choices=["tukey", "rescaled"], default="rescaled")
        sp.add_argument("--eps", type=float, default=1.0)
        sp.add_argument("--delta", type=float, default=1e-6)
        sp.add_argument("--alpha", type=float, default=0.3)
        sp.add_argument("--beta", type=float, default=0.05)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("estimate", help="run one mechanism on a data file")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--mode", default=None, help="certificate|exact (tukey) or greedy|exact (rescaled)")
    sp.add_argument("--pipeline", choices=["main", "discrete"], default="main")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("bench", help="config-driven sweep")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out", default=None)
    sp.add_argument("--csv", default=None)
    sp.add_argument("--alpha", type=float, default=None, help="accuracy target for the summary")
    sp.add_argument("--timing", action="store_true", help="record wall time (breaks byte-identical replay)")
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("audit", help="privacy audit on an adjacent pair")
    common(sp)
    sp.add_argument("--mode", default=None, help="exact (tukey, tiny instance) or monte-carlo otherwise")
    sp.add_argument("--n", type=int, default=5)
    sp.add_argument("--d", type=int, default=1)
    sp.add_argument("--trials", type=int, default=2000)
    sp.add_argument("--strategy", choices=["worst_subspace", "far_outlier", "random_swap"], default="far_outlier")
    sp.set_defaults(func=cmd_audit)

    sp = sub.add_parser("calibrate", help="constant calibration sweeps")
    common(sp, mechanism=False)
    sp.add_argument("--what", choices=["lambda", "histogram"], default="lambda")
    sp.add_argument("--n", type=int, default=200)
    sp.add_argument("--d", type=int, default=2)
    sp.add_argument("--trials", type=int, default=200)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("depth", help="Tukey depth of query points")
    sp.add_argument("--data", required=True)
    sp.add_argument("--point", action="append", required=True, help="comma-separated coordinates; repeatable")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_depth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except PrivMeanError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
