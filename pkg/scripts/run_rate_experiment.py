"""Run a bench config and print the per-group summary (fail rate, median error)."""
import argparse

from privmean.bench import run_experiment, summarize


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("config", help="YAML sweep, e.g. configs/rate_sweep.yaml")
    p.add_argument("--out", default="results.jsonl")
    p.add_argument("--csv", default=None)
    p.add_argument("--alpha", type=float, default=0.3)
    args = p.parse_args()
    records = run_experiment(args.config, args.out, csv_path=args.csv)
    print(f"{'mechanism':10s} {'family':20s} {'n':>8s} {'d':>2s} {'fails':>6s} {'median err':>11s}  success")
    for g in summarize(records, args.alpha):
        mechanism, family, n, d = g.key[:4]
        med = "nan" if g.median_error is None else f"{g.median_error:.4g}"
        print(f"{mechanism:10s} {family:20s} {n:8d} {d:2d} {g.fails:3d}/{g.trials:<3d} {med:>10s}  "
              f"{g.success_rate:.3f}")


if __name__ == "__main__":
    main()
