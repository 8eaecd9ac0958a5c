"""Sweep the goodness constant c_lambda and print the fraction of good synthetic datasets."""
import argparse

from privmean.calibration import lambda_sweep, smallest_passing


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--family", default="gaussian")
    p.add_argument("--constants", type=float, nargs="+", default=[0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0, 4.0])
    args = p.parse_args()
    points = lambda_sweep(args.constants, args.n, args.d, args.beta, args.trials, args.seed, args.family)
    print("c_lambda  good_rate")
    for pt in points:
        print(f"{pt.constant:8.3f}  {pt.rate:.4f}")
    print(f"smallest constant with rate >= 1 - beta: {smallest_passing(points, 1 - args.beta)}")


if __name__ == "__main__":
    main()
