"""Sweep the stable-histogram sample-size constant C on concentrated bin data."""
import argparse

from privmean.calibration import histogram_sample_size, histogram_sweep, smallest_passing
from privmean.primitives import PrivacyBudget


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--eps", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1e-6)
    p.add_argument("--beta", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--constants", type=float, nargs="+", default=[2, 5, 10, 20, 40, 80])
    args = p.parse_args()
    budget = PrivacyBudget(args.eps, args.delta)
    points = histogram_sweep(args.constants, budget, args.beta, args.trials, args.seed)
    print("C      n      success_rate")
    for pt in points:
        print(f"{pt.constant:5.1f}  {histogram_sample_size(pt.constant, budget, args.beta):5d}  {pt.rate:.4f}")
    print(f"smallest C with rate >= 1 - beta: {smallest_passing(points, 1 - args.beta)}")


if __name__ == "__main__":
    main()
