"""Single-message error against n: Monte-Carlo MSE and the analytic bound, with log-log slopes.

    python scripts/single_scaling.py --ns 1000 10000 100000 --trials 500
    python scripts/single_scaling.py --ns 100000 1000000 10000000 --trials 50
"""

import argparse

from shuffle_agg.experiments import loglog_slope
from shuffle_agg.runtime import estimate_err
from shuffle_agg.single_message import select_params, single_message_protocol


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ns", type=lambda s: int(float(s)), nargs="+", default=[1000, 10_000, 100_000])
    parser.add_argument("--d", type=int, default=1)
    parser.add_argument("--eps", type=float, default=1.0)
    parser.add_argument("--delta", type=float, default=1e-5)
    parser.add_argument("--trials", type=int, default=500)
    parser.add_argument("--family", default="sup")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--bound-only", action="store_true", help="skip the simulation")
    args = parser.parse_args()

    print(f"{'n':>12} {'r':>5} {'gamma':>10} {'bound':>12} {'mse':>12} {'ci95':>10}")
    bounds, mses = [], []
    for i, n in enumerate(args.ns):
        params = select_params(args.eps, args.delta, n, args.d)
        bound = 4 * params.mse_bound()
        bounds.append(bound)
        mse = ci = float("nan")
        if not args.bound_only:
            est = estimate_err(single_message_protocol(params), args.family, n, args.d, args.trials,
                               seed=[args.seed, i])
            mse, ci = est.mse_mean, est.mse_ci95
            mses.append(mse)
        print(f"{n:>12} {params.r:>5} {params.gamma:>10.4g} {bound:>12.5g} {mse:>12.5g} {ci:>10.3g}")
    target = args.d / (args.d + 2)
    print(f"bound slope {loglog_slope(args.ns, bounds):.3f} (asymptotic target {target:.3f})")
    if mses:
        print(f"measured slope {loglog_slope(args.ns, mses):.3f}")


if __name__ == "__main__":
    main()
