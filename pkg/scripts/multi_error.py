"""Multi-message error ratio MSE / (d ln(1/delta) / eps^2) across dimensions.

    python scripts/multi_error.py --ds 4 8 16 32 --n 1000 --trials 100
"""

import argparse
import math

from shuffle_agg.multi_message import make_multi_params, multi_message_protocol, split_budget
from shuffle_agg.runtime import estimate_err
from shuffle_agg.scalar_engine import discrete_laplace_variance, noise_parameter


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--ds", type=int, nargs="+", default=[4, 8, 16, 32])
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--eps", type=float, default=1.0)
    parser.add_argument("--delta", type=float, default=1e-5)
    parser.add_argument("--level", type=float, default=4.0)
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"{'d':>4} {'eps0':>9} {'mse':>12} {'closed form':>12} {'ratio':>8}")
    ratios = []
    for d in args.ds:
        params = make_multi_params(args.eps, args.delta, args.n, d, level=args.level)
        est = estimate_err(multi_message_protocol(params), "sup", args.n, d, args.trials, seed=[args.seed, d])
        eps0, _ = split_budget(args.eps, args.delta, d)
        # 2d noisy coefficient sums, doubled by the un-shift, scaled by C_K^2/d, half kept by U^T
        closed = 4 * args.level**2 * discrete_laplace_variance(noise_parameter(eps0))
        ratio = est.mse_mean / (d * math.log(1 / args.delta) / args.eps**2)
        ratios.append(ratio)
        print(f"{d:>4} {eps0:>9.5f} {est.mse_mean:>12.5g} {closed:>12.5g} {ratio:>8.1f}")
    print(f"max/min ratio {max(ratios) / min(ratios):.3f}")


if __name__ == "__main__":
    main()
