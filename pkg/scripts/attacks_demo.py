"""Reconstruction success against noise, and the poisoning gap under both shuffler topologies.

    python scripts/attacks_demo.py --sigmas 0 0.1 0.3 1 3 --trials 200
"""

import argparse

import numpy as np

from shuffle_agg.attacks import greedy_packing, poisoning_experiment, reconstruction_experiment
from shuffle_agg.baselines import additive_shares_protocol, closed_form_err
from shuffle_agg.multi_message import make_multi_params, multi_vector_protocol
from shuffle_agg.transforms import rotate_symmetrize


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sigmas", type=float, nargs="+", default=[0.0, 0.1, 0.3, 1.0, 3.0])
    parser.add_argument("--n", type=int, default=3)
    parser.add_argument("--k", type=int, default=2)
    parser.add_argument("--d", type=int, default=2)
    parser.add_argument("--rho", type=float, default=0.2)
    parser.add_argument("--trials", type=int, default=200)
    parser.add_argument("--poison-d", type=int, default=16)
    parser.add_argument("--poison-n", type=int, default=100)
    parser.add_argument("--poison-trials", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    packing = greedy_packing(args.d, args.rho, args.seed)
    print(f"packing: {len(packing)} points, rho={args.rho}, d={args.d}")
    print(f"{'sigma':>7} {'Err/n':>10} {'E min dist':>11} {'success':>8}")
    for s in args.sigmas:
        proto = rotate_symmetrize(additive_shares_protocol(args.d, args.k, sigma=s))
        rep = reconstruction_experiment(proto, packing, args.n, args.k, args.trials,
                                        np.random.default_rng(args.seed))
        err_n = closed_form_err(args.n, args.k, s, args.d) / args.n
        print(f"{s:>7.2f} {err_n:>10.4g} {rep.mean_min_dist:>11.4g} {rep.success_rate:>8.3f}")

    params = make_multi_params(1.0, 1e-5, args.poison_n, args.poison_d)
    rep = poisoning_experiment(multi_vector_protocol(params), args.poison_n, args.poison_trials,
                               np.random.default_rng(args.seed))
    print(f"poisoning: message norm {rep.message_norm:.1f}, below threshold {rep.below_threshold}")
    for topo in ("single", "per-coordinate"):
        print(f"  {topo:>15}: honest {rep.honest_mse[topo]:.4g} poisoned {rep.poisoned_mse[topo]:.4g} "
              f"gap {rep.gap[topo]:.4g} dropped {rep.dropped[topo]}")
    print(f"  gap ratio {rep.ratio:.1f}")


if __name__ == "__main__":
    main()
