#!/usr/bin/env python3
"""Greedy estimator-decay experiment on the thermal block.

Runs the certified greedy loop and prints one line per iteration with the
selected parameter and the max relative estimator over the training set.
"""

import argparse

import numpy as np

import romkit


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--blocks", type=int, default=2)
    parser.add_argument("--mesh-n", type=int, default=32)
    parser.add_argument("--mu-lo", type=float, default=0.5)
    parser.add_argument("--mu-hi", type=float, default=2.0)
    parser.add_argument("--train", type=int, default=500)
    parser.add_argument("--tol", type=float, default=1e-6)
    parser.add_argument("--n-max", type=int, default=40)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    problem = romkit.make_thermal_block(args.mesh_n, args.blocks,
                                        args.mu_lo, args.mu_hi)
    training = romkit.sample_parameters(problem.domain, args.train, "random",
                                        seed=args.seed)
    basis, history, _, _ = romkit.greedy_build(problem, training,
                                               tol=args.tol, n_max=args.n_max)

    print(f"# n_free={problem.n_free} training={len(training)} "
          f"stop={history.stopping_reason}")
    print("N  max_estimator  selected_mu")
    for i, (mu, eta) in enumerate(zip(history.selected_parameters,
                                      history.max_estimator_per_iteration)):
        mu_text = ",".join(f"{v:.4f}" for v in np.asarray(mu))
        print(f"{i + 1:<3d}{eta:<15.3e}{mu_text}")
    print(f"# final basis size N={basis.N}")


if __name__ == "__main__":
    main()
