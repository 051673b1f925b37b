#!/usr/bin/env python3
"""POD spectrum experiment: correlation eigenvalues and retained energy.

Collects grid snapshots of the thermal block, prints the normalized POD
eigenvalues and the basis size needed for a range of energy tolerances.
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
    parser.add_argument("--snapshots", type=int, default=49)
    args = parser.parse_args()

    problem = romkit.make_thermal_block(args.mesh_n, args.blocks,
                                        args.mu_lo, args.mu_hi)
    points = romkit.sample_parameters(problem.domain, args.snapshots, "grid")
    snapshots = romkit.collect_snapshots(problem, points)
    spectrum = romkit.pod_spectrum(snapshots)

    w = spectrum.eigenvalues
    print(f"# M={snapshots.M} n_free={problem.n_free} rank={spectrum.rank}")
    print("i  lambda_i/lambda_1  cumulative_energy")
    cumulative = np.cumsum(w) / w.sum()
    for i in range(spectrum.rank):
        print(f"{i + 1:<3d}{w[i] / w[0]:<19.3e}{cumulative[i]:.12f}")
    print("energy_tol  N")
    for tol in (1e-2, 1e-4, 1e-6, 1e-8, 1e-10):
        basis = romkit.pod_basis(snapshots, energy_tol=tol)
        print(f"{tol:<12.0e}{basis.N}")


if __name__ == "__main__":
    main()
