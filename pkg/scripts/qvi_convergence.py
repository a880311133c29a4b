"""QVI gaps against the oracle for a range of basis sizes.

Shows where the truncated basis, not the optimiser, limits the gap accuracy.

Usage: python scripts/qvi_convergence.py [--family fourier] [--sizes 20 30 40]
"""
import argparse

import numpy as np

from thermal_spectra.basis import BasisSet
from thermal_spectra.hamiltonian import Potential, matrix_elements
from thermal_spectra.oracle import jacobi_diagonalize, reference_spectrum
from thermal_spectra.qvi import QviConfig, train_qvi


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--family", default="fourier", choices=("fourier", "hermite"))
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 30, 40])
    ap.add_argument("--states", type=int, default=10)
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--train", action="store_true", help="also run the variational trainer")
    args = ap.parse_args()

    V = Potential()
    ref = reference_spectrum(V).eigenvalues[: args.states]
    ref_gaps = (ref - ref[0])[1:]
    for m in args.sizes:
        basis = BasisSet(args.family, m, 10.0) if args.family == "fourier" else BasisSet(args.family, m)
        # best achievable in this basis: exact diagonalisation of the truncated matrix
        floor = jacobi_diagonalize(matrix_elements(V, basis).entries).eigenvalues[: args.states]
        rel = np.abs((floor - floor[0])[1:] - ref_gaps) / ref_gaps
        line = f"{args.family} M={m:3d}: basis floor max rel gap err {rel.max():.2e}"
        if args.train:
            res = train_qvi(QviConfig(n_states=args.states, basis=basis, max_steps=args.steps), V, seed=0)
            rel_t = np.abs(res.gaps[1:] - ref_gaps) / ref_gaps
            line += f", trained {rel_t.max():.2e}"
        print(line)


if __name__ == "__main__":
    main()
