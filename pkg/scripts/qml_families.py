"""Train the three QML families on one shared endpoint bank and rank them.

Prints the gaps, per-state L2 distance to the Jacobi oracle and the diagonal
dominance of each family, and writes the table to --out as JSON.

Usage: python scripts/qml_families.py [--beta 1] [--steps 100000] [--paths 1000000]
"""
import argparse
import json
import time

import numpy as np

from thermal_spectra.cli import compare
from thermal_spectra.hamiltonian import Potential
from thermal_spectra.oracle import reference_spectrum
from thermal_spectra.qml import QmlConfig, endpoint_bank, train_qml
from thermal_spectra.sampler import SamplerSettings

FAMILIES = ("mixture", "mixture_flow", "flow_only")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--beta", type=float, default=1.0)
    ap.add_argument("--steps", type=int, default=100_000)
    ap.add_argument("--paths", type=int, default=1_000_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--families", nargs="+", default=list(FAMILIES), choices=FAMILIES)
    ap.add_argument("--out", default="qml_families.json")
    args = ap.parse_args()

    V = Potential()
    oracle = reference_spectrum(V)
    t0 = time.time()
    bank = endpoint_bank(V, args.beta, args.paths, 32, seed=args.seed,
                         settings=SamplerSettings(n_walkers=1000, burn_in=500, thin=20))
    print(f"bank: {len(bank)} endpoint pairs in {time.time() - t0:.0f}s")

    grid = np.linspace(-10.0, 10.0, 2001)
    table = {}
    for fam in args.families:
        t0 = time.time()
        cfg = QmlConfig(beta=args.beta, family=fam, max_steps=args.steps)
        res = train_qml(cfg, V, bank, seed=args.seed)
        l2 = compare(res, oracle, cfg.n_states, grid)["l2"]
        table[fam] = {
            "gaps": res.gaps.tolist(),
            "l2": list(l2),
            "mean_l2_0_2": float(np.mean(l2[:3])),
            "diagonal_dominance": res.diagnostics["diagonal_dominance"],
            "seconds": time.time() - t0,
        }
        print(f"{fam:13s} gaps {np.round(res.gaps, 4)} mean L2(0-2) {np.mean(l2[:3]):.4f} "
              f"dd {res.diagnostics['diagonal_dominance']:.3f} ({time.time() - t0:.0f}s)")
    with open(args.out, "w") as fh:
        json.dump({"args": vars(args), "families": table}, fh, indent=2)


if __name__ == "__main__":
    main()
