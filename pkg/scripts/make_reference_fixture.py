"""Regenerate tests/fixtures/reference_spectra.json from the Jacobi oracle.

Usage: python scripts/make_reference_fixture.py [--big-m 120]
"""
import argparse
import json
from pathlib import Path

from thermal_spectra.hamiltonian import Potential
from thermal_spectra.oracle import reference_spectrum

POTENTIALS = {
    "anharmonic": Potential("anharmonic"),
    "harmonic": Potential("harmonic"),
    "quartic": Potential("polynomial", (0.0, 0.0, 0.0, 0.0, 1.0)),
}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--big-m", type=int, default=120)
    ap.add_argument("--out", default=str(Path(__file__).parents[1] / "tests/fixtures/reference_spectra.json"))
    args = ap.parse_args()
    doc = {}
    for name, V in POTENTIALS.items():
        res = reference_spectrum(V, args.big_m)
        doc[name] = {
            "potential": V.to_dict(),
            "big_m": args.big_m,
            "eigenvalues": res.eigenvalues.tolist(),
            "certification_change": res.diagnostics["certification_change"],
        }
        print(name, res.eigenvalues[:3], res.diagnostics["certification_change"])
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
