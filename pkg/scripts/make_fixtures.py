"""Regenerate the bundled FCIDUMP fixtures.

Requires pyscf, which is not a runtime dependency of the package:

    python -m venv /tmp/chem && /tmp/chem/bin/pip install pyscf
    /tmp/chem/bin/python scripts/make_fixtures.py
"""

from pathlib import Path

from pyscf import gto, scf, fci
from pyscf.tools import fcidump

OUT = Path(__file__).resolve().parents[1] / "src" / "sqdrift" / "data"

SYSTEMS = {
    "h2_sto3g": "H 0 0 0; H 0 0 0.74",
    "h4_chain_sto3g": "; ".join(f"H 0 0 {1.0 * i:.2f}" for i in range(4)),
    "h6_chain_sto3g": "; ".join(f"H 0 0 {1.0 * i:.2f}" for i in range(6)),
}


def main():
    for name, atom in SYSTEMS.items():
        mol = gto.M(atom=atom, basis="sto-3g", unit="Angstrom", symmetry=False)
        mf = scf.RHF(mol).run(conv_tol=1e-12)
        path = OUT / f"{name}.fcidump"
        fcidump.from_scf(mf, str(path), tol=1e-14)
        e_fci = fci.FCI(mf).kernel()[0]
        print(f"{name}: E_HF={mf.e_tot:.12f} E_FCI={e_fci:.12f}")


if __name__ == "__main__":
    main()
