"""Regenerate the bundled FCIDUMP files and their reference FCI energies.

Requires pyscf, which is not a runtime dependency of the package.
Run from the repository root:  python tools/make_fcidumps.py
"""
import json
from pathlib import Path

from pyscf import fci, gto, scf
from pyscf.tools import fcidump

DATA = Path(__file__).resolve().parents[1] / "src" / "qcbtafqmc" / "data"

SYSTEMS = {
    "h2_sto3g": ("H 0 0 0; H 0 0 0.74", "sto-3g"),
    "h2_631g": ("H 0 0 0; H 0 0 0.74", "6-31g"),
    "h4_sto3g": ("H 0 0 0; H 0 0 1.5; H 0 0 3.0; H 0 0 4.5", "sto-3g"),
    "h4_631g": ("H 0 0 0; H 0 0 1.5; H 0 0 3.0; H 0 0 4.5", "6-31g"),
}


def main():
    refs = {}
    for name, (atom, basis) in SYSTEMS.items():
        mol = gto.M(atom=atom, basis=basis, unit="Angstrom", verbose=0)
        mf = scf.RHF(mol).run(conv_tol=1e-12)
        fcidump.from_scf(mf, str(DATA / f"{name}.fcidump"), tol=1e-14,
                         float_format="%.16e")
        solver = fci.FCI(mf)
        solver.conv_tol = 1e-13
        e_fci = solver.kernel()[0]
        refs[name] = {"atom": atom, "basis": basis, "e_rhf": mf.e_tot,
                      "e_fci": e_fci, "norb": mol.nao, "nelec": mol.nelectron}
        print(f"{name:10s} norb={mol.nao:2d} E_RHF={mf.e_tot:.10f} E_FCI={e_fci:.10f}")
    (DATA / "reference_energies.json").write_text(json.dumps(refs, indent=2) + "\n")


if __name__ == "__main__":
    main()
