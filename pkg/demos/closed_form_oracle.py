"""Smallest honest test of the assembled Hamiltonian: one mode, one
boson.  The matrix is 2x2, so the ground energy has a closed form

    E = (t0 + t1)/2 - sqrt(((t1 - t0)/2)^2 + g^2)

and the numerical eigenvalue has to hit it to machine precision.
Also checks the decoupled limit: at lambda = 0 the ground state is
the bare vacuum and E(P) is exactly the particle dispersion.
"""

import math

import numpy as np

from nelsonlab.fock import ModeGrid, enumerate_basis
from nelsonlab.model import (BosonDispersion, FormFactor, ModelSpec,
                             ParticleDispersion, assemble_hamiltonian,
                             build_model)
from nelsonlab.spectral import ground_state


def one_mode(kind, lam, mu, mass=1.0):
    grid = ModeGrid(d=1, modes=np.array([[1.0]]),
                    weights=np.array([1.0]), h=1.0)
    return ModelSpec(
        dispersion=ParticleDispersion(kind=kind, mass=mass),
        boson=BosonDispersion(mu=mu),
        formfactor=FormFactor(lam=lam, alpha=0.25, cutoff=10.0),
        p=np.array([0.0]),
        grid=grid,
        basis=enumerate_basis(grid, 1),
    )


print("two-level closed form")
print(f"{'case':<16} {'E closed':>22} {'E numeric':>22} {'|diff|':>10}")
for label, kind, lam, mu in [("nr massive", "nr", 0.3, 0.75),
                             ("nr massless", "nr", 0.15, 0.0),
                             ("sr massive", "sr", 0.3, 0.75)]:
    spec = one_mode(kind, lam, mu)
    H = np.asarray(assemble_hamiltonian(spec).todense())
    t0, t1, g = H[0, 0], H[1, 1], H[0, 1]
    closed = (t0 + t1) / 2.0 - math.sqrt(((t1 - t0) / 2.0) ** 2 + g**2)
    numeric = float(np.linalg.eigvalsh(H)[0])
    print(f"{label:<16} {closed:>22.16f} {numeric:>22.16f} "
          f"{abs(closed - numeric):>10.2e}")

print()
print("decoupled limit (lambda = 0, full grid m = 8, N_max = 3)")
for p in (0.0, 0.3, 0.6):
    spec = build_model(kind="nr", lam=0.0, alpha=0.75, k_max=1.0,
                       mass=1.0, mu=0.4, m=8, n_max=3, p=p)
    rec = ground_state(assemble_hamiltonian(spec), spec, tol=1e-12)
    theta = float(spec.dispersion.theta(spec.p))
    overlap = abs(rec.psi[0])
    print(f"  P = {p:3.1f}   E - Theta(P) = {rec.energy - theta:+.3e}"
          f"   |<vac|psi>| = {overlap:.16f}")
