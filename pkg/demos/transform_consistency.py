"""Direct vs transformed ground energy on a small auxiliary grid.

The dressed operator T(P, f) is unitarily equivalent to the fiber
Hamiltonian H(P) before truncation, so the two lowest energies must
agree -- but the truncation breaks the equivalence, since the Weyl
conjugation does not preserve the boson-number cutoff.  The gap
|E_T - E_H| is therefore a direct meter of truncation error: it has
to shrink, fast, as N_max grows.  A 4-mode grid keeps the deepest
truncation affordable.
"""

import numpy as np

from nelsonlab.config import load_config
from nelsonlab.model import (assemble_transformed, dressing_function,
                             transformed_matvec)
from nelsonlab.spectral import (GroundStateCache,
                                hellmann_feynman_gradient,
                                lowest_eigenpair)

cfg = load_config(env={})
cache = GroundStateCache(tol=cfg.solver.tol)

print(f"kind = {cfg.model.kind}, alpha = {cfg.model.alpha}, "
      f"lambda = {cfg.model.lam}, m = 4, P = 0.3, mu = 0.05")
print(f"{'N_max':>6} {'basis':>6} {'E_H':>16} {'E_T':>16} {'gap':>11}")

prev = None
for n_max in (4, 6, 8):
    spec = cfg.build_spec(p=0.3, mu=0.05, m=4, n_max=n_max)
    rec = cache.get(spec)
    grad = hellmann_feynman_gradient(rec, spec)
    g = dressing_function(spec, grad)
    if spec.kind == "nr":
        mv = transformed_matvec(spec, g.values)
        e_t, _, _ = lowest_eigenpair(mv, spec.basis.size, tol=1e-12)
    else:
        T = assemble_transformed(spec, g.values)
        e_t = float(np.linalg.eigvalsh(T)[0])
    gap = abs(float(e_t) - rec.energy)
    note = ""
    if prev is not None:
        note = f"  ({prev / gap:,.0f}x smaller)" if gap < prev else "  (!)"
    print(f"{n_max:>6} {spec.basis.size:>6} {rec.energy:>16.12f}"
          f" {float(e_t):>16.12f} {gap:>11.3e}{note}")
    prev = gap
