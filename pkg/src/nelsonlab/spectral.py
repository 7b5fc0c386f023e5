"""Eigen- and linear solves: hand Lanczos with full reorthogonalization,
conjugate gradients, resolvent applications, and the perturbation-theory
quantities built from ground states (gradient and second-derivative
bound)."""

import dataclasses
import math
import threading
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .fock import field_momentum
from .model import assemble_hamiltonian, with_p

GAP_THRESHOLD = 1e-10  # below this the ground state counts as degenerate


def lowest_eigenpair(matvec, size, tol=1e-9, max_iter=400, seed=12345):
    """Lowest eigenpair of a symmetric operator by Lanczos with full
    reorthogonalization.  Breakdowns (invariant subspaces) are handled
    by restarting with a fresh orthogonal direction, which keeps the
    tridiagonal matrix block-valid, so the second Ritz value -- and with
    it the gap estimate -- stays meaningful even for diagonal input.

    Returns (value, vector, info) with info carrying gap / residual /
    iterations / converged / norm_est."""
    max_iter = min(max_iter, size)
    rng = np.random.default_rng(seed)
    V = np.zeros((max_iter + 1, size))
    v = rng.standard_normal(size)
    V[0] = v / np.linalg.norm(v)
    alphas, betas = [], []
    norm_est = 1.0
    evals = evecs = None
    exhausted = False
    j = 0
    while j < max_iter:
        w = matvec(V[j])
        a = float(V[j] @ w)
        alphas.append(a)
        w = w - a * V[j]
        if j > 0:
            w = w - betas[-1] * V[j - 1]
        for _ in range(2):
            w -= V[: j + 1].T @ (V[: j + 1] @ w)
        b = float(np.linalg.norm(w))
        evals, evecs = scipy.linalg.eigh_tridiagonal(
            np.asarray(alphas), np.asarray(betas))
        norm_est = max(abs(evals[0]), abs(evals[-1]), b, 1e-30)
        res_est = b * abs(evecs[-1, 0])
        if j >= 1 and res_est <= tol * norm_est:
            break
        if b <= 1e-13 * norm_est:
            # invariant subspace: continue in its orthogonal complement
            w = rng.standard_normal(size)
            for _ in range(2):
                w -= V[: j + 1].T @ (V[: j + 1] @ w)
            b = float(np.linalg.norm(w))
            if b < 1e-10:
                exhausted = True
                break
            betas.append(0.0)
        else:
            betas.append(b)
        V[j + 1] = w / b
        j += 1

    vec = V[: len(alphas)].T @ evecs[:, 0]
    vec /= np.linalg.norm(vec)
    val = float(evals[0])
    res_true = float(np.linalg.norm(matvec(vec) - val * vec))
    gap = float(evals[1] - evals[0]) if len(evals) > 1 else math.inf
    converged = exhausted or res_true <= tol * max(norm_est, 1.0)
    info = {
        "gap": gap,
        "residual": res_true,
        "iterations": len(alphas),
        "converged": converged,
        "norm_est": norm_est,
    }
    return val, vec, info


def cg_solve(matvec, b, tol=1e-10, max_iter=None, x0=None):
    """Conjugate gradients for a symmetric positive definite operator,
    to relative residual tol.  Returns (x, iterations)."""
    b = np.asarray(b, dtype=float)
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return np.zeros_like(b), 0
    if max_iter is None:
        max_iter = min(10 * b.size + 100, 20_000)
    x = np.zeros_like(b) if x0 is None else x0.astype(float, copy=True)
    r = b - matvec(x) if x0 is not None else b.copy()
    p = r.copy()
    rs = float(r @ r)
    for it in range(1, max_iter + 1):
        Ap = matvec(p)
        denom = float(p @ Ap)
        if denom <= 0:
            raise RuntimeError(
                f"CG breakdown: direction curvature {denom:.3e} <= 0")
        step = rs / denom
        x += step * p
        r -= step * Ap
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= tol * bn:
            return x, it
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise RuntimeError(
        f"CG failed to converge in {max_iter} iterations: "
        f"relative residual {math.sqrt(rs) / bn:.3e}")


def sym_operator_norm(apply_fn, size, iters=40, seed=901):
    """Power-iteration estimate of the spectral norm of a symmetric
    operator given only through its action."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(size)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = apply_fn(v)
        est = float(np.linalg.norm(w))
        if est < 1e-300:
            return 0.0
        v = w / est
    return est


# --------------------------------------------------------- ground state


@dataclass(frozen=True, eq=False)
class GroundStateRecord:
    p: np.ndarray
    mu: float
    energy: float
    psi: np.ndarray
    gap: float
    residual: float
    iterations: int
    converged: bool

    @property
    def degenerate(self):
        return self.gap < GAP_THRESHOLD

    def replace_psi(self, psi):
        return dataclasses.replace(self, psi=np.asarray(psi, dtype=float))


def _sign_fix(vec):
    if vec[0] < -1e-12:
        return -vec
    if abs(vec[0]) <= 1e-12:
        nz = np.nonzero(np.abs(vec) > 1e-12)[0]
        if nz.size and vec[nz[0]] < 0:
            return -vec
    return vec


def ground_state(H, spec=None, tol=1e-9, max_iter=400, seed=12345):
    matvec = (lambda x: H @ x)
    size = H.shape[0]
    val, vec, info = lowest_eigenpair(matvec, size, tol=tol,
                                      max_iter=max_iter, seed=seed)
    vec = _sign_fix(vec)
    p = spec.p.copy() if spec is not None else np.zeros(0)
    mu = spec.boson.mu if spec is not None else math.nan
    return GroundStateRecord(p=p, mu=mu, energy=val, psi=vec,
                             gap=info["gap"], residual=info["residual"],
                             iterations=info["iterations"],
                             converged=info["converged"])


class GroundStateCache:
    """Memoizes ground states of assembled Hamiltonians, keyed by the
    exact physical content of the spec.

    Keys compare P, mu, and the mode grid bit-for-bit.  Rounding them
    would merge nearly-equal momenta (a ray point built by linspace
    versus a literal 0.3) under one key, and the stored record would
    then depend on which caller solved first -- a real problem once
    callers run concurrently and reports must be reproducible.  Exact
    keys cost a few duplicate solves instead."""

    def __init__(self, tol=1e-9):
        self.tol = tol
        self.solves = 0
        self._store = {}
        self._lock = threading.Lock()

    @staticmethod
    def _key(spec):
        return (
            spec.kind, spec.dispersion.mass, spec.formfactor.lam,
            spec.formfactor.alpha, spec.formfactor.cutoff,
            float(spec.boson.mu), spec.basis.n_max,
            spec.grid.modes.tobytes(),
            spec.p.tobytes(),
        )

    def get(self, spec):
        key = self._key(spec)
        with self._lock:
            rec = self._store.get(key)
        if rec is not None:
            return rec
        rec = ground_state(assemble_hamiltonian(spec), spec=spec,
                           tol=self.tol)
        with self._lock:
            self._store.setdefault(key, rec)
            self.solves += 1
        return self._store[key]


# --------------------------------------------------------- sign pattern


def sign_pattern_check(rec, spec, coef_tol=1e-9):
    """Ground-state positivity structure: after sign fixing, sector-n
    coefficients carry sign (-1)^n, and occupations touching modes where
    v vanishes carry no mass.  Returns (ok, report)."""
    if rec.gap <= GAP_THRESHOLD:
        raise ValueError("sign pattern undefined for a degenerate "
                         f"ground state (gap {rec.gap:.3e})")
    basis = spec.basis
    psi = rec.psi
    signs = np.where(basis.totals % 2 == 0, 1.0, -1.0)
    signed = psi * signs
    big = np.abs(psi) > coef_tol
    worst_sign = float(np.min(signed[big])) if np.any(big) else 0.0

    v = spec.formfactor.values(spec.grid)
    dead_modes = v == 0.0
    touches_dead = basis.occupations[:, dead_modes].sum(axis=1) > 0
    worst_dead = (float(np.max(np.abs(psi[touches_dead])))
                  if np.any(touches_dead) else 0.0)
    ok = worst_sign > 0.0 and worst_dead <= coef_tol
    report = {
        "worst_signed_coefficient": worst_sign,
        "worst_dead_mode_mass": worst_dead,
        "checked_coefficients": int(np.count_nonzero(big)),
    }
    return ok, report


# ----------------------------------------------------------- resolvents


def resolvent_apply(spec, kvec, e_ref, x, n_total=None, tol=1e-10,
                    lam_min=None):
    """Apply R(P,k) = (H(P-k) - e_ref + omega_mu(k))^{-1} by CG.

    n_total restricts to the subspace of total boson number <= n_total
    (a contiguous prefix of the basis); by eigenvalue interlacing the
    full-space positivity certificate covers the restriction."""
    kvec = np.asarray(kvec, dtype=float).reshape(-1)
    Hk = assemble_hamiltonian(with_p(spec, spec.p - kvec))
    om = float(spec.boson.omega_mu(kvec[None, :])[0])
    shift = om - e_ref
    if lam_min is None:
        lam_min, _, _ = lowest_eigenpair(lambda z: Hk @ z, Hk.shape[0],
                                         tol=1e-8, max_iter=300)
    margin = lam_min + shift
    if margin <= 0:
        raise ValueError(
            "gap condition E(P-k) + omega(k) > E(P) violated: shifted "
            f"operator has lowest eigenvalue {margin:.6e}")
    if n_total is not None:
        cut = spec.basis.cumulative_size(n_total)
        Hk = Hk[:cut, :cut].tocsr()
    x = np.asarray(x, dtype=float)
    if x.shape != (Hk.shape[0],):
        raise ValueError(f"x has shape {x.shape}, expected ({Hk.shape[0]},)")
    y, _ = cg_solve(lambda z: Hk @ z + shift * z, x, tol=tol)
    return y


# ------------------------------------------------- derivative formulas


def hellmann_feynman_gradient(rec, spec):
    """grad E(P) = <psi, grad Theta(P - P_f) psi> (diagonal operator)."""
    if rec.degenerate:
        raise ValueError("gradient undefined: degenerate ground state "
                         f"(gap {rec.gap:.3e})")
    K = field_momentum(spec.basis)
    G = spec.dispersion.grad_theta(spec.p[None, :] - K)
    return (rec.psi**2) @ G


def second_derivative_bound(rec, spec, i, H=None, delta=1e-3, fd=True,
                            seed=12345):
    """Second-derivative inequality along axis i:

        d_i^2 E <= 2 C_theta2 - 2 <r, (H - E)^{-1} r>,
        r = (d_i Theta(P - P_f) - d_i E) psi   (orthogonal to psi).

    The solve runs on the deflated operator (H - E) + psi psi^T, which
    is positive definite and agrees with H - E on psi-perp.  fd=True
    additionally returns a Richardson-extrapolated finite-difference
    second derivative (error O(delta^4))."""
    if H is None:
        H = assemble_hamiltonian(spec)
    g = hellmann_feynman_gradient(rec, spec)
    K = field_momentum(spec.basis)
    Gi = spec.dispersion.grad_theta(spec.p[None, :] - K)[:, i]
    psi = rec.psi
    r = (Gi - g[i]) * psi
    r -= psi * (psi @ r)
    e0 = rec.energy

    def deflated(z):
        return H @ z - e0 * z + psi * (psi @ z)

    y, _ = cg_solve(deflated, r, tol=1e-12)
    y -= psi * (psi @ y)
    norm_sq = float(r @ y)
    bound = 2.0 * spec.dispersion.c_theta2 - 2.0 * norm_sq

    fd_value = None
    if fd:
        e_i = np.zeros(spec.grid.d)
        e_i[i] = 1.0

        def energy_at(step):
            sp = with_p(spec, spec.p + step * e_i)
            return ground_state(assemble_hamiltonian(sp), spec=sp,
                                seed=seed).energy

        def central(dlt):
            return (energy_at(dlt) - 2.0 * e0 + energy_at(-dlt)) / dlt**2

        fd_value = (4.0 * central(delta / 2) - central(delta)) / 3.0

    return {"bound": bound, "fd_value": fd_value, "norm_sq": norm_sq,
            "gradient": g}
