"""Model data: particle/boson dispersions, form factors, dressing
functions, and assembly of the fiber Hamiltonian

    H(P) = Theta(P - P_f) + dGamma(omega_mu) + phi(v)

and its dressed counterpart

    T(P,f) = Theta(v_P(f)) + dGamma(omega_mu) - phi(omega_mu f)
             + s(f, omega_mu f) + phi(v) - 2 s(f, v),
    v_P(f) = P - P_f + phi(k f) - s(f, k f)   (componentwise in k).

All integrals are discrete quadratures  s(f,g) = sum_i w_i f_i g_i  on
the mode grid.
"""

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .fock import (
    build_mode_grid,
    dgamma_diag,
    enumerate_basis,
    field_momentum,
    field_operator,
)

KINDS = ("nr", "sr")

#: tolerance used by the transform-consistency checks (finite-cutoff
#: unitary equivalence of H and T under the Weyl dressing)
TRANSFORM_CONSISTENCY_TOL = 1e-4


@dataclass(frozen=True)
class ParticleDispersion:
    """Kinetic energy of the tracer particle.

    nr: Theta(p) = |p|^2 / (2M);  sr: Theta(p) = sqrt(M^2 + |p|^2).
    Both have Hessian bounded by (1/M) I, i.e. C_theta2 = 1/(2M)."""

    kind: str
    mass: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")

    def theta(self, p):
        p = np.asarray(p, dtype=float)
        sq = np.sum(p * p, axis=-1)
        if self.kind == "nr":
            return sq / (2.0 * self.mass)
        return np.sqrt(self.mass**2 + sq)

    def grad_theta(self, p):
        p = np.asarray(p, dtype=float)
        if self.kind == "nr":
            return p / self.mass
        return p / self.theta(p)[..., None]

    @property
    def c_theta2(self):
        return 1.0 / (2.0 * self.mass)


@dataclass(frozen=True)
class BosonDispersion:
    """Massless dispersion omega(k) = |k| with artificial mass mu:
    omega_mu(k) = sqrt(|k|^2 + mu^2)."""

    mu: float = 0.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")

    def omega(self, k):
        k = np.asarray(k, dtype=float)
        return np.sqrt(np.sum(k * k, axis=-1))

    def omega_mu(self, k):
        k = np.asarray(k, dtype=float)
        return np.sqrt(np.sum(k * k, axis=-1) + self.mu**2)

    @property
    def c_omega(self):
        """sup_k |k| / omega_mu(k) <= 1, with equality at mu = 0."""
        return 1.0


@dataclass(frozen=True)
class FormFactor:
    """v(k) = lam * |k|^alpha for |k| <= cutoff, zero beyond."""

    lam: float
    alpha: float
    cutoff: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.cutoff <= 0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")

    def values(self, grid):
        norms = grid.norms()
        v = self.lam * norms**self.alpha
        v[norms > self.cutoff] = 0.0
        return v

    def require_window(self, d):
        """omega^{-1/2} v must be square integrable near k = 0, which
        for v = lam |k|^alpha in d dimensions means 2*alpha + d - 1 > 0."""
        w = 2.0 * self.alpha + d - 1.0
        if w <= 0:
            raise ValueError(
                "form factor violates (H4): need 2*alpha + d - 1 > 0, "
                f"got 2*({self.alpha}) + {d} - 1 = {w}")

    def infrared_critical(self, d):
        """True iff omega^{-1} v fails to be square integrable near 0."""
        return 2.0 * self.alpha + d - 2.0 <= 0


@dataclass(frozen=True, eq=False)
class ModelSpec:
    dispersion: ParticleDispersion
    boson: BosonDispersion
    formfactor: FormFactor
    p: np.ndarray
    grid: object
    basis: object

    def __post_init__(self):
        object.__setattr__(self, "p",
                           np.asarray(self.p, dtype=float).reshape(-1))
        if self.p.shape != (self.grid.d,):
            raise ValueError(
                f"P has shape {self.p.shape}, grid dimension is {self.grid.d}")
        if not np.all(np.isfinite(self.p)):
            raise ValueError("P must be finite")
        self.formfactor.require_window(self.grid.d)

    @property
    def kind(self):
        return self.dispersion.kind


def build_model(kind, lam, alpha, k_max, mass, mu, m, n_max, p, d=1,
                hard_limit=200_000):
    grid = build_mode_grid(d=d, k_max=k_max, m=m)
    basis = enumerate_basis(grid, n_max, hard_limit=hard_limit)
    p_arr = np.asarray(p, dtype=float).reshape(-1)
    if p_arr.size == 1 and d > 1:
        p_arr = np.full(d, p_arr[0])
    return ModelSpec(
        dispersion=ParticleDispersion(kind=kind, mass=mass),
        boson=BosonDispersion(mu=mu),
        formfactor=FormFactor(lam=lam, alpha=alpha, cutoff=k_max),
        p=p_arr,
        grid=grid,
        basis=basis,
    )


def with_p(spec, p):
    return dataclasses.replace(spec, p=np.asarray(p, dtype=float).reshape(-1))


def with_mu(spec, mu):
    return dataclasses.replace(spec, boson=BosonDispersion(mu=mu))


def refine_grid(spec, m_new):
    """The same model on a finer momentum grid (m_new points per axis)."""
    if spec.grid.k_max is None:
        raise ValueError("grid has no recorded k_max; cannot refine")
    grid = build_mode_grid(d=spec.grid.d, k_max=spec.grid.k_max, m=m_new)
    basis = enumerate_basis(grid, spec.basis.n_max)
    return dataclasses.replace(spec, grid=grid, basis=basis)


def s_product(grid, f, g):
    """Discrete quadrature pairing s(f, g) = sum_i w_i f_i g_i."""
    return float(np.sum(grid.weights * np.asarray(f) * np.asarray(g)))


# ------------------------------------------------------------ dressing


@dataclass(frozen=True, eq=False)
class DressingFunction:
    """f_{Q,mu}(k) = v(k) / (omega_mu(k) - k . Q), |Q| < 1."""

    q: np.ndarray
    mu: float
    values: np.ndarray
    norm_w: float
    norm_sharp: float
    formal: bool           # mu = 0: only formally a dressing function
    _grid: object = dataclasses.field(repr=False, default=None)
    _kind: str = dataclasses.field(repr=False, default="nr")
    _vvals: np.ndarray = dataclasses.field(repr=False, default=None)

    def with_values(self, values):
        nw, ns = _dressing_norms(self._grid, self._kind, self._vvals,
                                 self.mu, values)
        return dataclasses.replace(self, values=np.asarray(values, float),
                                   norm_w=nw, norm_sharp=ns)


def _dressing_norms(grid, kind, vvals, mu, values):
    """W-norm: |omega f| + |omega^1/2 f| + ||k| f| + ||k|^1/2 f| + s(f,v);
    the sr norm adds |(|k|^3/2 v |k|^2) f|."""
    f = np.asarray(values, dtype=float)
    norms_k = grid.norms()
    w_mu = np.sqrt(norms_k**2 + mu**2)

    def l2(g):
        return math.sqrt(float(np.sum(grid.weights * g * g)))

    norm_w = (l2(w_mu * f) + l2(np.sqrt(w_mu) * f)
              + l2(norms_k * f) + l2(np.sqrt(norms_k) * f)
              + float(np.sum(grid.weights * f * vvals)))
    norm_sharp = norm_w
    if kind == "sr":
        norm_sharp = norm_w + l2(np.maximum(norms_k**1.5, norms_k**2) * f)
    return norm_w, norm_sharp


def w_norm(spec, values, mu=None):
    """W-norm of an arbitrary mode function on the spec's grid."""
    if mu is None:
        mu = spec.boson.mu
    vvals = spec.formfactor.values(spec.grid)
    nw, _ = _dressing_norms(spec.grid, spec.kind, vvals, mu, values)
    return nw


def dressing_function(spec, q, mu=None):
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (spec.grid.d,):
        raise ValueError(f"Q has shape {q.shape}, expected ({spec.grid.d},)")
    if np.linalg.norm(q) >= 1.0:
        raise ValueError(f"|Q| = {np.linalg.norm(q)} must be < 1")
    if mu is None:
        mu = spec.boson.mu
    modes = spec.grid.modes
    w_mu = np.sqrt(np.sum(modes**2, axis=1) + mu**2)
    denom = w_mu - modes @ q
    if np.any(denom <= 0):
        raise ValueError("dressing denominator omega_mu(k) - k.Q not "
                         "positive on the grid")
    vvals = spec.formfactor.values(spec.grid)
    values = vvals / denom
    nw, ns = _dressing_norms(spec.grid, spec.kind, vvals, mu, values)
    return DressingFunction(q=q, mu=float(mu), values=values, norm_w=nw,
                            norm_sharp=ns, formal=(mu == 0.0),
                            _grid=spec.grid, _kind=spec.kind, _vvals=vvals)


# ------------------------------------------------------------ assembly


def diagonal_energies(spec):
    """Theta(P - K_n) + sum_i n_i omega_mu(k_i) per basis state."""
    K = field_momentum(spec.basis)
    w_mu = spec.boson.omega_mu(spec.grid.modes)
    return (spec.dispersion.theta(spec.p[None, :] - K)
            + dgamma_diag(spec.basis, w_mu))


def assemble_hamiltonian(spec):
    w_mu = spec.boson.omega_mu(spec.grid.modes)
    if spec.boson.mu == 0.0:
        gap = float(np.min(w_mu))
        if gap < 1e-12:
            raise ValueError(
                f"mu = 0 with minimum diagonal gap {gap:.3e} below the "
                "eigensolver shift tolerance")
    vvals = spec.formfactor.values(spec.grid)
    H = scipy.sparse.diags(diagonal_energies(spec), format="csr")
    return (H + field_operator(spec.basis, vvals)).tocsr()


def _transformed_parts(spec, f):
    """Componentwise v_P(f) operators plus the scalar/field remainder.

    f may be a DressingFunction, a plain array of mode values, or None
    (no dressing)."""
    basis, grid = spec.basis, spec.grid
    if f is None:
        fv = np.zeros(grid.n_modes)
    else:
        fv = np.asarray(getattr(f, "values", f), dtype=float)
    modes = grid.modes
    w_mu = spec.boson.omega_mu(modes)
    vvals = spec.formfactor.values(grid)
    K = field_momentum(basis)
    axes = []
    for j in range(grid.d):
        kj_f = modes[:, j] * fv
        diag_j = spec.p[j] - s_product(grid, fv, kj_f) - K[:, j]
        axes.append((scipy.sparse.diags(diag_j, format="csr")
                     + field_operator(basis, kj_f)).tocsr())
    rest_diag = (dgamma_diag(basis, w_mu)
                 + s_product(grid, fv, w_mu * fv)
                 - 2.0 * s_product(grid, fv, vvals))
    rest_off = field_operator(basis, vvals - w_mu * fv)
    return axes, rest_diag, rest_off


def assemble_transformed(spec, f):
    """T(P, f); csr for nr, dense symmetric ndarray for sr."""
    axes, rest_diag, rest_off = _transformed_parts(spec, f)
    rest = scipy.sparse.diags(rest_diag, format="csr") + rest_off
    if spec.kind == "nr":
        kin = sum(A @ A for A in axes) / (2.0 * spec.dispersion.mass)
        return (kin + rest).tocsr()
    sq = sum((A @ A).toarray() for A in axes)
    sq = (sq + sq.T) / 2.0
    w, U = np.linalg.eigh(sq)
    if w[0] < -1e-10:
        raise RuntimeError(
            f"v_P(f)^2 has eigenvalue {w[0]:.3e} < -1e-10: "
            "symmetrization failure")
    w = np.clip(w, 0.0, None)
    kin = (U * np.sqrt(w + spec.dispersion.mass**2)) @ U.T
    T = kin + rest.toarray()
    return (T + T.T) / 2.0


def transformed_matvec(spec, f):
    """Matrix-free x -> T(P,f) x for the nr kind (the kinetic part is
    applied as two sparse products, never formed as a square)."""
    if spec.kind != "nr":
        raise NotImplementedError("matrix-free path is nr-only")
    axes, rest_diag, rest_off = _transformed_parts(spec, f)
    inv2m = 1.0 / (2.0 * spec.dispersion.mass)

    def matvec(x):
        y = rest_diag * x + rest_off @ x
        for A in axes:
            y += inv2m * (A @ (A @ x))
        return y

    return matvec


# ---------------------------------------------------------- hypotheses


def check_hypotheses(spec, mu_schedule=(0.4, 0.2, 0.1, 0.05)):
    """Report-only verification of the standing hypotheses on the model
    functions, with grid-sampled witnesses."""
    grid = spec.grid
    modes = grid.modes
    bos = spec.boson
    report = {}

    report["H1"] = {
        "ok": True,
        "kind": spec.kind,
        "c_theta2": spec.dispersion.c_theta2,
    }
    if spec.kind == "sr":
        report["H1"]["c_theta11"] = 1.0
        report["H1"]["c_theta12"] = 0.0

    # subadditivity of omega_mu over all grid pairs, evaluated
    # analytically (sums may leave the grid)
    pair_sum = modes[:, None, :] + modes[None, :, :]
    lhs = bos.omega_mu(pair_sum)
    rhs = bos.omega_mu(modes)[:, None] + bos.omega_mu(modes)[None, :]
    margin = float(np.min(rhs - lhs))
    report["H2_subadditive"] = {"ok": margin >= -1e-13, "worst_margin": margin}

    d = grid.d
    a = spec.formfactor.alpha
    report["H4_integrability"] = {
        "ok": 2 * a + d - 1 > 0,
        "window_l2": 2 * a + d,
        "window_sqrt": 2 * a + d - 1,
        "infrared_critical": spec.formfactor.infrared_critical(d),
    }

    # mu-monotonicity along the schedule (strictly decreasing mu)
    worst = np.inf
    ok = True
    sched = sorted(mu_schedule, reverse=True)
    for hi, lo in zip(sched, sched[1:]):
        diff = (BosonDispersion(mu=hi).omega_mu(modes)
                - BosonDispersion(mu=lo).omega_mu(modes))
        worst = min(worst, float(np.min(diff)))
        ok = ok and np.all(diff > 0)
    report["H5_monotone"] = {"ok": bool(ok), "worst_margin": worst,
                             "schedule": list(sched)}

    # |omega_mu(k) - omega_mu(k')| <= C |omega(k) - omega(k')|, C = 1
    om = bos.omega(modes)
    om_mu = bos.omega_mu(modes)
    num = np.abs(om_mu[:, None] - om_mu[None, :])
    den = np.abs(om[:, None] - om[None, :])
    mask = den > 1e-13
    max_ratio = float(np.max(num[mask] / den[mask])) if np.any(mask) else 0.0
    report["omegadiff"] = {"ok": max_ratio <= 1 + 1e-12,
                           "max_ratio": max_ratio}
    return report
