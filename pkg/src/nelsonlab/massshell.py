"""Mass-shell scans: ground energies E(P) along momentum rays, their
derivatives (Hellmann-Feynman and finite differences), the gap
functional Delta_P, membership in the regions I_0 and B, and the
associated bound reports."""

import concurrent.futures
import math
from dataclasses import dataclass, field

import numpy as np

from .model import assemble_hamiltonian, s_product, with_mu, with_p
from .spectral import (
    GroundStateCache,
    hellmann_feynman_gradient,
    second_derivative_bound,
)


@dataclass(eq=False)
class MassShellTable:
    p: np.ndarray            # (n, d)
    energy: np.ndarray       # (n,)
    grad_hf: np.ndarray      # (n, d)
    gap: np.ndarray          # (n,)
    residual: np.ndarray     # (n,)
    delta_p: np.ndarray      # (n,)  inf when the gap condition fails
    in_i0: np.ndarray        # (n,) bool
    in_b: np.ndarray         # (n,) bool
    e_shift: np.ndarray      # (n, M) ground energies at P - k_i, or None
    c_p: np.ndarray          # (n,) sr constant C_P (NaN for nr)
    model_echo: dict
    mode_norms: np.ndarray   # (M,)
    failures: list = field(default_factory=list)
    fd_order: int = 2

    @property
    def size(self):
        return self.p.shape[0]

    @property
    def p_step(self):
        """Uniform step length along the scanned ray, or None."""
        if self.size < 2:
            return None
        steps = np.diff(self.p, axis=0)
        lens = np.linalg.norm(steps, axis=1)
        if np.max(np.abs(lens - lens[0])) > 1e-12:
            return None
        if np.max(np.abs(steps - steps[0])) > 1e-12:
            return None
        return float(lens[0])

    @property
    def _direction(self):
        step = self.p[1] - self.p[0]
        return step / np.linalg.norm(step)

    @property
    def grad_fd(self):
        """Central FD gradient along the ray (edges NaN), as a vector."""
        out = np.full_like(self.p, np.nan)
        h = self.p_step
        if h is None:
            return out
        u = self._direction
        de = (self.energy[2:] - self.energy[:-2]) / (2.0 * h)
        out[1:-1] = de[:, None] * u[None, :]
        return out

    @property
    def hess_fd(self):
        """Central second difference along the ray (edges NaN)."""
        out = np.full((self.size, 1), np.nan)
        h = self.p_step
        if h is None:
            return out
        d2 = (self.energy[2:] - 2 * self.energy[1:-1]
              + self.energy[:-2]) / h**2
        out[1:-1, 0] = d2
        return out


def _model_echo(spec):
    return {
        "kind": spec.kind,
        "mass": spec.dispersion.mass,
        "lam": spec.formfactor.lam,
        "alpha": spec.formfactor.alpha,
        "cutoff": spec.formfactor.cutoff,
        "mu": spec.boson.mu,
        "d": spec.grid.d,
        "n_modes": spec.grid.n_modes,
        "n_max": spec.basis.n_max,
        "k_max": spec.grid.k_max,
        "h": spec.grid.h,
    }


def delta_p_analytic_bound(spec, p_norm, energy=None):
    """Analytic gap bound: nr 1/(1 - |P|/M) inside |P| < M; sr
    1/(1 - C_P) with C_P = B/sqrt(M^2 + B^2),
    B = max(0, 2(E(P) + 1 - M) + 4 |omega_mu^{-1/2} v|^2)."""
    c_om = spec.boson.c_omega
    if spec.kind == "nr":
        x = 2.0 * spec.dispersion.c_theta2 * c_om * p_norm
        return 1.0 / (1.0 - x) if x < 1.0 else math.inf
    if energy is None:
        raise ValueError("sr bound needs the ground energy E(P)")
    c_p = _sr_c_p(spec, energy)
    return 1.0 / (1.0 - c_p * c_om)


def _sr_c_p(spec, energy):
    v = spec.formfactor.values(spec.grid)
    w_mu = spec.boson.omega_mu(spec.grid.modes)
    vsq = s_product(spec.grid, v / np.sqrt(w_mu), v / np.sqrt(w_mu))
    mass = spec.dispersion.mass
    b = max(0.0, 2.0 * (energy + 1.0 - mass) + 4.0 * vsq)
    return b / math.sqrt(mass**2 + b**2)


def _scan_row(spec, p_vec, cache, want_delta):
    sp = with_p(spec, p_vec)
    rec = cache.get(sp)
    grad = hellmann_feynman_gradient(rec, sp)
    m = spec.grid.n_modes
    e_shift = np.full(m, np.nan)
    delta = np.nan
    in_i0 = True
    if want_delta:
        modes = spec.grid.modes
        w_mu = spec.boson.omega_mu(modes)
        vals = np.empty(m)
        for i in range(m):
            vals[i] = cache.get(with_p(spec, p_vec - modes[i])).energy
        e_shift = vals
        denom = vals - rec.energy + w_mu
        if np.any(denom <= 0):
            delta, in_i0 = math.inf, False
        else:
            delta = float(np.max(w_mu / denom))
            # analytic small-k candidate: the continuum sup can be
            # approached as k -> 0, which the grid undersamples
            norms = spec.grid.norms()
            small = norms <= np.min(norms) + 1e-12
            cand_den = w_mu[small] - modes[small] @ grad
            if np.any(cand_den <= 0):
                delta, in_i0 = math.inf, False
            else:
                delta = max(delta, float(np.max(w_mu[small] / cand_den)))
    c_p = math.nan
    if spec.kind == "nr":
        in_b = bool(np.linalg.norm(p_vec) < spec.dispersion.mass)
    else:
        c_p = _sr_c_p(spec, rec.energy)
        in_b = bool(c_p < 1.0)
    return {
        "energy": rec.energy, "grad": grad, "gap": rec.gap,
        "residual": rec.residual, "delta": delta, "in_i0": in_i0,
        "in_b": in_b, "e_shift": e_shift, "c_p": c_p,
    }


def scan_mass_shell(spec, p_list, mu=None, cache=None, delta=True,
                    workers=None):
    """Scan the mass shell over p_list (shape (n,) for d=1 or (n,d)).

    Per-P failures are recorded and the scan continues; failed rows are
    NaN-filled."""
    if mu is not None:
        spec = with_mu(spec, mu)
    if cache is None:
        cache = GroundStateCache()
    p_arr = np.asarray(p_list, dtype=float)
    if p_arr.ndim == 1:
        p_arr = p_arr[:, None]
    if p_arr.shape[1] != spec.grid.d:
        raise ValueError(
            f"P list has dimension {p_arr.shape[1]}, grid has {spec.grid.d}")
    n = p_arr.shape[0]
    m = spec.grid.n_modes
    rows = [None] * n
    failures = []

    def build(i):
        return _scan_row(spec, p_arr[i], cache, delta)

    if workers is not None and workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            futs = {i: pool.submit(build, i) for i in range(n)}
            for i in range(n):
                try:
                    rows[i] = futs[i].result()
                except Exception as exc:  # record, keep scanning
                    failures.append(f"P={p_arr[i]}: {exc}")
    else:
        for i in range(n):
            try:
                rows[i] = build(i)
            except Exception as exc:
                failures.append(f"P={p_arr[i]}: {exc}")

    def col(key, default=np.nan):
        return np.array([r[key] if r else default for r in rows])

    table = MassShellTable(
        p=p_arr,
        energy=col("energy"),
        grad_hf=np.vstack([r["grad"] if r else np.full(spec.grid.d, np.nan)
                           for r in rows]),
        gap=col("gap"),
        residual=col("residual"),
        delta_p=col("delta"),
        in_i0=np.array([bool(r["in_i0"]) if r else False for r in rows]),
        in_b=np.array([bool(r["in_b"]) if r else False for r in rows]),
        e_shift=(np.vstack([r["e_shift"] if r else np.full(m, np.nan)
                            for r in rows]) if delta else None),
        c_p=col("c_p"),
        model_echo=_model_echo(spec),
        mode_norms=spec.grid.norms(),
        failures=failures,
    )
    return table


# ------------------------------------------------------------ convexity


def convexity_check(table, tol=None):
    """Midpoint convexity of g(P) = C_theta2 |P|^2 - E(P) on a uniform
    ray, the 2 C_theta2 cap on second differences of E, and both
    readings of the gradient bound (literal C_theta2 |P| and the weaker
    2 C_theta2 |P|; only the latter is expected to hold -- the free
    model saturates it)."""
    if table.size < 3:
        raise ValueError("convexity check needs at least 3 scan points")
    if table.p_step is None:
        raise ValueError("convexity check needs uniform ray spacing")
    if tol is None:
        tol = max(1e-8, 10.0 * float(np.nanmax(table.residual)) * 1e-2)
    c2 = 1.0 / (2.0 * table.model_echo["mass"])
    psq = np.sum(table.p**2, axis=1)
    g = c2 * psq - table.energy
    margins = g[:-2] + g[2:] - 2.0 * g[1:-1]
    gn = np.linalg.norm(table.grad_hf, axis=1)
    pn = np.sqrt(psq)
    hess = table.hess_fd[1:-1, 0]
    return {
        "ok": bool(np.min(margins) >= -tol),
        "tol": tol,
        "min_midpoint_margin": float(np.min(margins)),
        "max_second_difference": float(np.max(hess)),
        "sec_diff_ok": bool(np.max(hess) <= 2.0 * c2 + tol),
        "grad_literal_min_margin": float(np.min(c2 * pn - gn)),
        "grad_weak_min_margin": float(np.min(2.0 * c2 * pn - gn)),
    }


# ---------------------------------------------------------- bound suite


def _per_mu_report(table, tol=1e-10):
    c2 = 1.0 / (2.0 * table.model_echo["mass"])
    pn = np.linalg.norm(table.p, axis=1)
    i_origin = int(np.argmin(pn))
    e0 = table.energy[i_origin]
    rel = table.energy - e0
    rep = {
        "p_origin": float(pn[i_origin]),
        "shell_lower_margin": float(np.min(rel)),
        "shell_upper_margin": float(np.min(c2 * pn**2 - rel)),
        "i0_consistent": bool(np.all(np.isfinite(table.delta_p)
                                     == table.in_i0)),
    }
    # thm (d)-style two-case lower bound on E(P-k) - E(P), all grid k
    if table.e_shift is not None and np.all(np.isfinite(table.e_shift)):
        kn = table.mode_norms[None, :]
        lhs = table.e_shift - table.energy[:, None]
        rhs = np.where(kn <= pn[:, None],
                       -2.0 * c2 * kn * pn[:, None],
                       -c2 * pn[:, None] ** 2)
        rep["d_bound_margin"] = float(np.min(lhs - rhs))
    else:
        rep["d_bound_margin"] = None
    gn = np.linalg.norm(table.grad_hf, axis=1)
    rep["max_grad_in_b"] = (float(np.max(gn[table.in_b]))
                            if np.any(table.in_b) else None)
    # continuity proxy |dE| <= (max |grad| + 1) |dP|
    if table.size >= 2:
        de = np.abs(np.diff(table.energy))
        dp = np.linalg.norm(np.diff(table.p, axis=0), axis=1)
        lip = float(np.max(gn)) + 1.0
        rep["continuity_ok"] = bool(np.all(de <= lip * dp + tol))
        # divergence proxy: monotone away from the scan minimum
        i_min = int(np.argmin(table.energy))
        left = table.energy[: i_min + 1]
        right = table.energy[i_min:]
        rep["divergence_ok"] = bool(
            np.all(np.diff(left) <= tol) and np.all(np.diff(right) >= -tol))
    else:
        rep["continuity_ok"] = True
        rep["divergence_ok"] = True
    return rep


def shell_bound_suite(tables, tol=1e-10):
    """Bound suite over one or several mu-indexed tables (dict mu ->
    MassShellTable, scanned over the same P ray)."""
    if isinstance(tables, MassShellTable):
        tables = {tables.model_echo["mu"]: tables}
    mus = sorted(tables, reverse=True)
    report = {"per_mu": {mu: _per_mu_report(tables[mu], tol=tol)
                         for mu in mus}}
    report["hess_limsup"] = [
        float(np.nanmax(tables[mu].hess_fd))
        if tables[mu].size >= 3 and tables[mu].p_step is not None
        else math.nan
        for mu in mus]
    if len(mus) >= 2:
        mono = [float(np.min(tables[hi].energy - tables[lo].energy))
                for hi, lo in zip(mus, mus[1:])]
        report["mu_monotone_margin"] = min(mono)
        report["mu_monotone_ok"] = min(mono) > 0
        diffs = [float(np.max(np.linalg.norm(
            tables[hi].grad_hf - tables[lo].grad_hf, axis=1)))
            for hi, lo in zip(mus, mus[1:])]
        report["grad_cauchy_diffs"] = diffs
        report["grad_cauchy_nonincreasing"] = bool(
            all(b <= a + tol for a, b in zip(diffs, diffs[1:])))
    else:
        report["mu_monotone_margin"] = None
        report["mu_monotone_ok"] = None
        report["grad_cauchy_diffs"] = []
        report["grad_cauchy_nonincreasing"] = None
    return report


# --------------------------------------------- point-FD derivative suite


def fd_derivative_suite(spec, p_list, mu=None, cache=None, delta=1e-3,
                        axis=0):
    """Per-P derivative validation at a dedicated small FD step:
    central gradient at delta, and a Richardson-extrapolated second
    difference from steps (2*delta, delta) against the perturbation
    bound  d^2 E <= 2 C_theta2 - 2 <r,(H-E)^{-1} r>."""
    if mu is not None:
        spec = with_mu(spec, mu)
    if cache is None:
        cache = GroundStateCache()
    p_arr = np.asarray(p_list, dtype=float)
    if p_arr.ndim == 1:
        p_arr = p_arr[:, None]
    e_axis = np.zeros(spec.grid.d)
    e_axis[axis] = 1.0
    rows = []
    for p_vec in p_arr:
        sp = with_p(spec, p_vec)
        rec = cache.get(sp)
        H = assemble_hamiltonian(sp)
        pert = second_derivative_bound(rec, sp, axis, H=H, fd=False)

        def energy(step):
            return cache.get(with_p(spec, p_vec + step * e_axis)).energy

        e0 = rec.energy
        ep1, em1 = energy(delta), energy(-delta)
        ep2, em2 = energy(2 * delta), energy(-2 * delta)
        grad_fd = (ep1 - em1) / (2.0 * delta)
        d_small = (ep1 - 2.0 * e0 + em1) / delta**2
        d_large = (ep2 - 2.0 * e0 + em2) / (2.0 * delta) ** 2
        fd_hess = (4.0 * d_small - d_large) / 3.0
        rows.append({
            "p": p_vec.copy(),
            "grad_hf": float(pert["gradient"][axis]),
            "grad_fd": float(grad_fd),
            "fd_hess": float(fd_hess),
            "bound": float(pert["bound"]),
            "norm_sq": float(pert["norm_sq"]),
            "margin": float(pert["bound"] - fd_hess),
            "delta": delta,
        })
    return rows


# ------------------------------------------------------------- csv emit


def write_massshell_csv(path, table, header_extra=None):
    """massshell.csv: '#' header echoing the model and stencils, then
    one row per P with 17-significant-digit floats."""
    d = table.p.shape[1]
    lines = []
    echo = " ".join(f"{k}={v}" for k, v in table.model_echo.items())
    lines.append(f"# model {echo}")
    lines.append(f"# stencil=central order={table.fd_order} "
                 f"p_step={table.p_step}")
    for k, v in (header_extra or {}).items():
        lines.append(f"# {k}={v}")

    def pcols(stem):
        return ([stem] if d == 1 else [f"{stem}_{j + 1}" for j in range(d)])

    header = (pcols("P") + ["E"] + pcols("gradHF") + pcols("gradFD")
              + ["hessFD", "deltaP", "gap", "inI0", "inB"])
    lines.append(",".join(header))

    def fmt(x):
        return f"{x:.17g}"

    gfd = table.grad_fd
    hfd = table.hess_fd
    for i in range(table.size):
        cells = [fmt(x) for x in table.p[i]]
        cells.append(fmt(table.energy[i]))
        cells.extend(fmt(x) for x in table.grad_hf[i])
        cells.extend(fmt(x) for x in gfd[i])
        cells.append(fmt(hfd[i, 0]))
        cells.append(fmt(table.delta_p[i]))
        cells.append(fmt(table.gap[i]))
        cells.append(str(int(table.in_i0[i])))
        cells.append(str(int(table.in_b[i])))
        lines.append(",".join(cells))
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path
