"""Infrared structure of the fiber ground states: pull-through
identities, a-priori mode bounds, the small-k resolvent approximation,
dressed ground-state flows along a boson-mass schedule, compactness
diagnostics, and the Lipschitz estimate for transformed resolvents.

The pull-through identity is evaluated in its form that is exact under
truncation: annihilating one boson from an N-truncated eigenstate lands
in the (N-1)-truncated space, where

    a(k_i) psi = -v(k_i) (H^(N-1)(P - k_i) + omega(k_i) - E)^{-1} psi

holds with the (N-1)-truncated Hamiltonian -- no cutoff correction
terms.  Residuals are therefore solver noise, not truncation artifacts,
and the guard projection (total boson number <= N-2) only defends
against misuse.
"""

import hashlib
import json
import math
import numbers

import numpy as np

from .fock import annihilator_slice, displace_truncated
from .model import (
    TRANSFORM_CONSISTENCY_TOL,
    assemble_hamiltonian,
    assemble_transformed,
    dressing_function,
    refine_grid,
    transformed_matvec,
    w_norm,
    with_mu,
    with_p,
)
from .spectral import (
    GroundStateCache,
    cg_solve,
    ground_state,
    hellmann_feynman_gradient,
    lowest_eigenpair,
    resolvent_apply,
    sym_operator_norm,
)

#: dense transform assembly is refused above this size in flow checks
_SR_TRANSFORM_LIMIT = 3000


def _tight_record(spec, rec, gs_tol):
    if rec is not None:
        return rec
    return ground_state(assemble_hamiltonian(spec), spec, tol=gs_tol)


def _pull_through_rhs(spec, rec, cache, i, cg_tol):
    """-v_i R^(N-1)(P, k_i) psi lifted back to the full basis."""
    v_i = float(spec.formfactor.values(spec.grid)[i])
    out = np.zeros_like(rec.psi)
    if v_i == 0.0:
        return out
    k_i = spec.grid.modes[i]
    lam_min = cache.get(with_p(spec, spec.p - k_i)).energy
    cut = spec.basis.cumulative_size(spec.basis.n_max - 1)
    y = resolvent_apply(spec, k_i, rec.energy, rec.psi[:cut],
                        n_total=spec.basis.n_max - 1, tol=cg_tol,
                        lam_min=lam_min)
    out[:cut] = -v_i * y
    return out


def _require_guard(spec):
    guard_total = spec.basis.n_max - 2
    if guard_total < 0:
        raise ValueError(
            f"pull-through guard empty: n_max = {spec.basis.n_max} leaves "
            "no guarded sectors (need n_max >= 2)")
    return guard_total


def pull_through_residual(spec, rec=None, cache=None, cg_tol=1e-11,
                          gs_tol=1e-12):
    """Per-mode pull-through residuals of the ground state.

    Returns guarded (projected to total <= n_max - 2) and unguarded
    norms; only the guarded ones are meant to be certified."""
    guard_total = _require_guard(spec)
    if cache is None:
        cache = GroundStateCache()
    rec = _tight_record(spec, rec, gs_tol)
    guard_cut = spec.basis.cumulative_size(guard_total)
    m = spec.grid.n_modes
    guarded = np.zeros(m)
    unguarded = np.zeros(m)
    for i in range(m):
        r = (annihilator_slice(spec.basis, rec.psi, i)
             - _pull_through_rhs(spec, rec, cache, i, cg_tol))
        guarded[i] = np.linalg.norm(r[:guard_cut])
        unguarded[i] = np.linalg.norm(r)
    return {
        "guarded": guarded,
        "unguarded": unguarded,
        "guard_total": guard_total,
        "guard_cut": guard_cut,
        "max_guarded": float(np.max(guarded)),
        "max_unguarded": float(np.max(unguarded)),
    }


def dressed_pull_through_residual(spec, dressing, rec=None, cache=None,
                                  cg_tol=1e-11, gs_tol=1e-12):
    """Residuals of a(k_i) W(g) psi = W(g)(-v_i R(P,k_i) + g_i) psi."""
    guard_total = _require_guard(spec)
    if cache is None:
        cache = GroundStateCache()
    rec = _tight_record(spec, rec, gs_tol)
    phi, _ = displace_truncated(spec.basis, dressing.values, rec.psi)
    guard_cut = spec.basis.cumulative_size(guard_total)
    m = spec.grid.n_modes
    guarded = np.zeros(m)
    unguarded = np.zeros(m)
    for i in range(m):
        u = (_pull_through_rhs(spec, rec, cache, i, cg_tol)
             + dressing.values[i] * rec.psi)
        rhs, _ = displace_truncated(spec.basis, dressing.values, u)
        r = annihilator_slice(spec.basis, phi, i) - rhs
        guarded[i] = np.linalg.norm(r[:guard_cut])
        unguarded[i] = np.linalg.norm(r)
    return {
        "guarded": guarded,
        "unguarded": unguarded,
        "guard_total": guard_total,
        "guard_cut": guard_cut,
        "max_guarded": float(np.max(guarded)),
        "max_unguarded": float(np.max(unguarded)),
    }


# ----------------------------------------------------- a-priori bounds


def apriori_bound_check(spec, delta_p, rec=None, cache=None, slack=1e-8,
                        gs_tol=1e-12):
    """A-priori bounds tied to the gap functional Delta_P:

        |R(P,k_i)| = 1/lambda_min(H(P-k_i) - E + omega_i)
                  <= Delta_P / omega(k_i),
        |a(k_i) psi| <= Delta_P |v(k_i)| / omega(k_i).
    """
    if cache is None:
        cache = GroundStateCache()
    rec = _tight_record(spec, rec, gs_tol)
    modes = spec.grid.modes
    m = spec.grid.n_modes
    w_mu = spec.boson.omega_mu(modes)
    v = spec.formfactor.values(spec.grid)
    lam_min = np.empty(m)
    for i in range(m):
        e_shift = cache.get(with_p(spec, spec.p - modes[i])).energy
        lam_min[i] = e_shift - rec.energy + w_mu[i]
    res_ratios = (1.0 / lam_min) * w_mu / delta_p
    amode_ratios = np.full(m, np.nan)
    coupled = v != 0.0
    for i in np.nonzero(coupled)[0]:
        an = np.linalg.norm(annihilator_slice(spec.basis, rec.psi, i))
        amode_ratios[i] = an * w_mu[i] / (delta_p * abs(v[i]))
    if np.any(coupled):
        arg = int(np.nanargmax(amode_ratios))
        norms = spec.grid.norms()
        argmax_smallest = bool(
            norms[arg] <= np.min(norms[coupled]) + 1e-12)
        amode_ok = bool(np.nanmax(amode_ratios) <= 1.0 + slack)
    else:
        argmax_smallest = None
        amode_ok = True
    return {
        "lambda_min": lam_min,
        "resolvent_ratios": res_ratios,
        "resolvent_ok": bool(np.max(res_ratios) <= 1.0 + slack),
        "amode_ratios": amode_ratios,
        "amode_ok": amode_ok,
        "argmax_is_smallest_k": argmax_smallest,
        "slack": slack,
    }


# -------------------------------------- small-k resolvent approximation


def _resolvent_approx_numbers(spec, cache, gs_tol, cg_tol):
    rec = _tight_record(spec, None, gs_tol)
    grad = hellmann_feynman_gradient(rec, spec)
    grad_norm = float(np.linalg.norm(grad))
    if grad_norm * spec.boson.c_omega >= 1.0:
        return None, grad_norm
    modes = spec.grid.modes
    m = spec.grid.n_modes
    w_mu = spec.boson.omega_mu(modes)
    left = np.empty(m)
    for i in range(m):
        lam_min = cache.get(with_p(spec, spec.p - modes[i])).energy
        y = resolvent_apply(spec, modes[i], rec.energy, rec.psi,
                            tol=cg_tol, lam_min=lam_min)
        scalar = 1.0 / (w_mu[i] - modes[i] @ grad)
        left[i] = np.linalg.norm(y - scalar * rec.psi)
    c_fit = float(np.max(left / (1.0 + w_mu**-0.5)))
    return {"left": left, "w_mu": w_mu, "c_fit": c_fit}, grad_norm


def resolvent_approx_check(spec, cache=None, refine=True, cg_tol=1e-10,
                           gs_tol=1e-12):
    """Fit the smallest C with

        |(R(P,k_i) - (omega(k_i) - k_i . grad E)^{-1}) psi|
            <= C (1 + omega(k_i)^{-1/2})

    and probe its stability under one grid refinement and one halving
    of the boson mass.  left * omega is recorded per mode: it improves
    toward small k."""
    if cache is None:
        cache = GroundStateCache()
    base, grad_norm = _resolvent_approx_numbers(spec, cache, gs_tol, cg_tol)
    if base is None:
        return {"precondition_ok": False, "grad_norm": grad_norm}
    left, w_mu = base["left"], base["w_mu"]
    lw = left * w_mu
    # group by |k| shells, innermost first
    norms = spec.grid.norms()
    shells = np.unique(np.round(norms, 12))
    lw_shells = [float(np.max(lw[np.round(norms, 12) == s]))
                 for s in shells]
    pick = min(2, len(lw_shells) - 1)
    ir_improving = bool(lw_shells[0] <= lw_shells[pick] + 1e-12)
    rep = {
        "precondition_ok": True,
        "grad_norm": grad_norm,
        "left": left,
        "left_times_omega": lw,
        "lw_shells": lw_shells,
        "ir_improving": ir_improving,
        "c_fit": base["c_fit"],
    }
    if refine:
        m_axis = int(round(spec.grid.n_modes ** (1.0 / spec.grid.d)))
        m2 = 3 * m_axis // 2
        if m2 % 2:
            m2 += 1
        fine, _ = _resolvent_approx_numbers(refine_grid(spec, m2), cache,
                                            gs_tol, cg_tol)
        half, _ = _resolvent_approx_numbers(
            with_mu(spec, spec.boson.mu / 2.0), cache, gs_tol, cg_tol)
        rep["c_fit_refined_m"] = fine["c_fit"] if fine else math.nan
        rep["c_fit_half_mu"] = half["c_fit"] if half else math.nan
        c = rep["c_fit"]
        rep["stable"] = bool(
            np.isfinite(rep["c_fit_refined_m"])
            and np.isfinite(rep["c_fit_half_mu"])
            and abs(rep["c_fit_refined_m"] - c) <= 0.3 * c
            and abs(rep["c_fit_half_mu"] - c) <= 0.3 * c)
    return rep


# -------------------------------------------------------- dressed flow


def _sign_align(a, b):
    return b if float(a @ b) >= 0.0 else -b


def dressed_flow(spec, p, mu_schedule, cache=None, fixed_q=None,
                 transform_tol=TRANSFORM_CONSISTENCY_TOL,
                 leak_threshold=1e-3, transform_solver_tol=1e-10):
    """Ground states along a decreasing boson-mass schedule, dressed by
    f_{Q,mu} with Q = grad E_mu(P) (or a fixed Q).

    The dressed state tracked by the flow is the ground state of the
    transformed operator T(P, f): that object stays representable in
    the truncation even when the coherent cloud does not.  The explicit
    displacement W(f) psi is still evaluated as a diagnostic -- its
    cutoff leakage is recorded per mu, and leakage above leak_threshold
    appends a warning suggesting a larger n_max -- because it measures
    directly how much of the cloud the truncation can hold.  The gap
    E(T) - E(H) between the two ground energies is the transform
    consistency measure."""
    if cache is None:
        cache = GroundStateCache()
    spec = with_p(spec, p)
    flow = {
        "p": [float(x) for x in spec.p],
        "schedule": [float(mu) for mu in mu_schedule],
        "fixed_q": (None if fixed_q is None
                    else [float(x) for x in np.atleast_1d(fixed_q)]),
        "energies": [], "gaps": [], "grad_norms": [],
        "dressing_norm_w": [], "formal": [],
        "nmean_undressed": [], "nmean_dressed": [], "nmean_displaced": [],
        "leak": [], "phi_norm_pre": [],
        "transform_gap": [], "transform_tol": float(transform_tol),
        "warnings": [],
        "psi": [], "phi": [],
    }
    totals = spec.basis.totals.astype(float)
    for mu in flow["schedule"]:
        sp = with_mu(spec, mu)
        rec = cache.get(sp)
        grad = hellmann_feynman_gradient(rec, sp)
        q = grad if fixed_q is None else np.atleast_1d(fixed_q)
        g = dressing_function(sp, q)
        disp_raw, leak = displace_truncated(sp.basis, g.values, rec.psi)
        nrm = float(np.linalg.norm(disp_raw))
        disp = disp_raw / nrm
        if leak > leak_threshold:
            flow["warnings"].append(
                f"mu={mu}: displacement leakage {leak:.3e} exceeds "
                f"{leak_threshold:.1e}; consider a larger n_max")
        gap = None
        phi = disp
        if sp.kind == "nr":
            mv = transformed_matvec(sp, g.values)
            e_t, phi_t, _ = lowest_eigenpair(mv, sp.basis.size,
                                             tol=transform_solver_tol)
            phi = phi_t / np.linalg.norm(phi_t)
            gap = float(e_t - rec.energy)
        elif sp.basis.size <= _SR_TRANSFORM_LIMIT:
            T = assemble_transformed(sp, g.values)
            vals, vecs = np.linalg.eigh(np.asarray(T))
            phi = vecs[:, 0] / np.linalg.norm(vecs[:, 0])
            gap = float(vals[0] - rec.energy)
        else:
            flow["warnings"].append(
                f"mu={mu}: transformed ground state skipped (sr assembly "
                f"is dense; basis size {sp.basis.size}); using the "
                "displaced state")
        flow["energies"].append(float(rec.energy))
        flow["gaps"].append(float(rec.gap))
        flow["grad_norms"].append(float(np.linalg.norm(grad)))
        flow["dressing_norm_w"].append(float(g.norm_w))
        flow["formal"].append(bool(g.formal))
        flow["nmean_undressed"].append(float(totals @ rec.psi**2))
        flow["nmean_dressed"].append(float(totals @ phi**2))
        flow["nmean_displaced"].append(float(totals @ disp**2))
        flow["leak"].append(float(leak))
        flow["phi_norm_pre"].append(nrm)
        flow["transform_gap"].append(gap)
        flow["psi"].append(rec.psi.copy())
        flow["phi"].append(phi)

    def distances(states):
        out = []
        for a, b in zip(states, states[1:]):
            out.append(float(np.linalg.norm(a - _sign_align(a, b))))
        return out

    flow["distances_dressed"] = distances(flow["phi"])
    flow["distances_undressed"] = distances(flow["psi"])
    dd = flow["distances_dressed"]
    flow["dressed_nonincreasing"] = bool(
        all(b <= a + 1e-12 for a, b in zip(dd, dd[1:])))
    gaps = [g for g in flow["transform_gap"] if g is not None]
    flow["transform_ok"] = bool(
        all(abs(g) <= transform_tol for g in gaps))
    return flow


# --------------------------------------------------------- compactness


def _shift_report(spec, aslices, h):
    """Shift equicontinuity sums at one and two grid steps."""
    grid = spec.grid
    norms = grid.norms()
    n = int(math.floor(1.0 / h)) + 1
    while 1.0 / n >= h:
        n += 1
    included = norms > 1.0 / n
    lookup = {tuple(np.round(k, 12)): i for i, k in enumerate(grid.modes)}
    w = float(grid.weights[0])
    values = []
    dropped = 0
    for steps in (1, 2):
        total = 0.0
        for j in range(grid.d):
            shift = np.zeros(grid.d)
            shift[j] = steps * h
            for i in np.nonzero(included)[0]:
                key = tuple(np.round(grid.modes[i] + shift, 12))
                tgt = lookup.get(key)
                if tgt is None:
                    if steps == 1:
                        dropped += 1
                    continue
                total += w * float(
                    np.sum((aslices[tgt] - aslices[i]) ** 2))
        values.append(total)
    return {
        "n": n,
        "threshold": 1.0 / n,
        "sizes": [h, 2 * h],
        "values": values,
        "decreasing": bool(values[0] <= values[1]),
        "dropped_modes": dropped,
    }


def compactness_diagnostics(spec, flow):
    """Compactness numbers for the dressed states of a flow: the fitted
    constant in |a(k_i) Phi| <= C (1 + omega^{-1/2}) |v(k_i)|, shift
    equicontinuity sums, and the sector tail against its C-bound."""
    spec = with_p(spec, np.asarray(flow["p"]))
    v = spec.formfactor.values(spec.grid)
    coupled = v != 0.0
    h = spec.grid.h
    s0 = spec.basis.n_max - 1
    tail_idx = spec.basis.totals >= s0
    per_mu = {}
    for mu, phi in zip(flow["schedule"], flow["phi"]):
        sp = with_mu(spec, mu)
        w_mu = sp.boson.omega_mu(sp.grid.modes)
        aslices = [annihilator_slice(sp.basis, phi, i)
                   for i in range(sp.grid.n_modes)]
        anorms = np.array([np.linalg.norm(a) for a in aslices])
        ratios = anorms[coupled] / ((1.0 + w_mu[coupled]**-0.5)
                                    * np.abs(v[coupled]))
        weight = (1.0 + w_mu**-0.5) * v
        wsq = float(np.sum(sp.grid.weights * weight**2))
        per_mu[mu] = {
            "c_fit": float(np.max(ratios)) if ratios.size else 0.0,
            "tail": float(np.sum(phi[tail_idx] ** 2)),
            "v_weight_sq": wsq,
            "shift": _shift_report(sp, aslices, h),
        }
    c_values = [per_mu[mu]["c_fit"] for mu in flow["schedule"]]
    c_global = max(c_values) if c_values else 0.0
    c_min = min(c_values) if c_values else 0.0
    for mu in flow["schedule"]:
        entry = per_mu[mu]
        entry["tail_bound"] = (10.0 * c_global**2 * entry["v_weight_sq"]
                               / (spec.basis.n_max - 1))
        entry["tail_ok"] = bool(entry["tail"] <= entry["tail_bound"])
    return {
        "per_mu": per_mu,
        "s0": s0,
        "c_values": c_values,
        "c_global": c_global,
        "c_spread": (c_global / c_min if c_min > 0 else math.inf),
        "c_stable": bool(c_min > 0 and c_global / c_min <= 1.3),
        "tail_ok_all": bool(all(per_mu[mu]["tail_ok"]
                                for mu in flow["schedule"])),
    }


# ------------------------------------------------------------- outputs


def basis_hash(basis):
    """16-hex-digit tag identifying (modes, weights, n_max)."""
    blob = (basis.grid.modes.round(12).tobytes()
            + basis.grid.weights.round(12).tobytes()
            + str(basis.n_max).encode())
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, numbers.Integral):
        return int(x)
    if isinstance(x, numbers.Real):
        return float(x)
    return x


def write_flow_outputs(out_dir, spec, flow, diagnostics, write_states=True):
    """Emit flow.json (the flow record minus state vectors),
    flow_states.bin (dressed states, little-endian float64 behind a
    basis-hash header; omitted when write_states is false), and
    diagnostics.csv."""
    import pathlib

    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    slim = {k: v for k, v in flow.items() if k not in ("phi", "psi")}
    flow_path = out / "flow.json"
    flow_path.write_text(
        json.dumps(_jsonable(slim), sort_keys=True, indent=2) + "\n",
        encoding="utf-8")

    tag = basis_hash(spec.basis)
    states_path = None
    if write_states:
        states = flow["phi"]
        dim = spec.basis.size
        states_path = out / "flow_states.bin"
        with open(states_path, "wb") as fh:
            fh.write(f"NFLSTATES v1 basis={tag} count={len(states)} "
                     f"dim={dim}\n".encode("ascii"))
            for phi in states:
                fh.write(np.asarray(phi, dtype="<f8").tobytes())

    diag_path = out / "diagnostics.csv"
    lines = [f"# compactness basis={tag} s0={diagnostics['s0']} "
             f"c_global={diagnostics['c_global']:.17g}"]
    lines.append("mu,c_fit,tail,tail_bound,shift_n,S_h,S_2h,"
                 "shift_decreasing,dropped")
    for mu in flow["schedule"]:
        e = diagnostics["per_mu"][mu]
        sh = e["shift"]
        lines.append(",".join([
            f"{mu:.17g}", f"{e['c_fit']:.17g}", f"{e['tail']:.17g}",
            f"{e['tail_bound']:.17g}", str(sh["n"]),
            f"{sh['values'][0]:.17g}", f"{sh['values'][1]:.17g}",
            str(int(sh["decreasing"])), str(sh["dropped_modes"]),
        ]))
    diag_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    paths = {"flow": flow_path, "diagnostics": diag_path}
    if states_path is not None:
        paths["states"] = states_path
    return paths


def load_flow_states(path):
    """Read flow_states.bin back; returns (basis_tag, states array)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        body = fh.read()
    fields = header.split()
    if fields[:2] != ["NFLSTATES", "v1"]:
        raise ValueError(f"not a flow states file: header {header!r}")
    meta = dict(f.split("=", 1) for f in fields[2:])
    count, dim = int(meta["count"]), int(meta["dim"])
    arr = np.frombuffer(body, dtype="<f8").reshape(count, dim)
    return meta["basis"], arr


# -------------------------------------------------- resolvent Lipschitz


def resolvent_difference_norm(spec, f_vals, g_vals, z, iters=40,
                              cg_tol=1e-7):
    """Operator norm of (T(P,f) - z)^{-1} - (T(P,g) - z)^{-1}, estimated
    by power iteration with CG solves (matrix-free, nr only)."""
    mv_f = transformed_matvec(spec, f_vals)
    mv_g = transformed_matvec(spec, g_vals)

    def apply(x):
        yf, _ = cg_solve(lambda u: mv_f(u) - z * u, x, tol=cg_tol)
        yg, _ = cg_solve(lambda u: mv_g(u) - z * u, x, tol=cg_tol)
        return yf - yg

    return sym_operator_norm(apply, spec.basis.size, iters=iters)


def resolvent_lipschitz_check(spec, targets=(1.0, 1.25, 1.5, 1.75, 2.0),
                              qs=(-0.4, -0.2, 0.1, 0.3, 0.45),
                              mus=(0.4, 0.3, 0.2, 0.1, 0.05),
                              iters=14, cg_tol=1e-7, refine=True,
                              refine_m=None, gs_tol=1e-10):
    """Fit K in |R_z(T(f)) - R_z(T(g))| <= K |f - g|_W over all pairs
    from a family of dressing functions rescaled to |f|_# in [1,2],
    at the real shift z = E(P) - 1, and probe K's stability under one
    grid refinement."""
    if spec.kind != "nr":
        raise NotImplementedError(
            "resolvent Lipschitz check uses the matrix-free transformed "
            "matvec, which is implemented for kind 'nr' only")

    def family(sp):
        e1 = np.zeros(sp.grid.d)
        e1[0] = 1.0
        fs = []
        for t, qmag, mu in zip(targets, qs, mus):
            f = dressing_function(sp, qmag * e1, mu=mu)
            fs.append(f.with_values(f.values * (t / f.norm_sharp)))
        return fs

    def fit(sp):
        fs = family(sp)
        e0 = ground_state(assemble_hamiltonian(sp), sp, tol=gs_tol).energy
        z = e0 - 1.0
        pairs = []
        for i in range(len(fs)):
            for j in range(i + 1, len(fs)):
                nd = resolvent_difference_norm(
                    sp, fs[i].values, fs[j].values, z,
                    iters=iters, cg_tol=cg_tol)
                dist = w_norm(sp, fs[i].values - fs[j].values)
                pairs.append({"i": i, "j": j, "norm_diff": float(nd),
                              "w_dist": float(dist),
                              "ratio": float(nd / dist)})
        return z, fs, pairs

    z, fs, pairs = fit(spec)
    rep = {
        "z": float(z),
        "pairs": pairs,
        "k_fit": max(p["ratio"] for p in pairs),
        "norm_sharp": [f.norm_sharp for f in fs],
        "mus": list(mus), "qs": list(qs), "targets": list(targets),
        "k_fit_refined": None, "refine_m": None, "stable": None,
    }
    if refine:
        if refine_m is None:
            m_axis = int(round(spec.grid.n_modes ** (1.0 / spec.grid.d)))
            refine_m = 3 * m_axis // 2
            if refine_m % 2:
                refine_m += 1
        _, _, pairs2 = fit(refine_grid(spec, refine_m))
        k2 = max(p["ratio"] for p in pairs2)
        rep["k_fit_refined"] = float(k2)
        rep["refine_m"] = int(refine_m)
        rep["stable"] = bool(abs(k2 - rep["k_fit"]) <= 0.2 * rep["k_fit"])
    return rep
