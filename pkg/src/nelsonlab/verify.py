"""Check registry and runner behind `nfl verify`.

Twelve tasks, each emitting a fixed list of named checks (47 in all).
A check is a plain dict: task, name, ok, and optionally value /
threshold / detail.  The registry order is frozen: a successful run
always reports the same checks in the same order, at any scale, so two
runs on the same configuration produce byte-identical reports.

Tasks never panic.  An exception inside a task is converted into a
single failing check -- named after the offending guard when the
message identifies one, generically otherwise -- and the run carries
on.  Wall-clock data is returned next to, never inside, the check
report, so timing noise cannot break report determinism.

The flow and compactness tasks always run the standard critical /
regular model pair (alpha = 0.25 / 0.75 at lambda = 0.5, P = 0.3) on
the configured grid and schedule; every other task follows the
configuration as given.
"""

import concurrent.futures
import math
import time

import numpy as np

from . import __version__
from .convexity import (Parabola, convex_diff_lower_bound,
                        delta_p_bruteforce, delta_p_closed_form,
                        envelope_derivative_check, random_parabola_sweep)
from .fock import (ModeGrid, annihilation, dgamma_diag,
                   displace_truncated, enumerate_basis, project_total)
from .infrared import (apriori_bound_check, compactness_diagnostics,
                       dressed_flow, dressed_pull_through_residual,
                       pull_through_residual, resolvent_lipschitz_check)
from .massshell import (convexity_check, fd_derivative_suite,
                        scan_mass_shell, shell_bound_suite)
from .model import (BosonDispersion, FormFactor, ModelSpec,
                    ParticleDispersion, assemble_hamiltonian,
                    assemble_transformed, check_hypotheses,
                    dressing_function, transformed_matvec, with_mu, with_p)
from .spectral import (GroundStateCache, ground_state,
                       hellmann_feynman_gradient, lowest_eigenpair)

DEFAULT_SEED = 20240601

# the standard infrared-critical / infrared-regular pair
_FLOW_ALPHA_CRITICAL = 0.25
_FLOW_ALPHA_REGULAR = 0.75
_FLOW_LAM = 0.5
_FLOW_P = 0.3


def _check(task, name, ok, value=None, threshold=None, detail=None):
    rep = {"task": task, "name": name, "ok": bool(ok)}
    if value is not None:
        rep["value"] = float(value)
    if threshold is not None:
        rep["threshold"] = float(threshold)
    if detail is not None:
        rep["detail"] = detail
    return rep


class VerifyContext:
    """Shared configuration-derived state handed to every task."""

    def __init__(self, cfg, seed=None):
        self.cfg = cfg
        self.cache = GroundStateCache(tol=cfg.solver.tol)
        self.seed = DEFAULT_SEED if seed is None else int(seed)
        ps = cfg.p_values
        if cfg.p_is_ray or len(ps) > 3:
            self.scan_ps = [float(ps[0]), float(ps[len(ps) // 2]),
                            float(ps[-1])]
        else:
            self.scan_ps = [float(x) for x in ps]
        self.mus = [float(mu) for mu in cfg.schedule.mu]
        pmax = max(0.6, float(np.max(np.abs(ps))))
        self.ray = np.linspace(-pmax, pmax, 13)


# --------------------------------------------------------- hypotheses


def _task_hypotheses(ctx):
    spec = ctx.cfg.build_spec(p=ctx.scan_ps[0], mu=ctx.mus[0])
    rep = check_hypotheses(spec, mu_schedule=tuple(ctx.mus))
    named = (
        ("hyp_h1", "H1"),
        ("hyp_h2_subadditive", "H2_subadditive"),
        ("hyp_h4_window", "H4_integrability"),
        ("hyp_h5_monotone", "H5_monotone"),
        ("hyp_omega_diff", "omegadiff"),
    )
    return [_check("hypotheses", name, rep[key]["ok"], detail=rep[key])
            for name, key in named]


# ------------------------------------------------------------ algebra


def _task_algebra(ctx):
    thr = ctx.cfg.thresholds.ccr
    spec = ctx.cfg.build_spec(p=ctx.scan_ps[0], mu=ctx.mus[0])
    basis = spec.basis
    guard_total = basis.n_max - 2
    if guard_total < 0:
        raise ValueError(
            "pull-through guard empty: algebra checks need n_max >= 2")
    cut = basis.cumulative_size(guard_total)
    rng = np.random.default_rng(ctx.seed)
    x = project_total(basis, rng.standard_normal(basis.size), guard_total)
    x /= np.linalg.norm(x)
    m = basis.grid.n_modes

    # CCR [a_i, a_j^T] = delta_ij on states with two units of headroom
    pairs = sorted({(0, 0), (0, 1 % m), (m - 1, m - 1), (0, m - 1)})
    worst = 0.0
    for i, j in pairs:
        a_i, _ = annihilation(basis, i)
        _, c_j = annihilation(basis, j)
        comm = a_i @ (c_j @ x) - c_j @ (a_i @ x)
        if i == j:
            comm = comm - x
        worst = max(worst, float(np.linalg.norm(comm)))
    checks = [_check("algebra", "alg_ccr_pairs", worst <= thr, worst, thr,
                     {"pairs": [list(p) for p in pairs]})]

    # dGamma is additive in the one-boson multiplier
    u = rng.standard_normal(m)
    v = rng.standard_normal(m)
    err = float(np.max(np.abs(
        dgamma_diag(basis, u + v) - dgamma_diag(basis, u)
        - dgamma_diag(basis, v))))
    checks.append(_check("algebra", "alg_dgamma_additivity",
                         err <= thr, err, thr))

    # Weyl composition W(f) W(g) = W(f + g) (real arguments, so no
    # phase) on the guarded part; the displacements are exact
    # projections, so the only error source is weight that leaves the
    # truncation and comes back, suppressed by the small amplitudes.
    scale = 0.01 / math.sqrt(m)
    f = scale * rng.standard_normal(m)
    g = scale * rng.standard_normal(m)
    y_g, leak_g = displace_truncated(basis, g, x)
    y_fg, leak_f = displace_truncated(basis, f, y_g)
    y_sum, leak_sum = displace_truncated(basis, f + g, x)
    comp = float(np.linalg.norm((y_fg - y_sum)[:cut]))
    checks.append(_check(
        "algebra", "alg_weyl_composition", comp <= thr, comp, thr,
        {"leakage": [leak_g, leak_f, leak_sum]}))

    z, leak_up = displace_truncated(basis, f, x)
    z, leak_down = displace_truncated(basis, -f, z)
    rt = float(np.linalg.norm((z - x)[:cut]))
    checks.append(_check(
        "algebra", "alg_weyl_roundtrip", rt <= thr, rt, thr,
        {"leakage": [leak_up, leak_down]}))
    return checks


# ------------------------------------------------------- closed forms


def _single_mode_spec(kind, lam, mu, mass=1.0):
    grid = ModeGrid(d=1, modes=np.array([[1.0]]), weights=np.array([1.0]),
                    h=1.0)
    return ModelSpec(
        dispersion=ParticleDispersion(kind=kind, mass=mass),
        boson=BosonDispersion(mu=mu),
        formfactor=FormFactor(lam=lam, alpha=0.25, cutoff=10.0),
        p=np.array([0.0]),
        grid=grid,
        basis=enumerate_basis(grid, 1),
    )


def _closed_form_check(name, kind, lam, mu, thr):
    spec = _single_mode_spec(kind, lam, mu)
    H = np.asarray(assemble_hamiltonian(spec).todense())
    e_num = float(np.linalg.eigvalsh(H)[0])
    t0, t1, g = H[0, 0], H[1, 1], H[0, 1]
    e_closed = (t0 + t1) / 2.0 - math.sqrt(((t1 - t0) / 2.0) ** 2 + g**2)
    err = abs(e_num - e_closed)
    return _check("closed_forms", name, err <= thr, err, thr,
                  {"numeric": e_num, "closed": e_closed,
                   "matrix": [[t0, g], [g, t1]]})


def _task_closed_forms(ctx):
    thr = ctx.cfg.thresholds.closed
    checks = [
        _closed_form_check("cf_nr_massive", "nr", 0.3, 0.75, thr),
        _closed_form_check("cf_nr_massless", "nr", 0.15, 0.0, thr),
        _closed_form_check("cf_sr", "sr", 0.3, 0.75, thr),
    ]
    # decoupled model: ground energy Theta(P), ground state the vacuum
    p = ctx.scan_ps[-1]
    spec = ctx.cfg.build_spec(p=p, mu=ctx.mus[0], lam=0.0)
    rec = ground_state(assemble_hamiltonian(spec), spec,
                       tol=ctx.cfg.solver.gs_tol)
    theta = float(spec.dispersion.theta(spec.p))
    e_err = abs(rec.energy - theta)
    v_err = abs(1.0 - rec.psi[0] ** 2)
    worst = max(e_err, v_err)
    checks.append(_check(
        "closed_forms", "cf_free_field", worst <= thr, worst, thr,
        {"energy_error": e_err, "vacuum_weight_defect": v_err,
         "p": p, "theta": theta}))
    return checks


# -------------------------------------------------------- derivatives


def _task_derivatives(ctx):
    cfg = ctx.cfg
    base = cfg.build_spec(p=0.0)
    worst_grad = 0.0
    worst_margin = math.inf
    rows_out = []
    for mu in (ctx.mus[0], ctx.mus[-1]):
        rows = fd_derivative_suite(base, ctx.scan_ps, mu=mu,
                                   cache=ctx.cache,
                                   delta=cfg.solver.fd_delta)
        for row in rows:
            gap = abs(row["grad_hf"] - row["grad_fd"])
            worst_grad = max(worst_grad, gap)
            worst_margin = min(worst_margin, row["margin"])
            rows_out.append({"mu": mu, "p": float(row["p"][0]),
                             "grad_gap": gap, "margin": row["margin"]})
    return [
        _check("derivatives", "der_fd_gradient",
               worst_grad <= cfg.thresholds.fd_grad, worst_grad,
               cfg.thresholds.fd_grad, {"rows": rows_out}),
        _check("derivatives", "der_second_derivative",
               worst_margin >= -cfg.thresholds.margin, worst_margin,
               cfg.thresholds.margin),
    ]


# ------------------------------------------------------- pull-through


def _task_pull_through(ctx):
    cfg = ctx.cfg
    sol = cfg.solver
    base = cfg.build_spec(p=0.0)
    worst = 0.0
    worst_dressed = 0.0
    max_leak = 0.0
    rows = []
    for p in ctx.scan_ps:
        for mu in ctx.mus:
            sp = with_mu(with_p(base, p), mu)
            rec = ground_state(assemble_hamiltonian(sp), sp,
                               tol=sol.gs_tol)
            res = pull_through_residual(sp, rec=rec, cache=ctx.cache,
                                        cg_tol=sol.pt_cg_tol,
                                        gs_tol=sol.gs_tol)
            grad = hellmann_feynman_gradient(rec, sp)
            g = dressing_function(sp, grad)
            dres = dressed_pull_through_residual(
                sp, g, rec=rec, cache=ctx.cache, cg_tol=sol.pt_cg_tol,
                gs_tol=sol.gs_tol)
            _, leak = displace_truncated(sp.basis, g.values, rec.psi)
            worst = max(worst, res["max_guarded"])
            worst_dressed = max(worst_dressed, dres["max_guarded"])
            max_leak = max(max_leak, leak)
            rows.append({"p": p, "mu": mu,
                         "guarded": res["max_guarded"],
                         "dressed_guarded": dres["max_guarded"],
                         "leak": leak})
    thr = cfg.thresholds.pull_through
    return [
        _check("pull_through", "pt_guarded", worst <= thr, worst, thr),
        _check("pull_through", "pt_dressed", worst_dressed <= thr,
               worst_dressed, thr),
        _check("pull_through", "pt_leak_recorded", True, max_leak,
               detail={"rows": rows,
                       "note": "dressing cloud weight outside the "
                               "truncation, per (P, mu)"}),
    ]


# --------------------------------------------------- resolvent bounds


def _task_resolvent_bound(ctx):
    cfg = ctx.cfg
    base = cfg.build_spec(p=0.0)
    worst_res = 0.0
    worst_amode = 0.0
    argmax_ok = True
    rows = []
    for p in ctx.scan_ps:
        for mu in (ctx.mus[0], ctx.mus[-1]):
            sp = with_mu(with_p(base, p), mu)
            table = scan_mass_shell(sp, [p], cache=ctx.cache, delta=True)
            dp = float(table.delta_p[0])
            if not (np.isfinite(dp) and dp > 0.0):
                rows.append({"p": p, "mu": mu, "delta_p": dp,
                             "skipped": True})
                continue
            rep = apriori_bound_check(sp, dp, cache=ctx.cache,
                                      slack=cfg.thresholds.slack,
                                      gs_tol=cfg.solver.gs_tol)
            r_max = float(np.max(rep["resolvent_ratios"]))
            amode = rep["amode_ratios"]
            a_max = float(np.nanmax(amode))
            worst_res = max(worst_res, r_max)
            worst_amode = max(worst_amode, a_max)
            # the maximizing mode sits where the shifted fiber energy
            # is lowest: on the innermost shell at P = 0, pulled out to
            # |k| close to |P| otherwise -- never beyond |P| by more
            # than one shell
            norms = sp.grid.norms()
            coupled = np.isfinite(amode)
            arg = int(np.nanargmax(amode))
            k_min = float(np.min(norms[coupled]))
            combo_ok = bool(norms[arg] <= abs(p) + k_min + 1e-12)
            argmax_ok = argmax_ok and combo_ok
            rows.append({"p": p, "mu": mu, "delta_p": dp,
                         "resolvent_max": r_max, "amode_max": a_max,
                         "argmax_norm": float(norms[arg]),
                         "argmax_tracks_p": combo_ok})
    slack = cfg.thresholds.slack
    return [
        _check("resolvent_bound", "res_ratio",
               worst_res <= 1.0 + slack, worst_res, 1.0 + slack,
               {"rows": rows}),
        _check("resolvent_bound", "res_amode",
               worst_amode <= 1.0 + slack, worst_amode, 1.0 + slack),
        _check("resolvent_bound", "res_argmax_tracks_p", argmax_ok,
               detail={"note": "the a-mode ratio peaks within one "
                               "shell of |k| = |P|"}),
    ]


# -------------------------------------------------------- mass shell


def _task_shell(ctx):
    cfg = ctx.cfg
    thr = cfg.thresholds.margin
    base = cfg.build_spec(p=0.0)
    delta_mus = {ctx.mus[0], ctx.mus[-1]}
    tables = {}
    for mu in ctx.mus:
        tables[mu] = scan_mass_shell(base, ctx.ray, mu=mu,
                                     cache=ctx.cache,
                                     delta=(mu in delta_mus))
    suite = shell_bound_suite(tables)
    per = suite["per_mu"]

    lower = min(r["shell_lower_margin"] for r in per.values())
    upper = min(r["shell_upper_margin"] for r in per.values())
    mid = min(convexity_check(tables[mu])["min_midpoint_margin"]
              for mu in ctx.mus)
    grads = [r["max_grad_in_b"] for r in per.values()
             if r["max_grad_in_b"] is not None]
    grad_max = max(grads) if grads else 0.0
    i0_ok = all(per[mu]["i0_consistent"] for mu in delta_mus)
    d_margins = [per[mu]["d_bound_margin"] for mu in delta_mus
                 if per[mu]["d_bound_margin"] is not None]
    d_min = min(d_margins) if d_margins else 0.0

    checks = [
        _check("shell", "shell_lower", lower >= -thr, lower, thr),
        _check("shell", "shell_upper", upper >= -thr, upper, thr),
        _check("shell", "shell_midpoint", mid >= -thr, mid, thr),
        _check("shell", "shell_gradient", grad_max < 1.0, grad_max, 1.0),
        _check("shell", "shell_mu_monotone",
               suite["mu_monotone_ok"] in (True, None),
               suite["mu_monotone_margin"],
               detail={"schedule": ctx.mus,
                       "vacuous": suite["mu_monotone_ok"] is None}),
        _check("shell", "shell_i0", i0_ok,
               detail={"delta_mus": sorted(delta_mus, reverse=True)}),
        _check("shell", "shell_d_bound", d_min >= -thr, d_min, thr),
        _check("shell", "shell_grad_cauchy_recorded", True,
               detail={"diffs": suite["grad_cauchy_diffs"],
                       "nonincreasing":
                           suite["grad_cauchy_nonincreasing"],
                       "hess_limsup": suite["hess_limsup"]}),
    ]
    return checks


# --------------------------------------------------------------- flow


def _flow_pair_spec(cfg, alpha):
    return cfg.build_spec(p=_FLOW_P, alpha=alpha, lam=_FLOW_LAM)


def _cauchy_trending(dists):
    return len(dists) < 2 or dists[-1] <= dists[-2] + 1e-12


def _task_flow(ctx):
    cfg = ctx.cfg
    thr = cfg.thresholds
    spec = _flow_pair_spec(cfg, _FLOW_ALPHA_CRITICAL)
    flow = dressed_flow(spec, _FLOW_P, ctx.mus, cache=ctx.cache,
                        leak_threshold=thr.leak_warn)

    nm_u = flow["nmean_undressed"]
    growth = nm_u[-1] / nm_u[0] - 1.0
    nm_d = flow["nmean_dressed"]
    tail = nm_d[-3:]
    variation = (max(tail) / min(tail) - 1.0) if min(tail) > 0 else math.inf

    spec_r = _flow_pair_spec(cfg, _FLOW_ALPHA_REGULAR)
    flow_r = dressed_flow(spec_r, _FLOW_P, ctx.mus, cache=ctx.cache,
                          leak_threshold=thr.leak_warn)
    cauchy_ok = (_cauchy_trending(flow_r["distances_dressed"])
                 and _cauchy_trending(flow_r["distances_undressed"]))

    gaps = [g for g in flow["transform_gap"] if g is not None]
    gap_max = max((abs(g) for g in gaps), default=0.0)

    return [
        _check("flow", "flow_undressed_growth",
               growth >= thr.nmean_growth, growth, thr.nmean_growth,
               {"nmean": nm_u, "alpha": _FLOW_ALPHA_CRITICAL,
                "p": _FLOW_P}),
        _check("flow", "flow_dressed_variation",
               variation <= thr.dressed_variation, variation,
               thr.dressed_variation, {"nmean": nm_d}),
        _check("flow", "flow_dressed_nonincreasing",
               flow["dressed_nonincreasing"],
               detail={"distances": flow["distances_dressed"]}),
        _check("flow", "flow_regular_cauchy", cauchy_ok,
               detail={"alpha": _FLOW_ALPHA_REGULAR,
                       "dressed": flow_r["distances_dressed"],
                       "undressed": flow_r["distances_undressed"]}),
        _check("flow", "flow_transform_gap_recorded", True, gap_max,
               detail={"gaps": gaps,
                       "within_tol": flow["transform_ok"],
                       "warnings": flow["warnings"]}),
    ]


# -------------------------------------------------------- compactness


def _task_compactness(ctx):
    cfg = ctx.cfg
    spec = _flow_pair_spec(cfg, _FLOW_ALPHA_CRITICAL)
    flow = dressed_flow(spec, _FLOW_P, ctx.mus, cache=ctx.cache,
                        leak_threshold=cfg.thresholds.leak_warn)
    diag = compactness_diagnostics(spec, flow)
    spread = diag["c_spread"]
    shifts = {f"{mu:g}": diag["per_mu"][mu]["shift"]
              for mu in flow["schedule"]}
    shift_ok = all(s["decreasing"] for s in shifts.values())
    return [
        _check("compactness", "cmp_c_stable",
               math.isfinite(spread) and spread <= cfg.thresholds.c_spread,
               spread, cfg.thresholds.c_spread,
               {"c_values": diag["c_values"],
                "c_global": diag["c_global"]}),
        _check("compactness", "cmp_tail", diag["tail_ok_all"],
               detail={f"{mu:g}": {"tail": diag["per_mu"][mu]["tail"],
                                   "bound":
                                       diag["per_mu"][mu]["tail_bound"]}
                       for mu in flow["schedule"]}),
        _check("compactness", "cmp_shift_monotone", shift_ok,
               detail=shifts),
    ]


# ---------------------------------------------------- convex analysis


def _task_convexity(ctx):
    cfg = ctx.cfg
    thr = cfg.thresholds
    res = cfg.solver.convex_resolution
    instances = []
    worst = 0.0
    overshoot = -math.inf
    for a, b, c in ((1.0, 0.0, 1.0), (0.1, 0.0, 1.0)):
        par = Parabola(a, b, c)
        closed = delta_p_closed_form(par)
        brute = delta_p_bruteforce(par, resolution=res)
        worst = max(worst, abs(closed - brute))
        overshoot = max(overshoot, brute - closed)
        instances.append({"a": a, "b": b, "c": c, "closed": closed,
                          "bruteforce": brute})
    sweep = random_parabola_sweep(n=cfg.solver.convex_samples,
                                  resolution=res, seed=ctx.seed)
    overshoot = max(overshoot, sweep["max_overshoot"])

    spec = cfg.build_spec(p=0.0, mu=ctx.mus[0])
    table = scan_mass_shell(spec, ctx.ray, cache=ctx.cache, delta=False)
    diff = convex_diff_lower_bound(table.p[:, 0], table.energy,
                                   c=1.0 / cfg.model.mass,
                                   tol=thr.margin)
    env = envelope_derivative_check()
    return [
        _check("convexity", "cvx_fixed_instances",
               worst <= thr.convex_fixed, worst, thr.convex_fixed,
               {"instances": instances, "resolution": res}),
        _check("convexity", "cvx_random_sweep",
               sweep["max_abs_error"] <= thr.convex_random,
               sweep["max_abs_error"], thr.convex_random, sweep),
        _check("convexity", "cvx_overshoot",
               overshoot <= thr.convex_overshoot, overshoot,
               thr.convex_overshoot),
        _check("convexity", "cvx_mass_shell_diff", diff["ok"],
               diff["bound_margin"], thr.margin, diff),
        _check("convexity", "cvx_envelope", env["ok"],
               detail=env),
    ]


# ---------------------------------------------------------- Lipschitz


def _task_lipschitz(ctx):
    cfg = ctx.cfg
    sol = cfg.solver
    spec = cfg.build_spec(p=0.0, mu=ctx.mus[0])
    rep = resolvent_lipschitz_check(
        spec, mus=tuple(ctx.mus), iters=sol.norm_iters,
        cg_tol=sol.lip_cg_tol, refine=True, refine_m=sol.refine_m)
    k = rep["k_fit"]
    bound_ok = (math.isfinite(k) and k > 0.0
                and all(p["norm_diff"] <= k * p["w_dist"] * (1.0 + 1e-9)
                        for p in rep["pairs"]))
    k2 = rep["k_fit_refined"]
    rel = abs(k2 - k) / k if (k2 is not None and k > 0) else math.inf
    return [
        _check("lipschitz", "lip_pair_bound", bound_ok, k,
               detail={"n_pairs": len(rep["pairs"]), "z": rep["z"],
                       "norm_sharp": rep["norm_sharp"]}),
        _check("lipschitz", "lip_stability",
               rel <= cfg.thresholds.k_stability, rel,
               cfg.thresholds.k_stability,
               {"k_fit": k, "k_fit_refined": k2,
                "refine_m": rep["refine_m"]}),
    ]


# ------------------------------------------------------------- guards


def _task_guards(ctx):
    cfg = ctx.cfg
    checks = []

    # window hypothesis violation must be rejected by name
    bad_alpha = (1.0 - cfg.model.d) / 2.0 - 0.1
    try:
        FormFactor(lam=0.5, alpha=bad_alpha,
                   cutoff=1.0).require_window(cfg.model.d)
        ok, msg = False, "no error raised"
    except ValueError as exc:
        msg = str(exc)
        ok = "(H4)" in msg
    checks.append(_check("guards", "guard_h4_message", ok,
                         detail={"alpha": bad_alpha, "message": msg}))

    # a truncation with no guarded sectors must be rejected by name
    try:
        tiny = cfg.build_spec(p=0.0, mu=ctx.mus[0], m=4, n_max=1)
        pull_through_residual(tiny, cache=ctx.cache)
        ok, msg = False, "no error raised"
    except ValueError as exc:
        msg = str(exc)
        ok = "pull-through guard empty" in msg
    checks.append(_check("guards", "guard_pull_through_message", ok,
                         detail={"message": msg}))

    # transform consistency on the small auxiliary grid: the gap
    # between the transformed and the direct ground energy shrinks as
    # the truncation deepens
    gaps = []
    for n_max in (4, 6, 8):
        sp = cfg.build_spec(p=_FLOW_P, mu=ctx.mus[-1], m=4, n_max=n_max)
        rec = ctx.cache.get(sp)
        grad = hellmann_feynman_gradient(rec, sp)
        g = dressing_function(sp, grad)
        if sp.kind == "nr":
            mv = transformed_matvec(sp, g.values)
            e_t, _, _ = lowest_eigenpair(mv, sp.basis.size, tol=1e-12)
        else:
            T = assemble_transformed(sp, g.values)
            e_t = float(np.linalg.eigvalsh(T)[0])
        gaps.append(abs(float(e_t) - rec.energy))
    decreasing = all(b < a for a, b in zip(gaps, gaps[1:]))
    final_ok = gaps[-1] <= cfg.thresholds.transform
    checks.append(_check(
        "guards", "guard_transform_aux", decreasing and final_ok,
        gaps[-1], cfg.thresholds.transform,
        {"gaps": gaps, "n_max": [4, 6, 8], "m": 4,
         "decreasing": decreasing}))
    return checks


# ------------------------------------------------------------- runner


TASKS = (
    ("hypotheses", _task_hypotheses),
    ("algebra", _task_algebra),
    ("closed_forms", _task_closed_forms),
    ("derivatives", _task_derivatives),
    ("pull_through", _task_pull_through),
    ("resolvent_bound", _task_resolvent_bound),
    ("shell", _task_shell),
    ("flow", _task_flow),
    ("compactness", _task_compactness),
    ("convexity", _task_convexity),
    ("lipschitz", _task_lipschitz),
    ("guards", _task_guards),
)


def _exception_checks(task, exc):
    msg = str(exc)
    name = ("pull-through guard empty"
            if "pull-through guard empty" in msg
            else f"{task} exception")
    return [_check(task, name, False,
                   detail={"error": msg, "type": type(exc).__name__})]


def run_verify(cfg, workers=1, seed=None):
    """Run the full registry; returns (report, manifest).

    The report is deterministic for a fixed configuration and seed --
    it carries no timing data.  The manifest carries per-task status
    and wall times.
    """
    ctx = VerifyContext(cfg, seed=seed)
    results = [None] * len(TASKS)
    times = [0.0] * len(TASKS)

    def run_one(idx):
        name, fn = TASKS[idx]
        start = time.perf_counter()
        try:
            checks = fn(ctx)
        except Exception as exc:
            checks = _exception_checks(name, exc)
        return idx, checks, time.perf_counter() - start

    if workers and workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            futs = [pool.submit(run_one, i) for i in range(len(TASKS))]
            for fut in concurrent.futures.as_completed(futs):
                idx, checks, dt = fut.result()
                results[idx] = checks
                times[idx] = dt
    else:
        for i in range(len(TASKS)):
            idx, checks, dt = run_one(i)
            results[idx] = checks
            times[idx] = dt

    checks = [c for group in results for c in group]
    n_failed = sum(1 for c in checks if not c["ok"])
    report = {
        "tool": "nfl",
        "tool_version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "seed": ctx.seed,
        "checks": checks,
        "n_checks": len(checks),
        "n_failed": n_failed,
        "passed": n_failed == 0,
    }
    manifest = {
        "tool_version": __version__,
        "config_hash": cfg.config_hash(),
        "workers": int(workers),
        "tasks": {
            name: {
                "status": ("ok" if all(c["ok"] for c in results[i])
                           else "failed"),
                "n_checks": len(results[i]),
                "n_failed": sum(1 for c in results[i] if not c["ok"]),
                "wall_time_s": round(times[i], 3),
            }
            for i, (name, _) in enumerate(TASKS)
        },
        "wall_time_s_total": round(sum(times), 3),
        "cache_solves": ctx.cache.solves,
    }
    return report, manifest
