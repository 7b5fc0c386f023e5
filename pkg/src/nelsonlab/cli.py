"""Command-line driver (installed as `nfl`).

Subcommands: verify, massshell, flow, infrared, convex, hypotheses.
Every subcommand reads the same configuration stack (defaults, an
optional INI file via --config, NFL_* environment overrides), writes
its reports into the output directory, and finishes with a
manifest.json naming the configuration hash, the tool version, the
per-task outcome, and a sha256 for every file it wrote.

Exit codes: 0 success, 1 failed checks or a crashed command, 2 for an
unusable configuration.
"""

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config
from .convexity import (Parabola, convex_diff_lower_bound,
                        delta_p_bruteforce, delta_p_closed_form,
                        envelope_derivative_check, random_parabola_sweep,
                        write_convex_report)
from .infrared import (_jsonable, apriori_bound_check,
                       compactness_diagnostics, dressed_flow,
                       dressed_pull_through_residual, pull_through_residual,
                       resolvent_approx_check, write_flow_outputs)
from .massshell import (convexity_check, scan_mass_shell,
                        shell_bound_suite, write_massshell_csv)
from .model import (assemble_hamiltonian, check_hypotheses,
                    dressing_function, with_mu, with_p)
from .spectral import ground_state, hellmann_feynman_gradient
from .verify import DEFAULT_SEED, VerifyContext, run_verify


def _write_json(path, obj):
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out, cfg, args, tasks, total):
    for task in tasks.values():
        task.setdefault("wall_time_s", round(total, 3))
    files = {}
    for child in sorted(Path(out).iterdir()):
        if child.is_file() and child.name != "manifest.json":
            files[child.name] = _sha256(child)
    manifest = {
        "tool": "nfl",
        "tool_version": __version__,
        "command": args.command,
        "config_hash": cfg.config_hash(),
        "workers": args.workers,
        "deterministic": bool(args.deterministic),
        "tasks": tasks,
        "files": files,
        "wall_time_s_total": round(total, 3),
    }
    _write_json(Path(out) / "manifest.json", manifest)


# ------------------------------------------------------------ verify


def cmd_verify(cfg, args, out):
    workers = 1 if args.deterministic else max(1, args.workers)
    report, manifest = run_verify(cfg, workers=workers, seed=args.seed)
    _write_json(out / "verify.json", report)
    for check in report["checks"]:
        mark = "ok  " if check["ok"] else "FAIL"
        line = f"{mark} {check['name']}"
        if "value" in check:
            line += f"  value={check['value']:.6g}"
        if "threshold" in check:
            line += f"  threshold={check['threshold']:.6g}"
        print(line)
    print(f"{report['n_checks']} checks, {report['n_failed']} failed")
    return (0 if report["passed"] else 1), manifest["tasks"]


# -------------------------------------------------------------- flow


def cmd_flow(cfg, args, out):
    ctx = VerifyContext(cfg, seed=args.seed)
    p = ctx.scan_ps[0]
    spec = cfg.build_spec(p=p)
    flow = dressed_flow(spec, p, ctx.mus, cache=ctx.cache,
                        leak_threshold=cfg.thresholds.leak_warn)
    diag = compactness_diagnostics(spec, flow)
    write_flow_outputs(out, spec, flow, diag,
                       write_states=cfg.output.states)
    for warning in flow["warnings"]:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"flow over {len(ctx.mus)} mu values written to {out}")
    return 0, {"flow": {"status": "ok",
                        "n_mu": len(ctx.mus),
                        "warnings": len(flow["warnings"])}}


# --------------------------------------------------------- massshell


def cmd_massshell(cfg, args, out):
    ctx = VerifyContext(cfg, seed=args.seed)
    spec = cfg.build_spec(p=0.0)
    p_list = cfg.p_values
    workers = None if args.workers <= 1 or args.deterministic \
        else args.workers
    tables = {}
    for mu in ctx.mus:
        table = scan_mass_shell(spec, p_list, mu=mu, cache=ctx.cache,
                                delta=True, workers=workers)
        tables[mu] = table
        write_massshell_csv(out / f"massshell_mu{mu:g}.csv", table)
    suite = shell_bound_suite(tables)
    report = {
        "per_mu": {f"{mu:g}": suite["per_mu"][mu] for mu in ctx.mus},
        "mu_monotone_ok": suite["mu_monotone_ok"],
        "mu_monotone_margin": suite["mu_monotone_margin"],
        "grad_cauchy_diffs": suite["grad_cauchy_diffs"],
        "grad_cauchy_nonincreasing": suite["grad_cauchy_nonincreasing"],
        "hess_limsup": suite["hess_limsup"],
    }
    convexity = {}
    for mu in ctx.mus:
        try:
            convexity[f"{mu:g}"] = convexity_check(tables[mu])
        except ValueError as exc:
            convexity[f"{mu:g}"] = {"skipped": str(exc)}
    report["convexity"] = convexity
    _write_json(out / "shell_report.json", report)
    print(f"{len(ctx.mus)} mass-shell scans "
          f"({len(p_list)} P points each) written to {out}")
    return 0, {"massshell": {"status": "ok", "n_mu": len(ctx.mus),
                             "n_p": int(len(p_list))}}


# ---------------------------------------------------------- infrared


def cmd_infrared(cfg, args, out):
    ctx = VerifyContext(cfg, seed=args.seed)
    sol = cfg.solver
    base = cfg.build_spec(p=0.0)
    rows = []
    for p in [float(x) for x in cfg.p_values]:
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
            row = {
                "p": p, "mu": mu, "energy": rec.energy,
                "max_guarded": res["max_guarded"],
                "max_unguarded": res["max_unguarded"],
                "dressed_max_guarded": dres["max_guarded"],
                "dressing_norm_w": g.norm_w,
            }
            table = scan_mass_shell(sp, [p], cache=ctx.cache, delta=True)
            dp = float(table.delta_p[0])
            if np.isfinite(dp) and dp > 0.0:
                row["apriori"] = apriori_bound_check(
                    sp, dp, rec=rec, cache=ctx.cache,
                    slack=cfg.thresholds.slack, gs_tol=sol.gs_tol)
                row["delta_p"] = dp
            else:
                row["apriori"] = {"skipped": f"delta_p={dp}"}
            rows.append(row)
    approx = []
    for mu in (ctx.mus[0], ctx.mus[-1]):
        sp = with_mu(with_p(base, float(cfg.p_values[0])), mu)
        rep = resolvent_approx_check(sp, cache=ctx.cache,
                                     cg_tol=sol.cg_tol,
                                     gs_tol=sol.gs_tol)
        rep["mu"] = mu
        approx.append(rep)
    report = {"pull_through": rows, "resolvent_approx": approx}
    _write_json(out / "infrared.json", report)
    print(f"{len(rows)} pull-through rows written to {out}")
    return 0, {"infrared": {"status": "ok", "n_rows": len(rows)}}


# ------------------------------------------------------------ convex


def cmd_convex(cfg, args, out):
    ctx = VerifyContext(cfg, seed=args.seed)
    res = cfg.solver.convex_resolution
    instances = []
    for a, b, c in ((1.0, 0.0, 1.0), (0.1, 0.0, 1.0)):
        par = Parabola(a, b, c)
        closed = delta_p_closed_form(par)
        brute = delta_p_bruteforce(par, resolution=res)
        instances.append({
            "a": a, "b": b, "c": c, "closed": closed,
            "bruteforce": brute, "error": abs(closed - brute),
            "resolution": res,
        })
    seed = DEFAULT_SEED if args.seed is None else args.seed
    sweep = random_parabola_sweep(n=cfg.solver.convex_samples,
                                  resolution=res, seed=seed)
    spec = cfg.build_spec(p=0.0, mu=ctx.mus[0])
    table = scan_mass_shell(spec, ctx.ray, cache=ctx.cache, delta=False)
    diff = convex_diff_lower_bound(table.p[:, 0], table.energy,
                                   c=1.0 / cfg.model.mass,
                                   tol=cfg.thresholds.margin)
    report = {
        "fixed_instances": instances,
        "sweep": sweep,
        "envelope": envelope_derivative_check(),
        "mass_shell": diff,
    }
    write_convex_report(out / "convex_report.json", report)
    print(f"convex report ({sweep['count']} random instances) "
          f"written to {out}")
    return 0, {"convex": {"status": "ok",
                          "n_instances": len(instances),
                          "n_random": sweep["count"]}}


# -------------------------------------------------------- hypotheses


def cmd_hypotheses(cfg, args, out):
    ctx = VerifyContext(cfg, seed=args.seed)
    spec = cfg.build_spec(p=ctx.scan_ps[0], mu=ctx.mus[0])
    report = check_hypotheses(spec, mu_schedule=tuple(ctx.mus))
    _write_json(out / "hypotheses.json", report)
    bad = [key for key, block in report.items()
           if not block.get("ok", True)]
    for key in bad:
        print(f"FAIL {key}", file=sys.stderr)
    print(f"{len(report)} hypothesis blocks, {len(bad)} failed")
    status = "ok" if not bad else "failed"
    return (0 if not bad else 1), {"hypotheses": {"status": status,
                                                  "failed": bad}}


# ------------------------------------------------------------- entry


_COMMANDS = {
    "verify": cmd_verify,
    "massshell": cmd_massshell,
    "flow": cmd_flow,
    "infrared": cmd_infrared,
    "convex": cmd_convex,
    "hypotheses": cmd_hypotheses,
}

_HELP = {
    "verify": "run the full check registry and write verify.json",
    "massshell": "scan E(P) per mu and write CSV tables + bounds report",
    "flow": "run the dressed ground-state flow along the mu schedule",
    "infrared": "pull-through residuals and a-priori resolvent bounds",
    "convex": "convex-analysis oracles and the mass-shell difference bound",
    "hypotheses": "report the standing model hypotheses",
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nfl",
        description="numerical laboratory for Nelson-type fiber "
                    "Hamiltonians on truncated Fock spaces")
    parser.add_argument("--version", action="version",
                        version=f"nfl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", default=None,
                       help="INI configuration file")
        p.add_argument("--workers", type=int, default=1,
                       help="thread pool size for independent tasks")
        p.add_argument("--out", default=None,
                       help="output directory (default: [output] dir)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for randomized probes")
        p.add_argument("--deterministic", action="store_true",
                       help="force single-threaded execution")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        rc, tasks = _COMMANDS[args.command](cfg, args, out)
    except Exception as exc:
        print(f"error: {args.command} failed: {exc}", file=sys.stderr)
        return 1
    _write_manifest(out, cfg, args, tasks, time.perf_counter() - start)
    return rc


if __name__ == "__main__":
    sys.exit(main())
