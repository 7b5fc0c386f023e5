"""Experiment configuration.

Configurations are INI files with six sections -- model, grid,
schedule, solver, thresholds, output -- plus one-to-one environment
overrides ``NFL_<SECTION>_<key>`` (section upper-cased, key spelled
exactly as in the file; keys are case-sensitive, which is what keeps
``lambda``, the coupling, apart from ``Lambda``, the form-factor
cutoff).  Unknown sections, unknown keys, and malformed values are
rejected with the offending name in the message.  See docs/config.md
for the full key table.
"""

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import KINDS, FormFactor, build_model

__all__ = ["ExperimentConfig", "load_config"]


@dataclass
class ModelSection:
    d: int = 1
    kind: str = "nr"
    mass: float = 1.0
    lam: float = 0.5
    alpha: float = 0.75
    cutoff: float = 1.0


@dataclass
class GridSection:
    k_max: float = 1.0
    m: int = 16
    n_max: int = 4


@dataclass
class ScheduleSection:
    mu: list = dataclasses.field(
        default_factory=lambda: [0.4, 0.3, 0.2, 0.1, 0.05])
    p: tuple = ("list", (0.0, 0.3, 0.6))


@dataclass
class SolverSection:
    tol: float = 1e-9
    gs_tol: float = 1e-12
    cg_tol: float = 1e-10
    pt_cg_tol: float = 1e-11
    norm_iters: int = 14
    lip_cg_tol: float = 1e-7
    fd_delta: float = 1e-3
    refine_m: int = 24
    convex_resolution: int = 4096
    convex_samples: int = 200


@dataclass
class ThresholdSection:
    ccr: float = 1e-8
    closed: float = 1e-12
    fd_grad: float = 1e-6
    margin: float = 1e-8
    pull_through: float = 1e-8
    slack: float = 1e-8
    convex_fixed: float = 1e-6
    convex_random: float = 1e-4
    convex_overshoot: float = 1e-9
    c_spread: float = 1.3
    k_stability: float = 0.2
    nmean_growth: float = 0.25
    dressed_variation: float = 0.2
    transform: float = 1e-4
    leak_warn: float = 1e-3


@dataclass
class OutputSection:
    dir: str = "out"
    states: bool = True


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text):
    toks = text.replace(",", " ").split()
    if not toks:
        raise ValueError("empty list")
    return [float(t) for t in toks]


def _parse_p(text):
    toks = text.replace(",", " ").split()
    if toks and toks[0] == "ray":
        if len(toks) != 4:
            raise ValueError(
                f"ray takes start stop count, got {text!r}")
        return ("ray", (float(toks[1]), float(toks[2]), int(toks[3])))
    return ("list", tuple(float(t) for t in toks))


# external key -> (field name, parser) per section; the external names
# are the INI spellings and the env-var suffixes
_KEYS = {
    "model": {
        "d": ("d", int),
        "kind": ("kind", str),
        "M": ("mass", float),
        "lambda": ("lam", float),
        "alpha": ("alpha", float),
        "Lambda": ("cutoff", float),
    },
    "grid": {
        "k_max": ("k_max", float),
        "m": ("m", int),
        "N_max": ("n_max", int),
    },
    "schedule": {
        "mu": ("mu", _parse_floats),
        "P": ("p", _parse_p),
    },
    "solver": {
        "tol": ("tol", float),
        "gs_tol": ("gs_tol", float),
        "cg_tol": ("cg_tol", float),
        "pt_cg_tol": ("pt_cg_tol", float),
        "norm_iters": ("norm_iters", int),
        "lip_cg_tol": ("lip_cg_tol", float),
        "fd_delta": ("fd_delta", float),
        "refine_m": ("refine_m", int),
        "convex_resolution": ("convex_resolution", int),
        "convex_samples": ("convex_samples", int),
    },
    "thresholds": {
        "ccr": ("ccr", float),
        "closed": ("closed", float),
        "fd_grad": ("fd_grad", float),
        "margin": ("margin", float),
        "pull_through": ("pull_through", float),
        "slack": ("slack", float),
        "convex_fixed": ("convex_fixed", float),
        "convex_random": ("convex_random", float),
        "convex_overshoot": ("convex_overshoot", float),
        "c_spread": ("c_spread", float),
        "k_stability": ("k_stability", float),
        "nmean_growth": ("nmean_growth", float),
        "dressed_variation": ("dressed_variation", float),
        "transform": ("transform", float),
        "leak_warn": ("leak_warn", float),
    },
    "output": {
        "dir": ("dir", str),
        "states": ("states", _parse_bool),
    },
}

_SECTIONS = {
    "model": ModelSection,
    "grid": GridSection,
    "schedule": ScheduleSection,
    "solver": SolverSection,
    "thresholds": ThresholdSection,
    "output": OutputSection,
}


@dataclass
class ExperimentConfig:
    model: ModelSection
    grid: GridSection
    schedule: ScheduleSection
    solver: SolverSection
    thresholds: ThresholdSection
    output: OutputSection

    def validate(self):
        if self.model.kind not in KINDS:
            raise ValueError(
                f"model.kind must be one of {KINDS}, got "
                f"{self.model.kind!r}")
        if self.model.d < 1:
            raise ValueError(f"model.d must be >= 1, got {self.model.d}")
        mus = self.schedule.mu
        if any(b >= a for a, b in zip(mus, mus[1:])):
            raise ValueError(
                f"schedule.mu must be strictly decreasing, got {mus}")
        if any(mu < 0 for mu in mus):
            raise ValueError(f"schedule.mu must be nonnegative, got {mus}")
        # (H4) is a property of the model functions alone; reject it at
        # load time rather than at first use
        FormFactor(lam=self.model.lam, alpha=self.model.alpha,
                   cutoff=self.model.cutoff).require_window(self.model.d)
        return self

    @property
    def p_is_ray(self):
        return self.schedule.p[0] == "ray"

    @property
    def p_values(self):
        tag, body = self.schedule.p
        if tag == "ray":
            start, stop, count = body
            return np.linspace(start, stop, count)
        return np.asarray(body, dtype=float)

    def to_dict(self):
        """Canonical dict keyed by the external (INI) names."""
        out = {}
        for section, keys in _KEYS.items():
            sub = getattr(self, section)
            entry = {}
            for ext, (field, _) in keys.items():
                val = getattr(sub, field)
                if section == "schedule" and ext == "P":
                    tag, body = val
                    val = (" ".join(["ray"] + [repr(x) for x in body])
                           if tag == "ray"
                           else " ".join(repr(x) for x in body))
                entry[ext] = val
            out[section] = entry
        return out

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def build_spec(self, p=0.0, mu=None, kind=None, lam=None, alpha=None,
                   m=None, n_max=None):
        """A ModelSpec for this configuration, with per-task overrides."""
        mc, gc = self.model, self.grid
        spec = build_model(
            kind=kind if kind is not None else mc.kind,
            lam=lam if lam is not None else mc.lam,
            alpha=alpha if alpha is not None else mc.alpha,
            k_max=gc.k_max,
            mass=mc.mass,
            mu=mu if mu is not None else self.schedule.mu[0],
            m=m if m is not None else gc.m,
            n_max=n_max if n_max is not None else gc.n_max,
            p=p,
            d=mc.d,
        )
        if mc.cutoff != gc.k_max:
            ff = FormFactor(lam=spec.formfactor.lam,
                            alpha=spec.formfactor.alpha,
                            cutoff=mc.cutoff)
            spec = dataclasses.replace(spec, formfactor=ff)
        return spec


def _apply(cfg, section, key, raw, origin):
    keys = _KEYS[section]
    if key not in keys:
        known = ", ".join(sorted(keys))
        raise ValueError(
            f"unknown key {key!r} in section [{section}] ({origin}); "
            f"known keys: {known}")
    field, parser = keys[key]
    try:
        value = parser(raw)
    except ValueError as exc:
        raise ValueError(
            f"bad value for {section}.{key} ({origin}): {raw!r}: {exc}"
        ) from None
    setattr(getattr(cfg, section), field, value)


def load_config(path=None, env=None):
    """Build an ExperimentConfig from defaults, an optional INI file,
    and NFL_* environment overrides (applied last)."""
    cfg = ExperimentConfig(**{name: cls() for name, cls in
                              _SECTIONS.items()})

    if path is not None:
        parser = configparser.ConfigParser(
            interpolation=None, default_section="!defaults-disabled!")
        parser.optionxform = str
        with open(path) as fh:
            parser.read_file(fh)
        for section in parser.sections():
            if section not in _KEYS:
                known = ", ".join(sorted(_KEYS))
                raise ValueError(
                    f"unknown section [{section}] in {path}; known "
                    f"sections: {known}")
            for key, raw in parser.items(section):
                _apply(cfg, section, key, raw, str(path))

    if env is None:
        env = os.environ
    prefixes = {f"NFL_{s.upper()}_": s for s in _KEYS}
    for name in sorted(env):
        if not name.startswith("NFL_"):
            continue
        for prefix, section in prefixes.items():
            if name.startswith(prefix):
                _apply(cfg, section, name[len(prefix):], env[name],
                       f"environment {name}")
                break
        else:
            raise ValueError(
                f"unrecognized environment override {name}; expected "
                "NFL_<SECTION>_<key> with section one of "
                + ", ".join(sorted(s.upper() for s in _KEYS)))

    return cfg.validate()
