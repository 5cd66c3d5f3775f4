"""TOML experiment configuration.

Sections: ``[system]``, ``[olc]``, ``[env]``, ``[disturbance]`` plus optional
``[run]``, ``[table]``, ``[sweep]`` and ``[regret]``. Every problem with the
file surfaces as :class:`ConfigError`.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields

import numpy as np

from .. import olc
from ..envsim import PROFILES, make_environment, make_profile
from ..errors import ConfigError, ContractViolation
from ..lindyn import system_from_config
from .runner import CONTROLLERS, RunConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OLC_KEYS = {f.name for f in fields(olc.OlcParams)} | {"lambda"}
DEFAULT_PROFILES = {
    "rand": {"kind": "gaussian", "mean": 0.0, "std": 0.5},
    "sin": {"kind": "sinusoid"},
    "adv": {"kind": "adversarial", "magnitude": 5.0},
}


@dataclass
class ExperimentConfig:
    run: RunConfig
    profiles: dict = field(default_factory=dict)
    controllers: tuple = ("olc", "nominal", "zero")
    sweep: dict = field(default_factory=dict)
    horizons: tuple = (50, 100, 200, 400)
    source: dict = field(default_factory=dict)


def parse_seeds(spec):
    """``"3"``, ``"0..9"`` (inclusive), ``"1,4,7"`` or a list of ints."""
    if isinstance(spec, (list, tuple)):
        seeds = [int(s) for s in spec]
    elif isinstance(spec, int):
        seeds = [spec]
    else:
        text = str(spec).strip()
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
            if b < a:
                raise ConfigError(f"empty seed range {text!r}")
            seeds = list(range(a, b + 1))
        else:
            seeds = [int(s) for s in text.split(",") if s.strip()]
    if not seeds:
        raise ConfigError("no seeds given")
    return tuple(seeds)


def _profile(section):
    section = dict(section)
    kind = section.pop("kind", "gaussian")
    if kind not in PROFILES:
        raise ConfigError(f"unknown disturbance kind {kind!r}")
    return make_profile(kind, **section)


def _olc_params(section, update=None):
    section = dict(section)
    unknown = set(section) - OLC_KEYS
    if unknown:
        raise ConfigError(f"unknown [olc] keys: {sorted(unknown)}")
    if "lambda" in section:
        section["lam"] = section.pop("lambda")
    if update is not None:
        section["update"] = update
    for k in ("Q", "R"):
        if k in section and isinstance(section[k], list):
            section[k] = np.array(section[k], dtype=float)
    section.setdefault("T", 100)
    return olc.OlcParams(**section)


def build(doc: dict, *, update=None, seeds=None):
    try:
        system = dict(doc.get("system", {}))
        env_sec = dict(doc.get("env", {}))
        olc_sec = dict(doc.get("olc", {}))
        run_sec = dict(doc.get("run", {}))
        Q_lqr = system.pop("Q_lqr", 0.001)
        R_lqr = system.pop("R_lqr", 1.0)
        system.setdefault("preset", "double_integrator")
        dt = float(system.get("dt", env_sec.get("dt", 1.0)))
        system["dt"] = dt
        sys_, K = system_from_config(system)
        if sys_.d_x != 4 or sys_.d_u != 2:
            raise ConfigError("the racer environment needs a 4-state, 2-input system")
        env_sec["dt"] = dt
        preset = env_sec.pop("preset", "centerline")
        env = make_environment(preset, **env_sec)
        params = _olc_params(olc_sec, update)
        controller = run_sec.get("controller", "olc")
        if controller not in CONTROLLERS:
            raise ConfigError(f"unknown controller {controller!r}")
        T = run_sec.get("T", olc_sec.get("T"))
        run = RunConfig(
            env=env,
            profile=_profile(doc.get("disturbance", {"kind": "gaussian"})),
            params=params,
            controller=controller,
            seeds=parse_seeds(seeds if seeds is not None else run_sec.get("seeds", 0)),
            T=None if T is None else int(T),
            Q_lqr=Q_lqr, R_lqr=R_lqr, K=K,
            reanchor=bool(run_sec.get("reanchor", False)),
            trace_every=int(run_sec.get("trace_every", 10)),
        )
        table = dict(doc.get("table", {}))
        profiles = {name: _profile(sec) for name, sec in
                    table.get("profiles", DEFAULT_PROFILES).items()}
        controllers = tuple(table.get("controllers", ("olc", "nominal", "zero")))
        for c in controllers:
            if c not in CONTROLLERS:
                raise ConfigError(f"unknown controller {c!r}")
        sweep = dict(doc.get("sweep", {}))
        horizons = tuple(int(t) for t in doc.get("regret", {}).get("horizons", (50, 100, 200, 400)))
    except ConfigError:
        raise
    except (ContractViolation, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(run=run, profiles=profiles, controllers=controllers, sweep=sweep,
                            horizons=horizons, source=doc)


def load_config(path, *, update=None, seeds=None):
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return build(doc, update=update, seeds=seeds)
