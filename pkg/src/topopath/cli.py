"""Command-line surface: configured runs, sweeps, navigation, artifacts.

One TOML file describes a run; every omitted key falls back to the
standard recipe for the named model, and the effective configuration
(after defaults) is echoed into the output directory so a run can be
repeated exactly from its own artifacts. Unknown sections or keys are
hard errors rather than silent ignores.

Verbs: simulate | sweep | navigate | check-grad | plot. All outputs
(CSV, JSON, SVG) are deterministic for a fixed (config, seed): reruns
are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import svgplot
from .loss import (
    LossTerm,
    UndefinedEntropyError,
    avg_pers_term,
    entropy_term,
    evaluate,
    max_pers_term,
    max_persistence,
    persistent_entropy,
    top_n_term,
    total_pers_term,
    total_persistence,
)
from .navigate import (
    GDConfig,
    PathRecord,
    TrustRegionConfig,
    global_sampling_path,
    gradient_descent_path,
    grid_feature,
    local_sampling_path,
    path_to_csv,
    topological_loss_gradient,
)
from .simulate import (
    DivergenceError,
    SimulationConfig,
    finite_difference_gradient,
    integrate,
    tail_point_cloud,
)
from .systems import SystemModel, model_by_name
from .tda import SingularEdgeError, diagram_to_csv, diagram_to_json, rips_persistence

__all__ = ["ConfigError", "RunConfig", "load_config", "main"]

SWEEP_FEATURES = ("max_pers", "total_pers", "entropy")
SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration file problem; reported without a traceback."""


# per-model run recipes: descent hyperparameters, loss, sweep window
_RECIPES = {
    "rossler": {
        "gd": {"learning_rate": 0.01, "decay_per_epoch": 0.99, "clip_norm": 1.0, "max_epochs": 300},
        "balance": True,
        "terms": [
            {"kind": "entropy", "sign": 1.0},
            {"kind": "max_pers", "sign": -1.0},
        ],
        "sweep_axes": [("a", -0.1, 0.3, 40), ("b", 0.0, 0.6, 40)],
    },
    "lorenz": {
        "gd": {"learning_rate": 1.0, "decay_per_epoch": 0.995, "clip_norm": 1.0, "max_epochs": 300},
        "balance": True,
        "terms": [
            {"kind": "entropy", "sign": 1.0},
            {"kind": "max_pers", "sign": -1.0},
        ],
        "sweep_axes": [("rho", 80.0, 300.0, 30), ("sigma", 4.0, 50.0, 30)],
    },
    "magnetic_pendulum": {
        "gd": {"learning_rate": 0.1, "decay_per_epoch": 0.99, "clip_norm": 1.0, "max_epochs": 100},
        "balance": False,
        "terms": [{"kind": "max_pers", "sign": 1.0}],
        "sweep_axes": [("A", 0.005, 0.1, 30), ("omega", 2.0, 12.0, 30)],
    },
}

_TERM_BUILDERS = {
    "max_pers": max_pers_term,
    "total_pers": total_pers_term,
    "avg_pers": avg_pers_term,
    "top_n": top_n_term,
    "entropy": entropy_term,
}


@dataclass
class RunConfig:
    """Fully resolved run description; every field has its final value."""

    model_name: str
    mu: np.ndarray
    x0: np.ndarray
    simcfg: SimulationConfig
    terms: List[LossTerm]
    term_specs: List[dict]
    balance: bool
    scheme: str
    feature: str
    gd: GDConfig
    trust: TrustRegionConfig
    box: Tuple[Tuple[float, float], ...]
    sweep_axes: List[Tuple[str, float, float, int]]
    sweep_features: Tuple[str, ...]
    check_h: float
    check_tolerance: float
    seed: int
    out: Optional[str]

    @property
    def model(self) -> SystemModel:
        return model_by_name(self.model_name)


def _expect_table(raw: dict, key: str) -> dict:
    v = raw.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(f"[{key}] must be a table")
    return v


def _check_keys(table: dict, allowed: Sequence[str], where: str) -> None:
    unknown = [k for k in table if k not in allowed]
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}' in [{where}]")


def _as_float(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number")
    return float(v)


def _as_int(v, where: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where} must be an integer")
    return v


def load_config(path: str) -> RunConfig:
    """Parse and resolve a run file; unknown keys are hard errors."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from None
    return resolve_config(raw)


def resolve_config(raw: dict) -> RunConfig:
    _check_keys(
        raw,
        ("run", "params", "initial_state", "simulation", "loss", "navigate",
         "gd", "trust_region", "box", "sweep", "check_grad"),
        "top level",
    )

    run = _expect_table(raw, "run")
    _check_keys(run, ("model", "seed", "out"), "run")
    if "model" not in run:
        raise ConfigError("[run] needs a model name")
    name = run["model"]
    if name not in _RECIPES:
        raise ConfigError(f"unknown model '{name}' (choose from {sorted(_RECIPES)})")
    model = model_by_name(name)
    recipe = _RECIPES[name]
    seed = _as_int(run.get("seed", 0), "run.seed")
    out = run.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("run.out must be a string")

    pnames = model.default_params.names
    mu = np.array(model.default_params.values, dtype=np.float64)
    params = _expect_table(raw, "params")
    _check_keys(params, pnames, "params")
    for k, v in params.items():
        mu[pnames.index(k)] = _as_float(v, f"params.{k}")

    init = _expect_table(raw, "initial_state")
    _check_keys(init, ("x",), "initial_state")
    x0 = np.array(model.default_initial_state, dtype=np.float64)
    if "x" in init:
        vals = init["x"]
        if not isinstance(vals, list) or len(vals) != model.state_dim:
            raise ConfigError(f"initial_state.x needs {model.state_dim} numbers")
        x0 = np.array([_as_float(v, "initial_state.x") for v in vals])

    sim = _expect_table(raw, "simulation")
    _check_keys(sim, ("t0", "t_final", "dt", "tail"), "simulation")
    d = model.default_sim
    t0 = _as_float(sim.get("t0", d.t0), "simulation.t0")
    t_final = _as_float(sim.get("t_final", d.tf), "simulation.t_final")
    dt = _as_float(sim.get("dt", d.dt), "simulation.dt")
    tail = _as_int(sim.get("tail", d.tail_count), "simulation.tail")
    if not t_final > t0:
        raise ConfigError("simulation span must have t_final > t0")
    try:
        simcfg = SimulationConfig(t0, t_final, dt, tail)
    except ValueError as e:
        raise ConfigError(f"bad simulation settings: {e}") from None

    lraw = _expect_table(raw, "loss")
    _check_keys(lraw, ("balance", "term"), "loss")
    balance = lraw.get("balance", recipe["balance"])
    if not isinstance(balance, bool):
        raise ConfigError("loss.balance must be true or false")
    term_specs = lraw.get("term", [dict(t) for t in recipe["terms"]])
    if not isinstance(term_specs, list) or not all(isinstance(t, dict) for t in term_specs):
        raise ConfigError("loss.term must be an array of tables")
    terms, resolved_specs = [], []
    for i, spec in enumerate(term_specs):
        _check_keys(spec, ("kind", "weight", "sign", "dim", "count", "normalized"), f"loss.term[{i}]")
        kind = spec.get("kind")
        if kind not in _TERM_BUILDERS:
            raise ConfigError(
                f"loss.term[{i}].kind must be one of {sorted(_TERM_BUILDERS)}"
            )
        kwargs = {
            "dim": _as_int(spec.get("dim", 1), "loss.term.dim"),
            "sign": _as_float(spec.get("sign", 1.0), "loss.term.sign"),
            "weight": _as_float(spec.get("weight", 1.0), "loss.term.weight"),
        }
        if kind == "top_n":
            kwargs["count"] = _as_int(spec.get("count", 1), "loss.term.count")
        elif "count" in spec:
            raise ConfigError("loss.term.count only applies to top_n")
        if kind == "entropy":
            norm = spec.get("normalized", True)
            if not isinstance(norm, bool):
                raise ConfigError("loss.term.normalized must be true or false")
            kwargs["normalized"] = norm
        elif "normalized" in spec:
            raise ConfigError("loss.term.normalized only applies to entropy")
        try:
            if kind == "top_n":
                count = kwargs.pop("count")
                terms.append(_TERM_BUILDERS[kind](count, **kwargs))
                kwargs["count"] = count
            else:
                terms.append(_TERM_BUILDERS[kind](**kwargs))
        except ValueError as e:
            raise ConfigError(f"bad loss.term[{i}]: {e}") from None
        resolved_specs.append({"kind": kind, **kwargs})

    nav = _expect_table(raw, "navigate")
    _check_keys(nav, ("scheme", "feature"), "navigate")
    scheme = nav.get("scheme", "gd")
    if scheme not in ("gd", "global", "local"):
        raise ConfigError("navigate.scheme must be gd, global, or local")
    feature = nav.get("feature", "max_pers")
    if feature not in SWEEP_FEATURES:
        raise ConfigError(f"navigate.feature must be one of {sorted(SWEEP_FEATURES)}")

    graw = _expect_table(raw, "gd")
    _check_keys(
        graw,
        ("learning_rate", "decay_per_epoch", "clip_norm", "max_epochs",
         "adam", "stop_lr_floor", "stop_step_tol"),
        "gd",
    )
    gdef = recipe["gd"]
    clip = graw.get("clip_norm", gdef["clip_norm"])
    if clip is False:
        clip = None
    elif clip is not None:
        clip = _as_float(clip, "gd.clip_norm")
    adam = graw.get("adam", [0.9, 0.999, 1e-8])
    if not isinstance(adam, list) or len(adam) != 3:
        raise ConfigError("gd.adam must be [beta1, beta2, eps]")
    gd_kwargs = dict(
        learning_rate=_as_float(graw.get("learning_rate", gdef["learning_rate"]), "gd.learning_rate"),
        decay_per_epoch=_as_float(graw.get("decay_per_epoch", gdef["decay_per_epoch"]), "gd.decay_per_epoch"),
        clip_norm=clip,
        max_epochs=_as_int(graw.get("max_epochs", gdef["max_epochs"]), "gd.max_epochs"),
        adam=tuple(_as_float(v, "gd.adam") for v in adam),
        stop_step_tol=_as_float(graw.get("stop_step_tol", 1e-6), "gd.stop_step_tol"),
    )
    if "stop_lr_floor" in graw:
        gd_kwargs["stop_lr_floor"] = _as_float(graw["stop_lr_floor"], "gd.stop_lr_floor")
    try:
        gd = GDConfig(**gd_kwargs)
    except ValueError as e:
        raise ConfigError(f"bad [gd] settings: {e}") from None

    traw = _expect_table(raw, "trust_region")
    _check_keys(
        traw,
        ("steps", "step_size", "inner_budget", "confidence_window", "gamma_init"),
        "trust_region",
    )
    try:
        trust = TrustRegionConfig(
            steps=_as_int(traw.get("steps", 2500), "trust_region.steps"),
            step_size=_as_float(traw.get("step_size", 0.1), "trust_region.step_size"),
            confidence_window=_as_int(traw.get("confidence_window", 5), "trust_region.confidence_window"),
            mode=scheme if scheme in ("global", "local") else "global",
            inner_budget=_as_int(traw.get("inner_budget", 64), "trust_region.inner_budget"),
            seed=seed,
            gamma_init=_as_float(traw.get("gamma_init", 0.95), "trust_region.gamma_init"),
        )
    except ValueError as e:
        raise ConfigError(f"bad [trust_region] settings: {e}") from None

    braw = _expect_table(raw, "box")
    _check_keys(braw, pnames, "box")
    box = []
    for i, pname in enumerate(pnames):
        if pname in braw:
            pair = braw[pname]
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError(f"box.{pname} must be [low, high]")
            lo = _as_float(pair[0], f"box.{pname}")
            hi = _as_float(pair[1], f"box.{pname}")
            if lo > hi:
                raise ConfigError(f"box.{pname} has low > high")
            box.append((lo, hi))
        else:
            b = model.default_params.bounds[i]
            box.append((float(b[0]), float(b[1])))
    box = tuple(box)

    sraw = _expect_table(raw, "sweep")
    _check_keys(sraw, ("features", "axis"), "sweep")
    feats = sraw.get("features", list(SWEEP_FEATURES))
    if not isinstance(feats, list) or not feats:
        raise ConfigError("sweep.features must be a non-empty list")
    for f in feats:
        if f not in SWEEP_FEATURES:
            raise ConfigError(f"sweep feature '{f}' not one of {sorted(SWEEP_FEATURES)}")
    axes_raw = sraw.get("axis")
    sweep_axes = []
    if axes_raw is None:
        sweep_axes = [tuple(a) for a in recipe["sweep_axes"]]
    else:
        if not isinstance(axes_raw, dict):
            raise ConfigError("[sweep.axis.<param>] tables expected")
        for aname, spec in axes_raw.items():
            if aname not in pnames:
                raise ConfigError(f"sweep axis '{aname}' is not a parameter of {name}")
            if not isinstance(spec, dict):
                raise ConfigError(f"sweep.axis.{aname} must be a table with min/max/count")
            _check_keys(spec, ("min", "max", "count"), f"sweep.axis.{aname}")
            for req in ("min", "max", "count"):
                if req not in spec:
                    raise ConfigError(f"sweep.axis.{aname} needs {req}")
            lo = _as_float(spec["min"], "sweep.axis.min")
            hi = _as_float(spec["max"], "sweep.axis.max")
            count = _as_int(spec["count"], "sweep.axis.count")
            if count < 1:
                raise ConfigError("sweep.axis.count must be at least 1")
            if count > 1 and not hi > lo:
                raise ConfigError(f"sweep.axis.{aname} needs max > min")
            sweep_axes.append((aname, lo, hi, count))

    craw = _expect_table(raw, "check_grad")
    _check_keys(craw, ("h", "tolerance"), "check_grad")
    check_h = _as_float(craw.get("h", 1e-7), "check_grad.h")
    check_tol = _as_float(craw.get("tolerance", 1e-2), "check_grad.tolerance")
    if not check_h > 0 or not check_tol > 0:
        raise ConfigError("check_grad.h and tolerance must be positive")

    return RunConfig(
        model_name=name,
        mu=mu,
        x0=x0,
        simcfg=simcfg,
        terms=terms,
        term_specs=resolved_specs,
        balance=balance,
        scheme=scheme,
        feature=feature,
        gd=gd,
        trust=trust,
        box=box,
        sweep_axes=sweep_axes,
        sweep_features=tuple(feats),
        check_h=check_h,
        check_tolerance=check_tol,
        seed=seed,
        out=out,
    )


# ---------------------------------------------------------------- TOML echo

def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError("non-finite value in config echo")
        r = repr(v)
        return r if ("." in r or "e" in r or "E" in r) else r + ".0"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot emit {type(v).__name__} to TOML")


def _toml_dumps(doc: dict) -> str:
    """Emit the restricted config shape: tables, arrays of tables, scalars."""
    lines = []
    for section, content in doc.items():
        plain = {k: v for k, v in content.items() if not isinstance(v, (dict, list)) or not _is_table_array(v)}
        arrays = {k: v for k, v in content.items() if _is_table_array(v)}
        subtables = {k: v for k, v in plain.items() if isinstance(v, dict)}
        for k in subtables:
            plain.pop(k)
        lines.append(f"[{section}]")
        for k, v in plain.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
        for k, rows in arrays.items():
            for row in rows:
                lines.append(f"[[{section}.{k}]]")
                for rk, rv in row.items():
                    lines.append(f"{rk} = {_toml_value(rv)}")
                lines.append("")
        for k, sub in subtables.items():
            for sk, sv in sub.items():
                lines.append(f"[{section}.{k}.{sk}]")
                for ik, iv in sv.items():
                    lines.append(f"{ik} = {_toml_value(iv)}")
                lines.append("")
    return "\n".join(lines)


def _is_table_array(v) -> bool:
    return isinstance(v, list) and bool(v) and all(isinstance(x, dict) for x in v)


def effective_config_dict(cfg: RunConfig) -> dict:
    doc: Dict[str, dict] = {
        "run": {"model": cfg.model_name, "seed": cfg.seed},
        "params": {n: float(v) for n, v in zip(cfg.model.default_params.names, cfg.mu)},
        "initial_state": {"x": [float(v) for v in cfg.x0]},
        "simulation": {
            "t0": cfg.simcfg.t0,
            "t_final": cfg.simcfg.tf,
            "dt": cfg.simcfg.dt,
            "tail": cfg.simcfg.tail_count,
        },
        "loss": {"balance": cfg.balance, "term": [dict(s) for s in cfg.term_specs]},
        "navigate": {"scheme": cfg.scheme, "feature": cfg.feature},
        "gd": {
            "learning_rate": cfg.gd.learning_rate,
            "decay_per_epoch": cfg.gd.decay_per_epoch,
            "clip_norm": False if cfg.gd.clip_norm is None else cfg.gd.clip_norm,
            "max_epochs": cfg.gd.max_epochs,
            "adam": list(cfg.gd.adam),
            "stop_step_tol": cfg.gd.stop_step_tol,
        },
        "trust_region": {
            "steps": cfg.trust.steps,
            "step_size": cfg.trust.step_size,
            "inner_budget": cfg.trust.inner_budget,
            "confidence_window": cfg.trust.confidence_window,
            "gamma_init": cfg.trust.gamma_init,
        },
        "box": {n: [lo, hi] for n, (lo, hi) in zip(cfg.model.default_params.names, cfg.box)},
        "sweep": {
            "features": list(cfg.sweep_features),
            "axis": {n: {"min": lo, "max": hi, "count": c} for n, lo, hi, c in cfg.sweep_axes},
        },
        "check_grad": {"h": cfg.check_h, "tolerance": cfg.check_tolerance},
    }
    if cfg.out is not None:
        doc["run"]["out"] = cfg.out
    if cfg.gd.stop_lr_floor is not None:
        doc["gd"]["stop_lr_floor"] = cfg.gd.stop_lr_floor
    return doc


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_json(path: str, obj) -> None:
    _write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _echo_config(cfg: RunConfig, out: str) -> None:
    _write(os.path.join(out, "effective_config.toml"), _toml_dumps(effective_config_dict(cfg)))


# ---------------------------------------------------------------- features

def compute_features(diag, names: Sequence[str]) -> Dict[str, float]:
    """H1 summary features used by sweeps and the sampling oracles."""
    out = {}
    for n in names:
        if n == "max_pers":
            out[n] = max_persistence(diag, 1)[0]
        elif n == "total_pers":
            out[n] = total_persistence(diag, 1)[0]
        elif n == "entropy":
            try:
                out[n] = persistent_entropy(diag, 1, normalized=True)[0]
            except UndefinedEntropyError:
                out[n] = math.nan
        else:
            raise ValueError(f"unknown feature '{n}'")
    return out


def _pipeline_features(model, mu, x0, simcfg, names) -> Dict[str, float]:
    traj = integrate(model, mu, x0, simcfg)
    diag = rips_persistence(tail_point_cloud(traj, simcfg.tail_count))
    return compute_features(diag, names)


def _sweep_cell(args):
    """One grid cell; module-level so worker processes can import it."""
    i, j, model_name, mu, x0, sim, names = args
    model = model_by_name(model_name)
    simcfg = SimulationConfig(*sim)
    try:
        feats = _pipeline_features(model, np.array(mu), np.array(x0), simcfg, names)
        return i, j, feats, False
    except (DivergenceError, SingularEdgeError):
        return i, j, {n: math.nan for n in names}, True


# ---------------------------------------------------------------- commands

def _trajectory_csv(traj) -> str:
    cols = ",".join(f"x_{k + 1}" for k in range(traj.state_dim))
    lines = [f"t,{cols}"]
    for t, row in zip(traj.times, traj.states):
        vals = ",".join(f"{v:.17g}" for v in row)
        lines.append(f"{t:.17g},{vals}")
    return "\n".join(lines) + "\n"


def _display_states(states: np.ndarray, model_name: str) -> np.ndarray:
    # wide-range attractors are standardized for display only
    if model_name == "lorenz":
        std = states.std(axis=0)
        std[std == 0] = 1.0
        return (states - states.mean(axis=0)) / std
    return states


def cmd_simulate(cfg: RunConfig, out: str) -> int:
    os.makedirs(out, exist_ok=True)
    _echo_config(cfg, out)
    model = cfg.model
    try:
        traj = integrate(model, cfg.mu, cfg.x0, cfg.simcfg)
    except DivergenceError as e:
        print(f"simulation diverged: {e}", file=sys.stderr)
        return 3
    cloud = tail_point_cloud(traj, cfg.simcfg.tail_count)
    diag = rips_persistence(cloud)

    _write(os.path.join(out, "trajectory.csv"), _trajectory_csv(traj))
    _write(os.path.join(out, "diagram.csv"), diagram_to_csv(diag))
    _write_json(os.path.join(out, "diagram.json"), diagram_to_json(diag))
    _write_json(
        os.path.join(out, "features.json"),
        {"schema_version": SCHEMA_VERSION, **compute_features(diag, SWEEP_FEATURES)},
    )

    mu_str = ", ".join(f"{n}={v:.6g}" for n, v in zip(model.default_params.names, cfg.mu))
    disp = _display_states(traj.states, cfg.model_name)
    _write(
        os.path.join(out, "trajectory.svg"),
        svgplot.phase_plot(
            disp[:, :2],
            title=f"{cfg.model_name} trajectory",
            xlabel="x_1",
            ylabel="x_2",
            provenance=f"source: trajectory.csv; model: {cfg.model_name}; {mu_str}",
        ),
    )
    _write(
        os.path.join(out, "diagram.svg"),
        svgplot.diagram_plot(
            diag,
            title=f"{cfg.model_name} tail diagram",
            provenance=f"source: diagram.csv; model: {cfg.model_name}; {mu_str}",
        ),
    )
    n1 = len(diag.finite_pairs(1))
    print(f"wrote {out}: {cloud.n_points}-point tail, {n1} finite H1 pairs")
    return 0


def _axis_values(axis) -> np.ndarray:
    name, lo, hi, count = axis
    return np.linspace(lo, hi, count)


def cmd_sweep(cfg: RunConfig, out: str, workers: int) -> int:
    if len(cfg.sweep_axes) != 2:
        raise ConfigError("sweep needs exactly two [sweep.axis.<param>] tables")
    os.makedirs(out, exist_ok=True)
    _echo_config(cfg, out)
    model = cfg.model
    pnames = model.default_params.names
    (n1, *_), (n2, *_) = cfg.sweep_axes
    v1, v2 = _axis_values(cfg.sweep_axes[0]), _axis_values(cfg.sweep_axes[1])
    i1, i2 = pnames.index(n1), pnames.index(n2)

    jobs = []
    sim = (cfg.simcfg.t0, cfg.simcfg.tf, cfg.simcfg.dt, cfg.simcfg.tail_count)
    for i, a in enumerate(v1):
        for j, b in enumerate(v2):
            mu = cfg.mu.copy()
            mu[i1], mu[i2] = a, b
            jobs.append((i, j, cfg.model_name, tuple(mu), tuple(cfg.x0), sim, cfg.sweep_features))

    grids = {n: np.full((len(v1), len(v2)), math.nan) for n in cfg.sweep_features}
    diverged = np.zeros((len(v1), len(v2)), dtype=bool)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_sweep_cell, jobs, chunksize=8)
            for i, j, feats, bad in results:
                for n, v in feats.items():
                    grids[n][i, j] = v
                diverged[i, j] = bad
    else:
        for job in jobs:
            i, j, feats, bad = _sweep_cell(job)
            for n, v in feats.items():
                grids[n][i, j] = v
            diverged[i, j] = bad

    _write_json(
        os.path.join(out, "sweep.json"),
        {
            "schema_version": SCHEMA_VERSION,
            "model": cfg.model_name,
            "axes": [
                {"name": n1, "values": v1},
                {"name": n2, "values": v2},
            ],
            "features": {n: grids[n] for n in cfg.sweep_features},
            "diverged": diverged,
        },
    )
    for n in cfg.sweep_features:
        lines = [f"{n1},{n2},{n}"]
        for i, a in enumerate(v1):
            for j, b in enumerate(v2):
                lines.append(f"{a:.17g},{b:.17g},{grids[n][i, j]:.17g}")
        _write(os.path.join(out, f"sweep_{n}.csv"), "\n".join(lines) + "\n")
        _write(
            os.path.join(out, f"sweep_{n}.svg"),
            svgplot.heatmap(
                v1, v2, grids[n],
                title=f"{cfg.model_name} {n}",
                xlabel=n1, ylabel=n2, colorbar_label=n,
                provenance=f"source: sweep_{n}.csv; model: {cfg.model_name}",
            ),
        )
    n_bad = int(diverged.sum())
    print(f"wrote {out}: {len(v1)}x{len(v2)} sweep, {n_bad} masked cells")
    return 0


def _load_sweep(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported sweep schema in {path}")
    axes = [(a["name"], np.array(a["values"], dtype=np.float64)) for a in data["axes"]]
    feats = {
        n: np.array([[math.nan if v is None else v for v in row] for row in g], dtype=np.float64)
        for n, g in data["features"].items()
    }
    return data["model"], axes, feats


def _cached_oracle(cfg: RunConfig, cached_path: str):
    """Feature interpolator over a stored sweep, aligned to the parameter order."""
    model_name, axes, feats = _load_sweep(cached_path)
    if model_name != cfg.model_name:
        raise ConfigError(
            f"cached sweep is for '{model_name}', config wants '{cfg.model_name}'"
        )
    if cfg.feature not in feats:
        raise ConfigError(f"cached sweep lacks feature '{cfg.feature}'")
    pnames = cfg.model.default_params.names
    order = [pnames.index(n) for n, _ in axes]
    free_box = {pnames[i] for i, (lo, hi) in enumerate(cfg.box) if lo != hi}
    if free_box != {n for n, _ in axes}:
        raise ConfigError(
            "cached sweep axes must match the free box parameters "
            f"(sweep has {sorted(n for n, _ in axes)}, box frees {sorted(free_box)})"
        )
    grid = feats[cfg.feature]
    if order[0] > order[1]:  # interpolator axes must follow mu component order
        axes = [axes[1], axes[0]]
        order = [order[1], order[0]]
        grid = grid.T
    frozen: List[Optional[float]] = [float(v) for v in cfg.mu]
    for k in order:
        frozen[k] = None
    return grid_feature([v for _, v in axes], grid, frozen=frozen), axes


def _ondemand_oracle(cfg: RunConfig):
    model = cfg.model
    fname = cfg.feature

    def feature(mu: np.ndarray) -> float:
        try:
            feats = _pipeline_features(model, mu, cfg.x0, cfg.simcfg, (fname,))
        except (DivergenceError, SingularEdgeError):
            return -math.inf
        v = feats[fname]
        return -math.inf if math.isnan(v) else v

    return feature


def _path_artifacts(cfg: RunConfig, out: str, record: PathRecord, labels, heat) -> None:
    pnames = cfg.model.default_params.names
    _write(os.path.join(out, "path.csv"), path_to_csv(record, pnames, labels))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model": cfg.model_name,
        "scheme": cfg.scheme,
        "param_names": list(pnames),
        "termination": record.termination,
        "epochs": record.epochs,
        "mu_history": record.mu_history,
        "loss_history": record.loss_history,
        "feature_labels": list(labels),
        "feature_history": record.feature_history,
        "grad_norm_history": record.grad_norm_history,
        "degenerate_epochs": list(record.degenerate_epochs),
        "outside_box": record.outside_box.astype(int),
    }
    if record.region_history is not None:
        doc["region_history"] = record.region_history
        lines = ["step," + ",".join(f"lo_{n}" for n in pnames) + "," + ",".join(f"hi_{n}" for n in pnames)]
        for k, (lo, hi) in enumerate(record.region_history):
            row = ",".join(f"{v:.17g}" for v in lo) + "," + ",".join(f"{v:.17g}" for v in hi)
            lines.append(f"{k + 1},{row}")
        _write(os.path.join(out, "regions.csv"), "\n".join(lines) + "\n")
    _write_json(os.path.join(out, "path.json"), doc)
    _render_path_svgs(cfg.model_name, out, doc, heat)


def _render_path_svgs(model_name: str, out: str, doc: dict, heat) -> None:
    pnames = doc["param_names"]
    mu_hist = np.asarray(doc["mu_history"], dtype=np.float64)
    if heat is not None:
        (xname, xvals), (yname, yvals), grid = heat
        xi, yi = pnames.index(xname), pnames.index(yname)
    else:
        # fall back to the first two parameters that actually move
        moved = np.flatnonzero(np.ptp(mu_hist, axis=0) > 0)
        xi, yi = (int(moved[0]), int(moved[1])) if len(moved) >= 2 else (0, min(1, mu_hist.shape[1] - 1))
        xname, yname = pnames[xi], pnames[yi]
        lo = mu_hist[:, [xi, yi]].min(axis=0)
        hi = mu_hist[:, [xi, yi]].max(axis=0)
        xvals, yvals, grid = np.array([lo[0], hi[0]]), np.array([lo[1], hi[1]]), None
    regions = None
    if doc.get("region_history") is not None:
        rh = np.asarray(
            [[[lo[xi], lo[yi]], [hi[xi], hi[yi]]] for lo, hi in np.asarray(doc["region_history"], dtype=np.float64)]
        )
        regions = rh
    _write(
        os.path.join(out, "path.svg"),
        svgplot.path_over_heatmap(
            xvals, yvals, grid, mu_hist[:, [xi, yi]], regions=regions,
            title=f"{model_name} {doc['scheme']} path",
            xlabel=xname, ylabel=yname,
            provenance=f"source: path.csv; model: {model_name}; scheme: {doc['scheme']}",
        ),
    )
    losses = np.asarray(
        [math.nan if v is None else v for v in _jsonable(doc["loss_history"])],
        dtype=np.float64,
    )
    if losses.size:
        label = "loss" if doc["scheme"] == "gd" else "feature"
        _write(
            os.path.join(out, "loss_curve.svg"),
            svgplot.line_plot(
                np.asarray(doc["epochs"], dtype=np.float64), [losses], [label],
                title=f"{model_name} {doc['scheme']} objective",
                xlabel="epoch", ylabel=label,
                provenance=f"source: path.csv; model: {model_name}",
            ),
        )


def cmd_navigate(cfg: RunConfig, out: str, cached_sweep: Optional[str]) -> int:
    os.makedirs(out, exist_ok=True)
    _echo_config(cfg, out)
    heat = None
    if cached_sweep is not None:
        _, axes, feats = _load_sweep(cached_sweep)
        if cfg.feature in feats:
            heat = (
                (axes[0][0], axes[0][1]),
                (axes[1][0], axes[1][1]),
                feats[cfg.feature],
            )

    if cfg.scheme == "gd":
        record = gradient_descent_path(
            cfg.model, cfg.x0, cfg.simcfg, cfg.terms, cfg.mu, cfg.gd,
            box=cfg.box, balance=cfg.balance,
        )
        labels = [t.kind for t in cfg.terms] + ["box"]
    else:
        if cached_sweep is not None:
            feature, _ = _cached_oracle(cfg, cached_sweep)
        else:
            feature = _ondemand_oracle(cfg)
        path_fn = global_sampling_path if cfg.scheme == "global" else local_sampling_path
        record = path_fn(feature, cfg.box, cfg.mu, cfg.trust)
        labels = [cfg.feature]

    _path_artifacts(cfg, out, record, labels, heat)
    end = ", ".join(f"{n}={v:.6g}" for n, v in zip(cfg.model.default_params.names, record.final_mu))
    print(
        f"wrote {out}: {cfg.scheme} path, {len(record.epochs)} epochs, "
        f"terminated on {record.termination}, final {end}"
    )
    return 0


def cmd_check_grad(cfg: RunConfig, out: str) -> int:
    os.makedirs(out, exist_ok=True)
    _echo_config(cfg, out)
    model = cfg.model

    def scalar(m: np.ndarray) -> float:
        traj = integrate(model, m, cfg.x0, cfg.simcfg)
        diag = rips_persistence(tail_point_cloud(traj, cfg.simcfg.tail_count))
        return evaluate(cfg.terms, diag, m, balance=False).total

    try:
        ev, grad = topological_loss_gradient(
            model, cfg.x0, cfg.simcfg, cfg.terms, cfg.mu, balance=False
        )
        fd = finite_difference_gradient(scalar, cfg.mu, cfg.check_h)
    except DivergenceError as e:
        print(f"simulation diverged: {e}", file=sys.stderr)
        return 3

    pnames = model.default_params.names
    free = [i for i, (lo, hi) in enumerate(cfg.box) if lo != hi]
    rows, worst = [], 0.0
    # balancing rescales terms by detached magnitudes, so the comparison
    # always runs unbalanced; that is the objective the adjoint differentiates
    lines = [
        f"gradient check: {cfg.model_name}, h={cfg.check_h:.6g}, "
        f"tolerance={cfg.check_tolerance:.6g}, loss value {ev.total:.10g}"
    ]
    for i in free:
        rel = abs(grad[i] - fd[i]) / max(abs(grad[i]), abs(fd[i]), 1e-12)
        worst = max(worst, rel)
        status = "PASS" if rel <= cfg.check_tolerance else "FAIL"
        lines.append(
            f"  {pnames[i]}: adjoint {grad[i]:.10g}  fd {fd[i]:.10g}  rel {rel:.3g}  {status}"
        )
        rows.append({"param": pnames[i], "adjoint": grad[i], "fd": fd[i], "rel_error": rel})
    ok = worst <= cfg.check_tolerance
    if ok:
        lines.append(f"PASS (worst relative error {worst:.3g})")
    else:
        lines.append(
            f"FAIL (worst relative error {worst:.3g}); large discrepancies are "
            "expected in chaotic regimes where the loss is not locally smooth"
        )
    report = "\n".join(lines) + "\n"
    print(report, end="")
    _write(os.path.join(out, "check_grad.txt"), report)
    _write_json(
        os.path.join(out, "check_grad.json"),
        {
            "schema_version": SCHEMA_VERSION,
            "model": cfg.model_name,
            "h": cfg.check_h,
            "tolerance": cfg.check_tolerance,
            "loss": ev.total,
            "components": rows,
            "worst_rel_error": worst,
            "passed": ok,
        },
    )
    return 0


def cmd_plot(out: str, cached_sweep: Optional[str]) -> int:
    """Re-render every SVG in an output directory from its data files."""
    cfg_path = os.path.join(out, "effective_config.toml")
    if not os.path.exists(cfg_path):
        raise ConfigError(f"no effective_config.toml in {out}; nothing to plot")
    cfg = load_config(cfg_path)
    model_name = cfg.model_name
    made = []

    tpath = os.path.join(out, "trajectory.csv")
    if os.path.exists(tpath):
        data = np.loadtxt(tpath, delimiter=",", skiprows=1)
        states = _display_states(np.atleast_2d(data)[:, 1:], model_name)
        mu_str = ", ".join(
            f"{n}={v:.6g}" for n, v in zip(cfg.model.default_params.names, cfg.mu)
        )
        _write(
            os.path.join(out, "trajectory.svg"),
            svgplot.phase_plot(
                states[:, :2], title=f"{model_name} trajectory",
                xlabel="x_1", ylabel="x_2",
                provenance=f"source: trajectory.csv; model: {model_name}; {mu_str}",
            ),
        )
        made.append("trajectory.svg")

    dpath = os.path.join(out, "diagram.json")
    if os.path.exists(dpath):
        from .tda import PersistenceDiagram, PersistencePair

        with open(dpath, "r", encoding="utf-8") as fh:
            dj = json.load(fh)
        pairs = tuple(
            PersistencePair(
                dim=p["dim"],
                birth=p["birth"],
                death=math.inf if p["death"] is None else p["death"],
                birth_edge=None if p["birth_edge"] is None else tuple(p["birth_edge"]),
                death_edge=None if p["death_edge"] is None else tuple(p["death_edge"]),
            )
            for p in dj["pairs"]
        )
        diag = PersistenceDiagram(pairs=pairs, homology_dims_computed=frozenset(dj["dims"]))
        _write(
            os.path.join(out, "diagram.svg"),
            svgplot.diagram_plot(
                diag, title=f"{model_name} tail diagram",
                provenance=f"source: diagram.csv; model: {model_name}",
            ),
        )
        made.append("diagram.svg")

    spath = os.path.join(out, "sweep.json")
    if os.path.exists(spath):
        _, axes, feats = _load_sweep(spath)
        (n1, v1), (n2, v2) = axes
        for n, grid in feats.items():
            _write(
                os.path.join(out, f"sweep_{n}.svg"),
                svgplot.heatmap(
                    v1, v2, grid, title=f"{model_name} {n}",
                    xlabel=n1, ylabel=n2, colorbar_label=n,
                    provenance=f"source: sweep_{n}.csv; model: {model_name}",
                ),
            )
            made.append(f"sweep_{n}.svg")

    ppath = os.path.join(out, "path.json")
    if os.path.exists(ppath):
        with open(ppath, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        doc["loss_history"] = [math.nan if v is None else v for v in doc["loss_history"]]
        heat = None
        bg = cached_sweep or (spath if os.path.exists(spath) else None)
        if bg:
            _, axes, feats = _load_sweep(bg)
            fname = doc["feature_labels"][0] if doc["feature_labels"] else "max_pers"
            fname = fname if fname in feats else next(iter(sorted(feats)))
            heat = ((axes[0][0], axes[0][1]), (axes[1][0], axes[1][1]), feats[fname])
        _render_path_svgs(model_name, out, doc, heat)
        made.append("path.svg")

    if not made:
        print(f"no plottable artifacts found in {out}")
    else:
        print(f"wrote {out}: " + ", ".join(made))
    return 0


# ---------------------------------------------------------------- entry

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="topopath",
        description="Steer dynamical systems by shaping trajectory-tail persistence.",
    )
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, needs_config in (
        ("simulate", True),
        ("sweep", True),
        ("navigate", True),
        ("check-grad", True),
        ("plot", False),
    ):
        p = sub.add_parser(verb)
        if needs_config:
            p.add_argument("--config", required=True, help="run description (TOML)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override [run].seed")
        if verb == "sweep":
            p.add_argument("--workers", type=int, default=1, help="parallel sweep processes")
        if verb in ("navigate", "plot"):
            p.add_argument("--cached-sweep", help="sweep.json used as feature oracle/backdrop")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "plot":
            if not args.out:
                raise ConfigError("plot needs --out pointing at a run directory")
            return cmd_plot(args.out, args.cached_sweep)

        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.trust = replace(cfg.trust, seed=args.seed)
        out = args.out or cfg.out
        if not out:
            raise ConfigError("no output directory: pass --out or set [run].out")
        cfg.out = out

        if args.verb == "simulate":
            return cmd_simulate(cfg, out)
        if args.verb == "sweep":
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            return cmd_sweep(cfg, out, args.workers)
        if args.verb == "navigate":
            return cmd_navigate(cfg, out, args.cached_sweep)
        if args.verb == "check-grad":
            return cmd_check_grad(cfg, out)
        raise AssertionError(args.verb)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
