"""Model configuration files.

A configuration is a TOML document with a top-level ``model`` key and the
sections ``[grid]``, ``[actions]``, ``[payoff]``, ``[kernel]`` and
``[dynamics]``.  Unknown sections and keys are rejected.  The README lists
every key with its default.
"""

from __future__ import annotations

import copy
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .lattice import ActionGrid, PopulationState, StateGrid
from .model import (
    GameSpec,
    NoiseSpec,
    SeparableSpec,
    SeparableTransform,
    TypedGameSpec,
    TypeMember,
    build_coordination_model,
    build_search_model,
    build_security_model,
    linear_truncated_kernel,
    mixture_kernel,
    separable_to_standard,
    truncated_linear_rows,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["ConfigError", "ModelConfig", "BuiltModel", "load_config", "parse_config", "bundled_configs"]

SECTIONS = ("grid", "actions", "payoff", "kernel", "dynamics")

DYNAMICS_DEFAULTS = {
    "beta": 0.75,
    "tol": 5e-4,
    "dp_tol": 1e-4,
    "max_iters": 1000,
    "eps_opt": 1e-9,
}

_NOISE = {"q_minus": 0.4, "q_zero": 0.2, "q_plus": 0.4}

SCHEMAS = {
    "security": {
        "grid": {"max": 50},
        "actions": {"max": 25},
        "payoff": {
            "kappa": 0.05, "cost": 0.05, "delta": 1.0,
            "delta_low": None, "delta_high": None, "fraction_low": None,
        },
        "kernel": dict(_NOISE),
    },
    "coordination": {
        "grid": {"max": 10},
        "actions": {"max": 3},
        "payoff": {},
        "kernel": {"A": 1.0, "B": 1.0, "q_minus": 0.45, "q_zero": 0.2, "q_plus": 0.35},
    },
    "search": {
        "grid": {"max": 10.0, "n": 11},
        "actions": {"max": 5.0, "n": 6},
        "payoff": {"cost": 0.5},
        "kernel": {},
    },
    "custom": {
        "grid": {"min": None, "max": None, "step": None, "n": None},
        "actions": {"min": None, "max": None, "step": None, "n": None},
        "payoff": {"expr": None, "utility": None, "cost": None, "utility_monotone": True, "constants": {}},
        "kernel": {
            "type": "linear", "A": 1.0, "B": 1.0, "param": None,
            "q_minus": 0.4, "q_zero": 0.2, "q_plus": 0.4,
            "q": None, "F": "top", "G": "bottom",
        },
    },
}

SWEEP_PARAMS = ("cost", "kappa", "delta", "tilt", "fraction_low")

_NUMPY_NAMES = {
    name: getattr(np, name)
    for name in (
        "exp", "log", "log1p", "sqrt", "abs", "minimum", "maximum", "where",
        "sum", "clip", "tanh", "sin", "cos", "pi", "floor", "ceil",
    )
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(eq=False)
class BuiltModel:
    """Solver-ready objects built from a configuration.

    ``game`` is set for homogeneous models; ``typed`` for two-type security
    populations.  ``separable``/``transform`` are set for separable models.
    """

    game: Optional[GameSpec] = None
    typed: Optional[TypedGameSpec] = None
    separable: Optional[SeparableSpec] = None
    transform: Optional[SeparableTransform] = None
    type_transforms: dict = field(default_factory=dict)


@dataclass(eq=False)
class ModelConfig:
    model: str
    sections: dict
    source: Optional[str] = None

    @property
    def dynamics(self) -> dict:
        return self.sections["dynamics"]

    def to_dict(self) -> dict:
        return {"model": self.model, **copy.deepcopy(self.sections)}

    def is_typed(self) -> bool:
        return self.model == "security" and self.sections["payoff"]["fraction_low"] is not None

    def with_param(self, name: str, value) -> "ModelConfig":
        """Copy with one sweep parameter replaced.

        ``tilt`` takes ``"q_minus/q_plus"`` and keeps ``q_zero``.
        """
        d = self.to_dict()
        if name == "tilt" or name == "q_minus/q_plus":
            try:
                qm, qp = (float(v) for v in str(value).split("/"))
            except ValueError as exc:
                raise ConfigError(f"tilt value must look like '0.45/0.35', got {value!r}") from exc
            if "q_minus" not in d["kernel"]:
                raise ConfigError(f"model {self.model!r} has no noise tilt")
            d["kernel"]["q_minus"], d["kernel"]["q_plus"] = qm, qp
        elif name in SWEEP_PARAMS:
            if name not in d["payoff"]:
                raise ConfigError(f"model {self.model!r} has no parameter {name!r}")
            d["payoff"][name] = float(value)
        else:
            raise ConfigError(f"cannot sweep {name!r}; choose from {', '.join(SWEEP_PARAMS)}")
        return parse_config(d, source=self.source)

    def build(self) -> BuiltModel:
        try:
            return _BUILDERS[self.model](self)
        except ConfigError:
            raise
        except (ValueError, TypeError, ZeroDivisionError) as exc:
            raise ConfigError(f"cannot build model: {exc}") from exc


def _merge(model: str, raw: dict) -> dict:
    schema = SCHEMAS[model]
    out = {}
    for sec in SECTIONS:
        given = raw.get(sec, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{sec}] must be a table")
        allowed = DYNAMICS_DEFAULTS if sec == "dynamics" else schema[sec]
        unknown = set(given) - set(allowed)
        if unknown:
            raise ConfigError(f"unknown key(s) in [{sec}] for model {model!r}: {', '.join(sorted(unknown))}")
        merged = copy.deepcopy(allowed)
        merged.update(given)
        out[sec] = merged
    return out


def _check_types(cfg: ModelConfig) -> None:
    dyn = cfg.dynamics
    for key in ("beta", "tol", "dp_tol", "eps_opt"):
        if not isinstance(dyn[key], (int, float)) or isinstance(dyn[key], bool):
            raise ConfigError(f"[dynamics] {key} must be a number")
    if not isinstance(dyn["max_iters"], int) or dyn["max_iters"] < 1:
        raise ConfigError("[dynamics] max_iters must be a positive integer")
    if not 0 < dyn["beta"] < 1:
        raise ConfigError("[dynamics] beta must lie in (0, 1)")
    if dyn["tol"] <= 0 or dyn["dp_tol"] <= 0:
        raise ConfigError("tolerances must be positive")
    if cfg.model == "security":
        typed_keys = [cfg.sections["payoff"][k] for k in ("delta_low", "delta_high", "fraction_low")]
        if any(v is not None for v in typed_keys) and any(v is None for v in typed_keys):
            raise ConfigError("delta_low, delta_high and fraction_low must be given together")


def parse_config(raw, source: Optional[str] = None) -> ModelConfig:
    """Validate a configuration given as TOML text or an already-parsed mapping."""
    if isinstance(raw, str):
        try:
            raw = tomllib.loads(raw)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML syntax error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a table")
    raw = dict(raw)
    model = raw.pop("model", None)
    if model not in SCHEMAS:
        raise ConfigError(f"model must be one of {', '.join(SCHEMAS)}; got {model!r}")
    extra = set(raw) - set(SECTIONS)
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(extra))}")
    cfg = ModelConfig(model, _merge(model, raw), source)
    _check_types(cfg)
    return cfg


def bundled_configs() -> dict:
    """Names and paths of the configurations shipped with the package."""
    root = resources.files("mfecomp") / "configs"
    return {p.name[:-5]: Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml")}


def load_config(path) -> ModelConfig:
    """Read a configuration file; a bare name selects a bundled configuration."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_configs()
        if str(path) in bundled:
            p = bundled[str(path)]
        else:
            raise ConfigError(f"no such configuration: {path}")
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    return parse_config(text, source=str(p))


# ---------------------------------------------------------------------------
# builders


def _noise(k: dict) -> NoiseSpec:
    return NoiseSpec.three_point(k["q_minus"], k["q_zero"], k["q_plus"])


def _build_security(cfg: ModelConfig) -> BuiltModel:
    s = cfg.sections
    pay = s["payoff"]
    kw = dict(
        kappa=pay["kappa"], cost=pay["cost"], noise=_noise(s["kernel"]),
        beta=cfg.dynamics["beta"], max_state=int(s["grid"]["max"]), max_action=int(s["actions"]["max"]),
    )
    if cfg.is_typed():
        frac = pay["fraction_low"]
        if not 0.0 <= frac <= 1.0:
            raise ConfigError("fraction_low must lie in [0, 1]")
        members, transforms = [], {}
        for label, delta, mass in (("low", pay["delta_low"], frac), ("high", pay["delta_high"], 1.0 - frac)):
            if mass > 0:
                tr = separable_to_standard(build_security_model(delta=delta, **kw))
                members.append(TypeMember(label, tr.game, mass))
                transforms[label] = tr
        return BuiltModel(typed=TypedGameSpec(tuple(members)), type_transforms=transforms)
    spec = build_security_model(delta=pay["delta"], **kw)
    tr = separable_to_standard(spec)
    return BuiltModel(game=tr.game, separable=spec, transform=tr)


def _build_coordination(cfg: ModelConfig) -> BuiltModel:
    s = cfg.sections
    k = s["kernel"]
    spec = build_coordination_model(
        A=k["A"], B=k["B"], L=int(s["actions"]["max"]), M=int(s["grid"]["max"]),
        noise=_noise(k), beta=cfg.dynamics["beta"],
    )
    tr = separable_to_standard(spec)
    return BuiltModel(game=tr.game, separable=spec, transform=tr)


def _build_search(cfg: ModelConfig) -> BuiltModel:
    s = cfg.sections
    na = int(s["actions"]["n"])
    a = np.linspace(0.0, s["actions"]["max"], na)
    game = build_search_model(
        x_max=s["grid"]["max"], a_max=s["actions"]["max"], n_states=int(s["grid"]["n"]),
        n_actions=na, cost=s["payoff"]["cost"] * a**2, beta=cfg.dynamics["beta"],
    )
    return BuiltModel(game=game)


def _grid_points(sec: dict, name: str) -> np.ndarray:
    lo, hi = sec["min"], sec["max"]
    if lo is None or hi is None:
        raise ConfigError(f"[{name}] needs min and max")
    if sec["n"] is not None and sec["step"] is not None:
        raise ConfigError(f"[{name}] takes step or n, not both")
    if sec["n"] is not None:
        return np.linspace(lo, hi, int(sec["n"]))
    step = 1.0 if sec["step"] is None else float(sec["step"])
    n = int(round((hi - lo) / step)) + 1
    pts = lo + step * np.arange(n)
    if abs(pts[-1] - hi) > 1e-9 * max(1.0, abs(hi)):
        raise ConfigError(f"[{name}] max is not reachable from min in steps of {step}")
    return pts


class _Expr:
    """A numpy expression over a fixed set of names."""

    def __init__(self, text: str, allowed: set, where: str):
        if not isinstance(text, str) or not text.strip():
            raise ConfigError(f"{where} must be a nonempty expression string")
        try:
            self.code = compile(text, f"<{where}>", "eval")
        except SyntaxError as exc:
            raise ConfigError(f"{where}: {exc.msg}") from exc
        unknown = set(self.code.co_names) - allowed
        if unknown:
            raise ConfigError(f"{where} uses unknown name(s): {', '.join(sorted(unknown))}")
        self.names = set(self.code.co_names)
        self.text = text

    def __call__(self, **scope):
        return eval(self.code, {"__builtins__": {}}, scope)


def _distribution(spec, grid: StateGrid, where: str) -> PopulationState:
    if spec == "top":
        return PopulationState.highest(grid)
    if spec == "bottom":
        return PopulationState.lowest(grid)
    try:
        return PopulationState(spec, grid)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _build_custom(cfg: ModelConfig) -> BuiltModel:
    s = cfg.sections
    states = StateGrid(_grid_points(s["grid"], "grid"))
    actions = ActionGrid(_grid_points(s["actions"], "actions"))
    pay, ker = s["payoff"], s["kernel"]
    consts = dict(pay["constants"])
    for k, v in consts.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(f"constant {k!r} must be a number")
    consts.update(xmin=states.lower, xmax=states.upper, amin=actions.lower, amax=actions.upper)
    base = set(consts) | set(_NUMPY_NAMES)
    pop_names = {"f", "y", "eta"}
    y = states.points
    beta = cfg.dynamics["beta"]

    def pop_scope(f):
        return dict(_NUMPY_NAMES, **consts, f=f.weights, y=y, eta=float(y @ f.weights))

    separable = pay["utility"] is not None
    if separable:
        if pay["expr"] is not None:
            raise ConfigError("[payoff] takes expr or utility/cost, not both")
        if pay["cost"] is None or ker["param"] is None:
            raise ConfigError("separable custom models need [payoff] cost and [kernel] param")
        util = _Expr(pay["utility"], base | pop_names | {"x"}, "payoff.utility")
        cost = _Expr(pay["cost"], base | {"a"}, "payoff.cost")
        param = _Expr(ker["param"], base | {"x", "a"}, "kernel.param")
        nx = len(states)

        def utility(f):
            return np.broadcast_to(np.asarray(util(x=y, **pop_scope(f)), float), (nx,))

        def cost_fn(a):
            return np.broadcast_to(np.asarray(cost(a=a, **_NUMPY_NAMES, **consts), float), np.shape(a))

        def h_fn(x, a):
            return param(x=x, a=a, **_NUMPY_NAMES, **consts)

        if ker["type"] == "linear":
            noise = _noise(ker)
            pk = lambda h, f: truncated_linear_rows(h, noise, states)
            f_indep = True
        elif ker["type"] == "mixture":
            q = _Expr(ker["q"], base | pop_names | {"h"}, "kernel.q")
            F = _distribution(ker["F"], states, "kernel.F")
            G = _distribution(ker["G"], states, "kernel.G")
            rows = mixture_kernel(lambda h, _a, f: q(h=h, **pop_scope(f)), F, G)
            pk = lambda h, f: rows(np.asarray(h, float), None, f)
            f_indep = not (q.names & pop_names)
        else:
            raise ConfigError(f"unknown kernel type {ker['type']!r}")
        spec = SeparableSpec(
            states, actions, beta, utility=utility, cost=cost_fn, kernel_param=h_fn,
            param_kernel=pk, payoff_monotone=bool(pay["utility_monotone"]),
            kernel_f_independent=f_indep, name="custom",
        )
        tr = separable_to_standard(spec)
        return BuiltModel(game=tr.game, separable=spec, transform=tr)

    if pay["expr"] is None:
        raise ConfigError("[payoff] needs expr (or utility, cost and [kernel] param)")
    expr = _Expr(pay["expr"], base | pop_names | {"x", "a"}, "payoff.expr")
    xs, av = states.points[:, None], actions.points[None, :]
    shape = (len(states), len(actions))

    def payoff(f):
        return np.broadcast_to(np.asarray(expr(x=xs, a=av, **pop_scope(f)), float), shape)

    if ker["type"] == "linear":
        rows = linear_truncated_kernel(ker["A"], ker["B"], _noise(ker), states)
        K = rows(xs, av)
        return BuiltModel(game=GameSpec(
            states, actions, payoff, lambda f: K, beta, kernel_depends_on_env=False, name="custom",
        ))
    if ker["type"] == "mixture":
        q = _Expr(ker["q"], base | pop_names | {"x", "a"}, "kernel.q")
        F = _distribution(ker["F"], states, "kernel.F")
        G = _distribution(ker["G"], states, "kernel.G")
        rows = mixture_kernel(lambda x, a, f: np.broadcast_to(q(x=x, a=a, **pop_scope(f)), shape), F, G)
        return BuiltModel(game=GameSpec(
            states, actions, payoff, lambda f: rows(xs, av, f), beta,
            kernel_depends_on_env=bool(q.names & pop_names), name="custom",
        ))
    raise ConfigError(f"unknown kernel type {ker['type']!r}")


_BUILDERS = {
    "security": _build_security,
    "coordination": _build_coordination,
    "search": _build_search,
    "custom": _build_custom,
}
