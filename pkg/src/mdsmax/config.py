"""TOML run configuration: parsing, validation and serialization.

Every block rejects keys it does not know.  ``dump_config`` writes back
every recognized field so that parse -> dump -> parse is the identity.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import InputError
from .harness import MIN_REPLICATIONS, MODES
from .martingale import KINDS, ScenarioSpec

COMMANDS = ("verify", "bound", "simulate", "sweep", "selftest")


@dataclass
class MCBlock:
    replications: int = 5000
    base_seed: int | None = None
    delta: float = 0.01
    mode: str = "direct"
    mc_budget: int = 2000


@dataclass
class BoundBlock:
    alpha: float = 0.0
    C: float = 1.0


@dataclass
class OutputBlock:
    csv: str | None = None
    append: bool = False
    timing: bool = False


@dataclass
class GridBlock:
    kinds: list[str] = field(default_factory=list)
    d: list[int] = field(default_factory=list)
    n: list[int] = field(default_factory=list)
    params: dict[str, dict] = field(default_factory=dict)

    def points(self) -> list[tuple]:
        return [(k, d, n, dict(self.params.get(k, {})))
                for k in self.kinds for d in self.d for n in self.n]


@dataclass
class VerifyBlock:
    suites: list[str] = field(default_factory=list)
    seed: int = 20240601
    scale: float = 1.0
    kappas: list[float] = field(default_factory=lambda: [0.1, 1.0, 10.0, 100.0])


@dataclass
class RunConfig:
    command: str
    scenario: ScenarioSpec | None = None
    mc: MCBlock = field(default_factory=MCBlock)
    bound: BoundBlock = field(default_factory=BoundBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    grid: GridBlock | None = None
    verify: VerifyBlock = field(default_factory=VerifyBlock)


_BLOCKS = {"mc": MCBlock, "bound": BoundBlock, "output": OutputBlock,
           "grid": GridBlock, "verify": VerifyBlock}


def _block(name: str, cls, raw) -> object:
    if not isinstance(raw, dict):
        raise InputError(f"[{name}] must be a table")
    known = set(cls.__dataclass_fields__)
    for key in raw:
        if key not in known:
            raise InputError(f"unknown key {name}.{key}")
    return cls(**raw)


def _check_type(path: str, value, types) -> None:
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise InputError(f"{path} has the wrong type")
    if not isinstance(value, types):
        raise InputError(f"{path} has the wrong type: {value!r}")


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.command not in COMMANDS:
        raise InputError(f"command must be one of {COMMANDS}, got {cfg.command!r}")
    mc, bd = cfg.mc, cfg.bound
    _check_type("mc.replications", mc.replications, int)
    _check_type("mc.mc_budget", mc.mc_budget, int)
    _check_type("mc.delta", mc.delta, (int, float))
    _check_type("bound.alpha", bd.alpha, (int, float))
    _check_type("bound.C", bd.C, (int, float))
    _check_type("output.append", cfg.output.append, bool)
    _check_type("output.timing", cfg.output.timing, bool)
    if mc.base_seed is not None:
        _check_type("mc.base_seed", mc.base_seed, int)
        if not 0 <= mc.base_seed < 2**64:
            raise InputError("mc.base_seed must be a 64-bit unsigned integer")
    if not 0 <= bd.alpha <= 0.25:
        raise InputError(f"bound.alpha must lie in [0, 1/4], got {bd.alpha!r}")
    if not (math.isfinite(bd.C) and bd.C > 0):
        raise InputError("bound.C must be positive")
    if not 0 < mc.delta < 1:
        raise InputError("mc.delta must lie in (0, 1)")
    if mc.mode not in MODES:
        raise InputError(f"mc.mode must be one of {MODES}")
    if cfg.command in ("simulate", "sweep") and mc.replications < MIN_REPLICATIONS:
        raise InputError(
            f"mc.replications = {mc.replications} is below the minimum of {MIN_REPLICATIONS}"
        )
    if cfg.command in ("bound", "simulate", "sweep") and mc.base_seed is None:
        raise InputError("mc.base_seed is required for commands that use randomness")
    if cfg.command in ("bound", "simulate") and cfg.scenario is None:
        raise InputError(f"command {cfg.command!r} needs a [scenario] block")
    if cfg.command == "sweep":
        g = cfg.grid
        if g is None or not (g.kinds and g.d and g.n):
            raise InputError("command 'sweep' needs a [grid] block with kinds, d and n")
        for k in g.kinds:
            if k not in KINDS:
                raise InputError(f"grid.kinds has unknown kind {k!r}")
        for k in g.params:
            if k not in KINDS:
                raise InputError(f"unknown key grid.params.{k}")
    v = cfg.verify
    for k in v.kappas:
        if isinstance(k, bool) or not isinstance(k, (int, float)) or not k > 0:
            raise InputError(f"verify.kappas must hold positive numbers, got {k!r}")
    return cfg


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise InputError(f"config is not valid TOML: {exc}") from None
    allowed = {"command", "scenario", *_BLOCKS}
    for key in raw:
        if key not in allowed:
            raise InputError(f"unknown key {key}")
    if "command" not in raw:
        raise InputError("config is missing 'command'")
    kwargs = {"command": raw["command"]}
    if "scenario" in raw:
        kwargs["scenario"] = ScenarioSpec.from_dict(raw["scenario"])
    for name, cls in _BLOCKS.items():
        if name in raw:
            kwargs[name] = _block(name, cls, raw[name])
    return validate(RunConfig(**kwargs))


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def to_dict(cfg: RunConfig) -> dict:
    out: dict = {"command": cfg.command}
    if cfg.scenario is not None:
        out["scenario"] = cfg.scenario.to_dict()
    for name in _BLOCKS:
        block = getattr(cfg, name)
        if block is None:
            continue
        out[name] = _drop_none({k: getattr(block, k) for k in block.__dataclass_fields__})
    return out


def dump_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))
