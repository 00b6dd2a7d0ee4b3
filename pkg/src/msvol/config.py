"""JSON run configuration: schema validation and spec construction.

Regime labels are 1-based in files (``"1->2"`` switch keys, ``j0``) and
0-based in the Python API.  Exponential laws take a ``rate`` (mean ``1/rate``).
A ``"*"`` switch key applies one law to every ordered pair; explicit pair keys
override it.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .levy_drivers import JumpLaw, LevyDriverSpec
from .map_engine import BivariateLaw, SwitchJumpLaw
from .markov_env import GeneratorMatrix
from .msbns import MsbnsSpec
from .mscogarch import MscogarchSpec

DEFAULTS = {
    "seed": 0,
    "horizon": 100.0,
    "grid_dt": 0.1,
    "n_paths": 1,
    "workers": 1,
    "k_max": 2,
    "r": 1.0,
    "h": 2.0,
    "times": [1.0, 5.0, 20.0],
    "lags": [0.0, 10.0, 20.0, 40.0],
    "mc_budget": 2000,
}
VALIDATE_DEFAULTS = {"n_paths": 2000, "horizon": 2000.0, "times": [1.0, 5.0, 20.0], "j0": 1}


class ConfigError(ValueError):
    """Invalid configuration; ``pointer`` is the JSON pointer of the offending value."""

    def __init__(self, pointer: str, message: str):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {message}")


def schema() -> dict:
    return json.loads(resources.files("msvol").joinpath("schema.json").read_text())


def bundled_config_names() -> list[str]:
    return sorted(p.name for p in resources.files("msvol").joinpath("configs").iterdir() if p.name.endswith(".json"))


def read_config(source: str | Path) -> dict:
    """Load a config file; bare names of bundled configs (``figure1.json``) also work."""
    path = Path(source)
    if path.exists():
        text = path.read_text()
    elif path.name in bundled_config_names() and path.parent == Path("."):
        text = resources.files("msvol").joinpath("configs", path.name).read_text()
    else:
        raise FileNotFoundError(f"config {source!s} not found (bundled: {', '.join(bundled_config_names())})")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("/", f"invalid JSON: {exc}") from exc


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path)


def validate_schema(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = errors[0]
        # oneOf failures are more helpful through their closest sub-error
        best = jsonschema.exceptions.best_match([err]) if err.context else err
        raise ConfigError(_pointer(best.absolute_path), best.message)


def _jump_law(d: dict | None) -> JumpLaw:
    if d is None:
        return JumpLaw.zero()
    kind = d["type"]
    if kind == "point":
        return JumpLaw.point(d["value"])
    if kind == "exponential":
        return JumpLaw.exponential(d["rate"])
    return JumpLaw.normal(d.get("mean", 0.0), d.get("sd", 1.0))


def _driver(d: dict, subordinator: bool, where: str) -> LevyDriverSpec:
    try:
        return LevyDriverSpec(
            drift=d.get("drift", 0.0),
            brownian_sd=d.get("brownian_sd", 0.0),
            cp_intensity=d.get("cp_intensity", 0.0),
            jump_law=_jump_law(d.get("jump_law")),
            subordinator=subordinator,
        )
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


def _switch_law(d: dict) -> BivariateLaw:
    if d["type"] == "zero":
        return BivariateLaw()
    if d["type"] == "point":
        return BivariateLaw.point_mass(d["x"], d["y"])
    return BivariateLaw(_jump_law(d.get("xi")), _jump_law(d.get("eta")))


def _switch_jumps(d: dict | None, n: int, where: str) -> SwitchJumpLaw:
    if not d:
        return SwitchJumpLaw.zero(n)
    table = {}
    if "*" in d:
        law = _switch_law(d["*"])
        table = {(i, j): law for i in range(n) for j in range(n) if i != j}
    for key, val in d.items():
        if key == "*":
            continue
        i, j = (int(x) - 1 for x in key.split("->"))
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ConfigError(f"{where}/{key}", f"invalid pair for {n} states")
        table[(i, j)] = _switch_law(val)
    return SwitchJumpLaw(n, table)


def _generator(q, where: str) -> GeneratorMatrix:
    n = len(q)
    for i, row in enumerate(q):
        if len(row) != n:
            raise ConfigError(f"{where}/{i}", f"row has {len(row)} entries, expected {n}")
    try:
        return GeneratorMatrix(q)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


def _check_lengths(block: dict, names, n: int, where: str) -> None:
    for name in names:
        if name in block and len(block[name]) != n:
            raise ConfigError(f"{where}/{name}", f"has {len(block[name])} entries, expected N={n}")


def _j0(block: dict, n: int, where: str):
    j0 = block.get("j0")
    if j0 is None:
        return None
    if j0 > n:
        raise ConfigError(f"{where}/j0", f"state {j0} out of range 1..{n}")
    return j0 - 1


def build_spec(raw: dict, v0=None, j0="keep"):
    """Model spec from a schema-valid config; ``v0``/``j0`` (0-based) override the file."""
    model = raw["model"]
    block = raw[model]
    where = f"/{model}"
    q = _generator(block["Q"], f"{where}/Q")
    n = q.n_states
    sw = _switch_jumps(block.get("switch_jumps"), n, f"{where}/switch_jumps")
    start = block.get("v0", "stationary") if v0 is None else v0
    state = _j0(block, n, where) if j0 == "keep" else j0
    try:
        if model == "mscogarch":
            _check_lengths(block, ("beta", "lambda", "delta"), n, where)
            return MscogarchSpec(
                beta=block["beta"], lam=block["lambda"], delta=block["delta"],
                driver=_driver(block["driver"], False, f"{where}/driver"),
                q=q, switch_jumps=sw, v0=start, j0=state,
            )
        _check_lengths(block, ("lambda", "mu", "beta", "rho", "subordinators"), n, where)
        subs = tuple(_driver(d, True, f"{where}/subordinators/{i}") for i, d in enumerate(block["subordinators"]))
        zeros = [0.0] * n
        return MsbnsSpec(
            lam=block["lambda"], mu=block.get("mu", zeros), beta=block.get("beta", zeros),
            rho=block.get("rho", zeros), subordinators=subs, q=q, switch_jumps=sw, v0=start, j0=state,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from exc


@dataclass(frozen=True)
class RunConfig:
    """A validated config with defaults filled in and command-line overrides applied."""

    raw: dict
    model: str
    seed: int
    horizon: float
    grid_dt: float
    n_paths: int
    workers: int
    k_max: int
    r: float
    h: float
    times: tuple[float, ...]
    lags: tuple[float, ...]
    mc_budget: int
    validate: dict

    def spec(self, **kw):
        return build_spec(self.raw, **kw)

    def echo(self) -> dict:
        """The effective configuration, embedded in every report."""
        out = copy.deepcopy(self.raw)
        out.update(seed=self.seed, horizon=self.horizon, grid_dt=self.grid_dt, n_paths=self.n_paths,
                   k_max=self.k_max, r=self.r, h=self.h, times=list(self.times), lags=list(self.lags),
                   mc_budget=self.mc_budget, validate=dict(self.validate))
        out.pop("workers", None)
        return out


def load_config(source, overrides: dict | None = None) -> RunConfig:
    """Read, schema-check and build a :class:`RunConfig`; ``overrides`` replace top-level fields."""
    raw = read_config(source) if not isinstance(source, dict) else copy.deepcopy(source)
    validate_schema(raw)
    merged = {**DEFAULTS, **{k: v for k, v in raw.items() if k in DEFAULTS}}
    val = {**VALIDATE_DEFAULTS, **raw.get("validate", {})}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        merged[key] = value
        if key in ("n_paths",):
            val["n_paths"] = max(2, value)
        if key == "horizon":
            val["horizon"] = value
    build_spec(raw)  # surface semantic errors early
    if merged["h"] < merged["r"]:
        raise ConfigError("/h", "h must be >= r")
    return RunConfig(
        raw=raw,
        model=raw["model"],
        seed=int(merged["seed"]),
        horizon=float(merged["horizon"]),
        grid_dt=float(merged["grid_dt"]),
        n_paths=int(merged["n_paths"]),
        workers=int(merged["workers"]),
        k_max=int(merged["k_max"]),
        r=float(merged["r"]),
        h=float(merged["h"]),
        times=tuple(float(t) for t in merged["times"]),
        lags=tuple(float(t) for t in merged["lags"]),
        mc_budget=int(merged["mc_budget"]),
        validate=val,
    )
