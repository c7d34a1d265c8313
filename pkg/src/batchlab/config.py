"""Flat key = value run configuration: parsing, defaults, validation.

The file format is one `key = value` pair per line; `#` starts a comment.
Values are parsed as int, float, bool (true/false), comma lists of floats,
or strings.  Unknown keys are rejected so typos fail loudly.  The full
schema is documented in the README and in DEFAULTS below.
"""

import hashlib
import math
from dataclasses import dataclass, field, fields

from .scalar import check_resolution
from .spectral import Grid

DEFAULTS = {
    # grid
    "grid.dim": 2,
    "grid.n": 128,
    # fluid
    "fluid.model": "nse2d",          # nse2d | hvnse3d | stokes | galerkin | ou_tower
    "fluid.nu": 0.1,
    "fluid.nu_prime": 0.0,
    "fluid.dt": 0.005,
    "fluid.cfl": 0.5,
    "galerkin.N": 8,
    "ou_tower.M": None,              # Z-chain band |m|_inf <= M (default: N)
    "ou_tower.depth": 3,
    "ou_tower.amplitude": 1.0,
    # forcing
    "forcing.alpha": None,           # default 5.5 (d=2) / 8.0 (d=3)
    "forcing.amplitude": 0.25,
    "forcing.mode_set": "full",      # full | low
    "forcing.kmax_inf": 2,           # for mode_set = low
    # scalar source
    "source.b": "cos_sin",           # cos_sin | band
    "source.k_b": 2,
    "source.chi": 1.0,
    # scalar
    "scalar.kappa": 1e-3,
    "scalar.source_on": True,
    "scalar.g0": "random_band",      # single_mode | random_band | checkerboard
    # rng
    "rng.seed": 7,
    # run control
    "run.t_burn": 20.0,
    "run.t_average": 80.0,
    "run.diag_interval": 0.5,
    "run.yaglom_every": 10,          # yaglom cadence, in diag intervals
    "run.yaglom_ells": "",           # comma list; empty = auto grid
    "run.flux_levels": "8,16,32",
    "run.ensemble_size": 1,
    "run.kappa_sweep": "",           # comma list; empty = just scalar.kappa
    "run.output_dir": "runs/out",
    "run.snapshot_every": 0.0,       # simulation-time cadence; 0 = end only
    # mixing experiments
    "mix.horizon": 40.0,
    "mix.n_paths": 4,
    "mix.t_burn_fluid": 30.0,
    # particles
    "particles.count": 512,
    "particles.t_qr": 1.0,
    "particles.seed": 1,
    "particles.mode_cutoff": 0.0,
    "particles.horizon": 200.0,
    "particles.checkpoint_every": 5.0,
    "particles.bilinear": False,
}

_BOOL_KEYS = {"scalar.source_on", "particles.bilinear"}
_STR_KEYS = {"fluid.model", "forcing.mode_set", "source.b", "scalar.g0",
             "run.output_dir", "run.kappa_sweep", "run.flux_levels",
             "run.yaglom_ells"}
_INT_KEYS = {"grid.dim", "grid.n", "galerkin.N", "ou_tower.depth",
             "forcing.kmax_inf", "source.k_b", "rng.seed", "run.yaglom_every",
             "run.ensemble_size", "mix.n_paths", "particles.count",
             "particles.seed"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict
    warnings: list = field(default_factory=list)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def seed(self) -> int:
        return self.values["rng.seed"]

    def kappa_sweep(self) -> list:
        raw = self.values["run.kappa_sweep"]
        if raw:
            return [float(x) for x in raw.split(",")]
        return [self.values["scalar.kappa"]]

    def flux_levels(self) -> list:
        return [int(float(x)) for x in self.values["run.flux_levels"].split(",") if x]

    def yaglom_ells(self, grid: Grid) -> list:
        raw = self.values["run.yaglom_ells"]
        if raw:
            return [float(x) for x in raw.split(",")]
        # auto: log-spaced from just above the grid scale to O(1)
        lo = 3.0 * (2 * math.pi / grid.n)
        hi = 1.5
        count = 12
        ratio = (hi / lo) ** (1.0 / (count - 1))
        return [lo * ratio ** j for j in range(count)]

    def canonical_text(self) -> str:
        lines = [f"{k} = {format_value(self.values[k])}" for k in sorted(self.values)]
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()[:16]


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: cannot parse boolean from {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    if raw == "":
        return None
    return float(raw)


def parse_config_text(text: str, overrides: dict | None = None) -> "RunConfig":
    values = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    if overrides:
        for key, val in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError(f"override: unknown key {key!r}")
            values[key] = _parse_value(key, str(val)) if isinstance(val, str) else val
    return validate(values)


def load_config(path, overrides: dict | None = None) -> "RunConfig":
    with open(path) as fh:
        return parse_config_text(fh.read(), overrides)


def validate(values: dict) -> RunConfig:
    warnings_list = []
    grid = Grid(values["grid.dim"], values["grid.n"])   # raises on bad n/dim
    if values["fluid.nu"] <= 0:
        raise ConfigError("fluid.nu must be positive")
    if values["fluid.dt"] <= 0:
        raise ConfigError("fluid.dt must be positive")
    if values["run.t_burn"] <= 0 or values["run.t_average"] <= 0:
        raise ConfigError("run.t_burn and run.t_average must be positive")
    if values["run.diag_interval"] < values["fluid.dt"]:
        raise ConfigError("run.diag_interval must be at least one step")
    if values["fluid.model"] not in ("nse2d", "hvnse3d", "stokes", "galerkin",
                                     "ou_tower"):
        raise ConfigError(f"unknown fluid.model {values['fluid.model']!r}")
    if values["fluid.model"] == "nse2d" and values["grid.dim"] != 2:
        raise ConfigError("nse2d requires grid.dim = 2")
    if values["fluid.model"] == "hvnse3d" and values["grid.dim"] != 3:
        raise ConfigError("hvnse3d requires grid.dim = 3")
    alpha = values["forcing.alpha"]
    if alpha is not None and alpha <= 2.5 * values["grid.dim"]:
        raise ConfigError(
            f"forcing.alpha = {alpha} violates alpha > 5d/2 = {2.5 * values['grid.dim']}")
    if values["source.chi"] <= 0:
        raise ConfigError("source.chi must be positive")
    cfg = RunConfig(values=values)
    sweep = cfg.kappa_sweep()
    for kappa in sweep:
        if kappa <= 0:
            raise ConfigError(f"kappa must be positive, got {kappa}")
        for note in check_resolution(grid, kappa):
            warnings_list.append(f"kappa = {kappa:g}: {note}")
    cfg.warnings = warnings_list
    return cfg
