"""Experiment configuration: loading, schema validation and defaults.

Config files are YAML (JSON is accepted too, being a subset). The published
schema lives next to this module as ``config.schema.json``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .core import Grid, RngSpec, StencilGenerator, gaussian_profile, make_one_hot, random_generator

STUDIES = (
    "convergence",
    "scaling_sweep",
    "dilated_erf",
    "multichannel_xavier",
    "leak_split",
    "recurrent_memory",
    "compare",
)

# per-study defaults applied before the user's values
STUDY_DEFAULTS = {
    "convergence": {"depths": [17, 33, 65, 129, 257]},
    "scaling_sweep": {"depths": [17, 33, 65, 129, 257], "exponents": [0.5, 1.0, 2.0]},
    "dilated_erf": {"depths": [4, 5, 6, 7, 8, 9], "grid_size": 4096, "dilation_ratio": 2.0},
    "multichannel_xavier": {"channel_counts": [1, 2, 4, 8], "depth": 65},
    "leak_split": {"depths": [257], "leaks": [0.5, 1.0, 2.0], "variant": "leak"},
    "recurrent_memory": {"depths": [256, 512, 1024], "leak": 1.0},
    "compare": {"depth": 129},
}


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def load_schema() -> dict:
    text = resources.files("capprop").joinpath("config.schema.json").read_text()
    return json.loads(text)


def _validate_schema(data: dict):
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(path, err.message)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat, validated view of a config file.

    ``to_dict`` produces the nested form echoed into reports; ``from_dict``
    accepts that form.
    """

    study: str
    seed: int = 0
    grid_size: int = 512
    dim: int = 1
    boundary: str = "periodic"
    variant: str = "residual"
    depth: int = 129
    capacity_rate: float = 1.0
    scaling_exponent: float = 1.0
    stencil: dict = field(default_factory=lambda: {"type": "symmetric", "radius": 1})
    leak: float = 1.0
    dilation_ratio: float = 1.0
    channels: int = 1
    input: dict = field(default_factory=lambda: {"type": "one_hot"})
    source: dict = field(default_factory=lambda: {"type": "gaussian", "sigma": 6.0, "modulation": 0.0})
    depths: tuple[int, ...] = ()
    exponents: tuple[float, ...] = ()
    channel_counts: tuple[int, ...] = ()
    leaks: tuple[float, ...] = ()
    exponent_tolerance: float = 0.05
    support_tolerance: float = 1e-30
    control_leak_fraction: float = 0.1
    control_epsilon: float = 0.1

    @classmethod
    def from_dict(cls, data: dict, seed: int | None = None,
                  fallback_seed: int | None = None) -> "ExperimentConfig":
        """Validate ``data`` against the schema and fill study defaults.

        Seed priority: ``seed``, then the file's seed, then ``fallback_seed``,
        then 0.
        """
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a mapping")
        _validate_schema(data)
        study = data.get("study")
        if study is None:
            raise ConfigError("study", "missing")
        kw = dict(STUDY_DEFAULTS.get(study, {}))
        grid = data.get("grid", {})
        arch = data.get("architecture", {})
        sweep = data.get("sweep", {})
        thresholds = data.get("thresholds", {})
        controls = data.get("controls", {})
        renames = [
            (grid, "size", "grid_size"),
            (grid, "dim", "dim"),
            (grid, "boundary", "boundary"),
            (sweep, "depths", "depths"),
            (sweep, "exponents", "exponents"),
            (sweep, "channels", "channel_counts"),
            (sweep, "leaks", "leaks"),
            (thresholds, "exponent_tolerance", "exponent_tolerance"),
            (thresholds, "support_tolerance", "support_tolerance"),
            (controls, "leak_fraction", "control_leak_fraction"),
            (controls, "epsilon", "control_epsilon"),
        ]
        for section, key, name in renames:
            if key in section:
                kw[name] = section[key]
        for key in ("variant", "depth", "capacity_rate", "scaling_exponent", "stencil", "leak",
                    "dilation_ratio", "channels"):
            if key in arch:
                kw[key] = arch[key]
        for key in ("input", "source"):
            if key in data:
                kw[key] = dict(data[key])
        for key in ("depths", "exponents", "channel_counts", "leaks"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if seed is None:
            seed = data.get("seed", fallback_seed if fallback_seed is not None else 0)
        kw["seed"] = int(seed)
        cfg = cls(study=study, **kw)
        cfg.check()
        return cfg

    def check(self):
        """Study-level checks the schema cannot express."""
        lists = {
            "convergence": [("sweep.depths", self.depths)],
            "scaling_sweep": [("sweep.depths", self.depths), ("sweep.exponents", self.exponents)],
            "dilated_erf": [("sweep.depths", self.depths)],
            "multichannel_xavier": [("sweep.channels", self.channel_counts)],
            "leak_split": [("sweep.depths", self.depths), ("sweep.leaks", self.leaks)],
            "recurrent_memory": [("sweep.depths", self.depths)],
        }
        for name, values in lists.get(self.study, []):
            if len(values) == 0:
                raise ConfigError(name, "sweep list must not be empty")
        if self.study == "convergence":
            if list(self.depths) != sorted(self.depths):
                raise ConfigError("sweep.depths", "must be ascending for a convergence study")
            if self.scaling_exponent != 1:
                raise ConfigError("architecture.scaling_exponent", "convergence study requires p = 1")
        if self.study == "dilated_erf" and self.dilation_ratio <= 1:
            raise ConfigError("architecture.dilation_ratio", "dilated_erf needs a ratio > 1")
        if self.study == "multichannel_xavier" and 1 not in self.channel_counts:
            raise ConfigError("sweep.channels", "must include the C = 1 reference")
        if self.dim == 2 and self.study in ("dilated_erf", "multichannel_xavier", "leak_split",
                                             "recurrent_memory"):
            raise ConfigError("grid.dim", f"{self.study} runs on 1D grids")
        st = self.stencil
        if st["type"] == "explicit":
            if "offsets" not in st or "rates" not in st:
                raise ConfigError("architecture.stencil", "explicit stencil needs offsets and rates")
            try:
                self.generator()
            except ValueError as exc:
                raise ConfigError("architecture.stencil", str(exc)) from None
            if self.generator().dim != self.dim:
                raise ConfigError("architecture.stencil", "offset dimension does not match grid.dim")
        if self.input["type"] == "gaussian" and "sigma" not in self.input:
            raise ConfigError("input.sigma", "gaussian input needs sigma")
        if self.source["type"] == "gaussian" and "sigma" not in self.source:
            raise ConfigError("source.sigma", "gaussian source needs sigma")

    # builders

    def rng(self) -> RngSpec:
        return RngSpec(self.seed)

    def grid(self, size: int | None = None) -> Grid:
        n = self.grid_size if size is None else size
        return Grid((n,) * self.dim, self.boundary)

    def generator(self) -> StencilGenerator:
        st = self.stencil
        radius = int(st.get("radius", 1))
        if st["type"] == "symmetric":
            return StencilGenerator.symmetric(radius, self.dim)
        if st["type"] == "random":
            return random_generator(self.rng().child(0), radius, self.dim)
        return StencilGenerator(tuple(tuple(v) for v in st["offsets"]), tuple(st["rates"]))

    def input_profile(self, grid: Grid, channels: int = 1):
        spec = self.input
        if spec["type"] == "one_hot":
            return make_one_hot(grid, grid.center, 0, channels)
        g = gaussian_profile(grid, float(spec["sigma"]))
        values = np.zeros((channels, grid.size))
        values[0] = g.values[0]
        return type(g)(grid, values)

    def to_dict(self) -> dict:
        d = asdict(self)
        out = {
            "schema_version": 1,
            "study": d["study"],
            "seed": d["seed"],
            "grid": {"size": d["grid_size"], "dim": d["dim"], "boundary": d["boundary"]},
            "architecture": {k: d[k] for k in ("variant", "depth", "capacity_rate", "scaling_exponent",
                                               "stencil", "leak", "dilation_ratio", "channels")},
            "input": d["input"],
            "source": d["source"],
            "sweep": {"depths": list(d["depths"]), "exponents": list(d["exponents"]),
                      "channels": list(d["channel_counts"]), "leaks": list(d["leaks"])},
            "thresholds": {"exponent_tolerance": d["exponent_tolerance"],
                           "support_tolerance": d["support_tolerance"]},
            "controls": {"leak_fraction": d["control_leak_fraction"], "epsilon": d["control_epsilon"]},
        }
        return json.loads(json.dumps(out))


def load_config(path, seed: int | None = None, fallback_seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"not valid YAML/JSON: {exc}") from None
    return ExperimentConfig.from_dict(data, seed=seed, fallback_seed=fallback_seed)
