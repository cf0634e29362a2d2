"""Text file formats: fields, ensembles, observations, run configs and reports.

All floats are written with ``repr`` (shortest string that round-trips), so
reading a file and writing it back reproduces it byte for byte.
"""

from __future__ import annotations

import configparser
import csv
import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .active import LEARNER_KINDS
from .cokriging import RhoSearchConfig
from .gp import NuggetPolicy
from .grid import Field, Grid, ObservationSet
from .kriging import OptimizerConfig
from .phik import Ensemble


class ConfigError(ValueError):
    """Invalid run configuration or inconsistent command-line inputs."""


class FormatError(ValueError):
    """A file exists but does not follow the expected format."""


def _num(v: float) -> str:
    return repr(float(v))


# -- fields -------------------------------------------------------------------


def field_header(grid: Grid) -> str:
    axes = ",".join(str(n) for n in grid.counts)
    bounds = ",".join(f"{_num(lo)}:{_num(hi)}" for lo, hi in zip(grid.lower, grid.upper))
    return f"#field dim={grid.dim} axes={axes} bounds={bounds}"


def parse_field_header(line: str) -> Grid:
    parts = line.strip().split()
    if not parts or parts[0] != "#field":
        raise FormatError(f"not a field header: {line.strip()!r}")
    try:
        kv = dict(p.split("=", 1) for p in parts[1:])
        dim = int(kv["dim"])
        counts = tuple(int(n) for n in kv["axes"].split(","))
        pairs = [b.split(":") for b in kv["bounds"].split(",")]
        lower = tuple(float(lo) for lo, _ in pairs)
        upper = tuple(float(hi) for _, hi in pairs)
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed field header {line.strip()!r}") from exc
    if not dim == len(counts) == len(lower):
        raise FormatError(f"field header dimension mismatch in {line.strip()!r}")
    return Grid(lower, upper, counts)


def format_field(f: Field) -> str:
    return "\n".join([field_header(f.grid)] + [_num(v) for v in f.values]) + "\n"


def write_field(path, f: Field) -> None:
    Path(path).write_text(format_field(f))


def read_field(path) -> Field:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty field file")
    grid = parse_field_header(lines[0])
    body = [s for s in lines[1:] if s.strip()]
    if len(body) != grid.size:
        raise FormatError(f"{path}: {len(body)} values for a grid of {grid.size} nodes")
    try:
        values = np.array([float(s) for s in body])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return Field(grid, values)


# -- ensembles ----------------------------------------------------------------

MANIFEST = "manifest.json"


def member_name(m: int) -> str:
    return f"member_{m:04d}.fld"


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_ensemble(directory, ens: Ensemble, generator: str = "external", seed=None) -> dict:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = []
    for m in range(len(ens)):
        names.append(member_name(m))
        write_field(d / names[-1], ens.member(m))
    manifest = {
        "members": names,
        "M": len(ens),
        "grid": field_header(ens.grid),
        "generator": generator,
        "seed": seed,
    }
    dump_json(d / MANIFEST, manifest)
    return manifest


def read_ensemble(directory) -> tuple[Ensemble, dict]:
    d = Path(directory)
    try:
        manifest = json.loads((d / MANIFEST).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{d / MANIFEST}: {exc}") from exc
    names = manifest.get("members")
    if not isinstance(names, list) or len(names) != manifest.get("M"):
        raise FormatError(f"{d / MANIFEST}: member list does not match M")
    grid = parse_field_header(manifest["grid"])
    members = []
    for name in names:
        f = read_field(d / name)
        if f.grid != grid:
            raise FormatError(f"{d / name}: grid differs from the manifest grid")
        members.append(f)
    return Ensemble.from_fields(members), manifest


# -- observations -------------------------------------------------------------


def coordinate_names(dim: int) -> list[str]:
    return list("xyz")[:dim] if dim <= 3 else [f"x{k}" for k in range(dim)]


def write_observations(path, obs: ObservationSet) -> None:
    names = list(obs.names) or coordinate_names(obs.dim)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["value"])
        for x, v in zip(obs.locations, obs.values):
            w.writerow([_num(c) for c in x] + [_num(v)])


def read_observations(path) -> ObservationSet:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise FormatError(f"{path}: need a header row and at least one observation")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise FormatError(f"{path}: need at least one coordinate column and a value column")
    try:
        data = np.array([[float(c) for c in r] for r in rows[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.shape[1] != len(header):
        raise FormatError(f"{path}: rows do not match the {len(header)}-column header")
    return ObservationSet(data[:, :-1], data[:, -1], tuple(header[:-1]))


def read_points(path) -> np.ndarray:
    """Query coordinates from a CSV with a header row, one point per row."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2:
        raise FormatError(f"{path}: need a header row and at least one point")
    try:
        pts = np.array([[float(c) for c in r] for r in rows[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if pts.shape[1] != len(rows[0]):
        raise FormatError(f"{path}: rows do not match the header")
    return pts


# -- run configuration --------------------------------------------------------


@dataclass
class RunConfig:
    """Settings read from the ``[run]`` section of an INI file.

    Every key is optional; unknown keys are rejected.
    """

    learner: str = "cophik"
    learners: str = ",".join(LEARNER_KINDS)
    seed: int = 0
    grid: str = "0:1:41,0:1:41"
    members: int = 300
    n_init: int = 8
    n_max: int = 24
    length_lower: float = 1e-2
    length_upper: float = 1e2
    optimizer_starts: int = 10
    optimizer_tol: float = 1e-8
    optimizer_max_iter: int = 500
    nugget_initial: float = 1e-10
    nugget_growth: float = 10.0
    nugget_cap: float = 1e-4
    rho_lower: float = 0.0
    rho_upper: float = 2.0
    rho_count: int = 41
    operator: str = "dx"
    epsilon: str = "auto"

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values: dict) -> "RunConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kind = {"int": int, "float": float, "str": str}[types[key]]
            try:
                kwargs[key] = kind(str(raw).strip())
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {types[key]}") from exc
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        extra = [s for s in parser.sections() if s != "run"]
        if extra:
            raise ConfigError(f"{path}: unknown section {extra[0]!r}; only [run] is allowed")
        return cls.from_mapping(dict(parser["run"]) if parser.has_section("run") else {})

    def validate(self) -> None:
        for kind in [self.learner] + self.learner_list():
            if kind not in LEARNER_KINDS:
                raise ConfigError(f"unknown learner {kind!r}; expected one of {', '.join(LEARNER_KINDS)}")
        # n_max >= n_init is checked where both apply (the benchmark); active-learn
        # takes its initial count from the observation file instead
        if self.n_init < 1 or self.n_max < 1:
            raise ConfigError("n_init and n_max must be positive")
        if self.members < 2:
            raise ConfigError("an ensemble needs at least 2 members")
        try:
            self.grid_obj()
            self.optimizer_config()
            self.nugget_policy()
            self.rho_config()
            self.epsilon_value()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def learner_list(self) -> list[str]:
        return [s.strip() for s in self.learners.split(",") if s.strip()]

    def grid_obj(self) -> Grid:
        return Grid.parse(self.grid)

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            self.length_lower, self.length_upper, self.optimizer_starts,
            self.optimizer_tol, self.optimizer_max_iter, self.seed,
        )

    def nugget_policy(self) -> NuggetPolicy:
        return NuggetPolicy(self.nugget_initial, self.nugget_growth, self.nugget_cap)

    def rho_config(self) -> RhoSearchConfig:
        return RhoSearchConfig(self.rho_lower, self.rho_upper, self.rho_count)

    def epsilon_value(self) -> float | None:
        if self.epsilon.strip().lower() == "auto":
            return None
        try:
            eps = float(self.epsilon)
        except ValueError as exc:
            raise ConfigError(f"epsilon must be 'auto' or a number, got {self.epsilon!r}") from exc
        if eps < 0:
            raise ConfigError("epsilon must be non-negative")
        return eps

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.keys()}


# -- flat key=value reports ---------------------------------------------------


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return _num(v)
    return str(v)


def write_kv(path, items: dict) -> None:
    Path(path).write_text("".join(f"{k}={format_value(v)}\n" for k, v in items.items()))


def read_kv(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition("=")
            out[k] = v
    return out


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
