"""Scenario configuration: validated dataclasses plus TOML reading/writing.

A scenario file is plain TOML with sections [geometry], [resolution],
[time], [reactions], [diffusion], [bc], [initial], [output] and [nondim].
A top-level ``scenario`` key selects a named preset whose values the
remaining sections may override key by key.  Unknown keys are hard errors
at every level; all numeric invariants are enforced on construction, so a
:class:`ScenarioConfig` instance is valid by existence.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

import tomli

from .errors import ConfigError
from .micro import ReactionSpec, SourceTerm

CELL_KINDS = ("none", "circle", "ellipse", "dziuk")
BC_KINDS = ("neumann", "dirichlet-threshold")
INITIAL_PRESETS = ("zero", "bio")
SCENARIO_PRESETS = ("bio-ellipse", "bio-dziuk")


def _interval(value, name):
    try:
        lo, hi = (float(value[0]), float(value[1]))
    except (TypeError, ValueError, IndexError):
        raise ConfigError(f"{name} must be a pair of numbers, got {value!r}") from None
    if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
        raise ConfigError(f"{name} must be a finite increasing pair, got ({lo}, {hi})")
    return (lo, hi)


def _bounds(value, name):
    try:
        bx, by = value
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must hold two coordinate intervals") from None
    return (_interval(bx, f"{name}[0]"), _interval(by, f"{name}[1]"))


def _nonneg(value, name):
    v = float(value)
    if not math.isfinite(v) or v < 0.0:
        raise ConfigError(f"{name} = {value} must be finite and >= 0")
    return v


def _positive_int(value, name, minimum=1):
    if value != int(value):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    v = int(value)
    if v < minimum:
        raise ConfigError(f"{name} = {v} must be >= {minimum}")
    return v


@dataclass(frozen=True)
class GeometrySpec:
    """Macroscopic domain plus the periodicity-cell shape it sits above."""

    macro_bounds: tuple = ((0.0, 0.1), (0.0, 0.1))
    cell_kind: str = "none"
    cell_params: tuple = ()
    cell_bounds: tuple = ((-2.0, 2.0), (-2.0, 2.0))

    def __post_init__(self):
        object.__setattr__(self, "macro_bounds", _bounds(self.macro_bounds, "geometry.macro_bounds"))
        object.__setattr__(self, "cell_bounds", _bounds(self.cell_bounds, "geometry.cell_bounds"))
        if self.cell_kind not in CELL_KINDS:
            raise ConfigError(
                f"geometry.cell_kind '{self.cell_kind}' not one of {CELL_KINDS}")
        params = tuple(float(p) for p in self.cell_params)
        object.__setattr__(self, "cell_params", params)
        half_x, half_y = self.cell_half_widths()
        if self.cell_kind == "circle":
            if len(params) != 1 or params[0] <= 0:
                raise ConfigError("geometry.cell_params for a circle is (radius,)")
            if params[0] >= min(half_x, half_y):
                raise ConfigError(
                    f"circle radius {params[0]} does not fit inside the cell bounds")
        elif self.cell_kind == "ellipse":
            if len(params) != 2 or min(params) <= 0:
                raise ConfigError(
                    "geometry.cell_params for an ellipse is (c1, c2) with "
                    "c1 x1^2 + c2 x2^2 < 1")
            a, b = 1.0 / math.sqrt(params[0]), 1.0 / math.sqrt(params[1])
            if a >= half_x or b >= half_y:
                raise ConfigError(
                    f"ellipse semi-axes ({a:.6g}, {b:.6g}) do not fit inside "
                    "the cell bounds")
        else:
            if params:
                raise ConfigError(
                    f"geometry.cell_params must be empty for kind '{self.cell_kind}'")
            if self.cell_kind == "dziuk" and (half_x < 1.1 or half_y < 1.05):
                raise ConfigError("the curved cell shape does not fit inside the cell bounds")

    def cell_half_widths(self):
        (x0, x1), (y0, y1) = self.cell_bounds
        return (0.5 * (x1 - x0), 0.5 * (y1 - y0))

    def cell_volume(self):
        (x0, x1), (y0, y1) = self.cell_bounds
        return (x1 - x0) * (y1 - y0)


@dataclass(frozen=True)
class Resolution:
    """Base mesh resolutions; ``level`` doubles every one of them."""

    macro_n: int = 32
    micro_rings: int = 6
    micro_segments: int = 24
    cell_segments: int = 128
    cell_layers: int = 32
    level: int = 0

    def __post_init__(self):
        for name in ("macro_n", "micro_rings", "micro_segments",
                     "cell_segments", "cell_layers"):
            object.__setattr__(self, name,
                               _positive_int(getattr(self, name), f"resolution.{name}"))
        object.__setattr__(self, "level",
                           _positive_int(self.level, "resolution.level", minimum=0))


@dataclass(frozen=True)
class TimeSpec:
    """Step size, horizon, and output sampling cadence (0 = automatic)."""

    tau: float = 1e-2
    t_end: float = 1.0
    cadence: int = 0

    def __post_init__(self):
        tau = float(self.tau)
        t_end = float(self.t_end)
        if not math.isfinite(tau) or tau <= 0.0:
            raise ConfigError(f"time.tau = {self.tau} must be finite and > 0")
        if not math.isfinite(t_end) or t_end < tau:
            raise ConfigError(f"time.t_end = {self.t_end} must be >= time.tau")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "t_end", t_end)
        object.__setattr__(self, "cadence",
                           _positive_int(self.cadence, "time.cadence", minimum=0))

    def step_count(self):
        return max(1, int(round(self.t_end / self.tau)))

    def sample_cadence(self):
        if self.cadence:
            return self.cadence
        return max(1, math.ceil(self.step_count() / 200))


@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusivities; a precomputed effective tensor bypasses the cell solve."""

    d_e: float = 1e-2
    d_i: float = 10.0
    d_f: float = 1e-2
    d_b: float = 1e-2
    d_d: float = 1e-2
    d_a: float = 1e-2
    d_hom: tuple = None
    theta_e: float = None

    def __post_init__(self):
        for name in ("d_e", "d_i", "d_f", "d_b", "d_d", "d_a"):
            object.__setattr__(self, name, _nonneg(getattr(self, name), f"diffusion.{name}"))
        if self.d_hom is not None:
            try:
                rows = tuple(tuple(float(v) for v in row) for row in self.d_hom)
            except (TypeError, ValueError):
                raise ConfigError("diffusion.d_hom must be a 2x2 matrix") from None
            if len(rows) != 2 or any(len(r) != 2 for r in rows):
                raise ConfigError("diffusion.d_hom must be a 2x2 matrix")
            if not all(math.isfinite(v) for r in rows for v in r):
                raise ConfigError("diffusion.d_hom entries must be finite")
            if abs(rows[0][1] - rows[1][0]) > 1e-12 * max(1.0, *(abs(v) for r in rows for v in r)):
                raise ConfigError("diffusion.d_hom must be symmetric")
            object.__setattr__(self, "d_hom", rows)
        if self.theta_e is not None:
            theta = float(self.theta_e)
            if not (0.0 < theta <= 1.0):
                raise ConfigError(f"diffusion.theta_e = {self.theta_e} must lie in (0, 1]")
            object.__setattr__(self, "theta_e", theta)


@dataclass(frozen=True)
class BcSpec:
    """Macro boundary data: zero flux, or a Dirichlet patch where both
    coordinates stay below ``cutoff``."""

    kind: str = "neumann"
    value: float = 1.0
    cutoff: float = 5e-2

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ConfigError(f"bc.kind '{self.kind}' not one of {BC_KINDS}")
        value = float(self.value)
        cutoff = float(self.cutoff)
        if not math.isfinite(value):
            raise ConfigError(f"bc.value = {self.value} must be finite")
        if not math.isfinite(cutoff):
            raise ConfigError(f"bc.cutoff = {self.cutoff} must be finite")
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "cutoff", cutoff)


@dataclass(frozen=True)
class InitialSpec:
    """Initial-field preset with its perturbation amplitude."""

    preset: str = "zero"
    amplitude: float = 0.95

    def __post_init__(self):
        if self.preset not in INITIAL_PRESETS:
            raise ConfigError(
                f"initial.preset '{self.preset}' not one of {INITIAL_PRESETS}")
        amp = float(self.amplitude)
        if not (0.0 <= amp < 1.0):
            raise ConfigError(
                f"initial.amplitude = {self.amplitude} must lie in [0, 1) "
                "to keep the initial fields nonnegative")
        object.__setattr__(self, "amplitude", amp)


@dataclass(frozen=True)
class OutputSpec:
    """Probe coordinates sampled every step (snapped to nearest macro node)."""

    probes: tuple = ()

    def __post_init__(self):
        probes = tuple(_interval_point(p, i) for i, p in enumerate(self.probes))
        object.__setattr__(self, "probes", probes)


def _interval_point(p, index):
    try:
        x, y = float(p[0]), float(p[1])
    except (TypeError, ValueError, IndexError):
        raise ConfigError(f"output.probes[{index}] must be a coordinate pair") from None
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ConfigError(f"output.probes[{index}] must be finite")
    return (x, y)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete, validated description of one two-scale simulation."""

    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    resolution: Resolution = field(default_factory=Resolution)
    time: TimeSpec = field(default_factory=TimeSpec)
    reactions: ReactionSpec = field(default_factory=ReactionSpec)
    diffusion: DiffusionSpec = field(default_factory=DiffusionSpec)
    bc: BcSpec = field(default_factory=BcSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    nondim_record: tuple = ()

    def __post_init__(self):
        record = []
        for item in self.nondim_record:
            try:
                name, value = item
                record.append((str(name), float(value)))
            except (TypeError, ValueError):
                raise ConfigError(
                    f"nondim entries must be (name, number) pairs, got {item!r}"
                ) from None
        object.__setattr__(self, "nondim_record", tuple(record))
        if self.geometry.cell_kind == "none":
            if self.initial.preset == "bio":
                raise ConfigError(
                    "initial.preset 'bio' needs a cell geometry (cell_kind != 'none')")
        elif self.diffusion.d_hom is not None and self.diffusion.theta_e is None:
            raise ConfigError(
                "diffusion.theta_e is required alongside a precomputed diffusion.d_hom")


# ---------------------------------------------------------------------------
# TOML reading

_SECTION_TYPES = {
    "geometry": GeometrySpec,
    "resolution": Resolution,
    "time": TimeSpec,
    "diffusion": DiffusionSpec,
    "bc": BcSpec,
    "initial": InitialSpec,
    "output": OutputSpec,
}
_SOURCE_KEYS = ("source_e", "source_i", "source_f", "source_d")


def _check_keys(mapping, allowed, prefix):
    for key in mapping:
        if key not in allowed:
            where = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"unknown key '{where}'")


def _coerce_section(name, mapping, current):
    cls = _SECTION_TYPES[name]
    allowed = {f.name for f in fields(cls)}
    _check_keys(mapping, allowed, name)
    kwargs = {f.name: getattr(current, f.name) for f in fields(cls)}
    for key, value in mapping.items():
        if isinstance(value, list):
            value = _tuplify(value)
        kwargs[key] = value
    return cls(**kwargs)


def _tuplify(value):
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    return value


def _coerce_reactions(mapping, current):
    allowed = {f.name for f in fields(ReactionSpec)}
    _check_keys(mapping, allowed, "reactions")
    kwargs = {f.name: getattr(current, f.name) for f in fields(ReactionSpec)}
    for key, value in mapping.items():
        if key in _SOURCE_KEYS:
            if not isinstance(value, dict):
                raise ConfigError(
                    f"reactions.{key} must be a table with 'kind' and 'value'")
            _check_keys(value, {"kind", "value"}, f"reactions.{key}")
            kwargs[key] = SourceTerm(kind=value.get("kind", "zero"),
                                     value=value.get("value", 0.0))
        else:
            kwargs[key] = value
    return ReactionSpec(**kwargs)


def preset_config(name):
    """Materialise a named scenario preset."""
    from .macro import bio_scenario

    if name == "bio-ellipse":
        return bio_scenario("ellipse")
    if name == "bio-dziuk":
        return bio_scenario("dziuk")
    raise ConfigError(f"unknown scenario preset '{name}'; expected {SCENARIO_PRESETS}")


def parse_config(path):
    """Read and validate a scenario file; unknown keys are hard errors."""
    try:
        with open(path, "rb") as handle:
            data = tomli.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config syntax error in {path}: {exc}") from None
    return config_from_mapping(data)


def config_from_mapping(data):
    """Build a ScenarioConfig from an already parsed TOML mapping."""
    allowed = set(_SECTION_TYPES) | {"scenario", "reactions", "nondim"}
    _check_keys(data, allowed, "")
    scenario = data.get("scenario")
    if scenario is not None:
        base = preset_config(scenario)
    else:
        base = ScenarioConfig()
    updates = {}
    for name in _SECTION_TYPES:
        if name in data:
            updates[name] = _coerce_section(name, data[name], getattr(base, name))
    if "reactions" in data:
        updates["reactions"] = _coerce_reactions(data["reactions"], base.reactions)
    if "nondim" in data:
        record = tuple((key, value) for key, value in data["nondim"].items())
        updates["nondim_record"] = record
    return dataclasses.replace(base, **updates)


# ---------------------------------------------------------------------------
# TOML writing (the mirror of parse_config; no third-party emitter needed
# for this fixed, flat schema)


def _toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (tuple, list)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialise value {value!r}")


def _emit_table(name, items, out):
    out.append(f"[{name}]")
    for key, value in items:
        out.append(f"{key} = {_toml_value(value)}")
    out.append("")


def emit_config(config):
    """Serialise a ScenarioConfig to TOML text that parses back equal."""
    out = []
    for name in ("geometry", "resolution", "time"):
        section = getattr(config, name)
        _emit_table(name, ((f.name, getattr(section, f.name)) for f in fields(type(section))), out)

    items = []
    for f in fields(ReactionSpec):
        value = getattr(config.reactions, f.name)
        if f.name in _SOURCE_KEYS:
            items.append((f.name, {"kind": value.kind, "value": value.value}))
        else:
            items.append((f.name, value))
    out.append("[reactions]")
    for key, value in items:
        if isinstance(value, dict):
            out.append(f'{key} = {{ kind = {_toml_value(value["kind"])}, '
                       f'value = {_toml_value(value["value"])} }}')
        else:
            out.append(f"{key} = {_toml_value(value)}")
    out.append("")

    diff_items = []
    for f in fields(DiffusionSpec):
        value = getattr(config.diffusion, f.name)
        if value is None:
            continue
        diff_items.append((f.name, value))
    _emit_table("diffusion", diff_items, out)
    for name in ("bc", "initial", "output"):
        section = getattr(config, name)
        _emit_table(name, ((f.name, getattr(section, f.name)) for f in fields(type(section))), out)
    if config.nondim_record:
        _emit_table("nondim", config.nondim_record, out)
    return "\n".join(out)


def write_config(config, path):
    text = emit_config(config)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)
