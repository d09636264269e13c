"""Scenario construction: seeded generators and the on-disk file format.

Generation is a pure function of the spec: the PRNG is pinned to numpy's
PCG64 bit generator, and the draw order (hotspot positions, then remaining
positions, then demands) is fixed, so identical seeds reproduce scenarios
bit for bit.

Files are JSON with a ``version`` field, ``devices`` [{x, y, demand}],
``rrhs`` [{x, y, power}] and an ``env`` object {bandwidth, noise,
pathloss_exponent, min_distance, mu}.  Floats are written with Python's
shortest round-trip representation, so save -> load is lossless.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cran_model import RRH, Device, RadioEnvironment, Scenario

__all__ = [
    "GeneratorSpec",
    "HotspotSpec",
    "SCENARIO_FORMAT_VERSION",
    "ScenarioFormatError",
    "ScenarioVersionError",
    "generate",
    "load_scenario",
    "save_scenario",
    "scenario_digest",
    "scenario_from_dict",
    "scenario_to_dict",
]

SCENARIO_FORMAT_VERSION = 1


class ScenarioFormatError(ValueError):
    """Scenario document is malformed; carries the offending field/location."""

    def __init__(self, message: str, *, field: str | None = None, source: str = "<data>"):
        self.field = field
        self.source = source
        where = f"{source}: " if source else ""
        at = f" (field {field!r})" if field else ""
        super().__init__(f"{where}{message}{at}")


class ScenarioVersionError(ScenarioFormatError):
    """Scenario document declares an unsupported format version."""


@dataclass(frozen=True)
class HotspotSpec:
    center_x: float
    center_y: float
    radius: float
    fraction: float  # share of devices placed inside the disk

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"hotspot radius must be positive, got {self.radius}")
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError(f"hotspot fraction must lie in [0, 1], got {self.fraction}")


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to reproduce a scenario from a seed."""

    kind: str  # "uniform" | "hotspot"
    num_devices: int
    num_rrhs: int
    area_side: float  # m, square cell
    seed: int
    demand_range: tuple[float, float] = (0.5, 1.5)
    hotspot: HotspotSpec | None = None
    rrh_power: float = 1.0
    env: RadioEnvironment = field(default_factory=RadioEnvironment)

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "hotspot"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.num_devices < 1 or self.num_rrhs < 1:
            raise ValueError("need at least one device and one RRH")
        if not self.area_side > 0:
            raise ValueError(f"area_side must be positive, got {self.area_side}")
        lo, hi = self.demand_range
        if not (0 < lo <= hi):
            raise ValueError(f"demand_range must satisfy 0 < min <= max, got {self.demand_range}")
        if self.kind == "hotspot":
            if self.hotspot is None:
                raise ValueError("hotspot spec required for kind='hotspot'")
            h = self.hotspot
            if (
                h.center_x - h.radius < 0
                or h.center_x + h.radius > self.area_side
                or h.center_y - h.radius < 0
                or h.center_y + h.radius > self.area_side
            ):
                raise ValueError("hotspot disk must lie inside the area")


def _rrh_grid(num_rrhs: int, area_side: float) -> np.ndarray:
    """Near-square grid of station positions; cells filled row-major."""
    cols = math.ceil(math.sqrt(num_rrhs))
    rows = math.ceil(num_rrhs / cols)
    dx = area_side / cols
    dy = area_side / rows
    k = np.arange(num_rrhs)
    x = (k % cols + 0.5) * dx
    y = (k // cols + 0.5) * dy
    return np.column_stack([x, y])


def generate(spec: GeneratorSpec) -> Scenario:
    """Build a scenario from a spec; identical specs give identical output."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    m = spec.num_devices

    if spec.kind == "hotspot":
        h = spec.hotspot
        n_hot = math.floor(h.fraction * m)
        r = h.radius * np.sqrt(rng.random(n_hot))
        theta = 2.0 * math.pi * rng.random(n_hot)
        hot = np.column_stack(
            [h.center_x + r * np.cos(theta), h.center_y + r * np.sin(theta)]
        )
        rest = rng.uniform(0.0, spec.area_side, size=(m - n_hot, 2))
        xy = np.vstack([hot, rest])
    else:
        xy = rng.uniform(0.0, spec.area_side, size=(m, 2))

    demands = rng.uniform(spec.demand_range[0], spec.demand_range[1], size=m)
    devices = tuple(
        Device(float(x), float(y), float(lam)) for (x, y), lam in zip(xy, demands)
    )
    rrhs = tuple(
        RRH(float(x), float(y), spec.rrh_power) for x, y in _rrh_grid(spec.num_rrhs, spec.area_side)
    )
    return Scenario(devices=devices, rrhs=rrhs, env=spec.env)


def scenario_to_dict(scenario: Scenario) -> dict:
    env = scenario.env
    return {
        "version": SCENARIO_FORMAT_VERSION,
        "devices": [
            {"x": d.x, "y": d.y, "demand": d.demand} for d in scenario.devices
        ],
        "rrhs": [{"x": r.x, "y": r.y, "power": r.power} for r in scenario.rrhs],
        "env": {
            "bandwidth": env.bandwidth,
            "noise": env.noise,
            "pathloss_exponent": env.pathloss_exponent,
            "min_distance": env.min_distance,
            "mu": env.mu,
        },
    }


def _require(mapping: dict, key: str, source: str, parent: str = "") -> object:
    path = f"{parent}.{key}" if parent else key
    if not isinstance(mapping, dict):
        raise ScenarioFormatError("expected an object", field=parent or key, source=source)
    if key not in mapping:
        raise ScenarioFormatError("missing required field", field=path, source=source)
    return mapping[key]


def _number(mapping: dict, key: str, source: str, parent: str) -> float:
    value = _require(mapping, key, source, parent)
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ScenarioFormatError(
            f"expected a number, got {type(value).__name__}",
            field=f"{parent}.{key}" if parent else key,
            source=source,
        )
    return float(value)


def scenario_from_dict(doc: dict, source: str = "<dict>") -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioFormatError("top level must be an object", source=source)
    version = _require(doc, "version", source)
    if version != SCENARIO_FORMAT_VERSION:
        raise ScenarioVersionError(
            f"unsupported scenario version {version!r}, expected {SCENARIO_FORMAT_VERSION}",
            field="version",
            source=source,
        )
    raw_devices = _require(doc, "devices", source)
    raw_rrhs = _require(doc, "rrhs", source)
    raw_env = _require(doc, "env", source)
    if not isinstance(raw_devices, list) or not raw_devices:
        raise ScenarioFormatError("must be a non-empty array", field="devices", source=source)
    if not isinstance(raw_rrhs, list) or not raw_rrhs:
        raise ScenarioFormatError("must be a non-empty array", field="rrhs", source=source)

    try:
        devices = tuple(
            Device(
                _number(d, "x", source, f"devices[{i}]"),
                _number(d, "y", source, f"devices[{i}]"),
                _number(d, "demand", source, f"devices[{i}]"),
            )
            for i, d in enumerate(raw_devices)
        )
        rrhs = tuple(
            RRH(
                _number(r, "x", source, f"rrhs[{i}]"),
                _number(r, "y", source, f"rrhs[{i}]"),
                _number(r, "power", source, f"rrhs[{i}]"),
            )
            for i, r in enumerate(raw_rrhs)
        )
        env = RadioEnvironment(
            bandwidth=_number(raw_env, "bandwidth", source, "env"),
            noise=_number(raw_env, "noise", source, "env"),
            pathloss_exponent=_number(raw_env, "pathloss_exponent", source, "env"),
            min_distance=_number(raw_env, "min_distance", source, "env"),
            mu=_number(raw_env, "mu", source, "env"),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioFormatError):
            raise
        raise ScenarioFormatError(str(exc), source=source) from exc
    return Scenario(devices=devices, rrhs=rrhs, env=env)


def save_scenario(scenario: Scenario, path) -> None:
    path = Path(path)
    path.write_text(
        json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            source=str(path),
        ) from exc
    return scenario_from_dict(doc, source=str(path))


def scenario_digest(scenario: Scenario) -> str:
    """Content hash of the canonical serialisation (whitespace-independent)."""
    canonical = json.dumps(
        scenario_to_dict(scenario), sort_keys=True, separators=(",", ":")
    )
    return "sha256:" + hashlib.sha256(canonical.encode("utf-8")).hexdigest()
