"""Simulation world: room, stripe placement, radio units, terminal, blockers.

Scenarios are stored as TOML files. Every section is optional; missing keys
take the defaults of the dataclasses below. The grammar is documented in
``configs/default.toml`` and the README.
"""

from __future__ import annotations

import dataclasses
import enum
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

Vec3 = tuple[float, float, float]

# A real RU must keep its gain below the output-to-input coupler isolation.
MAX_RU_GAIN_DB = 30.0


class ScenarioError(ValueError):
    pass


class ParseError(ScenarioError):
    """Raised for files that are not valid TOML. Carries the line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class ValidationError(ScenarioError):
    """Raised when a value breaks an invariant. ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class RUMode(str, enum.Enum):
    TRANSMIT = "transmit"
    BOOSTER = "booster"
    DISABLED = "disabled"


class Steering(str, enum.Enum):
    FIXED_BROADSIDE = "fixed_broadside"
    STEERED_TO_TARGET = "steered_to_target"


def rolloff_for_gain(element_gain_dbi: float) -> float:
    """Exponent q of a cos^q element whose pattern integrates to ``element_gain_dbi``.

    A cos^q(theta) power pattern over the front hemisphere has directivity
    2(q + 1), so q = G/2 - 1 (clipped at 0 for gains below 3 dBi).
    """
    return max(10.0 ** (element_gain_dbi / 10.0) / 2.0 - 1.0, 0.0)


def _vec3(name: str, value) -> Vec3:
    try:
        v = tuple(float(c) for c in value)
    except TypeError:
        raise ValidationError(name, "expected a list of three numbers") from None
    if len(v) != 3 or not all(math.isfinite(c) for c in v):
        raise ValidationError(name, "expected three finite numbers")
    return v  # type: ignore[return-value]


@dataclass(frozen=True)
class Room:
    length_m: float = 15.0
    width_m: float = 6.0
    height_m: float = 5.0
    wall_reflectivity: float = 0.2

    def __post_init__(self):
        for name in ("length_m", "width_m", "height_m"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"room.{name}", "must be > 0")
        if not 0.0 <= self.wall_reflectivity <= 1.0:
            raise ValidationError("room.wall_reflectivity", "must lie in [0, 1]")

    @property
    def center(self) -> Vec3:
        return (self.length_m / 2, self.width_m / 2, self.height_m / 2)

    def contains(self, xyz, tol: float = 1e-9) -> bool:
        x, y, z = xyz
        return (-tol <= x <= self.length_m + tol and -tol <= y <= self.width_m + tol
                and -tol <= z <= self.height_m + tol)


@dataclass(frozen=True)
class StripePlacement:
    start_xyz: Vec3 = (0.0, 3.0, 5.0)
    direction: Vec3 = (1.0, 0.0, 0.0)
    length_m: float = 15.0
    ru_spacing_m: float = 1.5
    transmit_capable_every: int = 1

    def __post_init__(self):
        object.__setattr__(self, "start_xyz", _vec3("stripe.start_xyz", self.start_xyz))
        object.__setattr__(self, "direction", _vec3("stripe.direction", self.direction))
        if not self.length_m > 0:
            raise ValidationError("stripe.length_m", "must be > 0")
        if not 0 < self.ru_spacing_m <= self.length_m:
            raise ValidationError("stripe.ru_spacing_m", "must satisfy 0 < spacing <= length")
        if abs(math.hypot(*self.direction) - 1.0) > 1e-9:
            raise ValidationError("stripe.direction", "must have unit norm")
        if int(self.transmit_capable_every) != self.transmit_capable_every or self.transmit_capable_every < 1:
            raise ValidationError("stripe.transmit_capable_every", "must be a positive integer")

    @property
    def n_rus(self) -> int:
        # small epsilon so 15 / 1.5 does not floor to 9
        return int(math.floor(self.length_m / self.ru_spacing_m + 1e-9))

    def is_transmit_capable(self, index: int) -> bool:
        # stride counted from the CU: with stride 2 the 2nd, 4th, ... RU transmit
        return (index + 1) % self.transmit_capable_every == 0


def ru_positions(stripe: StripePlacement) -> list[Vec3]:
    """Positions start + k * spacing * direction for k = 1..N."""
    start = np.asarray(stripe.start_xyz)
    step = stripe.ru_spacing_m * np.asarray(stripe.direction)
    return [tuple(float(c) for c in start + k * step) for k in range(1, stripe.n_rus + 1)]


@dataclass(frozen=True)
class FiberSpec:
    atten_db_per_m: float = 3.0
    coupler_loss_db: float = 3.0

    def __post_init__(self):
        if not self.atten_db_per_m >= 0:
            raise ValidationError("fiber.atten_db_per_m", "must be >= 0")
        if not self.coupler_loss_db >= 0:
            raise ValidationError("fiber.coupler_loss_db", "must be >= 0")

    def hop_loss_db(self, spacing_m: float) -> float:
        """Output coupler + fiber segment + input coupler."""
        return self.atten_db_per_m * spacing_m + 2.0 * self.coupler_loss_db


@dataclass(frozen=True)
class CentralUnitSpec:
    """CU transmitter. ``noise_figure_db`` sets the output noise floor above kTB."""

    peak_power_dbm: float = 10.0
    backoff_db: float = 6.0
    phase_noise_floor_dbc: float = -50.0
    noise_figure_db: float = 30.0

    def __post_init__(self):
        if not self.backoff_db >= 0:
            raise ValidationError("cu.backoff_db", "must be >= 0")
        if math.isnan(self.phase_noise_floor_dbc) or self.phase_noise_floor_dbc == math.inf:
            raise ValidationError("cu.phase_noise_floor_dbc", "must be finite or -inf")

    @property
    def launch_power_dbm(self) -> float:
        return self.peak_power_dbm - self.backoff_db


@dataclass(frozen=True)
class AntennaSpec:
    n_x: int = 4
    n_y: int = 4
    element_gain_dbi: float = 6.0
    element_rolloff_exponent: float | None = None
    steering: Steering = Steering.STEERED_TO_TARGET

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValidationError("antenna.n_x/n_y", "element counts must be >= 1")
        if not math.isfinite(self.element_gain_dbi):
            raise ValidationError("antenna.element_gain_dbi", "must be finite")
        if self.element_rolloff_exponent is None:
            object.__setattr__(self, "element_rolloff_exponent", rolloff_for_gain(self.element_gain_dbi))
        elif not self.element_rolloff_exponent >= 0:
            raise ValidationError("antenna.element_rolloff_exponent", "must be >= 0")
        object.__setattr__(self, "steering", Steering(self.steering))

    @property
    def n_elements(self) -> int:
        return self.n_x * self.n_y


@dataclass(frozen=True)
class RadioUnitSpec:
    """One RU. ``booster_gain_db=None`` means unity net gain per hop."""

    index: int = 0
    mode: RUMode = RUMode.TRANSMIT
    tx_array: AntennaSpec = field(default_factory=AntennaSpec)
    booster_gain_db: float | None = None
    noise_figure_db: float = 8.0
    oip3_dbm: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "mode", RUMode(self.mode))
        if self.booster_gain_db is not None and not 0 <= self.booster_gain_db < MAX_RU_GAIN_DB:
            raise ValidationError("ru.booster_gain_db", f"must lie in [0, {MAX_RU_GAIN_DB:g}) dB")
        if self.index < 0:
            raise ValidationError("ru.index", "must be >= 0")


@dataclass(frozen=True)
class UserTerminal:
    position_xyz: Vec3 = (7.5, 3.0, 1.0)
    rx_array: AntennaSpec = field(default_factory=AntennaSpec)
    speed_mps: float = 5.0 / 3.6

    def __post_init__(self):
        object.__setattr__(self, "position_xyz", _vec3("terminal.position_xyz", self.position_xyz))
        if not self.speed_mps >= 0:
            raise ValidationError("terminal.speed_mps", "must be >= 0")


@dataclass(frozen=True)
class Blocker:
    center_xyz: Vec3
    radius_m: float = 0.3
    penetration_loss_db: float = 40.0

    def __post_init__(self):
        object.__setattr__(self, "center_xyz", _vec3("blockers.center_xyz", self.center_xyz))
        if not self.radius_m > 0:
            raise ValidationError("blockers.radius_m", "must be > 0")
        if not self.penetration_loss_db >= 0:
            raise ValidationError("blockers.penetration_loss_db", "must be >= 0")


# The low-band array hangs just off the y = 0 side wall, axis 30 deg off the stripe.
# That wall's image path then stays phase-locked to the direct path and gives the
# array a second, mirrored look angle; see README "Low-band access point".
LOWBAND_WALL_OFFSET_M = 0.05
_AXIS_DEG = 30.0
DEFAULT_LOWBAND_AXIS: Vec3 = (math.cos(math.radians(_AXIS_DEG)), math.sin(math.radians(_AXIS_DEG)), 0.0)


@dataclass(frozen=True)
class LowbandSpec:
    """Sub-10 GHz access point: a half-wavelength ULA.

    ``ap_xyz=None`` places it mid-length on the y = 0 wall at ceiling height.
    """

    ap_xyz: Vec3 | None = None
    n_antennas: int = 8
    axis: Vec3 = DEFAULT_LOWBAND_AXIS
    csi_snr_db: float | None = None

    def __post_init__(self):
        if self.ap_xyz is not None:
            object.__setattr__(self, "ap_xyz", _vec3("lowband.ap_xyz", self.ap_xyz))
        object.__setattr__(self, "axis", _vec3("lowband.axis", self.axis))
        if self.n_antennas < 1:
            raise ValidationError("lowband.n_antennas", "must be >= 1")
        if abs(math.hypot(*self.axis) - 1.0) > 1e-9:
            raise ValidationError("lowband.axis", "must have unit norm")


@dataclass(frozen=True)
class CodebookSpec:
    """Per-RU beam grid: nadir plus ``n_beams - 1`` azimuths on a ring ``tilt_deg`` off nadir."""

    n_beams: int = 5
    tilt_deg: float = 30.0

    def __post_init__(self):
        if self.n_beams < 1:
            raise ValidationError("codebook.n_beams", "must be >= 1")
        if not 0 <= self.tilt_deg < 90:
            raise ValidationError("codebook.tilt_deg", "must lie in [0, 90)")


@dataclass(frozen=True)
class ScenarioConfig:
    room: Room = field(default_factory=Room)
    stripe: StripePlacement = field(default_factory=StripePlacement)
    fiber: FiberSpec = field(default_factory=FiberSpec)
    cu: CentralUnitSpec = field(default_factory=CentralUnitSpec)
    ru_defaults: RadioUnitSpec = field(default_factory=RadioUnitSpec)
    rus: tuple[RadioUnitSpec, ...] = ()
    terminal: UserTerminal = field(default_factory=UserTerminal)
    blockers: tuple[Blocker, ...] = ()
    lowband: LowbandSpec = field(default_factory=LowbandSpec)
    codebook: CodebookSpec = field(default_factory=CodebookSpec)
    carrier_hz: float = 140e9
    lowband_hz: float = 6e9
    bandwidth_hz: float = 20e9
    seed: int = 0

    def __post_init__(self):
        if not self.rus:
            object.__setattr__(self, "rus", tuple(default_rus(self.stripe, self.ru_defaults)))
        object.__setattr__(self, "rus", tuple(self.rus))
        object.__setattr__(self, "blockers", tuple(self.blockers))
        validate(self)

    @property
    def ru_xyz(self) -> list[Vec3]:
        return ru_positions(self.stripe)

    def transmit_indices(self) -> list[int]:
        return [ru.index for ru in self.rus if ru.mode is RUMode.TRANSMIT]

    def ru_gain_db(self, ru: RadioUnitSpec) -> float:
        """Resolved booster gain: explicit value, else the hop loss (unity net gain)."""
        if ru.booster_gain_db is not None:
            return ru.booster_gain_db
        return self.fiber.hop_loss_db(self.stripe.ru_spacing_m)

    @property
    def lowband_ap_xyz(self) -> Vec3:
        if self.lowband.ap_xyz is not None:
            return self.lowband.ap_xyz
        return (self.room.length_m / 2, LOWBAND_WALL_OFFSET_M, self.room.height_m)

    @property
    def central_ap_xyz(self) -> Vec3:
        """Central reference AP: room center at stripe height."""
        return (self.room.length_m / 2, self.room.width_m / 2, self.stripe.start_xyz[2])


def default_rus(stripe: StripePlacement, template: RadioUnitSpec) -> list[RadioUnitSpec]:
    rus = []
    for k in range(stripe.n_rus):
        mode = RUMode.TRANSMIT if stripe.is_transmit_capable(k) else RUMode.BOOSTER
        rus.append(replace(template, index=k, mode=mode))
    return rus


def validate(cfg: ScenarioConfig) -> None:
    """Cross-field invariants. Field-local ones live in each ``__post_init__``."""
    if not cfg.bandwidth_hz > 0:
        raise ValidationError("bandwidth_hz", "must be > 0")
    if not cfg.lowband_hz > 0:
        raise ValidationError("lowband_hz", "must be > 0")
    if not cfg.carrier_hz > cfg.lowband_hz:
        raise ValidationError("carrier_hz", "must exceed lowband_hz")
    if int(cfg.seed) != cfg.seed or cfg.seed < 0:
        raise ValidationError("seed", "must be an unsigned integer")

    if len(cfg.rus) != cfg.stripe.n_rus:
        raise ValidationError("ru", f"expected {cfg.stripe.n_rus} radio units, got {len(cfg.rus)}")
    seen_disabled = False
    for k, ru in enumerate(cfg.rus):
        if ru.index != k:
            raise ValidationError("ru.index", "indices must be 0..N-1 in chain order")
        if ru.mode is RUMode.DISABLED:
            seen_disabled = True
        elif seen_disabled:
            raise ValidationError(
                "ru.mode", f"RU {k} is {ru.mode.value} after a disabled RU; disabling an RU disables all later ones")
        if ru.mode is RUMode.TRANSMIT and not cfg.stripe.is_transmit_capable(k):
            raise ValidationError("ru.mode", f"RU {k} is not transmit-capable under the stripe stride")
        if ru.mode is not RUMode.DISABLED and not cfg.ru_gain_db(ru) < MAX_RU_GAIN_DB:
            raise ValidationError(
                "ru.booster_gain_db", f"unity hop gain for RU {k} would exceed the {MAX_RU_GAIN_DB:g} dB cap")

    room = cfg.room
    for name, p in (("stripe.start_xyz", cfg.stripe.start_xyz),
                    ("stripe end", cfg.ru_xyz[-1] if cfg.ru_xyz else cfg.stripe.start_xyz),
                    ("terminal.position_xyz", cfg.terminal.position_xyz),
                    ("lowband.ap_xyz", cfg.lowband_ap_xyz)):
        if not room.contains(p):
            raise ValidationError(name, f"point {p} lies outside the room")


# ---------------------------------------------------------------------------
# TOML I/O
# ---------------------------------------------------------------------------

_NESTED = {"tx_array", "rx_array"}


def _build(cls, data: dict[str, Any], section: str):
    if not isinstance(data, dict):
        raise ValidationError(section, "expected a table")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"{section}.{sorted(unknown)[0]}", "unknown key")
    kwargs = {}
    for key, value in data.items():
        if key in _NESTED:
            value = _build(AntennaSpec, value, f"{section}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(section, str(exc)) from None


def from_dict(data: dict[str, Any]) -> ScenarioConfig:
    data = dict(data)
    top: dict[str, Any] = {}
    sections = {
        "room": Room, "stripe": StripePlacement, "fiber": FiberSpec, "cu": CentralUnitSpec,
        "terminal": UserTerminal, "lowband": LowbandSpec, "codebook": CodebookSpec,
    }
    for name, cls in sections.items():
        if name in data:
            top[name] = _build(cls, data.pop(name), name)

    template = _build(RadioUnitSpec, data.pop("ru_defaults", {}), "ru_defaults")
    top["ru_defaults"] = template
    stripe = top.get("stripe", StripePlacement())
    rus = default_rus(stripe, template)
    for i, entry in enumerate(data.pop("ru", [])):
        if "index" not in entry:
            raise ValidationError(f"ru[{i}].index", "required")
        k = entry["index"]
        if not isinstance(k, int) or not 0 <= k < len(rus):
            raise ValidationError(f"ru[{i}].index", f"must be an integer in [0, {len(rus)})")
        merged = dataclasses.asdict(rus[k])
        merged["tx_array"] = {**merged["tx_array"], **entry.get("tx_array", {})}
        merged.update({key: v for key, v in entry.items() if key != "tx_array"})
        rus[k] = _build(RadioUnitSpec, merged, f"ru[{i}]")
    top["rus"] = tuple(rus)
    top["blockers"] = tuple(_build(Blocker, b, f"blockers[{i}]") for i, b in enumerate(data.pop("blockers", [])))

    for key in ("carrier_hz", "lowband_hz", "bandwidth_hz", "seed"):
        if key in data:
            top[key] = data.pop(key)
    if data:
        raise ValidationError(sorted(data)[0], "unknown key")
    for key in ("carrier_hz", "lowband_hz", "bandwidth_hz"):
        if key in top and not isinstance(top[key], (int, float)):
            raise ValidationError(key, "must be a number")
    return ScenarioConfig(**top)


def loads(text: str) -> ScenarioConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ParseError(str(exc), line) from None
    return from_dict(data)


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Read and validate a scenario file. Raises FileNotFoundError, ParseError, ValidationError."""
    return loads(Path(path).read_text())


def _plain(value):
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items() if v is not None}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    raw = dataclasses.asdict(cfg)
    out = {k: raw[k] for k in ("carrier_hz", "lowband_hz", "bandwidth_hz", "seed")}
    for k in ("room", "stripe", "fiber", "cu", "terminal", "lowband", "codebook", "ru_defaults"):
        out[k] = raw[k]
    out["ru"] = raw["rus"]
    if raw["blockers"]:
        out["blockers"] = raw["blockers"]
    return _plain(out)


def dumps(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))
