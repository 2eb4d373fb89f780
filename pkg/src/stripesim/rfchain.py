"""Signal, noise and intermodulation budget along the CU -> fiber -> RU daisy chain.

All powers are integrated over the signal bandwidth and tracked in dBm. Noise
and IMD accumulate in the linear domain; IMD from different stages adds
non-coherently.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .scenario import (
    MAX_RU_GAIN_DB,
    CentralUnitSpec,
    FiberSpec,
    RUMode,
    ScenarioConfig,
)
from .units import THERMAL_NOISE_DBM_PER_HZ, db_to_lin, lin_to_db

__all__ = [
    "CentralUnitSpec", "StageKind", "StageSpec", "SignalState", "ChainReport",
    "thermal_noise_floor_dbm", "apply_stage", "cu_output_state", "hop_stages",
    "chain_stages", "run_chain", "sndr_db", "sweep_launch_power",
]


class StageKind(str, enum.Enum):
    LOSS = "loss"
    AMPLIFIER = "amplifier"


@dataclass(frozen=True)
class StageSpec:
    kind: StageKind
    gain_db: float
    noise_figure_db: float
    oip3_dbm: float = math.inf

    def __post_init__(self):
        if self.kind is StageKind.LOSS:
            if self.gain_db > 0:
                raise ValueError("loss stage needs gain_db <= 0")
            if abs(self.noise_figure_db + self.gain_db) > 1e-12:
                raise ValueError("a passive loss at 290 K has NF equal to its loss")
        elif not 0 < self.gain_db < MAX_RU_GAIN_DB:
            raise ValueError(f"amplifier gain must lie in (0, {MAX_RU_GAIN_DB:g}) dB")

    @classmethod
    def loss(cls, loss_db: float) -> "StageSpec":
        return cls(StageKind.LOSS, -loss_db, loss_db)

    @classmethod
    def amplifier(cls, gain_db: float, noise_figure_db: float, oip3_dbm: float) -> "StageSpec":
        return cls(StageKind.AMPLIFIER, gain_db, noise_figure_db, oip3_dbm)


@dataclass(frozen=True)
class SignalState:
    p_sig_dbm: float
    p_noise_dbm: float
    p_imd_dbm: float
    position_m: float = 0.0

    @property
    def snr_db(self) -> float:
        return self.p_sig_dbm - self.p_noise_dbm

    @property
    def sdr_db(self) -> float:
        return self.p_sig_dbm - self.p_imd_dbm

    @property
    def sndr_db(self) -> float:
        return sndr_db(self)


@dataclass(frozen=True)
class ChainReport:
    taps: tuple[SignalState, ...]
    crossover_m: float | None

    @property
    def end(self) -> SignalState:
        return self.taps[-1]


def thermal_noise_floor_dbm(bandwidth_hz: float) -> float:
    """kTB at 290 K."""
    if not bandwidth_hz > 0:
        raise ValueError("bandwidth_hz must be > 0")
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(bandwidth_hz)


def imd3_dbm(p_out_dbm: float, oip3_dbm: float) -> float:
    """Third-order product at the output: 3*Pout - 2*OIP3."""
    return 3.0 * p_out_dbm - 2.0 * oip3_dbm


def apply_stage(state: SignalState, stage: StageSpec, bandwidth_hz: float) -> SignalState:
    g = float(db_to_lin(stage.gain_db))
    f = float(db_to_lin(stage.noise_figure_db))
    ktb = float(db_to_lin(thermal_noise_floor_dbm(bandwidth_hz)))

    p_sig = state.p_sig_dbm + stage.gain_db
    noise = float(db_to_lin(state.p_noise_dbm)) * g + ktb * (f - 1.0) * g
    imd = float(db_to_lin(state.p_imd_dbm)) * g
    if stage.kind is StageKind.AMPLIFIER:
        imd += float(db_to_lin(imd3_dbm(p_sig, stage.oip3_dbm)))
    return replace(state, p_sig_dbm=p_sig, p_noise_dbm=float(lin_to_db(noise)),
                   p_imd_dbm=float(lin_to_db(imd)))


def fold_stages(state: SignalState, stages: Iterable[StageSpec], bandwidth_hz: float) -> SignalState:
    for stage in stages:
        state = apply_stage(state, stage, bandwidth_hz)
    return state


def sndr_db(state: SignalState) -> float:
    """1/SNDR = 1/SNR + 1/SDR in linear terms."""
    inv = float(db_to_lin(-state.snr_db)) + float(db_to_lin(-state.sdr_db))
    return float(-lin_to_db(inv))


def cu_output_state(cu: CentralUnitSpec, bandwidth_hz: float, launch_dbm: float | None = None) -> SignalState:
    """State on the fiber right after the CU.

    Noise sits ``cu.noise_figure_db`` above kTB; the white phase-noise floor
    tracks the signal and is booked as distortion.
    """
    p = cu.launch_power_dbm if launch_dbm is None else launch_dbm
    noise = thermal_noise_floor_dbm(bandwidth_hz) + cu.noise_figure_db
    return SignalState(p, noise, p + cu.phase_noise_floor_dbc, 0.0)


def hop_stages(fiber: FiberSpec, spacing_m: float, gain_db: float,
               noise_figure_db: float, oip3_dbm: float) -> list[StageSpec]:
    """Output coupler, fiber segment, input coupler, then the RU amplifier.

    A gain of exactly 0 dB models a passive RU: no amplifier stage.
    """
    stages = [
        StageSpec.loss(fiber.coupler_loss_db),
        StageSpec.loss(fiber.atten_db_per_m * spacing_m),
        StageSpec.loss(fiber.coupler_loss_db),
    ]
    if gain_db > 0:
        stages.append(StageSpec.amplifier(gain_db, noise_figure_db, oip3_dbm))
    return stages


def chain_stages(config: ScenarioConfig, fiber: FiberSpec | None = None,
                 booster_gain_db: float | None = None) -> list[list[StageSpec]]:
    """Per-hop stage lists for every powered RU, in chain order.

    ``fiber`` and ``booster_gain_db`` override the scenario values (used for
    what-if fiber variants); a ``None`` gain keeps each RU's own setting,
    which itself defaults to unity net hop gain.
    """
    fiber = fiber or config.fiber
    spacing = config.stripe.ru_spacing_m
    hops = []
    for ru in config.rus:
        if ru.mode is RUMode.DISABLED:
            break
        if booster_gain_db is not None:
            gain = booster_gain_db
        elif ru.booster_gain_db is not None:
            gain = ru.booster_gain_db
        else:
            gain = fiber.hop_loss_db(spacing)
        hops.append(hop_stages(fiber, spacing, gain, ru.noise_figure_db, ru.oip3_dbm))
    return hops


def crossover_position(taps: Sequence[SignalState]) -> float | None:
    """Position of the first tap where S/IMD drops below S/N.

    None if the chain never turns distortion-limited, or if it already is at
    the CU (then there is no noise-to-distortion transition to report).
    """
    if not taps or taps[0].sdr_db < taps[0].snr_db:
        return None
    for tap in taps[1:]:
        if tap.sdr_db < tap.snr_db:
            return tap.position_m
    return None


def run_chain(config: ScenarioConfig, launch_dbm: float | None = None, *,
              fiber: FiberSpec | None = None, booster_gain_db: float | None = None) -> ChainReport:
    bw = config.bandwidth_hz
    spacing = config.stripe.ru_spacing_m
    state = cu_output_state(config.cu, bw, launch_dbm)
    taps = [state]
    for k, stages in enumerate(chain_stages(config, fiber, booster_gain_db), start=1):
        state = replace(fold_stages(state, stages, bw), position_m=k * spacing)
        taps.append(state)
    return ChainReport(tuple(taps), crossover_position(taps))


def sweep_launch_power(config: ScenarioConfig, grid: Sequence[float]) -> float:
    """Launch power on ``grid`` maximizing end-of-stripe SNDR; ties go to the lower power."""
    if len(grid) == 0:
        raise ValueError("launch power grid is empty")
    best_p, best_sndr = None, -math.inf
    for p in sorted(grid):
        s = run_chain(config, p).end.sndr_db
        if s > best_sndr:
            best_p, best_sndr = p, s
    return float(best_p)
