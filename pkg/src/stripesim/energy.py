"""Stripe power draw and energy per bit.

Transmit and booster RUs draw the same power (class-A amplifiers). Digital
baseband power is not included.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .scenario import RUMode, ScenarioError


@dataclass(frozen=True)
class PowerModel:
    p_ru_active_w: float = 0.5
    p_cu_w: float = 0.1
    throughput_bps: float = 20e9

    def __post_init__(self):
        for name in ("p_ru_active_w", "p_cu_w", "throughput_bps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class EnergyReport:
    n_active_rus: int
    total_power_w: float
    energy_per_bit_j: float

    @property
    def pj_per_bit(self) -> float:
        return self.energy_per_bit_j * 1e12


class ChainRuleError(ScenarioError):
    pass


def active_set(ru_modes: Sequence[RUMode | str]) -> int:
    """Number of powered RUs: the index of the first disabled one, or all of them.

    Raises ChainRuleError if a powered RU follows a disabled one.
    """
    modes = [RUMode(m) for m in ru_modes]
    n = next((k for k, m in enumerate(modes) if m is RUMode.DISABLED), len(modes))
    if any(m is not RUMode.DISABLED for m in modes[n:]):
        raise ChainRuleError(f"RU after disabled RU {n} is still powered")
    return n


def modes_for_serving(n_rus: int, serving_ru: int) -> list[RUMode]:
    """Cheapest assignment that still reaches ``serving_ru``: boost up to it, disable the rest."""
    if not 0 <= serving_ru < n_rus:
        raise ValueError(f"serving RU must lie in [0, {n_rus})")
    return ([RUMode.BOOSTER] * serving_ru + [RUMode.TRANSMIT]
            + [RUMode.DISABLED] * (n_rus - serving_ru - 1))


def report(model: PowerModel, n_active: int, throughput_bps: float | None = None) -> EnergyReport:
    if n_active < 0:
        raise ValueError("n_active must be >= 0")
    rate = model.throughput_bps if throughput_bps is None else throughput_bps
    if not rate > 0:
        raise ValueError("throughput must be positive")
    total = model.p_cu_w + n_active * model.p_ru_active_w
    return EnergyReport(n_active, total, total / rate)
