"""Over-the-air path gain: free-space loss, array patterns, scan loss, blockage.

Geometry helpers accept arrays of terminal positions with shape ``(..., 3)``
so position sweeps and dataset builds run vectorized.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .rfchain import run_chain
from .scenario import AntennaSpec, Blocker, FiberSpec, ScenarioConfig, Steering
from .units import SPEED_OF_LIGHT

DOWN = (0.0, 0.0, -1.0)
UP = (0.0, 0.0, 1.0)
ELEMENT_FLOOR_DB = -40.0
AF_FLOOR = 1e-12
TIE_TOL_DB = 1e-9

TxLabel = Union[int, str]


def wavelength_m(f_hz):
    f = np.asarray(f_hz, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    out = SPEED_OF_LIGHT / f
    return float(out) if out.ndim == 0 else out


def fspl_db(f_hz, d_m):
    """Free-space path loss 20*log10(4*pi*d/lambda)."""
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    out = 20.0 * np.log10(4.0 * np.pi * d / wavelength_m(f_hz))
    return float(out) if out.ndim == 0 else out


def array_gain_dbi(spec: AntennaSpec) -> float:
    """Broadside gain with a lossless feed: element gain plus 10*log10(N)."""
    return spec.element_gain_dbi + 10.0 * math.log10(spec.n_elements)


def hpbw_deg(n_elems_axis: int) -> float:
    """Broadside half-power beamwidth of an N-element half-wavelength ULA, 0.886*lambda/(N*d)."""
    if n_elems_axis < 2:
        raise ValueError("HPBW estimate needs at least 2 elements")
    return math.degrees(0.886 * 2.0 / n_elems_axis)


def doppler_hz(speed_mps: float, f_hz: float) -> float:
    if speed_mps < 0:
        raise ValueError("speed must be >= 0")
    return speed_mps * f_hz / SPEED_OF_LIGHT


def array_frame(boresight) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal (u, v, w) with w along boresight; the array lies in the u-v plane."""
    w = np.asarray(boresight, dtype=float)
    w = w / np.linalg.norm(w)
    ref = np.array([1.0, 0.0, 0.0]) if abs(w[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = ref - (ref @ w) * w
    u /= np.linalg.norm(u)
    return u, np.cross(w, u), w


def _dirichlet_sq(n: int, psi: np.ndarray) -> np.ndarray:
    """|sum_m exp(j*m*psi)|^2 for m = 0..n-1."""
    half = 0.5 * psi
    s = np.sin(half)
    small = np.abs(s) < 1e-12
    ratio = np.where(small, float(n), np.sin(n * half) / np.where(small, 1.0, s))
    return ratio * ratio


def element_factor_db(spec: AntennaSpec, cos_theta) -> np.ndarray:
    c = np.asarray(cos_theta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ef = spec.element_rolloff_exponent * 10.0 * np.log10(np.where(c > 0, c, 1.0))
    return np.where(c > 0, np.maximum(ef, ELEMENT_FLOOR_DB), ELEMENT_FLOOR_DB)


def pattern_gain_db(spec: AntennaSpec, steer_dir, obs_dir, boresight=UP):
    """Gain (dBi) of a half-wavelength URA toward ``obs_dir`` when steered to ``steer_dir``.

    Element factor cos^q(theta) plus |AF|^2/N, so broadside-steered and observed
    equals :func:`array_gain_dbi`. A FixedBroadside array ignores ``steer_dir``.
    Direction arguments broadcast against each other.
    """
    u, v, w = array_frame(boresight)
    obs = np.asarray(obs_dir, dtype=float)
    steer = w if spec.steering is Steering.FIXED_BROADSIDE else np.asarray(steer_dir, dtype=float)
    psi_u = np.pi * (obs @ u - steer @ u)
    psi_v = np.pi * (obs @ v - steer @ v)
    af = _dirichlet_sq(spec.n_x, psi_u) / spec.n_x * _dirichlet_sq(spec.n_y, psi_v) / spec.n_y
    out = spec.element_gain_dbi + element_factor_db(spec, obs @ w) + 10.0 * np.log10(np.maximum(af, AF_FLOOR))
    return float(out) if np.ndim(out) == 0 else out


def blockage_loss_db(tx_xyz, rx_xyz, blockers: Sequence[Blocker]):
    """Sum of penetration losses of spheres cutting the segment tx -> rx.

    Tangency (distance equal to the radius) does not count as a cut.
    """
    a = np.asarray(tx_xyz, dtype=float)
    b = np.asarray(rx_xyz, dtype=float)
    ab = b - a
    len2 = np.sum(ab * ab, axis=-1)
    if np.any(len2 == 0):
        raise ValueError("tx and rx coincide")
    loss = np.zeros(np.shape(len2))
    for blk in blockers:
        c = np.asarray(blk.center_xyz)
        t = np.clip(np.sum((c - a) * ab, axis=-1) / len2, 0.0, 1.0)
        closest = a + t[..., None] * ab
        dist = np.linalg.norm(closest - c, axis=-1)
        loss = loss + np.where(dist < blk.radius_m, blk.penetration_loss_db, 0.0)
    return float(loss) if np.ndim(loss) == 0 else loss


@dataclass(frozen=True)
class Transmitter:
    label: TxLabel
    position_xyz: tuple[float, float, float]
    array: AntennaSpec
    boresight: tuple[float, float, float] = DOWN


@dataclass(frozen=True)
class LinkSample:
    tx_index: TxLabel
    ue_position_xyz: tuple[float, float, float]
    path_gain_db: float
    los_blocked: bool


def stripe_transmitters(config: ScenarioConfig) -> list[Transmitter]:
    """Transmit-mode RUs, in chain order, facing the floor."""
    pos = config.ru_xyz
    return [Transmitter(k, pos[k], config.rus[k].tx_array) for k in config.transmit_indices()]


def central_transmitter(config: ScenarioConfig, steered: bool, array: AntennaSpec | None = None) -> Transmitter:
    base = array or AntennaSpec(n_x=4, n_y=4, element_gain_dbi=6.0)
    steering = Steering.STEERED_TO_TARGET if steered else Steering.FIXED_BROADSIDE
    return Transmitter("central", config.central_ap_xyz, AntennaSpec(
        base.n_x, base.n_y, base.element_gain_dbi, base.element_rolloff_exponent, steering))


def link_gains(tx: Transmitter, ue_xyz, config: ScenarioConfig, *, tx_steer=None,
               blockers: Sequence[Blocker] | None = None):
    """Vectorized path gain and blockage loss from ``tx`` to terminal positions.

    ``tx_steer`` fixes the transmit beam direction (codebook sweeps); by
    default a steerable array points at the terminal. The terminal array
    faces the ceiling and steers toward the transmitter.
    """
    ue = np.asarray(ue_xyz, dtype=float)
    delta = ue - np.asarray(tx.position_xyz)
    dist = np.linalg.norm(delta, axis=-1)
    if np.any(dist == 0):
        raise ValueError("terminal coincides with transmitter")
    to_ue = delta / dist[..., None]
    steer = to_ue if tx_steer is None else np.asarray(tx_steer, dtype=float)
    g_tx = pattern_gain_db(tx.array, steer, to_ue, tx.boresight)
    g_rx = pattern_gain_db(config.terminal.rx_array, -to_ue, -to_ue, UP)
    blk = blockage_loss_db(tx.position_xyz, ue, config.blockers if blockers is None else blockers)
    return g_tx + g_rx - fspl_db(config.carrier_hz, dist) - blk, blk


def link_path_gain(tx: Transmitter, ue_xyz, config: ScenarioConfig, *, tx_steer=None) -> LinkSample:
    gain, blk = link_gains(tx, ue_xyz, config, tx_steer=tx_steer)
    return LinkSample(tx.label, tuple(float(c) for c in ue_xyz), float(gain), bool(blk > 0))


def argmax_lowest(values: np.ndarray, axis: int = 0, tol: float = TIE_TOL_DB) -> np.ndarray:
    """argmax along ``axis`` where values within ``tol`` of the max tie to the lowest index."""
    top = np.max(values, axis=axis, keepdims=True)
    return np.argmax(values >= top - tol, axis=axis)


class Mode(str, enum.Enum):
    DISTRIBUTED = "distributed"
    CENTRAL_STEERED = "central_steered"
    CENTRAL_UNSTEERED = "central_unsteered"


@dataclass(frozen=True)
class ModeProfile:
    path_gain_db: np.ndarray
    serving_tx: tuple[TxLabel, ...]
    los_blocked: np.ndarray


@dataclass(frozen=True)
class PathGainProfile:
    x_grid_m: np.ndarray
    per_mode: dict[Mode, ModeProfile] = field(default_factory=dict)

    def gain(self, mode: Mode) -> np.ndarray:
        return self.per_mode[mode].path_gain_db


def ue_track(config: ScenarioConfig, x_grid) -> np.ndarray:
    """Terminal positions along x at the configured terminal's y and z."""
    x = np.asarray(x_grid, dtype=float)
    _, y, z = config.terminal.position_xyz
    return np.stack([x, np.full_like(x, y), np.full_like(x, z)], axis=-1)


def distributed_gains(config: ScenarioConfig, ue_xyz, blockers=None) -> tuple[np.ndarray, np.ndarray, list[Transmitter]]:
    """(n_tx, n_points) path gains and blockage losses over transmit-capable RUs."""
    txs = stripe_transmitters(config)
    if not txs:
        raise ValueError("scenario has no transmit-mode RU")
    rows = [link_gains(tx, ue_xyz, config, blockers=blockers) for tx in txs]
    return np.array([r[0] for r in rows]), np.array([r[1] for r in rows]), txs


def serve_and_profile(config: ScenarioConfig, x_grid) -> PathGainProfile:
    x = np.asarray(x_grid, dtype=float)
    if x.size == 0:
        raise ValueError("x grid is empty")
    ue = ue_track(config, x)
    for p in ue:
        if not config.room.contains(p):
            raise ValueError(f"grid point {tuple(p)} lies outside the room")

    gains, blk, txs = distributed_gains(config, ue)
    best = argmax_lowest(gains, axis=0)
    cols = np.arange(x.size)
    per_mode = {
        Mode.DISTRIBUTED: ModeProfile(gains[best, cols], tuple(txs[i].label for i in best), blk[best, cols] > 0),
    }
    for mode, steered in ((Mode.CENTRAL_STEERED, True), (Mode.CENTRAL_UNSTEERED, False)):
        g, b = link_gains(central_transmitter(config, steered), ue, config)
        per_mode[mode] = ModeProfile(np.asarray(g), ("central",) * x.size, np.asarray(b) > 0)
    return PathGainProfile(x, per_mode)


@dataclass(frozen=True)
class FiberVariant:
    """What-if fiber parameters. ``booster_gain_db=None`` keeps unity net hop gain; 0 is a passive RU."""

    atten_db_per_m: float
    coupler_loss_db: float
    booster_gain_db: float | None = None


@dataclass(frozen=True)
class EndToEndProfile:
    x_grid_m: np.ndarray
    serving_ru: tuple[int, ...]
    chain_gain_db: np.ndarray
    air_gain_db: np.ndarray
    stripe_db: np.ndarray
    direct_db: np.ndarray


def chain_gain_per_ru(config: ScenarioConfig, variant: FiberVariant) -> np.ndarray:
    """Net signal gain from the CU output to each powered RU's tap."""
    rep = run_chain(config, fiber=FiberSpec(variant.atten_db_per_m, variant.coupler_loss_db),
                    booster_gain_db=variant.booster_gain_db)
    launch = rep.taps[0].p_sig_dbm
    return np.array([t.p_sig_dbm - launch for t in rep.taps[1:]])


def end_to_end_gain_profile(config: ScenarioConfig, x_grid, fiber_variant: FiberVariant) -> EndToEndProfile:
    """Stripe total (fiber chain to the serving RU + air) against the steered central link.

    The serving RU is the over-the-air handover choice; the fiber variant
    only changes what the signal loses before it reaches that RU.
    """
    prof = serve_and_profile(config, x_grid)
    dist = prof.per_mode[Mode.DISTRIBUTED]
    chain = chain_gain_per_ru(config, fiber_variant)
    serving = tuple(int(s) for s in dist.serving_tx)
    chain_at_x = chain[list(serving)]
    return EndToEndProfile(
        prof.x_grid_m, serving, chain_at_x, dist.path_gain_db,
        chain_at_x + dist.path_gain_db, prof.gain(Mode.CENTRAL_STEERED))
