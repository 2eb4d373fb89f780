"""Sub-10 GHz assisted selection of the sub-THz RU and beam.

Learning phase: pair a low-band uplink channel with the (RU, beam) that an
exhaustive sub-THz pilot sweep finds best. Exploitation phase: predict a
short candidate list from the low-band channel and only measure those.
"""

from __future__ import annotations

import abc
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .airlink import TIE_TOL_DB, argmax_lowest, link_gains, stripe_transmitters, wavelength_m
from .scenario import ScenarioConfig
from .threads import thread_count

Label = tuple[int, int]


@dataclass(frozen=True)
class Codebook:
    """Candidate beams per transmit-capable RU.

    Labels use the RU's slot in ``ru_indices`` (0..n_ru-1), not its chain index.
    """

    ru_indices: tuple[int, ...]
    beam_dirs: np.ndarray  # (n_beams, 3), shared by all RUs since they face the same way

    @property
    def n_ru(self) -> int:
        return len(self.ru_indices)

    @property
    def n_beams(self) -> int:
        return len(self.beam_dirs)

    @property
    def size(self) -> int:
        return self.n_ru * self.n_beams

    def labels(self) -> list[Label]:
        return [(r, b) for r in range(self.n_ru) for b in range(self.n_beams)]


def beam_directions(n_beams: int, tilt_deg: float) -> np.ndarray:
    """Nadir, then ``n_beams - 1`` azimuths spread uniformly on a ring ``tilt_deg`` off nadir."""
    dirs = [(0.0, 0.0, -1.0)]
    n_ring = n_beams - 1
    t = math.radians(tilt_deg)
    for j in range(n_ring):
        phi = 2.0 * math.pi * j / n_ring
        dirs.append((math.sin(t) * math.cos(phi), math.sin(t) * math.sin(phi), -math.cos(t)))
    return np.array(dirs)


def make_codebook(config: ScenarioConfig) -> Codebook:
    return Codebook(tuple(config.transmit_indices()),
                    beam_directions(config.codebook.n_beams, config.codebook.tilt_deg))


# ---------------------------------------------------------------------------
# Low-band channel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LowbandChannel:
    h: np.ndarray
    ue_position_xyz: tuple[float, float, float]


def lowband_antennas(config: ScenarioConfig) -> np.ndarray:
    """(M, 3) element positions of the low-band ULA, centred on the AP position."""
    lb = config.lowband
    spacing = wavelength_m(config.lowband_hz) / 2.0
    offsets = (np.arange(lb.n_antennas) - (lb.n_antennas - 1) / 2.0) * spacing
    return np.asarray(config.lowband_ap_xyz) + offsets[:, None] * np.asarray(lb.axis)


def image_sources(config: ScenarioConfig, ue_xyz: np.ndarray) -> list[tuple[np.ndarray, float]]:
    """LOS source plus first-order images across the four side walls, with amplitude factors."""
    L, W = config.room.length_m, config.room.width_m
    gamma = config.room.wall_reflectivity
    out = [(ue_xyz, 1.0)]
    for axis, wall in ((0, 0.0), (0, L), (1, 0.0), (1, W)):
        img = ue_xyz.copy()
        img[..., axis] = 2.0 * wall - img[..., axis]
        out.append((img, gamma))
    return out


def lowband_response(config: ScenarioConfig, ue_xyz) -> np.ndarray:
    """Uplink channel (..., M) from terminal positions to the low-band array."""
    ue = np.asarray(ue_xyz, dtype=float)
    ant = lowband_antennas(config)
    k = 2.0 * np.pi / wavelength_m(config.lowband_hz)
    h = np.zeros(ue.shape[:-1] + (len(ant),), dtype=complex)
    for src, amp in image_sources(config, ue):
        if amp == 0.0:
            continue
        d = np.linalg.norm(src[..., None, :] - ant, axis=-1)
        h += amp / d * np.exp(-1j * k * d)
    return h


def lowband_channel(config: ScenarioConfig, ue_position) -> LowbandChannel:
    p = tuple(float(c) for c in ue_position)
    if not config.room.contains(p):
        raise ValueError(f"position {p} lies outside the room")
    return LowbandChannel(lowband_response(config, np.array(p)), p)


def channel_features(h: np.ndarray) -> np.ndarray:
    """Unit-norm real/imag concatenation after removing the common phase.

    The first antenna is rotated onto the positive real axis, so features are
    invariant to any complex scaling of ``h``.
    """
    h = np.asarray(h, dtype=complex)
    ref = h[..., :1]
    mag = np.abs(ref)
    rot = np.where(mag > 0, np.conj(ref) / np.where(mag > 0, mag, 1.0), 1.0)
    h = h * rot
    f = np.concatenate([h.real, h.imag], axis=-1)
    norm = np.linalg.norm(f, axis=-1, keepdims=True)
    return f / np.where(norm > 0, norm, 1.0)


def add_csi_noise(h: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Complex Gaussian estimation noise at ``snr_db`` relative to each sample's mean power."""
    p = np.mean(np.abs(h) ** 2, axis=-1, keepdims=True)
    sigma = np.sqrt(p * 10.0 ** (-snr_db / 10.0) / 2.0)
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    return h + sigma * noise


# ---------------------------------------------------------------------------
# Exhaustive sub-THz sweep
# ---------------------------------------------------------------------------

def sweep_gains(config: ScenarioConfig, codebook: Codebook, ue_xyz, blockers=None) -> np.ndarray:
    """Measured path gain for every (RU, beam) pilot: shape (n_ru * n_beams, ...)."""
    txs = {tx.label: tx for tx in stripe_transmitters(config)}
    ue = np.asarray(ue_xyz, dtype=float)
    rows = []
    for ru in codebook.ru_indices:
        for beam in codebook.beam_dirs:
            g, _ = link_gains(txs[ru], ue, config, tx_steer=beam, blockers=blockers)
            rows.append(np.asarray(g))
    return np.stack(rows)


def _split(flat: np.ndarray, codebook: Codebook) -> list[Label]:
    return [(int(i) // codebook.n_beams, int(i) % codebook.n_beams) for i in np.atleast_1d(flat)]


def oracle_labels(config: ScenarioConfig, codebook: Codebook, ue_xyz, blockers=None) -> list[Label]:
    gains = sweep_gains(config, codebook, np.atleast_2d(ue_xyz), blockers)
    return _split(argmax_lowest(gains, axis=0), codebook)


def oracle_sweep(config: ScenarioConfig, codebook: Codebook, ue, *, blockers=None) -> tuple[Label, int]:
    """Best (RU slot, beam) after sweeping every pilot, and the slots spent (always n_ru * n_beams).

    Ties go to the lexicographically smallest pair. ``blockers=None`` uses the scenario's.
    """
    if codebook.size == 0:
        raise ValueError("codebook is empty")
    return oracle_labels(config, codebook, ue, blockers)[0], codebook.size


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DualBandSample:
    position_xyz: tuple[float, float, float]
    features: np.ndarray
    label: Label


def floor_grid(config: ScenarioConfig, spacing_m: float, offset: float = 0.5) -> np.ndarray:
    """Regular grid over the floor at terminal height, floor(extent / spacing) points per axis.

    ``offset`` places points at (i + offset) * spacing; 0.5 centres them in their cells.
    """
    if not spacing_m > 0:
        raise ValueError("grid spacing must be > 0")
    nx = int(math.floor(config.room.length_m / spacing_m + 1e-9))
    ny = int(math.floor(config.room.width_m / spacing_m + 1e-9))
    xs = (np.arange(nx) + offset) * spacing_m
    ys = (np.arange(ny) + offset) * spacing_m
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    z = np.full(gx.size, config.terminal.position_xyz[2])
    return np.stack([gx.ravel(), gy.ravel(), z], axis=-1)


def midpoint_grid(config: ScenarioConfig, spacing_m: float) -> np.ndarray:
    """Points halfway between neighbouring training points in both axes (held-out test grid)."""
    train = floor_grid(config, spacing_m)
    xs, ys = np.unique(train[:, 0]), np.unique(train[:, 1])
    mx, my = (xs[:-1] + xs[1:]) / 2, (ys[:-1] + ys[1:]) / 2
    gx, gy = np.meshgrid(mx, my, indexing="ij")
    z = np.full(gx.size, config.terminal.position_xyz[2])
    return np.stack([gx.ravel(), gy.ravel(), z], axis=-1)


def _chunks(n: int, size: int = 2048) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def features_at(config: ScenarioConfig, ue_xyz: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
    h = lowband_response(config, ue_xyz)
    if config.lowband.csi_snr_db is not None:
        rng = rng or np.random.default_rng(config.seed)
        h = add_csi_noise(h, config.lowband.csi_snr_db, rng)
    return channel_features(h)


def _labels_parallel(config: ScenarioConfig, codebook: Codebook, pts: np.ndarray, blockers) -> list[Label]:
    parts = _chunks(len(pts))
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        results = list(pool.map(lambda s: oracle_labels(config, codebook, pts[s], blockers), parts))
    return [lab for part in results for lab in part]


def build_dataset(config: ScenarioConfig, grid_spacing_m: float, *,
                  codebook: Codebook | None = None, points: np.ndarray | None = None) -> list[DualBandSample]:
    """One sample per floor-grid point: low-band features, blocker-free oracle label."""
    codebook = codebook or make_codebook(config)
    pts = floor_grid(config, grid_spacing_m) if points is None else np.asarray(points, dtype=float)
    feats = features_at(config, pts)
    labels = _labels_parallel(config, codebook, pts, blockers=())
    return [DualBandSample(tuple(map(float, p)), f, lab) for p, f, lab in zip(pts, feats, labels)]


# ---------------------------------------------------------------------------
# Mapping models
# ---------------------------------------------------------------------------

class MappingModel(abc.ABC):
    codebook: Codebook

    @abc.abstractmethod
    def ranked_labels(self, features: np.ndarray) -> list[Label]:
        """All labels the model can rank, best first."""

    def predict_topk(self, features: np.ndarray, k: int) -> list[Label]:
        """``min(k, codebook size)`` distinct labels; unranked labels fill in lexicographically."""
        if k < 1:
            raise ValueError("k must be >= 1")
        ranked = list(dict.fromkeys(self.ranked_labels(features)))
        want = min(k, self.codebook.size)
        if len(ranked) < want:
            seen = set(ranked)
            ranked += [lab for lab in self.codebook.labels() if lab not in seen]
        return ranked[:want]


class NearestNeighborModel(MappingModel):
    """Euclidean nearest neighbour over stored feature vectors."""

    def __init__(self, codebook: Codebook, features: np.ndarray, labels: Sequence[Label]):
        self.codebook = codebook
        self.features = np.asarray(features, dtype=float)
        self.labels = list(labels)
        self._sq = np.sum(self.features ** 2, axis=1)

    def distances(self, features: np.ndarray) -> np.ndarray:
        q = np.asarray(features, dtype=float)
        d2 = self._sq - 2.0 * self.features @ q + q @ q
        return np.maximum(d2, 0.0)

    def ranked_labels(self, features: np.ndarray) -> list[Label]:
        order = np.argsort(self.distances(features), kind="stable")
        return list(dict.fromkeys(self.labels[i] for i in order))


class FeedForwardModel(MappingModel):
    """One-hidden-layer softmax classifier trained by full-batch gradient descent.

    Training stops after ``max_epochs`` or once the cross-entropy improves by
    less than ``tol`` over 50 epochs. Optional alternative to the NN baseline.
    """

    def __init__(self, codebook: Codebook, hidden: int = 64, lr: float = 0.5,
                 max_epochs: int = 3000, tol: float = 1e-5, seed: int = 0):
        self.codebook = codebook
        self.hidden, self.lr, self.max_epochs, self.tol, self.seed = hidden, lr, max_epochs, tol, seed
        self.params: tuple[np.ndarray, ...] | None = None

    def _forward(self, x):
        w1, b1, w2, b2 = self.params
        a = np.tanh(x @ w1 + b1)
        z = a @ w2 + b2
        z = z - z.max(axis=-1, keepdims=True)
        p = np.exp(z)
        return a, p / p.sum(axis=-1, keepdims=True)

    def fit(self, features: np.ndarray, labels: Sequence[Label]) -> "FeedForwardModel":
        rng = np.random.default_rng(self.seed)
        x = np.asarray(features, dtype=float)
        y = np.array([r * self.codebook.n_beams + b for r, b in labels])
        n, d = x.shape
        c = self.codebook.size
        self.params = (rng.normal(0, 1 / math.sqrt(d), (d, self.hidden)), np.zeros(self.hidden),
                       rng.normal(0, 1 / math.sqrt(self.hidden), (self.hidden, c)), np.zeros(c))
        onehot = np.eye(c)[y]
        history = []
        for _ in range(self.max_epochs):
            a, p = self._forward(x)
            loss = -np.mean(np.log(p[np.arange(n), y] + 1e-12))
            history.append(loss)
            if len(history) > 50 and history[-51] - loss < self.tol:
                break
            w1, b1, w2, b2 = self.params
            dz = (p - onehot) / n
            da = dz @ w2.T * (1 - a * a)
            self.params = (w1 - self.lr * x.T @ da, b1 - self.lr * da.sum(0),
                           w2 - self.lr * a.T @ dz, b2 - self.lr * dz.sum(0))
        self.loss_history = history
        return self

    def ranked_labels(self, features: np.ndarray) -> list[Label]:
        if self.params is None:
            raise RuntimeError("model is not trained")
        _, p = self._forward(np.asarray(features, dtype=float)[None, :])
        order = np.argsort(-p[0], kind="stable")
        return _split(order, self.codebook)


def train(model_kind: str, dataset: Sequence[DualBandSample], codebook: Codebook, **kwargs) -> MappingModel:
    if not dataset:
        raise ValueError("dataset is empty")
    feats = np.stack([s.features for s in dataset])
    labels = [s.label for s in dataset]
    if model_kind in ("nn", "nearest_neighbor"):
        return NearestNeighborModel(codebook, feats, labels)
    if model_kind in ("ffn", "feedforward"):
        return FeedForwardModel(codebook, **kwargs).fit(feats, labels)
    raise ValueError(f"unknown model kind {model_kind!r}")


# ---------------------------------------------------------------------------
# Exploitation and evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionOutcome:
    slots_used: int
    chosen: Label
    oracle: Label
    gain_loss_db: float
    candidates: tuple[Label, ...] = ()

    @property
    def oracle_in_candidates(self) -> bool:
        return self.oracle in self.candidates


def _select(model: MappingModel, feats: np.ndarray, gains: np.ndarray, k: int) -> SelectionOutcome:
    cb = model.codebook
    oracle = _split(argmax_lowest(gains[:, None], axis=0), cb)[0]
    cands = model.predict_topk(feats, k)
    # same tie rule as the oracle: among measured near-ties keep the smallest label
    ordered = sorted(cands)
    measured = np.array([gains[r * cb.n_beams + b] for r, b in ordered])
    chosen = ordered[int(argmax_lowest(measured[:, None], axis=0)[0])]
    loss = float(gains[oracle[0] * cb.n_beams + oracle[1]] - gains[chosen[0] * cb.n_beams + chosen[1]])
    # a difference inside the tie tolerance is a tie, not a loss
    return SelectionOutcome(len(cands), chosen, oracle, loss if loss > TIE_TOL_DB else 0.0, tuple(cands))


def exploit(model: MappingModel | None, config: ScenarioConfig, ue, k: int) -> SelectionOutcome:
    """Measure only the model's top-k candidates (k slots) and keep the best of them.

    With k = 1 the prediction is used directly; it still costs one slot.
    Achieved and oracle gains both include the scenario's blockers.
    """
    if model is None:
        raise RuntimeError("model is not trained")
    if k < 1:
        raise ValueError("k must be >= 1")
    ue = np.asarray(ue, dtype=float)
    feats = features_at(config, ue[None, :])[0]
    gains = sweep_gains(config, model.codebook, ue[None, :])[:, 0]
    return _select(model, feats, gains, k)


@dataclass(frozen=True)
class KMetrics:
    k: int
    topk_rate: float
    mean_gain_loss_db: float
    p95_gain_loss_db: float
    mean_slots: float


def evaluate(model: MappingModel, config: ScenarioConfig, test_points, k_list: Sequence[int]) -> list[KMetrics]:
    """Per k: oracle-containment rate, mean and 95th-percentile gain loss, mean slots.

    Test points should be disjoint from the training grid (see :func:`midpoint_grid`).
    """
    pts = np.asarray(test_points, dtype=float)
    if pts.size == 0:
        raise ValueError("test grid is empty")
    pts = np.atleast_2d(pts)
    feats = features_at(config, pts, np.random.default_rng(config.seed + 1))
    gains = np.concatenate([sweep_gains(config, model.codebook, pts[s]) for s in _chunks(len(pts))], axis=1)
    out = []
    for k in k_list:
        res = [_select(model, feats[i], gains[:, i], k) for i in range(len(pts))]
        loss = np.array([r.gain_loss_db for r in res])
        out.append(KMetrics(
            k=k,
            topk_rate=float(np.mean([r.oracle_in_candidates for r in res])),
            mean_gain_loss_db=float(loss.mean()),
            p95_gain_loss_db=float(np.percentile(loss, 95)),
            mean_slots=float(np.mean([r.slots_used for r in res])),
        ))
    return out
