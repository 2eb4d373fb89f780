from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stripesim import dualband
from stripesim.dualband import (
    NearestNeighborModel, build_dataset, channel_features, evaluate, exploit, features_at, floor_grid,
    lowband_channel, lowband_response, make_codebook, midpoint_grid, oracle_sweep, sweep_gains, train,
)
from stripesim.scenario import Blocker, LowbandSpec, Room, ScenarioConfig, StripePlacement, UserTerminal


@pytest.fixture(scope="module")
def codebook(cfg):
    return make_codebook(cfg)


@pytest.fixture(scope="module")
def coarse(cfg, codebook):
    data = build_dataset(cfg, 1.0, codebook=codebook)
    return data, train("nn", data, codebook)


def test_codebook_shape(cfg, codebook):
    assert (codebook.n_ru, codebook.n_beams, codebook.size) == (10, 5, 50)
    assert codebook.labels()[:2] == [(0, 0), (0, 1)]
    assert np.allclose(np.linalg.norm(codebook.beam_dirs, axis=1), 1.0)
    assert tuple(codebook.beam_dirs[0]) == (0.0, 0.0, -1.0)


def test_lowband_los_only_matches_free_space():
    c = ScenarioConfig(room=Room(wall_reflectivity=0.0))
    ue = np.array([4.0, 2.0, 1.0])
    h = lowband_response(c, ue)
    ant = dualband.lowband_antennas(c)
    d = np.linalg.norm(ant - ue, axis=1)
    k = 2 * np.pi / dualband.wavelength_m(c.lowband_hz)
    assert np.allclose(h, np.exp(-1j * k * d) / d)


def test_lowband_channel_rejects_outside_point(cfg):
    with pytest.raises(ValueError):
        lowband_channel(cfg, (20.0, 1.0, 1.0))


@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_features_invariant_to_complex_scaling(scale):
    h = lowband_response(ScenarioConfig(), np.array([3.3, 1.7, 1.0]))
    assert np.allclose(channel_features(scale * h), channel_features(h), atol=1e-12)
    assert np.linalg.norm(channel_features(h)) == pytest.approx(1.0)


def test_predictions_invariant_to_global_channel_scaling(cfg, coarse):
    _, model = coarse
    h = lowband_response(cfg, np.array([6.1, 2.2, 1.0]))
    assert model.predict_topk(channel_features(h), 5) == model.predict_topk(channel_features(7.5e3 * h), 5)


@given(st.floats(0.2, 14.8), st.floats(0.2, 5.8))
def test_oracle_sweep_costs_every_slot(x, y):
    c = ScenarioConfig()
    cb = make_codebook(c)
    label, slots = oracle_sweep(c, cb, (x, y, 1.0))
    assert slots == cb.n_ru * cb.n_beams
    gains = sweep_gains(c, cb, np.array([[x, y, 1.0]]))[:, 0]
    assert gains[label[0] * cb.n_beams + label[1]] >= gains.max() - 1e-9


def test_oracle_tie_goes_lexicographically_low():
    gains = np.array([[1.0], [2.0], [2.0], [0.0]])
    cb = dualband.Codebook((0, 1), np.zeros((2, 3)))
    assert dualband._split(dualband.argmax_lowest(gains, axis=0), cb) == [(0, 1)]


def test_nn_recalls_training_points(cfg, coarse):
    data, model = coarse
    for s in data:
        assert model.predict_topk(s.features, 1) == [s.label]


def test_predict_topk_fills_lexicographically(codebook):
    model = NearestNeighborModel(codebook, np.eye(2, 16), [(3, 2), (3, 2)])
    top = model.predict_topk(np.eye(1, 16)[0], 4)
    assert top == [(3, 2), (0, 0), (0, 1), (0, 2)]
    assert len(model.predict_topk(np.eye(1, 16)[0], 999)) == codebook.size
    with pytest.raises(ValueError):
        model.predict_topk(np.eye(1, 16)[0], 0)


test_points = st.tuples(st.floats(0.1, 14.9), st.floats(0.1, 5.9)).map(lambda p: (p[0], p[1], 1.0))


@given(test_points)
def test_topk_containment_monotone_in_k(coarse_model_and_cfg, ue):
    model, c = coarse_model_and_cfg
    pt = np.array([ue])
    feats, gains = features_at(c, pt)[0], sweep_gains(c, model.codebook, pt)[:, 0]
    hits = [dualband._select(model, feats, gains, k).oracle_in_candidates for k in range(1, 51)]
    assert hits == sorted(hits)
    assert hits[-1]


@pytest.fixture(scope="module")
def coarse_model_and_cfg(cfg, coarse):
    return coarse[1], cfg


@given(test_points, st.integers(1, 50))
def test_gain_loss_nonnegative_and_zero_when_oracle_listed(coarse_model_and_cfg, ue, k):
    model, c = coarse_model_and_cfg
    out = exploit(model, c, ue, k)
    assert out.gain_loss_db >= 0.0
    assert out.slots_used == k
    if out.oracle_in_candidates:
        assert out.gain_loss_db == 0.0


def test_exploit_with_blocker_uses_blocked_gains(cfg, coarse):
    _, model = coarse
    ue = (7.5, 3.0, 1.0)
    blocked = replace(cfg, blockers=(Blocker((7.5, 3.0, 3.0), 0.3, 40.0),))
    open_out, blk_out = exploit(model, cfg, ue, 50), exploit(model, blocked, ue, 50)
    assert blk_out.oracle != open_out.oracle
    assert blk_out.gain_loss_db == 0.0


def test_exploit_requires_model(cfg):
    with pytest.raises(RuntimeError):
        exploit(None, cfg, (1.0, 1.0, 1.0), 1)


def test_grids(cfg):
    train_pts = floor_grid(cfg, 0.25)
    test_pts = midpoint_grid(cfg, 0.25)
    assert len(train_pts) == 60 * 24
    assert len(test_pts) == 59 * 23
    # test points sit between training points, never on them
    d = np.min(np.linalg.norm(test_pts[:, None, :2] - train_pts[None, :, :2], axis=-1), axis=1)
    assert np.allclose(d, 0.25 / np.sqrt(2))


def test_csi_noise_is_seeded(cfg):
    noisy = replace(cfg, lowband=LowbandSpec(csi_snr_db=10.0))
    pts = floor_grid(cfg, 1.0)
    a = features_at(noisy, pts)
    assert np.array_equal(a, features_at(noisy, pts))
    assert not np.allclose(a, features_at(cfg, pts))
    assert not np.array_equal(a, features_at(replace(noisy, seed=1), pts))


def test_evaluate_is_deterministic(cfg, coarse):
    _, model = coarse
    pts = midpoint_grid(cfg, 1.0)
    assert evaluate(model, cfg, pts, [1, 3]) == evaluate(model, cfg, pts, [1, 3])


def test_feedforward_learns_training_set(cfg, codebook):
    data = build_dataset(cfg, 1.5, codebook=codebook)
    model = train("ffn", data, codebook, hidden=64, max_epochs=1500, seed=0)
    assert model.loss_history[-1] < model.loss_history[0]
    top5 = np.mean([s.label in model.predict_topk(s.features, 5) for s in data])
    assert top5 >= 0.5


def test_train_rejects_bad_input(codebook):
    with pytest.raises(ValueError):
        train("nn", [], codebook)
    with pytest.raises(ValueError):
        train("svm", [dualband.DualBandSample((0, 0, 0), np.zeros(16), (0, 0))], codebook)
    with pytest.raises(RuntimeError):
        dualband.FeedForwardModel(codebook).ranked_labels(np.zeros(16))


def test_desk_scale_sample_count():
    big = ScenarioConfig(room=Room(50.0, 50.0, 5.0))
    spacing = 5 * dualband.wavelength_m(6e9)
    assert len(build_dataset(big, spacing)) == 40_000


def test_slots_for_a_5_by_8_codebook():
    from stripesim.scenario import CodebookSpec
    c = ScenarioConfig(stripe=StripePlacement(transmit_capable_every=2), codebook=CodebookSpec(n_beams=8))
    cb = make_codebook(c)
    assert (cb.n_ru, cb.n_beams) == (5, 8)
    assert oracle_sweep(c, cb, (4.0, 2.0, 1.0))[1] == 40


def test_terminal_under_ru_picks_it_with_nadir_beam(cfg, codebook):
    # RU index 2 sits at x = 4.5
    assert oracle_sweep(cfg, codebook, (4.5, 3.0, 1.0))[0] == (2, 0)


def test_single_broadside_beam_reduces_to_handover(cfg, codebook, x_grid):
    from stripesim.airlink import Mode, serve_and_profile, ue_track
    cb1 = dualband.Codebook(codebook.ru_indices, np.array([[0.0, 0.0, -1.0]]))
    labels = dualband.oracle_labels(cfg, cb1, ue_track(cfg, x_grid))
    serving = serve_and_profile(cfg, x_grid).per_mode[Mode.DISTRIBUTED].serving_tx
    assert [r for r, _ in labels] == list(serving)


def test_lowband_single_antenna_los():
    c = ScenarioConfig(room=Room(wall_reflectivity=0.0), lowband=LowbandSpec(n_antennas=1))
    ue = np.array([2.0, 4.0, 1.0])
    d = np.linalg.norm(np.array(c.lowband_ap_xyz) - ue)
    assert abs(lowband_response(c, ue)[0]) == pytest.approx(1 / d, rel=1e-12)


def test_lowband_mirror_symmetry():
    # AP on the room's mid-line with its axis along x: mirroring y about the axis
    # maps the room, and so every image source, onto itself
    c = ScenarioConfig(lowband=LowbandSpec(ap_xyz=(7.5, 3.0, 5.0), axis=(1.0, 0.0, 0.0)))
    a = lowband_channel(c, (4.2, 3.7, 1.0)).h
    b = lowband_channel(c, (4.2, 2.3, 1.0)).h
    assert np.allclose(np.abs(a), np.abs(b), rtol=1e-12)
    assert np.array_equal(a, lowband_channel(c, (4.2, 3.7, 1.0)).h)


def test_dataset_counts(cfg):
    assert len(build_dataset(cfg, 0.25)) == 1440
    tiny = ScenarioConfig(room=Room(1.5, 1.0, 5.0), stripe=StripePlacement(start_xyz=(0.0, 0.5, 5.0), length_m=1.5),
                          terminal=UserTerminal((0.5, 0.5, 1.0)), lowband=LowbandSpec(ap_xyz=(0.75, 0.05, 5.0)))
    assert len(build_dataset(tiny, 1.0)) == 1


def test_identical_labels_always_predicted(codebook):
    data = [dualband.DualBandSample((0, 0, 1), f, (4, 3)) for f in np.random.default_rng(0).normal(size=(5, 16))]
    model = train("nn", data, codebook)
    assert model.predict_topk(np.ones(16), 1) == [(4, 3)]


def test_exhaustive_k_recovers_oracle(cfg, coarse):
    _, model = coarse
    out = exploit(model, cfg, (3.3, 4.4, 1.0), 50)
    assert out.chosen == out.oracle and out.gain_loss_db == 0.0


def test_k1_at_training_point_is_lossless(cfg, coarse):
    data, model = coarse
    for s in data[::7]:
        assert exploit(model, cfg, s.position_xyz, 1).gain_loss_db == 0.0


def test_training_grid_as_test_grid_is_perfect(cfg, coarse):
    data, model = coarse
    pts = np.array([s.position_xyz for s in data])
    for m in evaluate(model, cfg, pts, [1, 2]):
        assert m.topk_rate == 1.0 and m.mean_gain_loss_db == 0.0
