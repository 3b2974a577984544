import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from trajgcn.errors import ConfigError, ShapeError, StateError, TrainingError
from trajgcn.evaluation import build_variant
from trajgcn.kinematics import expmap_to_rotmat
from trajgcn.numeric import ParameterStore, global_l2_norm, make_rng
from trajgcn.optimize import (AdamState, ClipConfig, LrSchedule, TrainConfig, adam_step,
                              clip_gradients, loss_and_grad, loss_angle, loss_mpjpe, lr_at,
                              train)
from trajgcn.pipeline import VariantConfig, data_scale
from trajgcn.synth import generate_sequence
from trajgcn.data import sliding_windows

vals = st.floats(-50, 50, allow_nan=False)
pairs = arrays(np.float64, (6, 5), elements=vals)


def test_loss_angle_examples():
    x = np.arange(6.0).reshape(2, 3)
    assert loss_angle(x, x) == 0.0
    assert loss_angle([[1.0, 1.0]], [[0.0, 3.0]]) == pytest.approx(1.5)
    assert loss_angle(x + 7.0, x[::-1] + 7.0) == pytest.approx(loss_angle(x, x[::-1]))
    with pytest.raises(ShapeError):
        loss_angle(np.zeros((2, 3)), np.zeros((3, 2)))


@settings(max_examples=50)
@given(pairs, pairs)
def test_loss_angle_properties(a, b):
    assert loss_angle(a, b) >= 0
    assert loss_angle(a, b) == loss_angle(b, a)
    assert (loss_angle(a, b) == 0) == np.array_equal(a, b)


def test_loss_mpjpe_examples():
    p = np.zeros((3, 1))
    assert loss_mpjpe(p, p) == 0.0
    assert loss_mpjpe(np.array([[3.0], [4.0], [0.0]]), p) == pytest.approx(25.0)
    gt = make_rng(0).normal(size=(12, 7))
    d = np.array([1.0, -2.0, 0.5])
    moved = gt + np.tile(d, 4)[:, None]
    assert loss_mpjpe(moved, gt) == pytest.approx(d @ d, rel=1e-12)


@settings(max_examples=30)
@given(arrays(np.float64, (9, 4), elements=vals), arrays(np.float64, (9, 4), elements=vals),
       arrays(np.float64, 3, elements=st.floats(-3, 3)))
def test_loss_mpjpe_rotation_invariant(a, b, v):
    R = expmap_to_rotmat(v)

    def rot(x):
        return np.einsum("ij,kjf->kif", R, x.reshape(3, 3, 4)).reshape(9, 4)

    assert loss_mpjpe(a, b) >= 0
    assert loss_mpjpe(rot(a), rot(b)) == pytest.approx(loss_mpjpe(a, b), rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("kind", ["angle", "mpjpe"])
def test_loss_gradients_match_finite_differences(kind, rng):
    pred = rng.normal(size=(2, 6, 4))
    gt = rng.normal(size=(2, 6, 4))
    f = loss_angle if kind == "angle" else loss_mpjpe
    loss, g = loss_and_grad(pred, gt, kind)
    assert loss == f(pred, gt)
    eps = 1e-6
    for idx in [(0, 0, 0), (1, 5, 3), (0, 2, 1)]:
        up, down = pred.copy(), pred.copy()
        up[idx] += eps
        down[idx] -= eps
        assert g[idx] == pytest.approx((f(up, gt) - f(down, gt)) / (2 * eps), rel=1e-6)


def _store(*grads):
    s = ParameterStore()
    for i, g in enumerate(grads):
        s.add(f"p{i}", np.zeros(np.shape(g)))
        s.grad(f"p{i}")[...] = g
    return s


def test_clip_examples():
    s = _store([[0.3, 0.4]])
    assert clip_gradients(s, ClipConfig(1.0)) == pytest.approx(0.5)
    np.testing.assert_array_equal(s.grad("p0"), [[0.3, 0.4]])
    s = _store([[3.0, 4.0]])
    assert clip_gradients(s, ClipConfig(1.0)) == 5.0
    np.testing.assert_allclose(s.grad("p0"), [[0.6, 0.8]], atol=1e-15)
    with pytest.raises(ConfigError):
        ClipConfig(0.0)


@settings(max_examples=50)
@given(arrays(np.float64, (3, 3), elements=vals), arrays(np.float64, (1, 4), elements=vals),
       st.floats(0.01, 10))
def test_clip_properties(a, b, max_norm):
    s = _store(a, b)
    before = [g.copy() for _, _, g in s.items()]
    pre = clip_gradients(s, ClipConfig(max_norm))
    post = global_l2_norm(s)
    assert abs(post - min(pre, max_norm)) <= 1e-12 * max(1.0, pre)
    factor = min(1.0, max_norm / pre) if pre > 0 else 1.0
    for g0, (_, _, g1) in zip(before, s.items()):
        assert np.all(np.abs(g1) <= np.abs(g0) + 1e-15)
        np.testing.assert_allclose(g1, g0 * factor, rtol=1e-12, atol=1e-300)


def test_adam_zero_gradient_is_identity():
    s = _store(np.zeros((2, 2)))
    s.value("p0")[...] = [[1.0, 2.0], [3.0, 4.0]]
    adam_step(s, AdamState.for_store(s), 0.1)
    np.testing.assert_array_equal(s.value("p0"), [[1.0, 2.0], [3.0, 4.0]])


def test_adam_first_step_hand_value():
    s = _store([[0.1]])
    state = AdamState.for_store(s)
    adam_step(s, state, 0.0005)
    # m_hat = g, v_hat = g^2 -> step = lr * g / (|g| + eps)
    expect = -0.0005 * 0.1 / (0.1 + 1e-8)
    assert s.value("p0")[0, 0] == pytest.approx(expect, abs=1e-15)
    assert abs(s.value("p0")[0, 0] + 0.0005) < 1e-6
    assert state.t == 1
    assert s.grad("p0")[0, 0] == 0.0


def test_adam_second_step_hand_value():
    s = _store([[0.1]])
    state = AdamState.for_store(s)
    adam_step(s, state, 0.01)
    s.grad("p0")[...] = -0.2
    adam_step(s, state, 0.01)
    m = 0.9 * 0.01 + 0.1 * -0.2
    v = 0.999 * 0.001 * 0.01 + 0.001 * 0.04
    step2 = 0.01 * (m / (1 - 0.81)) / (math.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    expect = -0.01 * 0.1 / (0.1 + 1e-8) - step2
    assert s.value("p0")[0, 0] == pytest.approx(expect, rel=1e-12)


def test_adam_deterministic_runs():
    def run():
        rng = make_rng(8)
        s = _store(np.zeros((3, 2)), np.zeros((1, 4)))
        state = AdamState.for_store(s)
        for _ in range(100):
            for _, _, g in s.items():
                g[...] = rng.normal(size=g.shape)
            adam_step(s, state, 1e-3)
        return [v.copy() for _, v, _ in s.items()]

    for a, b in zip(run(), run()):
        assert np.array_equal(a, b)


def test_adam_state_mismatch():
    s = _store(np.zeros((1, 1)))
    with pytest.raises(StateError):
        adam_step(s, AdamState.for_store(_store(np.zeros((1, 1)), np.zeros((1, 1)))), 0.1)


def test_lr_schedule():
    sched = LrSchedule()
    assert lr_at(sched, 0) == 0.0005
    assert abs(lr_at(sched, 2) - 0.00048) <= 1e-12
    assert lr_at(sched, 3) == lr_at(sched, 2)
    series = [lr_at(sched, e) for e in range(60)]
    assert all(b <= a for a, b in zip(series, series[1:]))
    with pytest.raises(ConfigError):
        lr_at(sched, -1)


def _tiny(nodes=6, L=None, seed=1, windows=None, **kw):
    pipe = build_variant(VariantConfig(), nodes=nodes, n_observed=5, n_future=5, num_coeffs=L,
                         width=16, blocks=1, rng=make_rng(seed),
                         scale=data_scale(windows) if windows is not None else 1.0, **kw)
    return pipe


def _windows(seed=0, n_seq=2, K=6, F=30):
    rng = make_rng(seed)
    return np.concatenate([sliding_windows(generate_sequence(rng, K, F), 10)
                           for _ in range(n_seq)])


def test_overfit_single_sequence():
    W = _windows(n_seq=1, F=26)
    pipe = _tiny(windows=W)
    log = train(pipe, W, None, TrainConfig(epochs=10, batch=4,
                                           schedule=LrSchedule(base_lr=2e-3)),
                rng=make_rng(0))
    losses = log.column("train_loss")
    assert losses[-1] < losses[0]
    ups = sum(b > a for a, b in zip(losses[1:], losses[2:]))
    assert ups <= 2


def test_epoch0_val_is_zero_velocity_metric():
    W = _windows()
    V = _windows(seed=5)
    pipe = _tiny(windows=W)
    log = train(pipe, W, V, TrainConfig(epochs=1), rng=make_rng(0))
    assert abs(log.rows[0]["val_metric"] - pipe.baseline_metric(V)) <= 1e-8


def test_training_log_deterministic(tmp_path):
    def run():
        W = _windows()
        pipe = _tiny(windows=W)
        log = train(pipe, W, _windows(seed=5), TrainConfig(epochs=3), rng=make_rng(4))
        return [(r["epoch"], r["lr"], r["train_loss"], r["val_metric"]) for r in log.rows]

    assert run() == run()


def test_one_small_step_decreases_loss():
    W = _windows()
    pipe = _tiny(windows=W)
    before = pipe.evaluate_loss(W)
    train(pipe, W, None, TrainConfig(epochs=1, batch=len(W), schedule=LrSchedule(1e-5)),
          rng=make_rng(0))
    assert pipe.evaluate_loss(W) < before


def test_best_checkpoint_tracks_validation():
    W = _windows()
    pipe = _tiny(windows=W)
    log = train(pipe, W, _windows(seed=5), TrainConfig(epochs=4), rng=make_rng(0))
    vals = log.column("val_metric")
    assert log.best_epoch == int(np.argmin(vals))


def test_non_finite_loss_aborts():
    W = _windows()
    W[3, 0, 0] = np.nan
    pipe = _tiny()
    with pytest.raises(TrainingError, match="batch"):
        train(pipe, W, None, TrainConfig(epochs=1, batch=len(W)), rng=make_rng(0))


def test_log_csv_columns(tmp_path):
    W = _windows()
    log = train(_tiny(windows=W), W, None, TrainConfig(epochs=2), rng=make_rng(0))
    path = tmp_path / "log.csv"
    log.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,lr,train_loss,val_metric,wallclock_seconds"
    assert len(lines) == 1 + 3
