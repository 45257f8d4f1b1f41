import numpy as np
import pytest

from lidarsot.numerics import Adam, MissingGradientError, Parameter, load_checkpoint, save_checkpoint, step_decay_lr
from lidarsot.numerics.checkpoint import CheckpointError, config_hash


def test_adam_first_step_is_lr_times_sign():
    p = Parameter(np.array([1.0, 1.0]))
    opt = Adam([p], lr=0.01)
    p.grad = np.array([0.5, -3.0])
    opt.step()
    # m_hat = g, v_hat = g^2 after bias correction: update = lr * g / (|g| + eps)
    expected = 1.0 - 0.01 * np.array([0.5, -3.0]) / (np.array([0.5, 3.0]) + 1e-8)
    np.testing.assert_allclose(p.data, expected, rtol=0, atol=1e-15)


def test_adam_zero_gradient_leaves_params():
    p = Parameter(np.array([2.0]))
    opt = Adam([p])
    for _ in range(3):
        p.grad = np.zeros(1)
        opt.step()
    assert p.data[0] == 2.0


def test_adam_missing_gradient():
    p = Parameter(np.array([2.0]))
    with pytest.raises(MissingGradientError):
        Adam([p]).step()
    Adam([p]).step(allow_missing=True)


def test_step_decay_schedule():
    assert step_decay_lr(0.001, 5) == 0.001
    assert step_decay_lr(0.001, 6) == pytest.approx(0.0002, abs=1e-18)
    assert step_decay_lr(0.001, 12) == pytest.approx(0.00004)


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    state = {"a.weight": rng.normal(size=(3, 4)).astype(np.float32), "b": np.float32([1.5]), "c.scalarish": np.zeros((2, 1, 3), np.float32)}
    h = config_hash("x = 1")
    save_checkpoint(tmp_path / "m.ckpt", state, h)
    back, h2 = load_checkpoint(tmp_path / "m.ckpt")
    assert h2 == h
    assert set(back) == set(state)
    for k in state:
        assert back[k].dtype == np.float32
        assert np.array_equal(back[k], state[k])


def test_checkpoint_layout_header(tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", {"w": np.float32([1.0])}, b"\1" * 32)
    raw = (tmp_path / "m.ckpt").read_bytes()
    assert raw[:4] == b"LSOT"
    assert raw[4:8] == (1).to_bytes(4, "little")
    assert raw[8:40] == b"\1" * 32
    assert raw[-4:] == np.float32(1.0).tobytes()


def test_checkpoint_damage_reports_offset(tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", {"w": np.zeros((4, 4), np.float32)})
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(raw[:-5])
    with pytest.raises(CheckpointError, match="byte"):
        load_checkpoint(tmp_path / "t.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.ckpt")
