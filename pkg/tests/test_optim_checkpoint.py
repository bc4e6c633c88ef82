import numpy as np
import pytest

from casrel import checkpoint
from casrel.checkpoint import CheckpointError
from casrel.optim import AdamState, adam_step


def test_zero_gradient_leaves_params_and_moments():
    params = {"w": np.array([1.0, -2.0]), "b": np.array(3.0)}
    state = AdamState.for_params(params, lr=0.1)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    new, st = adam_step(params, grads, state)
    for k in params:
        np.testing.assert_array_equal(new[k], params[k])
        np.testing.assert_array_equal(st.m[k], 0.0)
        np.testing.assert_array_equal(st.v[k], 0.0)
    assert st.step == 1


def test_first_step_closed_form():
    params = {"p": np.array(1.0)}
    state = AdamState.for_params(params, lr=0.1, eps=1e-8)
    new, st = adam_step(params, {"p": np.array(2.0)}, state)
    # bias-corrected m = g, v = g^2, so the update is lr * g / (|g| + eps)
    assert float(new["p"]) == pytest.approx(1.0 - 0.1 * 2.0 / (2.0 + 1e-8), rel=1e-15)
    assert float(new["p"]) == pytest.approx(0.9, abs=1e-8)
    assert st.step == 1


def test_constant_positive_gradient_decreases_monotonically():
    params = {"p": np.array(1.0)}
    state = AdamState.for_params(params, lr=0.05)
    g = {"p": np.array(0.3)}
    values = [1.0]
    m = v = 0.0
    for t in range(1, 6):
        params, state = adam_step(params, g, state)
        m = 0.9 * m + 0.1 * 0.3
        v = 0.999 * v + 0.001 * 0.09
        expected = values[-1] - 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        assert float(params["p"]) == pytest.approx(expected, rel=1e-14)
        assert float(params["p"]) < values[-1]
        values.append(float(params["p"]))
    assert state.step == 5


def test_inputs_not_mutated():
    params = {"w": np.ones(3)}
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.ones(3)}, state)
    np.testing.assert_array_equal(params["w"], np.ones(3))
    assert state.step == 0
    np.testing.assert_array_equal(state.m["w"], 0.0)


def test_missing_gradient_key():
    with pytest.raises(KeyError):
        adam_step({"w": np.ones(2), "b": np.ones(1)}, {"w": np.ones(2)}, AdamState())


def test_moment_shapes_follow_params():
    params = {"W": np.zeros((3, 4)), "b": np.zeros(4)}
    _, st = adam_step(params, {k: np.ones_like(v) for k, v in params.items()}, AdamState.for_params(params))
    for k in params:
        assert st.m[k].shape == params[k].shape == st.v[k].shape


# ------------------------------------------------------------ checkpoint


def _params(rng):
    return {
        "enc.tok_emb": rng.normal(size=(7, 4)),
        "scalar": np.array(np.pi),
        "vec": rng.normal(size=5) * 1e-300,
        "weird": np.array([np.inf, -0.0, np.nextafter(0, 1), 1e308]),
    }


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = _params(rng)
    meta = {"relations": ["a", "b"], "note": "ünïcode"}
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, params, meta)
    loaded, meta2 = checkpoint.load(path)
    assert meta2 == meta
    assert set(loaded) == set(params)
    for k in params:
        assert loaded[k].shape == params[k].shape
        assert loaded[k].dtype == np.float64
        assert loaded[k].tobytes() == np.asarray(params[k], dtype=np.float64).tobytes()


def test_same_params_same_bytes_regardless_of_dict_order():
    rng = np.random.default_rng(1)
    p = _params(rng)
    reordered = dict(reversed(list(p.items())))
    assert checkpoint.dumps(p, {"x": 1}) == checkpoint.dumps(reordered, {"x": 1})


def test_header_layout():
    blob = checkpoint.dumps({"a": np.arange(6.0).reshape(2, 3)})
    assert blob[:8] == b"CASRELCK"
    assert int.from_bytes(blob[8:12], "little") == 1
    assert blob.endswith(np.arange(6.0).astype("<f8").tobytes())


@pytest.mark.parametrize("blob", [b"NOTACKPT" + b"\0" * 16, b"CASRELCK\x02\0\0\0\0\0\0\0\0\0\0\0"])
def test_bad_header(blob):
    with pytest.raises(CheckpointError):
        checkpoint.loads(blob)


def test_truncated_file():
    blob = checkpoint.dumps({"a": np.ones(10)})
    with pytest.raises(CheckpointError):
        checkpoint.loads(blob[:-8])


def test_atomic_write_leaves_no_temp_files(tmp_path):
    path = tmp_path / "out.txt"
    checkpoint.write_atomic(path, "first")
    checkpoint.write_atomic(path, b"second")
    assert path.read_bytes() == b"second"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
