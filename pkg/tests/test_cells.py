import numpy as np
import pytest
from hypothesis import given, strategies as st

from contextual_rnn import cells
from contextual_rnn.cells import CELL_KINDS, init_params, readout, run_sequence, cell_step
from helpers import randomized
from oracles import scalar_step


@pytest.mark.parametrize("kind", CELL_KINDS)
def test_step_matches_scalar_oracle(kind):
    for seed in range(5):
        p = randomized(kind, seed=seed)
        rng = np.random.default_rng(100 + seed)
        h = rng.standard_normal(p.state_size)
        x = rng.standard_normal(p.input_size)
        ref = scalar_step(kind, p.arrays, p.hidden_size, h, x)
        np.testing.assert_allclose(cell_step(p, h, x), ref, atol=1e-12, rtol=0)


def test_gru_zero_weights_halves_state():
    p = init_params("gru", 3, 2)
    for k in p.arrays:
        p.arrays[k][...] = 0.0
    h = np.array([0.4, -1.0, 2.0])
    np.testing.assert_allclose(cell_step(p, h, np.array([1.0, 0.0])), 0.5 * h)


def test_vanilla_identity_input():
    p = init_params("vanilla", 3, 3)
    p.arrays["W"][:] = 0
    p.arrays["U"][:] = np.eye(3)
    p.arrays["b"][:] = 0
    x = np.array([0.3, -2.0, 1.0])
    np.testing.assert_allclose(cell_step(p, np.ones(3), x), np.tanh(x))


def test_readout_cases():
    p = randomized("lstm", N=4)
    p.arrays["w_out"][:] = 0
    p.arrays["b_out"][...] = 3.0
    assert readout(p, np.random.default_rng(0).standard_normal(8)) == pytest.approx(3.0)
    q = randomized("gru", N=4)
    q.arrays["b_out"][...] = 0
    assert readout(q, np.zeros(4)) == 0.0
    h = np.arange(4.0)
    assert readout(q, h) == pytest.approx(sum(q.w[i] * h[i] for i in range(4)))


def test_lstm_readout_ignores_cell_partition():
    p = randomized("lstm", N=4)
    h = np.random.default_rng(1).standard_normal(8)
    h2 = h.copy()
    h2[4:] += 10.0
    assert readout(p, h) == readout(p, h2)


def test_run_sequence_shapes_and_definition():
    p = randomized("gru", N=3, D=8, scale=0.5)
    traj, logits = run_sequence(p, [])
    assert len(traj) == 0 and len(logits) == 0
    traj, logits = run_sequence(p, [2])
    np.testing.assert_allclose(traj[0], cell_step(p, p.h0, cells.token_input(p, 2)))
    traj, logits = run_sequence(p, [1, 2, 3, 4])
    assert traj.shape == (4, 3) and logits.shape == (4,)
    np.testing.assert_allclose(logits, [readout(p, h) for h in traj])
    with pytest.raises(ValueError):
        run_sequence(p, [8])


def test_pad_is_zero_input():
    p = init_params("gru", 3, 8, pad_id=7)
    np.testing.assert_array_equal(cells.token_input(p, 7), np.zeros(8))
    x = cells.one_hot([[0, 7]], 8, 7)
    assert x[0, 0, 0] == 1 and not x[0, 1].any()


@pytest.mark.parametrize("kind", CELL_KINDS)
def test_determinism_and_gate_ranges(kind):
    p = randomized(kind, N=6, D=8, scale=2.0)
    toks = np.random.default_rng(0).integers(0, 8, 30)
    a = run_sequence(p, toks)
    b = run_sequence(p, toks)
    np.testing.assert_array_equal(a[0], b[0])
    hid = a[0][:, : p.hidden_size]
    assert np.all(np.abs(hid) < 1 + 1e-12) or kind != "vanilla"


@given(st.floats(-50, 50))
def test_sigmoid_in_open_interval(a):
    s = cells.sigmoid(np.array(a))
    assert 0.0 <= s <= 1.0
    if abs(a) < 30:
        assert 0.0 < s < 1.0


@pytest.mark.parametrize("kind", CELL_KINDS)
def test_checkpoint_roundtrip(kind, tmp_path):
    p = randomized(kind, N=3, D=8)
    p.pad_id = 7
    cells.save_params(p, tmp_path / "m.json")
    q = cells.load_params(tmp_path / "m.json")
    assert q.kind == kind and q.pad_id == 7
    for k in p.arrays:
        np.testing.assert_array_equal(p.arrays[k], q.arrays[k])
    text = (tmp_path / "m.json").read_text()
    assert '"format_version"' in text


def test_validate_rejects_bad_shapes():
    p = init_params("gru", 3, 4)
    p.arrays["W_z"] = np.zeros((2, 2))
    with pytest.raises(ValueError):
        p.validate()
    with pytest.raises(ValueError):
        init_params("elman", 3, 4)
