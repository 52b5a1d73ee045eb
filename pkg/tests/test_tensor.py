"""Tensor container, tape structure, and backward contract."""

import numpy as np
import pytest

from convmambanet.ndcore import (
    Rng,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    backward,
    mul,
    reduce_sum,
    row_major_coords,
    row_major_index,
    silu,
)


def test_data_is_row_major_float64():
    t = Tensor([[1, 2, 3], [4, 5, 6]])
    assert t.data.dtype == np.float64
    assert t.data.flags.c_contiguous
    assert t.shape == (2, 3)
    assert t.size == 6


def test_row_major_round_trip():
    shape = (3, 4, 5)
    for flat in range(3 * 4 * 5):
        coords = row_major_coords(shape, flat)
        assert row_major_index(shape, coords) == flat
    # spot-check the stride arithmetic against numpy's own layout
    arr = np.arange(60.0).reshape(shape)
    assert arr[1, 2, 3] == row_major_index(shape, (1, 2, 3))


def test_row_major_bounds_checked():
    with pytest.raises(ShapeError):
        row_major_index((2, 2), (2, 0))
    with pytest.raises(ShapeError):
        row_major_coords((2, 2), 4)


def test_item_requires_scalar():
    with pytest.raises(ShapeError):
        Tensor([1.0, 2.0]).item()
    assert Tensor(3.5).item() == 3.5


def test_tape_nodes_are_topologically_ordered():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with Tape() as tape:
        y = mul(x, x)
        z = reduce_sum(mul(y, x))
        backward(tape, z)
    for nid, node in enumerate(tape.nodes):
        for in_id in node.inputs:
            assert in_id < nid


def test_gradient_shapes_match_node_shapes():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    with Tape() as tape:
        y = reduce_sum(silu(mul(x, x)))
        backward(tape, y)
    for nid, g in tape.gradients.items():
        assert g.shape == tape.nodes[nid].shape


def test_backward_root_must_be_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = mul(x, x)
        with pytest.raises(TapeError):
            backward(tape, y)


def test_backward_root_must_be_on_tape():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        with pytest.raises(TapeError):
            backward(tape, Tensor(1.0))


def test_grad_of_sum_is_ones():
    x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    with Tape() as tape:
        backward(tape, reduce_sum(x))
    assert np.array_equal(tape.grad(x).data, np.ones((3, 4)))


def test_grad_of_sum_of_squares_is_2x():
    x = Tensor(np.arange(-3.0, 3.0), requires_grad=True)
    with Tape() as tape:
        backward(tape, reduce_sum(mul(x, x)))
    assert np.allclose(tape.grad(x).data, 2.0 * x.data, atol=0, rtol=0)


def test_untracked_computation_records_nothing():
    x = Tensor(np.ones(4))
    with Tape() as tape:
        y = mul(x, x)
        _ = reduce_sum(y)
    assert tape.nodes == []
    assert y.node_id is None


def test_tensors_are_reusable_across_tapes():
    x = Tensor(np.full(3, 2.0), requires_grad=True)
    for _ in range(3):
        with Tape() as tape:
            backward(tape, reduce_sum(mul(x, x)))
        assert np.array_equal(tape.grad(x).data, np.full(3, 4.0))


def test_tape_replay_is_bitwise_identical():
    def run():
        rng = Rng(1234)
        x = Tensor(rng.normal((4, 5)), requires_grad=True)
        w = Tensor(rng.normal((5, 3)), requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(silu(x @ w))
            backward(tape, loss)
        return loss.item(), tape.grad(x).data, tape.grad(w).data

    l1, gx1, gw1 = run()
    l2, gx2, gw2 = run()
    assert l1 == l2
    assert np.array_equal(gx1, gx2)
    assert np.array_equal(gw1, gw2)


def test_eval_forward_is_pure():
    rng = Rng(7)
    x = Tensor(rng.normal((3, 3)))
    y1 = silu(x @ x)
    y2 = silu(x @ x)
    assert np.array_equal(y1.data, y2.data)
