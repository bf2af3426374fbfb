import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lightcts.data import (
    CtsDataset,
    Normalizer,
    SplitSpec,
    build_mask,
    fit_normalizer,
    load_dataset,
    make_windows,
    save_dataset,
    split,
    split_lengths,
    stack_windows,
    window_arrays,
)
from lightcts.errors import FormatError, InsufficientLengthError, ShapeError


def _cts1(n, t, f, values, n_adj=0, magic=b"CTS1"):
    return struct.pack("<4sIIII", magic, n, t, f, n_adj) + np.asarray(values, "<f8").tobytes()


# ------------------------------------------------------------------- files


def test_minimal_cts1_file(tmp_path):
    p = tmp_path / "m.cts1"
    p.write_bytes(_cts1(1, 2, 1, [1.5, 2.5]))
    ds = load_dataset(p)
    assert ds.values.shape == (1, 2, 1)
    assert ds.values.ravel().tolist() == [1.5, 2.5]


def test_wrong_magic(tmp_path):
    p = tmp_path / "bad.cts1"
    p.write_bytes(_cts1(1, 2, 1, [1.5, 2.5], magic=b"XXXX"))
    with pytest.raises(FormatError, match="offset 0"):
        load_dataset(p)


def test_truncated_payload_reports_offset(tmp_path):
    p = tmp_path / "t.cts1"
    p.write_bytes(_cts1(1, 3, 1, [1.0, 2.0]))
    with pytest.raises(FormatError, match="offset"):
        load_dataset(p)


def test_nan_reports_byte_offset(tmp_path):
    p = tmp_path / "n.cts1"
    p.write_bytes(_cts1(1, 3, 1, [1.0, np.nan, 2.0]))
    with pytest.raises(FormatError, match="offset 28"):  # 20-byte header + one value
        load_dataset(p)


def test_csv_nan_reports_row(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("series,time,f0\n0,0,1.0\n0,1,nan\n")
    with pytest.raises(FormatError, match="row 3"):
        load_dataset(p)


def test_random_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    adj = rng.random((5, 5))
    ds = CtsDataset(rng.normal(size=(5, 20, 2)), (adj,))
    for fmt, name in (("cts1", "d.cts1"), ("csv", "d.csv")):
        save_dataset(ds, tmp_path / name, format=fmt)
        back = load_dataset(tmp_path / name)
        assert np.array_equal(back.values, ds.values)
        assert len(back.adjacencies) == 1 and np.array_equal(back.adjacencies[0], adj)


def test_dataset_invariants():
    with pytest.raises(ShapeError):
        CtsDataset(np.zeros((2, 0, 1)))
    with pytest.raises(ShapeError):
        CtsDataset(np.zeros((2, 3, 1)), (np.zeros((3, 3)),))
    with pytest.raises(ValueError):
        CtsDataset(np.zeros((2, 3, 1)), (-np.ones((2, 2)),))


# --------------------------------------------------------------- windowing


def test_window_counts():
    ds = CtsDataset(np.zeros((2, 30, 1)))
    assert len(make_windows(ds, 12, 12)) == 7
    one = make_windows(CtsDataset(np.arange(24.0).reshape(1, 24, 1)), 12, 12)
    assert len(one) == 1
    assert one[0].history.ravel().tolist() == list(range(12))
    assert one[0].target.ravel().tolist() == list(range(12, 24))


def test_single_step_target_index():
    ds = CtsDataset(np.arange(20.0).reshape(1, 20, 1))
    ws = make_windows(ds, 12, 3, mode="single")
    assert len(ws) == 6
    assert ws[0].target.shape == (1, 1, 1) and ws[0].target.item() == 14.0
    for w in ws:
        assert w.target.item() == w.origin + 12 + 3 - 1


def test_insufficient_length():
    with pytest.raises(InsufficientLengthError):
        make_windows(CtsDataset(np.zeros((1, 23, 1))), 12, 12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10), st.sampled_from(["single", "multi"]))
def test_window_index_invariants(p, q, extra, mode):
    t_total = p + q + extra
    v = np.arange(2 * t_total * 2, dtype=float).reshape(2, t_total, 2)
    ws = make_windows(CtsDataset(v), p, q, mode)
    assert [w.origin for w in ws] == list(range(t_total - p - q + 1))
    for w in ws:
        t = w.origin
        assert np.array_equal(w.history, v[:, t : t + p])
        if mode == "multi":
            assert np.array_equal(w.target, v[:, t + p : t + p + q])
        else:
            assert np.array_equal(w.target[:, 0], v[:, t + p + q - 1])
    x, y = stack_windows(ws)
    xv, yv = window_arrays(v, p, q, mode)
    assert np.array_equal(x, xv) and np.array_equal(y, yv)


# ------------------------------------------------------------------ splits


def test_split_lengths():
    spec = SplitSpec.from_ratio("6:2:2")
    assert split_lengths(100, spec) == (60, 20, 20)
    assert split_lengths(101, spec) == (60, 20, 21)


def test_split_too_short():
    with pytest.raises(InsufficientLengthError):
        split(CtsDataset(np.zeros((1, 10, 1))), SplitSpec.from_ratio("7:1:2"), min_steps=24)


def test_split_is_contiguous_and_ordered():
    v = np.arange(50.0).reshape(1, 50, 1)
    tr, va, te = split(CtsDataset(v), SplitSpec(0.6, 0.2, 0.2))
    assert np.array_equal(np.concatenate([tr.values, va.values, te.values], axis=1), v)


def test_split_spec_rejects_bad_fractions():
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.5, 0.0)
    with pytest.raises(ValueError):
        SplitSpec(0.5, 0.3, 0.3)


# ----------------------------------------------------------- normalization


@given(arrays(np.float64, (3, 7, 2), elements=st.floats(-1e3, 1e3)))
def test_normalizer_round_trip(v):
    norm = fit_normalizer(CtsDataset(v))
    assert (norm.std >= 1e-8).all()
    np.testing.assert_allclose(norm.denormalize(norm.normalize(v)), v, rtol=0, atol=1e-10 * max(1.0, np.abs(v).max()))


def test_constant_feature_uses_floor():
    norm = fit_normalizer(CtsDataset(np.full((2, 5, 1), 3.0)))
    assert norm.std[0] == 1e-8
    assert not norm.normalize(np.full((2, 5, 1), 3.0)).any()


def test_normalizer_fit_on_train_only():
    v = np.concatenate([np.zeros((1, 60, 1)), 100 * np.ones((1, 40, 1))], axis=1)
    tr, _, _ = split(CtsDataset(v), SplitSpec(0.6, 0.2, 0.2))
    assert fit_normalizer(tr).mean[0] == 0.0
    assert isinstance(fit_normalizer(tr), Normalizer)


# ------------------------------------------------------------------- masks


def test_mask_sum_and_diagonal():
    a1 = np.array([[0.0, 1, 0], [0, 0, 0], [0, 0, 0]])
    a2 = np.array([[0.0, 0, 0], [0, 0, 2], [0, 0, 0]])
    m = build_mask([a1, a2])
    expected = np.eye(3, dtype=bool)
    expected[0, 1] = expected[1, 2] = True
    assert np.array_equal(m, expected)


@given(arrays(np.float64, (4, 4), elements=st.floats(0, 1)))
def test_mask_diagonal_always_true(a):
    assert build_mask([a]).diagonal().all()
