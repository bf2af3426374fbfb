import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightcts import tensor as T
from lightcts.errors import ConfigError, ShapeError
from lightcts.ltcn import (
    LtcnConfig,
    LtcnLayerParams,
    SeParams,
    group_shuffle,
    init_layer,
    last_shot_compress,
    ltcn,
    ltcn_layer,
    receptive_field,
    se_recalibrate,
    sgtcn,
    shuffle_permutation,
)
from lightcts.tensor import Tensor

from oracles import block_sparse_weight, naive_conv, se, shuffle_index, sigmoid


# ----------------------------------------------------------------- shuffle


def test_shuffle_d4_g2():
    h = np.arange(4.0).reshape(1, 1, 4)
    assert group_shuffle(h, 2).data.ravel().tolist() == [0, 2, 1, 3]


def test_shuffle_g1_identity():
    assert np.array_equal(shuffle_permutation(12, 1), np.arange(12))


@given(st.sampled_from([(4, 2), (8, 2), (8, 4), (16, 4), (12, 3), (64, 4)]))
def test_shuffle_matches_formula_and_inverts(dg):
    d, g = dg
    perm = shuffle_permutation(d, g)
    assert np.array_equal(perm, shuffle_index(d, g))
    h = np.random.default_rng(d).normal(size=(2, 3, d))
    shuffled = group_shuffle(h, g).data
    assert np.array_equal(T.permute_last(shuffled, np.argsort(perm)).data, h)


def test_shuffle_reaches_every_group():
    d, g = 16, 4
    perm = shuffle_permutation(d, g)
    for j in range(g):
        block = perm[j * d // g : (j + 1) * d // g]
        assert sorted(set(block // (d // g))) == list(range(g))


def test_shuffle_indivisible():
    with pytest.raises(ShapeError):
        group_shuffle(np.zeros((1, 1, 6)), 4)


# ------------------------------------------------------------------ sgtcn


def test_sgtcn_g1_is_plain_conv():
    rng = np.random.default_rng(0)
    h, w, b = rng.normal(size=(3, 12, 8)), rng.normal(size=(8, 8, 2)), rng.normal(size=8)
    assert np.array_equal(sgtcn(h, w, 2, 1, b).data, T.dilated_causal_conv1d(h, w, 2, b).data)


def test_sgtcn_zero_input_zero_output():
    w = np.random.default_rng(1).normal(size=(8, 2, 2))
    assert not sgtcn(np.zeros((2, 5, 8)), w, 1, 4).data.any()


@pytest.mark.parametrize("d,g,dil", [(4, 2, 1), (8, 2, 2), (16, 4, 4)])
def test_sgtcn_matches_block_sparse_oracle(d, g, dil):
    rng = np.random.default_rng(d + g)
    h, w = rng.normal(size=(2, 9, d)), rng.normal(size=(d, d // g, 2))
    expected = naive_conv(h[..., shuffle_index(d, g)], block_sparse_weight(w, g), dil)
    np.testing.assert_allclose(sgtcn(h, w, dil, g).data, expected, atol=1e-12)


def test_sgtcn_params_and_macs_are_one_over_g():
    d, g, p, n, k = 16, 4, 12, 3, 2
    h = np.zeros((n, p, d))
    with T.count_macs() as full:
        sgtcn(h, np.zeros((d, d, k)), 1, 1)
    with T.count_macs() as grouped:
        sgtcn(h, np.zeros((d, d // g, k)), 1, g)
    assert grouped[0] * g == full[0]
    cfg = LtcnConfig(d_model=d, groups=g)
    layer = init_layer(np.random.default_rng(0), cfg)
    assert layer.w_o.size * g == d * d * k


# ------------------------------------------------------------------ layers


def _layer(rng, d=8, g=2, k=2, bias=True):
    u = lambda *s: Tensor(rng.normal(size=s))
    return LtcnLayerParams(u(d, d // g, k), u(d, d // g, k), u(d) if bias else None, u(d) if bias else None)


def test_zero_gate_weights_halve_tanh_branch():
    rng = np.random.default_rng(2)
    h = rng.normal(size=(2, 6, 8))
    lay = _layer(rng, bias=False)
    lay.w_g = Tensor(np.zeros_like(lay.w_g.data))
    out = ltcn_layer(h, lay, 2, 2).data
    np.testing.assert_array_equal(out, 0.5 * np.tanh(sgtcn(h, lay.w_o, 2, 2).data))


def test_zero_output_weights_give_zero():
    rng = np.random.default_rng(3)
    lay = _layer(rng, bias=False)
    lay.w_o = Tensor(np.zeros_like(lay.w_o.data))
    assert not ltcn_layer(rng.normal(size=(2, 6, 8)), lay, 1, 2).data.any()


def test_layer_matches_composed_oracle():
    rng = np.random.default_rng(4)
    h = rng.normal(size=(2, 7, 8))
    lay = _layer(rng)
    perm = shuffle_index(8, 2)
    o = naive_conv(h[..., perm], block_sparse_weight(lay.w_o.data, 2), 2, lay.b_o.data)
    gt = naive_conv(h[..., perm], block_sparse_weight(lay.w_g.data, 2), 2, lay.b_g.data)
    np.testing.assert_allclose(ltcn_layer(h, lay, 2, 2).data, np.tanh(o) * sigmoid(gt), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_layer_outputs_strictly_inside_unit_interval(seed):
    rng = np.random.default_rng(seed)
    out = ltcn_layer(rng.normal(size=(2, 6, 8)), _layer(rng), 1, 2).data
    assert (np.abs(out) < 1).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 11), st.integers(0, 2**31 - 1))
def test_stack_is_causal(t0, seed):
    rng = np.random.default_rng(seed)
    cfg = LtcnConfig(d_model=8, groups=2, se_ratio=2)
    layers = [_layer(rng) for _ in cfg.dilations]
    h = rng.normal(size=(1, 12, 8))
    h2 = h.copy()
    h2[0, t0] += 1.0
    for a, b in zip(ltcn(h, layers, cfg), ltcn(h2, layers, cfg)):
        assert np.array_equal(a.data[:, :t0], b.data[:, :t0])


# -------------------------------------------------------- receptive field


@pytest.mark.parametrize("k,dil,field", [(2, (1, 2, 4, 8), 16), (2, (1,), 2), (2, (1, 2, 4, 8, 16, 32, 48, 64), 176)])
def test_receptive_field_formula(k, dil, field):
    assert receptive_field(LtcnConfig(kernel_size=k, dilations=dil)) == field


def _influence(cfg, p, rng):
    """Earliest input steps whose perturbation changes each layer's last step."""
    layers = [_layer(rng, cfg.d_model, cfg.groups, cfg.kernel_size) for _ in cfg.dilations]
    h = rng.normal(size=(1, p, cfg.d_model))
    base = [o.data[0, -1] for o in ltcn(h, layers, cfg)]
    reach = [p] * cfg.n_layers
    for t in range(p):
        h2 = h.copy()
        h2[0, t] += 1.0
        for b, o in enumerate(ltcn(h2, layers, cfg)):
            if not np.array_equal(o.data[0, -1], base[b]):
                reach[b] = min(reach[b], t)
    return [p - r for r in reach]


@pytest.mark.parametrize("dil,p", [((1, 2, 4, 8), 20), ((1, 2, 4, 8, 16, 32, 48, 64), 180)])
def test_receptive_field_by_perturbation(dil, p):
    cfg = LtcnConfig(d_model=4, kernel_size=2, dilations=dil, groups=2, se_ratio=2)
    seen = _influence(cfg, p, np.random.default_rng(0))
    for b in range(cfg.n_layers):
        assert seen[b] == receptive_field(LtcnConfig(kernel_size=2, dilations=dil[: b + 1]))


def test_config_validation_names_constraint():
    with pytest.raises(ConfigError, match="tcn_groups"):
        LtcnConfig(d_model=18, groups=4).validate()
    with pytest.raises(ConfigError, match="d_model/tcn_groups"):
        LtcnConfig(d_model=8, groups=4, se_ratio=2).validate()
    with pytest.raises(ConfigError, match="se_ratio"):
        LtcnConfig(d_model=16, groups=4, se_ratio=32).validate()
    with pytest.raises(ConfigError, match="receptive field 16"):
        LtcnConfig().validate(history=17)
    LtcnConfig().validate(history=12)


# -------------------------------------------------------------- last shot


def test_last_shot_single_layer():
    v = np.random.default_rng(5).normal(size=(3, 12, 4))
    assert np.array_equal(last_shot_compress([Tensor(v)]).data, v[:, -1])


def test_last_shot_cancellation():
    v = np.random.default_rng(6).normal(size=(3, 12, 4))
    assert not last_shot_compress([Tensor(v), Tensor(-v)]).data.any()


def test_last_shot_matches_slice_sum():
    outs = [np.random.default_rng(i).normal(size=(2, 3, 12, 4)) for i in range(4)]
    oracle = sum(o[..., 11, :] for o in outs)
    np.testing.assert_allclose(last_shot_compress([Tensor(o) for o in outs]).data, oracle, atol=1e-12)


def test_last_shot_shape_mismatch():
    with pytest.raises(ShapeError):
        last_shot_compress([Tensor(np.zeros((2, 3, 4))), Tensor(np.zeros((2, 4, 4)))])


def test_last_shot_influence_window_per_layer():
    cfg = LtcnConfig(d_model=4, dilations=(1, 2, 4), groups=2, se_ratio=2)
    rng = np.random.default_rng(8)
    layers = [_layer(rng, 4, 2) for _ in cfg.dilations]
    h = rng.normal(size=(1, 12, 4))
    outs = ltcn(h, layers, cfg)
    for b in range(1, cfg.n_layers + 1):
        field = receptive_field(LtcnConfig(dilations=cfg.dilations[:b]))
        base = last_shot_compress(outs[:b]).data
        changed = []
        for t in range(12):
            h2 = h.copy()
            h2[0, t] += 1.0
            changed.append(not np.array_equal(last_shot_compress(ltcn(h2, layers, cfg)[:b]).data, base))
        assert changed == [t >= 12 - field for t in range(12)]


# --------------------------------------------------------------------- SE


def test_se_zero_weights_halve():
    h = np.random.default_rng(9).normal(size=(5, 16))
    out = se_recalibrate(h, SeParams(Tensor(np.zeros((2, 16))), Tensor(np.zeros((16, 2))))).data
    assert np.array_equal(out, 0.5 * h)


def test_se_zero_input():
    rng = np.random.default_rng(10)
    se_p = SeParams(Tensor(rng.normal(size=(2, 16))), Tensor(rng.normal(size=(16, 2))))
    assert not se_recalibrate(np.zeros((5, 16)), se_p).data.any()


def test_se_matches_oracle():
    rng = np.random.default_rng(11)
    h, w1, w2 = rng.normal(size=(5, 16)), rng.normal(size=(2, 16)), rng.normal(size=(16, 2))
    np.testing.assert_allclose(se_recalibrate(h, SeParams(Tensor(w1), Tensor(w2))).data, se(h, w1, w2), atol=1e-12)


def test_se_shape_mismatch():
    with pytest.raises(ShapeError):
        se_recalibrate(np.zeros((5, 8)), SeParams(Tensor(np.zeros((2, 16))), Tensor(np.zeros((16, 2)))))
